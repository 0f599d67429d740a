#pragma once

#include <cstdint>

#include "tra/common.hpp"

// Data-parallel inner loops. Every routine has a scalar reference
// implementation and, on x86-64, an AVX2+FMA variant; the backend is picked
// once at startup (cpuid, overridable via TRA_KERNEL_BACKEND=scalar|avx2 or
// set_backend). Variants are equivalence-tested against the scalar reference.
//
// All matrices are dense row-major. GEMM variants accumulate into C when
// `accumulate` is set, otherwise they overwrite it.
namespace tra::kern {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
void set_backend(Backend b);
bool backend_supported(Backend b);
const char* backend_name(Backend b);

// C[M,N] = A[M,K] * B[K,N]
template <class T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false);

// C[M,N] = A[M,K] * B[N,K]^T
template <class T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false);

// C[M,N] = A[K,M]^T * B[K,N]
template <class T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate = false);

template <class T>
void add(const T* a, const T* b, T* y, std::int64_t n);

template <class T>
void mul(const T* a, const T* b, T* y, std::int64_t n);

// y += a ⊙ b
template <class T>
void mul_acc(const T* a, const T* b, T* y, std::int64_t n);

// y += alpha * x
template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n);

template <class T>
void scale(const T* x, T alpha, T* y, std::int64_t n);

template <class T>
void relu(const T* x, T* y, std::int64_t n);

// dx += (x > 0) ? dy : 0
template <class T>
void relu_backward(const T* x, const T* dy, T* dx, std::int64_t n);

template <class T>
T sum(const T* x, std::int64_t n);

// n >= 1
template <class T>
T maxval(const T* x, std::int64_t n);

// Scalar on every backend: exp() vectorization is not worth a semantics
// split between backends.
template <class T>
void sigmoid(const T* x, T* y, std::int64_t n);

} // namespace tra::kern
