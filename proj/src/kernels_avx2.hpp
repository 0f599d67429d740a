#pragma once

#include <cstdint>

// AVX2+FMA kernel variants; only compiled in on x86-64. Declarations are
// unconditional so the dispatcher can link stubs elsewhere.
namespace tra::kern::avx2 {

bool available();

void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b,
             float* c, bool accumulate);
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b,
             float* c, bool accumulate);
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate);
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a, const float* b,
             float* c, bool accumulate);
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a, const double* b,
             double* c, bool accumulate);

void add(const float* a, const float* b, float* y, std::int64_t n);
void add(const double* a, const double* b, double* y, std::int64_t n);
void mul(const float* a, const float* b, float* y, std::int64_t n);
void mul(const double* a, const double* b, double* y, std::int64_t n);
void mul_acc(const float* a, const float* b, float* y, std::int64_t n);
void mul_acc(const double* a, const double* b, double* y, std::int64_t n);
void axpy(float alpha, const float* x, float* y, std::int64_t n);
void axpy(double alpha, const double* x, double* y, std::int64_t n);
void scale(const float* x, float alpha, float* y, std::int64_t n);
void scale(const double* x, double alpha, double* y, std::int64_t n);
void relu(const float* x, float* y, std::int64_t n);
void relu(const double* x, double* y, std::int64_t n);
void relu_backward(const float* x, const float* dy, float* dx, std::int64_t n);
void relu_backward(const double* x, const double* dy, double* dx, std::int64_t n);
float sum(const float* x, std::int64_t n);
double sum(const double* x, std::int64_t n);
float maxval(const float* x, std::int64_t n);
double maxval(const double* x, std::int64_t n);

} // namespace tra::kern::avx2
