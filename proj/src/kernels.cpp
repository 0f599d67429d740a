#include "tra/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>

#include "kernels_avx2.hpp"

namespace tra::kern {

// ---- scalar reference kernels ----------------------------------------------

namespace scalar {

template <class T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T dot = T(0);
            for (std::int64_t p = 0; p < k; ++p) dot += arow[p] * brow[p];
            c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
        }
    }
}

template <class T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, T(0));
    for (std::int64_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + i * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <class T>
void add(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += a[i] * b[i];
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void scale(const T* x, T alpha, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

template <class T>
void relu(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_backward(const T* x, const T* dy, T* dx, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
    }
}

template <class T>
T sum(const T* x, std::int64_t n) {
    T s = T(0);
    for (std::int64_t i = 0; i < n; ++i) s += x[i];
    return s;
}

template <class T>
T maxval(const T* x, std::int64_t n) {
    T m = x[0];
    for (std::int64_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

} // namespace scalar

// ---- backend selection ------------------------------------------------------

namespace {

Backend detect_backend() {
    if (const char* env = std::getenv("TRA_KERNEL_BACKEND")) {
        const std::string v(env);
        if (v == "scalar") return Backend::Scalar;
        if (v == "avx2") {
            require<ConfigError>(avx2::available(),
                                 "TRA_KERNEL_BACKEND=avx2 but cpu lacks avx2/fma");
            return Backend::Avx2;
        }
        throw ConfigError(cat("unknown TRA_KERNEL_BACKEND '", v, "' (scalar|avx2)"));
    }
    return avx2::available() ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& backend_slot() {
    static std::atomic<Backend> slot{detect_backend()};
    return slot;
}

} // namespace

Backend active_backend() { return backend_slot().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
    require<ConfigError>(backend_supported(b), "backend ", backend_name(b),
                         " not supported on this cpu");
    backend_slot().store(b, std::memory_order_relaxed);
}

bool backend_supported(Backend b) {
    return b == Backend::Scalar || (b == Backend::Avx2 && avx2::available());
}

const char* backend_name(Backend b) { return b == Backend::Avx2 ? "avx2" : "scalar"; }

// ---- dispatching entry points ----------------------------------------------

template <class T>
void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2)
        avx2::gemm_nn(m, n, k, a, b, c, accumulate);
    else
        scalar::gemm_nn(m, n, k, a, b, c, accumulate);
}

template <class T>
void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2)
        avx2::gemm_nt(m, n, k, a, b, c, accumulate);
    else
        scalar::gemm_nt(m, n, k, a, b, c, accumulate);
}

template <class T>
void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const T* a, const T* b, T* c,
             bool accumulate) {
    if (active_backend() == Backend::Avx2)
        avx2::gemm_tn(m, n, k, a, b, c, accumulate);
    else
        scalar::gemm_tn(m, n, k, a, b, c, accumulate);
}

template <class T>
void add(const T* a, const T* b, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::add(a, b, y, n);
    else
        scalar::add(a, b, y, n);
}

template <class T>
void mul(const T* a, const T* b, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::mul(a, b, y, n);
    else
        scalar::mul(a, b, y, n);
}

template <class T>
void mul_acc(const T* a, const T* b, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::mul_acc(a, b, y, n);
    else
        scalar::mul_acc(a, b, y, n);
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::axpy(alpha, x, y, n);
    else
        scalar::axpy(alpha, x, y, n);
}

template <class T>
void scale(const T* x, T alpha, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::scale(x, alpha, y, n);
    else
        scalar::scale(x, alpha, y, n);
}

template <class T>
void relu(const T* x, T* y, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::relu(x, y, n);
    else
        scalar::relu(x, y, n);
}

template <class T>
void relu_backward(const T* x, const T* dy, T* dx, std::int64_t n) {
    if (active_backend() == Backend::Avx2)
        avx2::relu_backward(x, dy, dx, n);
    else
        scalar::relu_backward(x, dy, dx, n);
}

template <class T>
T sum(const T* x, std::int64_t n) {
    if (n == 0) return T(0);
    return active_backend() == Backend::Avx2 ? avx2::sum(x, n) : scalar::sum(x, n);
}

template <class T>
T maxval(const T* x, std::int64_t n) {
    require<ShapeError>(n >= 1, "maxval on empty range");
    return active_backend() == Backend::Avx2 ? avx2::maxval(x, n) : scalar::maxval(x, n);
}

template <class T>
void sigmoid(const T* x, T* y, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) {
        const T v = x[i];
        // Evaluate through exp(-|v|) so large magnitudes cannot overflow.
        if (v >= T(0)) {
            const T e = std::exp(-v);
            y[i] = T(1) / (T(1) + e);
        } else {
            const T e = std::exp(v);
            y[i] = e / (T(1) + e);
        }
    }
}

#define TRA_INSTANTIATE(T)                                                                        \
    template void gemm_nn<T>(std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*,   \
                             bool);                                                              \
    template void gemm_nt<T>(std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*,   \
                             bool);                                                              \
    template void gemm_tn<T>(std::int64_t, std::int64_t, std::int64_t, const T*, const T*, T*,   \
                             bool);                                                              \
    template void add<T>(const T*, const T*, T*, std::int64_t);                                  \
    template void mul<T>(const T*, const T*, T*, std::int64_t);                                  \
    template void mul_acc<T>(const T*, const T*, T*, std::int64_t);                              \
    template void axpy<T>(T, const T*, T*, std::int64_t);                                        \
    template void scale<T>(const T*, T, T*, std::int64_t);                                       \
    template void relu<T>(const T*, T*, std::int64_t);                                           \
    template void relu_backward<T>(const T*, const T*, T*, std::int64_t);                        \
    template T sum<T>(const T*, std::int64_t);                                                   \
    template T maxval<T>(const T*, std::int64_t);                                                \
    template void sigmoid<T>(const T*, T*, std::int64_t);

TRA_INSTANTIATE(float)
TRA_INSTANTIATE(double)

#undef TRA_INSTANTIATE

} // namespace tra::kern
