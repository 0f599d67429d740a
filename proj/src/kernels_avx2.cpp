#include "kernels_avx2.hpp"

#include <algorithm>

#include "tra/common.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define TRA_HAVE_X86 1
#include <immintrin.h>
#else
#define TRA_HAVE_X86 0
#endif

namespace tra::kern::avx2 {

#if TRA_HAVE_X86

#define TRA_AVX2 __attribute__((target("avx2,fma")))

bool available() {
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

namespace {

TRA_AVX2 inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 sh = _mm_movehdup_ps(lo);
    lo = _mm_add_ps(lo, sh);
    sh = _mm_movehl_ps(sh, lo);
    lo = _mm_add_ss(lo, sh);
    return _mm_cvtss_f32(lo);
}

TRA_AVX2 inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    lo = _mm_add_sd(lo, sh);
    return _mm_cvtsd_f64(lo);
}

} // namespace

// ---- GEMM, float ----------------------------------------------------------

TRA_AVX2 void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
                      const float* b, float* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0f);
    for (std::int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        float* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const __m256 av = _mm256_set1_ps(arow[p]);
            const float* brow = b + p * n;
            std::int64_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 cv = _mm256_loadu_ps(crow + j);
                cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), cv);
                _mm256_storeu_ps(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

TRA_AVX2 void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
                      const float* b, float* c, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        const float* arow = a + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const float* brow = b + j * k;
            __m256 acc = _mm256_setzero_ps();
            std::int64_t p = 0;
            for (; p + 8 <= k; p += 8) {
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(brow + p), acc);
            }
            float dot = hsum(acc);
            for (; p < k; ++p) dot += arow[p] * brow[p];
            c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
        }
    }
}

TRA_AVX2 void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const float* a,
                      const float* b, float* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0f);
    for (std::int64_t p = 0; p < k; ++p) {
        const float* arow = a + p * m;
        const float* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const __m256 av = _mm256_set1_ps(arow[i]);
            float* crow = c + i * n;
            std::int64_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256 cv = _mm256_loadu_ps(crow + j);
                cv = _mm256_fmadd_ps(av, _mm256_loadu_ps(brow + j), cv);
                _mm256_storeu_ps(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += arow[i] * brow[j];
        }
    }
}

// ---- GEMM, double ---------------------------------------------------------

TRA_AVX2 void gemm_nn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
                      const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::int64_t p = 0; p < k; ++p) {
            const __m256d av = _mm256_set1_pd(arow[p]);
            const double* brow = b + p * n;
            std::int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += arow[p] * brow[j];
        }
    }
}

TRA_AVX2 void gemm_nt(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
                      const double* b, double* c, bool accumulate) {
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::int64_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            __m256d acc = _mm256_setzero_pd();
            std::int64_t p = 0;
            for (; p + 4 <= k; p += 4) {
                acc = _mm256_fmadd_pd(_mm256_loadu_pd(arow + p), _mm256_loadu_pd(brow + p), acc);
            }
            double dot = hsum(acc);
            for (; p < k; ++p) dot += arow[p] * brow[p];
            c[i * n + j] = accumulate ? c[i * n + j] + dot : dot;
        }
    }
}

TRA_AVX2 void gemm_tn(std::int64_t m, std::int64_t n, std::int64_t k, const double* a,
                      const double* b, double* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    for (std::int64_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const __m256d av = _mm256_set1_pd(arow[i]);
            double* crow = c + i * n;
            std::int64_t j = 0;
            for (; j + 4 <= n; j += 4) {
                __m256d cv = _mm256_loadu_pd(crow + j);
                cv = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), cv);
                _mm256_storeu_pd(crow + j, cv);
            }
            for (; j < n; ++j) crow[j] += arow[i] * brow[j];
        }
    }
}

// ---- elementwise ----------------------------------------------------------

TRA_AVX2 void add(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

TRA_AVX2 void add(const double* a, const double* b, double* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] + b[i];
}

TRA_AVX2 void mul(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_mul_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

TRA_AVX2 void mul(const double* a, const double* b, double* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) y[i] = a[i] * b[i];
}

TRA_AVX2 void mul_acc(const float* a, const float* b, float* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

TRA_AVX2 void mul_acc(const double* a, const double* b, double* y, std::int64_t n) {
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a[i] * b[i];
}

TRA_AVX2 void axpy(float alpha, const float* x, float* y, std::int64_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 yv = _mm256_loadu_ps(y + i);
        yv = _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), yv);
        _mm256_storeu_ps(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

TRA_AVX2 void axpy(double alpha, const double* x, double* y, std::int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

TRA_AVX2 void scale(const float* x, float alpha, float* y, std::int64_t n) {
    const __m256 av = _mm256_set1_ps(alpha);
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(av, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

TRA_AVX2 void scale(const double* x, double alpha, double* y, std::int64_t n) {
    const __m256d av = _mm256_set1_pd(alpha);
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = alpha * x[i];
}

TRA_AVX2 void relu(const float* x, float* y, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(zero, _mm256_loadu_ps(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

TRA_AVX2 void relu(const double* x, double* y, std::int64_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(y + i, _mm256_max_pd(zero, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

TRA_AVX2 void relu_backward(const float* x, const float* dy, float* dx, std::int64_t n) {
    const __m256 zero = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
        const __m256 grad = _mm256_and_ps(mask, _mm256_loadu_ps(dy + i));
        _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), grad));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0f) dx[i] += dy[i];
    }
}

TRA_AVX2 void relu_backward(const double* x, const double* dy, double* dx, std::int64_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        const __m256d grad = _mm256_and_pd(mask, _mm256_loadu_pd(dy + i));
        _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), grad));
    }
    for (; i < n; ++i) {
        if (x[i] > 0.0) dx[i] += dy[i];
    }
}

TRA_AVX2 float sum(const float* x, std::int64_t n) {
    __m256 acc = _mm256_setzero_ps();
    std::int64_t i = 0;
    for (; i + 8 <= n; i += 8) acc = _mm256_add_ps(acc, _mm256_loadu_ps(x + i));
    float s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

TRA_AVX2 double sum(const double* x, std::int64_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::int64_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

TRA_AVX2 float maxval(const float* x, std::int64_t n) {
    float m = x[0];
    std::int64_t i = 0;
    if (n >= 8) {
        __m256 acc = _mm256_loadu_ps(x);
        for (i = 8; i + 8 <= n; i += 8) acc = _mm256_max_ps(acc, _mm256_loadu_ps(x + i));
        alignas(32) float lanes[8];
        _mm256_store_ps(lanes, acc);
        for (float v : lanes) m = std::max(m, v);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

TRA_AVX2 double maxval(const double* x, std::int64_t n) {
    double m = x[0];
    std::int64_t i = 0;
    if (n >= 4) {
        __m256d acc = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(x + i));
        alignas(32) double lanes[4];
        _mm256_store_pd(lanes, acc);
        for (double v : lanes) m = std::max(m, v);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

#else // !TRA_HAVE_X86

bool available() { return false; }

namespace {
[[noreturn]] void unavailable() {
    throw tra::Error("avx2 kernels are not built on this architecture");
}
} // namespace

void gemm_nn(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*, bool) { unavailable(); }
void gemm_nn(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*, bool) { unavailable(); }
void gemm_nt(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*, bool) { unavailable(); }
void gemm_nt(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*, bool) { unavailable(); }
void gemm_tn(std::int64_t, std::int64_t, std::int64_t, const float*, const float*, float*, bool) { unavailable(); }
void gemm_tn(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*, bool) { unavailable(); }
void add(const float*, const float*, float*, std::int64_t) { unavailable(); }
void add(const double*, const double*, double*, std::int64_t) { unavailable(); }
void mul(const float*, const float*, float*, std::int64_t) { unavailable(); }
void mul(const double*, const double*, double*, std::int64_t) { unavailable(); }
void mul_acc(const float*, const float*, float*, std::int64_t) { unavailable(); }
void mul_acc(const double*, const double*, double*, std::int64_t) { unavailable(); }
void axpy(float, const float*, float*, std::int64_t) { unavailable(); }
void axpy(double, const double*, double*, std::int64_t) { unavailable(); }
void scale(const float*, float, float*, std::int64_t) { unavailable(); }
void scale(const double*, double, double*, std::int64_t) { unavailable(); }
void relu(const float*, float*, std::int64_t) { unavailable(); }
void relu(const double*, double*, std::int64_t) { unavailable(); }
void relu_backward(const float*, const float*, float*, std::int64_t) { unavailable(); }
void relu_backward(const double*, const double*, double*, std::int64_t) { unavailable(); }
float sum(const float*, std::int64_t) { unavailable(); }
double sum(const double*, std::int64_t) { unavailable(); }
float maxval(const float*, std::int64_t) { unavailable(); }
double maxval(const double*, std::int64_t) { unavailable(); }

#endif

} // namespace tra::kern::avx2
