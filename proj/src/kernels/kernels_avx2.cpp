#include "playtitle/kernels.hpp"

#if defined(__x86_64__) && (defined(__GNUC__) || defined(__clang__))
#define PLAYTITLE_HAVE_AVX2_KERNELS 1
#include <immintrin.h>
#endif

namespace playtitle::kernels {

#ifdef PLAYTITLE_HAVE_AVX2_KERNELS

namespace {

#define PLAYTITLE_AVX2 __attribute__((target("avx2,fma")))

PLAYTITLE_AVX2 inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

PLAYTITLE_AVX2 double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

PLAYTITLE_AVX2 void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// Keeps a 16-wide strip of the output row in registers across the k loop.
PLAYTITLE_AVX2 void gemm_nn_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                                 double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * m;
        std::size_t j = 0;
        for (; j + 16 <= m; j += 16) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            __m256d c1 = _mm256_loadu_pd(ci + j + 4);
            __m256d c2 = _mm256_loadu_pd(ci + j + 8);
            __m256d c3 = _mm256_loadu_pd(ci + j + 12);
            for (std::size_t p = 0; p < k; ++p) {
                const __m256d s = _mm256_set1_pd(ai[p]);
                const double* bp = b + p * m + j;
                c0 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp), c0);
                c1 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 4), c1);
                c2 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 8), c2);
                c3 = _mm256_fmadd_pd(s, _mm256_loadu_pd(bp + 12), c3);
            }
            _mm256_storeu_pd(ci + j, c0);
            _mm256_storeu_pd(ci + j + 4, c1);
            _mm256_storeu_pd(ci + j + 8, c2);
            _mm256_storeu_pd(ci + j + 12, c3);
        }
        for (; j + 4 <= m; j += 4) {
            __m256d c0 = _mm256_loadu_pd(ci + j);
            for (std::size_t p = 0; p < k; ++p) {
                c0 = _mm256_fmadd_pd(_mm256_set1_pd(ai[p]), _mm256_loadu_pd(b + p * m + j), c0);
            }
            _mm256_storeu_pd(ci + j, c0);
        }
        for (; j < m; ++j) {
            double s = ci[j];
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * b[p * m + j];
            ci[j] = s;
        }
    }
}

PLAYTITLE_AVX2 void gemm_nt_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                                 double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] += dot_avx2(a + i * k, b + j * k, k);
    }
}

PLAYTITLE_AVX2 void gemm_tn_avx2(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                                 double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            axpy_avx2(a[i * k + p], b + i * m, c + p * m, m);
        }
    }
}

#undef PLAYTITLE_AVX2

}  // namespace

bool avx2_available() { return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"); }

const KernelTable& avx2_table() {
    static const KernelTable table{Isa::avx2, dot_avx2, axpy_avx2, gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2};
    return avx2_available() ? table : scalar_table();
}

#else

bool avx2_available() { return false; }
const KernelTable& avx2_table() { return scalar_table(); }

#endif

}  // namespace playtitle::kernels
