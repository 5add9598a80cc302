#pragma once

#include <cstddef>
#include <string_view>

// Dense double-precision kernels used by the autodiff core. Every kernel has
// a portable scalar reference and an AVX2/FMA variant; the variant is chosen
// once at startup from CPUID and may be overridden with PLAYTITLE_SIMD or
// select_isa(). All matrices are row-major and contiguous.
namespace playtitle::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y += alpha * x
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // C[n x m] += A[n x k] * B[k x m]
    void (*gemm_nn)(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                    double* c);
    // C[n x m] += A[n x k] * B[m x k]^T
    void (*gemm_nt)(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                    double* c);
    // C[k x m] += A[n x k]^T * B[n x m]
    void (*gemm_tn)(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b,
                    double* c);
};

const KernelTable& scalar_table();
// Falls back to the scalar table when the CPU (or build) lacks AVX2+FMA.
const KernelTable& avx2_table();
bool avx2_available();

const KernelTable& active();
void select_isa(Isa isa);
std::string_view isa_name(Isa isa);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) { active().axpy(alpha, x, y, n); }
inline void gemm_nn(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    active().gemm_nn(n, k, m, a, b, c);
}
inline void gemm_nt(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    active().gemm_nt(n, k, m, a, b, c);
}
inline void gemm_tn(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    active().gemm_tn(n, k, m, a, b, c);
}

}  // namespace playtitle::kernels
