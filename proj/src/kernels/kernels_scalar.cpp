#include "playtitle/kernels.hpp"

namespace playtitle::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c + i * m;
        for (std::size_t p = 0; p < k; ++p) axpy_scalar(a[i * k + p], b + p * m, ci, m);
    }
}

void gemm_nt_scalar(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) c[i * m + j] += dot_scalar(a + i * k, b + j * k, k);
    }
}

void gemm_tn_scalar(std::size_t n, std::size_t k, std::size_t m, const double* a, const double* b, double* c) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < k; ++p) axpy_scalar(a[i * k + p], b + i * m, c + p * m, m);
    }
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{Isa::scalar, dot_scalar, axpy_scalar, gemm_nn_scalar, gemm_nt_scalar,
                                   gemm_tn_scalar};
    return table;
}

}  // namespace playtitle::kernels
