#include "autoroute/kernels.hpp"

#include <string>

namespace autoroute::kernels {
namespace {

void check_inner(std::size_t lhs, std::size_t rhs, const char* op, const Matrix& a, const Matrix& b) {
    if (lhs != rhs)
        throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                         b.shape_str());
}

// Row range [r0, r1) of a * b.
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t r0, std::size_t r1) {
    const std::size_t inner = a.cols(), n = b.cols();
    for (std::size_t i = r0; i < r1; ++i) {
        double* crow = &c(i, 0);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik = a(i, k);
            const double* brow = &b(k, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
}

// Row range [r0, r1) of a^T * b.
void matmul_tn_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t r0, std::size_t r1) {
    const std::size_t inner = a.rows(), n = b.cols();
    for (std::size_t i = r0; i < r1; ++i) {
        double* crow = &c(i, 0);
        for (std::size_t k = 0; k < inner; ++k) {
            const double aki = a(k, i);
            const double* brow = &b(k, 0);
            for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
        }
    }
}

// Row range [r0, r1) of a * b^T.
void matmul_nt_rows(const Matrix& a, const Matrix& b, Matrix& c, std::size_t r0, std::size_t r1) {
    const std::size_t inner = a.cols(), n = b.rows();
    for (std::size_t i = r0; i < r1; ++i) {
        const double* arow = &a(i, 0);
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = &b(j, 0);
            double s = 0.0;
            for (std::size_t k = 0; k < inner; ++k) s += arow[k] * brow[k];
            c(i, j) = s;
        }
    }
}

// Column range [c0, c1) of the column sums.
void col_sum_cols(const Matrix& a, Matrix& out, std::size_t c0, std::size_t c1) {
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = c0; c < c1; ++c) out(0, c) += a(r, c);
}

}  // namespace

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    matmul_rows(a, b, c, 0, a.rows());
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    matmul_tn_rows(a, b, c, 0, a.cols());
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    matmul_nt_rows(a, b, c, 0, a.rows());
    return c;
}

Matrix col_sum(const Matrix& a) {
    Matrix out(1, a.cols());
    col_sum_cols(a, out, 0, a.cols());
    return out;
}

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const auto rows = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i)
        matmul_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    check_inner(a.rows(), b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    const auto rows = static_cast<long>(a.cols());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i)
        matmul_tn_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    check_inner(a.cols(), b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    const auto rows = static_cast<long>(a.rows());
#pragma omp parallel for schedule(static)
    for (long i = 0; i < rows; ++i)
        matmul_nt_rows(a, b, c, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
    return c;
}

Matrix col_sum(const Matrix& a) {
    Matrix out(1, a.cols());
    const auto cols = static_cast<long>(a.cols());
#pragma omp parallel for schedule(static)
    for (long c = 0; c < cols; ++c)
        col_sum_cols(a, out, static_cast<std::size_t>(c), static_cast<std::size_t>(c) + 1);
    return out;
}

}  // namespace parallel

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.rows() * a.cols() * b.cols() >= kParallelThreshold) return parallel::matmul(a, b);
    return serial::matmul(a, b);
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() * a.cols() * b.cols() >= kParallelThreshold) return parallel::matmul_tn(a, b);
    return serial::matmul_tn(a, b);
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.rows() * a.cols() * b.rows() >= kParallelThreshold) return parallel::matmul_nt(a, b);
    return serial::matmul_nt(a, b);
}

Matrix col_sum(const Matrix& a) {
    if (a.size() >= kParallelThreshold) return parallel::col_sum(a);
    return serial::col_sum(a);
}

}  // namespace autoroute::kernels
