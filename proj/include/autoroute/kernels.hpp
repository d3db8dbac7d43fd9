#pragma once

#include "autoroute/matrix.hpp"

namespace autoroute::kernels {

// Every kernel exists in two forms. The serial form is the reference; the
// parallel form splits output rows across OpenMP threads. Each output element
// is accumulated by one thread in ascending inner-index order in both forms,
// so results are bitwise identical regardless of thread count.

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);     // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);  // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);  // a * b^T
Matrix col_sum(const Matrix& a);                     // 1 x cols
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix col_sum(const Matrix& a);
}  // namespace parallel

// Dispatching entry points used by the engine. Small products stay serial.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix col_sum(const Matrix& a);

/// Work (multiply-adds) above which the dispatcher takes the parallel path.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace autoroute::kernels
