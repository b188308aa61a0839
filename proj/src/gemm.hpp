#pragma once

#include <cstddef>

namespace deepclass::detail {

/// C[M x N] += A[M x K] * B[K x N]; all row-major doubles with leading dimensions
/// equal to their column counts. Every C element accumulates its K products in
/// ascending k order, independent of blocking and threading.
void gemm_accumulate(std::size_t M, std::size_t N, std::size_t K, const double* A, const double* B, double* C);

}  // namespace deepclass::detail
