#pragma once

#include <cstddef>

namespace seatnet::detail {

// Row-major single-precision matrix products, C (M x N) += ...
// `accumulate == false` overwrites C instead.

/// C += A (M x K) * B (K x N)
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

/// C += A^T * B where A is stored K x M.
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

/// C += A * B^T where B is stored N x K.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate);

}  // namespace seatnet::detail
