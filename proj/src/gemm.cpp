#include "gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace seatnet::detail {

namespace {

// Four rows of C at a time so each streamed row of B is reused four times.
// `a_at(i, p)` abstracts over the storage order of A.
template <typename AAt>
void gemm_rows(std::size_t m, std::size_t n, std::size_t k, AAt a_at, const float* b, float* c) {
  constexpr std::size_t kBlockN = 512;
  for (std::size_t j0 = 0; j0 < n; j0 += kBlockN) {
    const std::size_t jn = std::min(kBlockN, n - j0);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      float* c0 = c + (i + 0) * n + j0;
      float* c1 = c + (i + 1) * n + j0;
      float* c2 = c + (i + 2) * n + j0;
      float* c3 = c + (i + 3) * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const float a0 = a_at(i + 0, p);
        const float a1 = a_at(i + 1, p);
        const float a2 = a_at(i + 2, p);
        const float a3 = a_at(i + 3, p);
        const float* __restrict brow = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) {
          const float bv = brow[j];
          c0[j] += a0 * bv;
          c1[j] += a1 * bv;
          c2[j] += a2 * bv;
          c3[j] += a3 * bv;
        }
      }
    }
    for (; i < m; ++i) {
      float* __restrict ci = c + i * n + j0;
      for (std::size_t p = 0; p < k; ++p) {
        const float av = a_at(i, p);
        const float* __restrict brow = b + p * n + j0;
        for (std::size_t j = 0; j < jn; ++j) ci[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  gemm_rows(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  if (!accumulate) std::memset(c, 0, m * n * sizeof(float));
  gemm_rows(m, n, k, [a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, const float* b,
             float* c, bool accumulate) {
  std::vector<float> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  }
  gemm_nn(m, n, k, a, bt.data(), c, accumulate);
}

}  // namespace seatnet::detail
