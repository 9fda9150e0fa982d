#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace hpigcn::detail {

// Multiply-add used by every accumulation loop. One definition keeps the
// rounding identical between code paths that must agree bit for bit (the
// average pool and its conv expansion, padded and unpadded kernels). The
// project compiles with -ffp-contract=off so nothing else fuses implicitly.
template <typename T>
inline T madd(T a, T b, T acc) {
#if defined(__FMA__) || defined(__aarch64__)
  return std::fma(a, b, acc);
#else
  return a * b + acc;
#endif
}

// out[m * out_stride + e] = sum_r a[m * lda + r] * rows[r][e]  (+ bias[m])
//
// r runs in ascending order for every output element regardless of tiling,
// so any caller that lays out its reduction as ordered rows gets the same
// bits as the naive triple loop with the same madd.
template <typename T>
void row_gemm(std::size_t m_count, std::size_t r_count, std::size_t e_count, const T* a,
              std::size_t lda, const T* const* rows, const T* bias, T* out,
              std::size_t out_stride);

// out[r * v + j] = sum_u x[r * v + u] * adj[u * v + j] for r in [0, row_count)
template <typename T>
void graph_rows(const T* x, T* out, std::size_t row_count, std::size_t v, const T* adj);

}  // namespace hpigcn::detail
