#include "kernels.hpp"

#include <array>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define HPIGCN_AVX2 1
#endif

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hpigcn::detail {
namespace {

// Thin vector wrappers. Every lane op mirrors the scalar one exactly
// (fmadd == madd under FMA, add == +), so vector and scalar paths agree bit
// for bit.
#ifdef HPIGCN_AVX2
template <typename T>
struct Simd;

template <>
struct Simd<float> {
  using V = __m256;
  static constexpr std::size_t kLanes = 8;
  static V zero() { return _mm256_setzero_ps(); }
  static V load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, V v) { _mm256_storeu_ps(p, v); }
  static V bcast(float x) { return _mm256_set1_ps(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_ps(a, b, c); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
};

template <>
struct Simd<double> {
  using V = __m256d;
  static constexpr std::size_t kLanes = 4;
  static V zero() { return _mm256_setzero_pd(); }
  static V load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, V v) { _mm256_storeu_pd(p, v); }
  static V bcast(double x) { return _mm256_set1_pd(x); }
  static V fma(V a, V b, V c) { return _mm256_fmadd_pd(a, b, c); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
};
#else
template <typename T>
struct Simd {
  static constexpr std::size_t kLanes = 8;
  struct V {
    T v[kLanes];
  };
  static V zero() { return V{}; }
  static V load(const T* p) {
    V r;
    for (std::size_t i = 0; i < kLanes; ++i) r.v[i] = p[i];
    return r;
  }
  static void store(T* p, V a) {
    for (std::size_t i = 0; i < kLanes; ++i) p[i] = a.v[i];
  }
  static V bcast(T x) {
    V r;
    for (std::size_t i = 0; i < kLanes; ++i) r.v[i] = x;
    return r;
  }
  static V fma(V a, V b, V c) {
    for (std::size_t i = 0; i < kLanes; ++i) c.v[i] = madd(a.v[i], b.v[i], c.v[i]);
    return c;
  }
  static V add(V a, V b) {
    for (std::size_t i = 0; i < kLanes; ++i) a.v[i] = a.v[i] + b.v[i];
    return a;
  }
};
#endif

// Register tile: up to kMr output channels by two vectors of positions.
constexpr std::size_t kMr = 6;
template <typename T>
constexpr std::size_t kNr = 2 * Simd<T>::kLanes;
// Reduction rows processed per pass. Partial sums round-trip through `out`
// between passes, which keeps the summation order unchanged.
constexpr std::size_t kRc = 256;

template <typename T>
using TileFn = void (*)(std::size_t, std::size_t, const T*, std::size_t, const T* const*,
                        std::size_t, const T*, T*, std::size_t, std::size_t);

template <typename T, std::size_t MR, bool kFirst, bool kLast>
void tile(std::size_t r0, std::size_t r1, const T* a, std::size_t lda, const T* const* rows,
          std::size_t e0, const T* bias, T* out, std::size_t out_stride, std::size_t m0) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr std::size_t lanes = S::kLanes;
  V c0[MR];
  V c1[MR];
#pragma GCC unroll 6
  for (std::size_t i = 0; i < MR; ++i) {
    if constexpr (kFirst) {
      c0[i] = S::zero();
      c1[i] = S::zero();
    } else {
      const T* src = out + (m0 + i) * out_stride + e0;
      c0[i] = S::load(src);
      c1[i] = S::load(src + lanes);
    }
  }
  const T* arow[MR];
#pragma GCC unroll 6
  for (std::size_t i = 0; i < MR; ++i) arow[i] = a + (m0 + i) * lda;
  for (std::size_t r = r0; r < r1; ++r) {
    const T* xr = rows[r] + e0;
    const V x0 = S::load(xr);
    const V x1 = S::load(xr + lanes);
#pragma GCC unroll 6
    for (std::size_t i = 0; i < MR; ++i) {
      const V w = S::bcast(arow[i][r]);
      c0[i] = S::fma(w, x0, c0[i]);
      c1[i] = S::fma(w, x1, c1[i]);
    }
  }
#pragma GCC unroll 6
  for (std::size_t i = 0; i < MR; ++i) {
    T* dst = out + (m0 + i) * out_stride + e0;
    if (kLast && bias != nullptr) {
      const V b = S::bcast(bias[m0 + i]);
      c0[i] = S::add(c0[i], b);
      c1[i] = S::add(c1[i], b);
    }
    S::store(dst, c0[i]);
    S::store(dst + lanes, c1[i]);
  }
}

template <typename T, std::size_t MR>
constexpr std::array<TileFn<T>, 4> tiles_for() {
  return {tile<T, MR, false, false>, tile<T, MR, false, true>, tile<T, MR, true, false>,
          tile<T, MR, true, true>};
}

template <typename T>
constexpr std::array<std::array<TileFn<T>, 4>, kMr> kTiles = {
    tiles_for<T, 1>(), tiles_for<T, 2>(), tiles_for<T, 3>(),
    tiles_for<T, 4>(), tiles_for<T, 5>(), tiles_for<T, 6>()};

// Columns left over after the last full vector pair.
template <typename T>
void tile_scalar(std::size_t r0, std::size_t r1, bool first, bool last, const T* a,
                 std::size_t lda, const T* const* rows, std::size_t e0, std::size_t ne,
                 const T* bias, T* out, std::size_t out_stride, std::size_t m0, std::size_t mr) {
  for (std::size_t i = 0; i < mr; ++i) {
    T* dst = out + (m0 + i) * out_stride + e0;
    const T* arow = a + (m0 + i) * lda;
    for (std::size_t j = 0; j < ne; ++j) {
      T acc = first ? T(0) : dst[j];
      for (std::size_t r = r0; r < r1; ++r) acc = madd(arow[r], rows[r][e0 + j], acc);
      dst[j] = (last && bias != nullptr) ? acc + bias[m0 + i] : acc;
    }
  }
}

}  // namespace

template <typename T>
void row_gemm(std::size_t m_count, std::size_t r_count, std::size_t e_count, const T* a,
              std::size_t lda, const T* const* rows, const T* bias, T* out,
              std::size_t out_stride) {
  constexpr std::size_t nr = kNr<T>;
  const std::size_t m_blocks = (m_count + kMr - 1) / kMr;
  const std::size_t e_blocks = (e_count + nr - 1) / nr;
  if (r_count == 0) {
    for (std::size_t m = 0; m < m_count; ++m) {
      for (std::size_t e = 0; e < e_count; ++e) {
        out[m * out_stride + e] = bias != nullptr ? T(0) + bias[m] : T(0);
      }
    }
    return;
  }
  const long long tiles = static_cast<long long>(m_blocks * e_blocks);
  for (std::size_t r0 = 0; r0 < r_count; r0 += kRc) {
    const std::size_t r1 = std::min(r_count, r0 + kRc);
    const bool first = r0 == 0;
    const bool last = r1 == r_count;
    const std::size_t variant = (first ? 2 : 0) + (last ? 1 : 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (tiles > 8)
#endif
    for (long long t = 0; t < tiles; ++t) {
      // e-block outer so neighbouring tiles share the same input columns.
      const std::size_t eb = static_cast<std::size_t>(t) / m_blocks;
      const std::size_t mb = static_cast<std::size_t>(t) % m_blocks;
      const std::size_t m0 = mb * kMr;
      const std::size_t e0 = eb * nr;
      const std::size_t mr = std::min(kMr, m_count - m0);
      const std::size_t ne = std::min(nr, e_count - e0);
      if (ne == nr) {
        kTiles<T>[mr - 1][variant](r0, r1, a, lda, rows, e0, bias, out, out_stride, m0);
      } else {
        tile_scalar(r0, r1, first, last, a, lda, rows, e0, ne, bias, out, out_stride, m0, mr);
      }
    }
  }
}

template <typename T>
void graph_rows(const T* x, T* out, std::size_t row_count, std::size_t v, const T* adj) {
  using S = Simd<T>;
  using V = typename S::V;
  constexpr std::size_t lanes = S::kLanes;
  constexpr std::size_t kRows = 8;
  const std::size_t chunks = (v + lanes - 1) / lanes;
  const std::size_t vp = chunks * lanes;
  // Adjacency rows padded with zero columns to whole vectors.
  std::vector<T> adj_padded(v * vp, T(0));
  for (std::size_t u = 0; u < v; ++u) {
    std::copy(adj + u * v, adj + (u + 1) * v, adj_padded.begin() + u * vp);
  }
  const T* ap = adj_padded.data();
  const long long blocks = static_cast<long long>((row_count + kRows - 1) / kRows);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (blocks > 64)
#endif
  for (long long b = 0; b < blocks; ++b) {
    const std::size_t r0 = static_cast<std::size_t>(b) * kRows;
    const std::size_t rb = std::min(kRows, row_count - r0);
    for (std::size_t q = 0; q < chunks; ++q) {
      V acc[kRows];
      for (std::size_t i = 0; i < kRows; ++i) acc[i] = S::zero();
      if (rb == kRows) {
        for (std::size_t u = 0; u < v; ++u) {
          const V arow = S::load(ap + u * vp + q * lanes);
#pragma GCC unroll 8
          for (std::size_t i = 0; i < kRows; ++i) {
            acc[i] = S::fma(S::bcast(x[(r0 + i) * v + u]), arow, acc[i]);
          }
        }
      } else {
        for (std::size_t u = 0; u < v; ++u) {
          const V arow = S::load(ap + u * vp + q * lanes);
          for (std::size_t i = 0; i < rb; ++i) {
            acc[i] = S::fma(S::bcast(x[(r0 + i) * v + u]), arow, acc[i]);
          }
        }
      }
      const std::size_t j0 = q * lanes;
      const std::size_t width = std::min(lanes, v - j0);
      for (std::size_t i = 0; i < rb; ++i) {
        T* dst = out + (r0 + i) * v + j0;
        if (width == lanes) {
          S::store(dst, acc[i]);
        } else {
          T tmp[lanes];
          S::store(tmp, acc[i]);
          std::copy(tmp, tmp + width, dst);
        }
      }
    }
  }
}

template void row_gemm<float>(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                              const float* const*, const float*, float*, std::size_t);
template void row_gemm<double>(std::size_t, std::size_t, std::size_t, const double*,
                               std::size_t, const double* const*, const double*, double*,
                               std::size_t);
template void graph_rows<float>(const float*, float*, std::size_t, std::size_t, const float*);
template void graph_rows<double>(const double*, double*, std::size_t, std::size_t,
                                 const double*);

}  // namespace hpigcn::detail
