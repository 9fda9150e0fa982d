#include "hpigcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "kernels.hpp"

namespace hpigcn {
namespace {

thread_local KernelCounters g_counters;

void require_channels(std::size_t got, std::size_t want, const char* op) {
  if (got != want) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(got) +
                     " channels, expected " + std::to_string(want));
  }
}

// Copies each channel plane of sample n into `buf` with `padding` zero rows
// above and below. Rows are (T + 2 * padding) * V long.
template <typename T>
void pad_sample(const Tensor4<T>& x, std::size_t n, std::size_t padding, std::vector<T>& buf) {
  const auto& s = x.shape();
  const std::size_t row = s.v;
  const std::size_t padded = (s.t + 2 * padding) * row;
  buf.assign(s.c * padded, T(0));
  for (std::size_t c = 0; c < s.c; ++c) {
    const auto src = x.plane(n, c);
    std::copy(src.begin(), src.end(), buf.begin() + c * padded + padding * row);
  }
}

}  // namespace

std::string to_string(const Shape4& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.t) +
         ", " + std::to_string(s.v) + ")";
}

template <typename T>
T max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()) + " differ");
  }
  T worst = T(0);
  const auto da = a.data();
  const auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const T d = std::abs(da[i] - db[i]);
    if (d > worst || std::isnan(d)) worst = d;
  }
  return worst;
}

template <typename T>
Tensor4<T> temporal_conv(const Tensor4<T>& x, const TemporalConvParams<T>& p) {
  p.validate();
  const auto& s = x.shape();
  require_channels(s.c, p.c_in, "temporal_conv");
  const std::size_t frames = p.output_frames(s.t);
  Tensor4<T> out(Shape4{s.n, p.c_out, frames, s.v});
  ++g_counters.temporal_conv;

  const std::size_t k_len = p.kernel;
  const std::size_t reduce = p.c_in * k_len;
  const std::size_t span = frames * s.v;
  std::vector<T> padded;
  std::vector<T> gathered;
  std::vector<const T*> rows(reduce);
  const T* bias = p.has_bias() ? p.bias.data() : nullptr;

  for (std::size_t n = 0; n < s.n; ++n) {
    const T* base = nullptr;
    std::size_t row_stride = 0;
    if (p.padding == 0) {
      base = x.plane(n, 0).data();
      row_stride = s.t * s.v;
    } else {
      pad_sample(x, n, p.padding, padded);
      base = padded.data();
      row_stride = (s.t + 2 * p.padding) * s.v;
    }
    if (p.stride == 1) {
      // Tap k of channel i is the padded plane shifted down by k rows.
      for (std::size_t i = 0; i < p.c_in; ++i) {
        for (std::size_t k = 0; k < k_len; ++k) {
          rows[i * k_len + k] = base + i * row_stride + k * s.v;
        }
      }
    } else {
      gathered.resize(reduce * span);
      for (std::size_t i = 0; i < p.c_in; ++i) {
        for (std::size_t k = 0; k < k_len; ++k) {
          T* dst = gathered.data() + (i * k_len + k) * span;
          for (std::size_t t = 0; t < frames; ++t) {
            const T* src = base + i * row_stride + (t * p.stride + k) * s.v;
            std::copy(src, src + s.v, dst + t * s.v);
          }
          rows[i * k_len + k] = dst;
        }
      }
    }
    detail::row_gemm(p.c_out, reduce, span, p.weight.data(), reduce, rows.data(), bias,
                     out.plane(n, 0).data(), span);
  }
  return out;
}

template <typename T>
Tensor4<T> pointwise_conv(const Tensor4<T>& x, const PointwiseConvParams<T>& p) {
  p.validate();
  const auto& s = x.shape();
  require_channels(s.c, p.c_in, "pointwise_conv");
  Tensor4<T> out(Shape4{s.n, p.c_out, s.t, s.v});
  ++g_counters.pointwise_conv;
  const std::size_t span = s.t * s.v;
  std::vector<const T*> rows(p.c_in);
  const T* bias = p.has_bias() ? p.bias.data() : nullptr;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t i = 0; i < p.c_in; ++i) rows[i] = x.plane(n, i).data();
    detail::row_gemm(p.c_out, p.c_in, span, p.weight.data(), p.c_in, rows.data(), bias,
                     out.plane(n, 0).data(), span);
  }
  return out;
}

template <typename T>
Tensor4<T> graph_conv(const Tensor4<T>& x, const AdjacencyParam<T>& a) {
  a.validate();
  const auto& s = x.shape();
  if (s.v != a.v) {
    throw ShapeError("graph_conv: input has " + std::to_string(s.v) + " vertices, adjacency is " +
                     std::to_string(a.v) + "x" + std::to_string(a.v));
  }
  Tensor4<T> out(s);
  ++g_counters.graph_matmul;
  detail::graph_rows(x.data().data(), out.data().data(), s.n * s.c * s.t, s.v, a.matrix.data());
  return out;
}

template <typename T>
Tensor4<T> grouped_graph_conv(const Tensor4<T>& x, std::span<const AdjacencyParam<T>> pas,
                              std::size_t groups) {
  const auto& s = x.shape();
  if (groups == 0 || s.c % groups != 0) {
    throw ConfigError("grouped_graph_conv: " + std::to_string(s.c) +
                      " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (pas.size() != groups) {
    throw ConfigError("grouped_graph_conv: " + std::to_string(pas.size()) +
                      " adjacency matrices for " + std::to_string(groups) + " groups");
  }
  for (const auto& a : pas) {
    a.validate();
    if (a.v != s.v) {
      throw ShapeError("grouped_graph_conv: adjacency is " + std::to_string(a.v) + "x" +
                       std::to_string(a.v) + ", input has " + std::to_string(s.v) + " vertices");
    }
  }
  Tensor4<T> out(s);
  const std::size_t per_group = s.c / groups;
  const std::size_t rows = per_group * s.t;
  g_counters.graph_matmul += groups;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t off = x.offset(n, g * per_group, 0, 0);
      detail::graph_rows(x.data().data() + off, out.data().data() + off, rows, s.v,
                         pas[g].matrix.data());
    }
  }
  return out;
}

template <typename T>
Tensor4<T> avg_pool_time(const Tensor4<T>& x, std::size_t kernel, std::size_t stride,
                         std::size_t padding) {
  if (kernel == 0 || kernel % 2 == 0) {
    throw ShapeError("avg_pool_time: kernel must be odd, got " + std::to_string(kernel));
  }
  if (stride == 0) throw ShapeError("avg_pool_time: stride must be positive");
  const auto& s = x.shape();
  const std::size_t padded_len = s.t + 2 * padding;
  if (padded_len < kernel) {
    throw ShapeError("avg_pool_time: kernel " + std::to_string(kernel) +
                     " longer than padded input of " + std::to_string(padded_len) + " frames");
  }
  const std::size_t frames = (padded_len - kernel) / stride + 1;
  Tensor4<T> out(Shape4{s.n, s.c, frames, s.v});
  ++g_counters.avg_pool;
  const T tap = T(1) / static_cast<T>(kernel);
  const long long planes = static_cast<long long>(s.n * s.c);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (planes > 16)
#endif
  for (long long pc = 0; pc < planes; ++pc) {
    const std::size_t n = static_cast<std::size_t>(pc) / s.c;
    const std::size_t c = static_cast<std::size_t>(pc) % s.c;
    const auto src = x.plane(n, c);
    auto dst = out.plane(n, c);
    for (std::size_t t = 0; t < frames; ++t) {
      T* o = dst.data() + t * s.v;
      for (std::size_t v = 0; v < s.v; ++v) o[v] = T(0);
      for (std::size_t k = 0; k < kernel; ++k) {
        const std::size_t pos = t * stride + k;
        if (pos < padding || pos >= padding + s.t) {
          for (std::size_t v = 0; v < s.v; ++v) o[v] = detail::madd(tap, T(0), o[v]);
          continue;
        }
        const T* row = src.data() + (pos - padding) * s.v;
        for (std::size_t v = 0; v < s.v; ++v) o[v] = detail::madd(tap, row[v], o[v]);
      }
    }
  }
  return out;
}

template <typename T>
Tensor4<T> batch_norm_infer(const Tensor4<T>& x, const BatchNormParams<T>& p) {
  p.validate();
  const auto& s = x.shape();
  require_channels(s.c, p.channels(), "batch_norm_infer");
  const std::vector<T> f = p.factor();
  Tensor4<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const auto src = x.plane(n, c);
      auto dst = out.plane(n, c);
      const T mu = p.mean[c];
      const T k = f[c];
      const T b = p.shift[c];
      for (std::size_t e = 0; e < src.size(); ++e) dst[e] = (src[e] - mu) * k + b;
    }
  }
  return out;
}

template <typename T>
void relu_inplace(Tensor4<T>& x) {
  for (T& value : x.data()) value = value > T(0) ? value : T(0);
}

template <typename T>
Tensor4<T> relu(Tensor4<T> x) {
  relu_inplace(x);
  return x;
}

template <typename T>
void add_inplace(Tensor4<T>& acc, const Tensor4<T>& y) {
  if (acc.shape() != y.shape()) {
    throw ShapeError("add: shapes " + to_string(acc.shape()) + " and " + to_string(y.shape()) +
                     " differ");
  }
  auto a = acc.data();
  const auto b = y.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

template <typename T>
Tensor4<T> global_avg_pool(const Tensor4<T>& x) {
  const auto& s = x.shape();
  Tensor4<T> out(Shape4{s.n, s.c, 1, 1});
  const T count = static_cast<T>(s.t * s.v);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      T sum = T(0);
      for (const T value : x.plane(n, c)) sum += value;
      out(n, c, 0, 0) = sum / count;
    }
  }
  return out;
}

template <typename T>
Tensor4<T> linear_head(const Tensor4<T>& features, const PointwiseConvParams<T>& head) {
  const auto& s = features.shape();
  if (s.t != 1 || s.v != 1) {
    throw ShapeError("linear_head: expects pooled (N, C, 1, 1) features, got " + to_string(s));
  }
  return pointwise_conv(features, head);
}

KernelCounters& kernel_counters() noexcept { return g_counters; }

void reset_kernel_counters() noexcept { g_counters = KernelCounters{}; }

int num_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_num_threads(int threads) noexcept {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

#define HPIGCN_INSTANTIATE_OPS(T)                                                              \
  template T max_abs_diff(const Tensor4<T>&, const Tensor4<T>&);                               \
  template Tensor4<T> temporal_conv(const Tensor4<T>&, const TemporalConvParams<T>&);          \
  template Tensor4<T> pointwise_conv(const Tensor4<T>&, const PointwiseConvParams<T>&);        \
  template Tensor4<T> graph_conv(const Tensor4<T>&, const AdjacencyParam<T>&);                 \
  template Tensor4<T> grouped_graph_conv(const Tensor4<T>&, std::span<const AdjacencyParam<T>>, \
                                         std::size_t);                                         \
  template Tensor4<T> avg_pool_time(const Tensor4<T>&, std::size_t, std::size_t, std::size_t); \
  template Tensor4<T> batch_norm_infer(const Tensor4<T>&, const BatchNormParams<T>&);          \
  template Tensor4<T> relu(Tensor4<T>);                                                        \
  template void relu_inplace(Tensor4<T>&);                                                     \
  template void add_inplace(Tensor4<T>&, const Tensor4<T>&);                                   \
  template Tensor4<T> global_avg_pool(const Tensor4<T>&);                                      \
  template Tensor4<T> linear_head(const Tensor4<T>&, const PointwiseConvParams<T>&);

HPIGCN_INSTANTIATE_OPS(float)
HPIGCN_INSTANTIATE_OPS(double)

#undef HPIGCN_INSTANTIATE_OPS

}  // namespace hpigcn
