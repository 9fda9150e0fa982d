#pragma once

// Naive reference evaluation in double precision. Written directly from the
// operator definitions with explicit index bounds instead of materialized
// padding, and shares no code with the engine's kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "hpigcn/hpi_gc.hpp"
#include "hpigcn/model.hpp"
#include "hpigcn/params.hpp"
#include "hpigcn/random.hpp"
#include "hpigcn/rep_tcn.hpp"
#include "hpigcn/tensor.hpp"

namespace ref {

using hpigcn::Shape4;

struct Array {
  Shape4 s;
  std::vector<double> d;

  explicit Array(Shape4 shape) : s(shape), d(shape.numel(), 0.0) {}

  double& at(std::size_t n, std::size_t c, std::size_t t, std::size_t v) {
    return d[((n * s.c + c) * s.t + t) * s.v + v];
  }
  double at(std::size_t n, std::size_t c, std::size_t t, std::size_t v) const {
    return d[((n * s.c + c) * s.t + t) * s.v + v];
  }
};

template <typename T>
Array from(const hpigcn::Tensor4<T>& x) {
  Array a(x.shape());
  for (std::size_t i = 0; i < a.d.size(); ++i) a.d[i] = static_cast<double>(x.data()[i]);
  return a;
}

inline void require(bool ok, const char* what) {
  if (!ok) throw std::logic_error(what);
}

template <typename T>
Array temporal_conv(const Array& x, const hpigcn::TemporalConvParams<T>& p) {
  require(x.s.c == p.c_in, "ref conv: channel mismatch");
  const long long t_in = static_cast<long long>(x.s.t);
  const long long span = t_in + 2 * static_cast<long long>(p.padding) -
                         static_cast<long long>(p.kernel);
  require(span >= 0, "ref conv: window larger than padded input");
  const std::size_t t_out = static_cast<std::size_t>(span) / p.stride + 1;
  Array y({x.s.n, p.c_out, t_out, x.s.v});
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t o = 0; o < p.c_out; ++o) {
      for (std::size_t t = 0; t < t_out; ++t) {
        for (std::size_t v = 0; v < x.s.v; ++v) {
          double acc = p.bias.empty() ? 0.0 : static_cast<double>(p.bias[o]);
          for (std::size_t i = 0; i < p.c_in; ++i) {
            for (std::size_t k = 0; k < p.kernel; ++k) {
              const long long src = static_cast<long long>(t * p.stride + k) -
                                    static_cast<long long>(p.padding);
              if (src < 0 || src >= t_in) continue;
              acc += static_cast<double>(p.weight[(o * p.c_in + i) * p.kernel + k]) *
                     x.at(n, i, static_cast<std::size_t>(src), v);
            }
          }
          y.at(n, o, t, v) = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
Array pointwise_conv(const Array& x, const hpigcn::PointwiseConvParams<T>& p) {
  require(x.s.c == p.c_in, "ref pointwise: channel mismatch");
  Array y({x.s.n, p.c_out, x.s.t, x.s.v});
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t o = 0; o < p.c_out; ++o) {
      for (std::size_t t = 0; t < x.s.t; ++t) {
        for (std::size_t v = 0; v < x.s.v; ++v) {
          double acc = p.bias.empty() ? 0.0 : static_cast<double>(p.bias[o]);
          for (std::size_t i = 0; i < p.c_in; ++i) {
            acc += static_cast<double>(p.weight[o * p.c_in + i]) * x.at(n, i, t, v);
          }
          y.at(n, o, t, v) = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
Array graph_conv_channels(const Array& x, const hpigcn::AdjacencyParam<T>& a,
                          std::size_t c0, std::size_t c1, Array y) {
  require(x.s.v == a.v, "ref graph conv: vertex mismatch");
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t c = c0; c < c1; ++c) {
      for (std::size_t t = 0; t < x.s.t; ++t) {
        for (std::size_t w = 0; w < a.v; ++w) {
          double acc = 0.0;
          for (std::size_t u = 0; u < a.v; ++u) {
            acc += x.at(n, c, t, u) * static_cast<double>(a.matrix[u * a.v + w]);
          }
          y.at(n, c, t, w) = acc;
        }
      }
    }
  }
  return y;
}

template <typename T>
Array graph_conv(const Array& x, const hpigcn::AdjacencyParam<T>& a) {
  return graph_conv_channels(x, a, 0, x.s.c, Array(x.s));
}

template <typename T>
Array grouped_graph_conv(const Array& x, const std::vector<hpigcn::AdjacencyParam<T>>& pas) {
  require(!pas.empty() && x.s.c % pas.size() == 0, "ref grouped graph conv: bad grouping");
  const std::size_t width = x.s.c / pas.size();
  Array y(x.s);
  for (std::size_t g = 0; g < pas.size(); ++g) {
    y = graph_conv_channels(x, pas[g], g * width, (g + 1) * width, std::move(y));
  }
  return y;
}

inline Array avg_pool_time(const Array& x, std::size_t kernel, std::size_t stride,
                           std::size_t padding) {
  const long long t_in = static_cast<long long>(x.s.t);
  const std::size_t t_out =
      static_cast<std::size_t>(t_in + 2 * static_cast<long long>(padding) -
                               static_cast<long long>(kernel)) /
          stride +
      1;
  Array y({x.s.n, x.s.c, t_out, x.s.v});
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t c = 0; c < x.s.c; ++c) {
      for (std::size_t t = 0; t < t_out; ++t) {
        for (std::size_t v = 0; v < x.s.v; ++v) {
          double sum = 0.0;
          for (std::size_t k = 0; k < kernel; ++k) {
            const long long src =
                static_cast<long long>(t * stride + k) - static_cast<long long>(padding);
            if (src >= 0 && src < t_in) sum += x.at(n, c, static_cast<std::size_t>(src), v);
          }
          y.at(n, c, t, v) = sum / static_cast<double>(kernel);
        }
      }
    }
  }
  return y;
}

template <typename T>
Array batch_norm(Array x, const hpigcn::BatchNormParams<T>& p) {
  require(x.s.c == p.mean.size(), "ref batch norm: channel mismatch");
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t c = 0; c < x.s.c; ++c) {
      const double sigma =
          std::sqrt(static_cast<double>(p.variance[c]) + static_cast<double>(p.epsilon));
      for (std::size_t t = 0; t < x.s.t; ++t) {
        for (std::size_t v = 0; v < x.s.v; ++v) {
          double& e = x.at(n, c, t, v);
          e = (e - static_cast<double>(p.mean[c])) * static_cast<double>(p.scale[c]) / sigma +
              static_cast<double>(p.shift[c]);
        }
      }
    }
  }
  return x;
}

inline Array relu(Array x) {
  for (double& e : x.d) e = e > 0.0 ? e : 0.0;
  return x;
}

inline Array add(Array a, const Array& b) {
  require(a.s == b.s, "ref add: shape mismatch");
  for (std::size_t i = 0; i < a.d.size(); ++i) a.d[i] += b.d[i];
  return a;
}

template <typename T>
Array rep_tcn_train(const Array& x, const hpigcn::RepTcnTrainParams<T>& p) {
  Array y = batch_norm(temporal_conv(x, p.a.conv), p.a.bn);
  for (const auto* serial : {&p.b, &p.c}) {
    if (!serial->has_value()) continue;
    const auto& s = **serial;
    y = add(std::move(y),
            batch_norm(temporal_conv(pointwise_conv(x, s.first), s.second), s.bn));
  }
  if (p.d) {
    const std::size_t pad = (p.d->kernel - 1) / 2;
    y = add(std::move(y),
            batch_norm(avg_pool_time(x, p.d->kernel, p.config.stride, pad), p.d->bn));
  }
  return y;
}

template <typename T>
Array rep_tcn(const Array& x, const hpigcn::TcnParams<T>& tcn) {
  if (const auto* train = std::get_if<hpigcn::RepTcnTrainParams<T>>(&tcn)) {
    return rep_tcn_train(x, *train);
  }
  return temporal_conv(x, std::get<hpigcn::RepTcnInferParams<T>>(tcn).fused);
}

template <typename T>
Array gc_tail(Array h, const hpigcn::PointwiseConvParams<T>& post,
              const std::optional<hpigcn::BatchNormParams<T>>& bn) {
  h = pointwise_conv(h, post);
  if (bn) h = batch_norm(std::move(h), *bn);
  return relu(std::move(h));
}

template <typename T>
Array hpi_gc_rp(const Array& x, const hpigcn::HpiGcRpParams<T>& p) {
  const Array h = pointwise_conv(x, p.pre);
  Array sum(h.s);
  for (const auto& pa : p.pas) sum = add(std::move(sum), graph_conv(h, pa));
  return gc_tail(std::move(sum), p.post, p.bn);
}

template <typename T>
Array hpi_gc_op(const Array& x, const hpigcn::HpiGcOpParams<T>& p) {
  return gc_tail(grouped_graph_conv(pointwise_conv(x, p.pre), p.pas), p.post, p.bn);
}

template <typename T>
Array block(const Array& x, const hpigcn::BlockParams<T>& b) {
  const Array g = std::visit(
      [&](const auto& gc) -> Array {
        using G = std::decay_t<decltype(gc)>;
        if constexpr (std::is_same_v<G, hpigcn::HpiGcRpParams<T>>) {
          return hpi_gc_rp(x, gc);
        } else {
          return hpi_gc_op(x, gc);
        }
      },
      b.gc);
  Array y = rep_tcn(g, b.tcn);
  if (std::holds_alternative<hpigcn::IdentityResidual>(b.residual)) {
    y = add(std::move(y), x);
  } else if (const auto* conv = std::get_if<hpigcn::TemporalConvParams<T>>(&b.residual)) {
    y = add(std::move(y), temporal_conv(x, *conv));
  }
  return relu(std::move(y));
}

template <typename T>
Array forward(const hpigcn::ModelParams<T>& m, const hpigcn::Tensor4<T>& input,
              std::vector<Array>* blocks = nullptr) {
  Array x = pointwise_conv(from(input), m.stem);
  for (const auto& b : m.blocks) {
    x = block(x, b);
    if (blocks) blocks->push_back(x);
  }
  Array pooled({x.s.n, x.s.c, 1, 1});
  for (std::size_t n = 0; n < x.s.n; ++n) {
    for (std::size_t c = 0; c < x.s.c; ++c) {
      double sum = 0.0;
      for (std::size_t t = 0; t < x.s.t; ++t) {
        for (std::size_t v = 0; v < x.s.v; ++v) sum += x.at(n, c, t, v);
      }
      pooled.at(n, c, 0, 0) = sum / static_cast<double>(x.s.t * x.s.v);
    }
  }
  return pointwise_conv(pooled, m.head);
}

template <typename T>
double max_abs_diff(const Array& a, const hpigcn::Tensor4<T>& b) {
  require(a.s == b.shape(), "ref diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.d.size(); ++i) {
    worst = std::max(worst, std::abs(a.d[i] - static_cast<double>(b.data()[i])));
  }
  return worst;
}

inline double max_abs_diff(const Array& a, const Array& b) {
  require(a.s == b.s, "ref diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.d.size(); ++i) worst = std::max(worst, std::abs(a.d[i] - b.d[i]));
  return worst;
}

// Random generators for property tests.

template <typename T>
std::vector<T> uniform(hpigcn::Rng& rng, std::size_t count, double lo, double hi) {
  std::vector<T> out(count);
  for (auto& e : out) e = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

template <typename T>
hpigcn::Tensor4<T> random_tensor(hpigcn::Rng& rng, Shape4 s, double scale = 1.0) {
  return hpigcn::Tensor4<T>(s, uniform<T>(rng, s.numel(), -scale, scale));
}

inline std::size_t pick(hpigcn::Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.next() % (hi - lo + 1));
}

template <typename T>
hpigcn::TemporalConvParams<T> random_conv(hpigcn::Rng& rng, std::size_t c_out, std::size_t c_in,
                                          std::size_t kernel, std::size_t stride,
                                          std::size_t padding, bool with_bias) {
  hpigcn::TemporalConvParams<T> p;
  p.c_out = c_out;
  p.c_in = c_in;
  p.kernel = kernel;
  p.stride = stride;
  p.padding = padding;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in * kernel));
  p.weight = uniform<T>(rng, c_out * c_in * kernel, -bound, bound);
  if (with_bias) p.bias = uniform<T>(rng, c_out, -0.5, 0.5);
  return p;
}

template <typename T>
hpigcn::PointwiseConvParams<T> random_pointwise(hpigcn::Rng& rng, std::size_t c_out,
                                                std::size_t c_in, bool with_bias) {
  hpigcn::PointwiseConvParams<T> p;
  p.c_out = c_out;
  p.c_in = c_in;
  const double bound = 1.0 / std::sqrt(static_cast<double>(c_in));
  p.weight = uniform<T>(rng, c_out * c_in, -bound, bound);
  if (with_bias) p.bias = uniform<T>(rng, c_out, -0.5, 0.5);
  return p;
}

template <typename T>
hpigcn::BatchNormParams<T> random_bn(hpigcn::Rng& rng, std::size_t c) {
  hpigcn::BatchNormParams<T> p;
  p.mean = uniform<T>(rng, c, -0.5, 0.5);
  p.variance = uniform<T>(rng, c, 0.5, 2.0);
  p.scale = uniform<T>(rng, c, 0.5, 1.5);
  p.shift = uniform<T>(rng, c, -0.5, 0.5);
  return p;
}

template <typename T>
hpigcn::AdjacencyParam<T> random_adjacency(hpigcn::Rng& rng, std::size_t v) {
  auto a = hpigcn::AdjacencyParam<T>::identity(v);
  for (auto& e : a.matrix) e += static_cast<T>(rng.uniform(-0.3, 0.3));
  return a;
}

template <typename T>
hpigcn::SerialBranchParams<T> random_serial(hpigcn::Rng& rng, std::size_t c_out,
                                            std::size_t c_in, std::size_t kernel,
                                            std::size_t stride) {
  return {random_pointwise<T>(rng, c_out, c_in, false),
          random_conv<T>(rng, c_out, c_out, kernel, stride, (kernel - 1) / 2, rng.next() % 2 == 0),
          random_bn<T>(rng, c_out)};
}

template <typename T>
hpigcn::RepTcnTrainParams<T> random_rep_tcn(hpigcn::Rng& rng, hpigcn::RepTcnConfig cfg) {
  hpigcn::RepTcnTrainParams<T> p;
  p.config = cfg;
  p.a = {random_conv<T>(rng, cfg.c_out, cfg.c_in, cfg.k_max, cfg.stride, (cfg.k_max - 1) / 2,
                        true),
         random_bn<T>(rng, cfg.c_out)};
  p.b = random_serial<T>(rng, cfg.c_out, cfg.c_in, 5, cfg.stride);
  p.c = random_serial<T>(rng, cfg.c_out, cfg.c_in, 3, cfg.stride);
  if (cfg.has_pool_branch()) p.d = hpigcn::PoolBnBranch<T>{3, random_bn<T>(rng, cfg.c_out)};
  return p;
}

template <typename T>
hpigcn::HpiGcRpParams<T> random_gc_rp(hpigcn::Rng& rng, std::size_t c_in, std::size_t c_out,
                                      std::size_t v, std::size_t n_pas) {
  hpigcn::HpiGcRpParams<T> p;
  p.pre = random_pointwise<T>(rng, c_out, c_in, true);
  for (std::size_t i = 0; i < n_pas; ++i) p.pas.push_back(random_adjacency<T>(rng, v));
  p.post = random_pointwise<T>(rng, c_out, c_out, true);
  p.bn = random_bn<T>(rng, c_out);
  return p;
}

template <typename T>
hpigcn::HpiGcOpParams<T> random_gc_op(hpigcn::Rng& rng, std::size_t c_in, std::size_t c_out,
                                      std::size_t v) {
  hpigcn::HpiGcOpParams<T> p;
  p.pre = random_pointwise<T>(rng, c_out, c_in, true);
  for (std::size_t i = 0; i < hpigcn::HpiGcOpParams<T>::kGroups; ++i) {
    p.pas.push_back(random_adjacency<T>(rng, v));
  }
  p.post = random_pointwise<T>(rng, c_out, c_out, true);
  p.bn = random_bn<T>(rng, c_out);
  return p;
}

/// Nine-block spec small enough for the double-precision oracle.
inline hpigcn::ModelSpec small_spec(hpigcn::Variant variant = hpigcn::Variant::kRp,
                                    std::size_t k_max = 5) {
  hpigcn::ModelSpec s;
  s.variant = variant;
  s.k_max = k_max;
  s.joints = 5;
  s.num_classes = 4;
  s.channels = {8, 8, 8, 16, 16, 16, 32, 32, 32};
  return s;
}

}  // namespace ref
