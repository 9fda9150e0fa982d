#include "hpigcn/params.hpp"

#include <cmath>
#include <string>

#include "hpigcn/errors.hpp"

namespace hpigcn {
namespace {

template <typename T>
void require_finite(const std::vector<T>& values, std::string_view what, std::string_view field) {
  for (const T value : values) {
    if (!std::isfinite(value)) {
      throw ConfigError(std::string(what) + ": non-finite " + std::string(field));
    }
  }
}

std::string dims_message(std::string_view what, std::string_view field, std::size_t got,
                         std::size_t want) {
  return std::string(what) + ": " + std::string(field) + " has " + std::to_string(got) +
         " elements, expected " + std::to_string(want);
}

}  // namespace

template <typename T>
TemporalConvParams<T> TemporalConvParams<T>::zeros(std::size_t c_out, std::size_t c_in,
                                                   std::size_t kernel, std::size_t stride,
                                                   std::size_t padding, bool with_bias) {
  TemporalConvParams p;
  p.c_out = c_out;
  p.c_in = c_in;
  p.kernel = kernel;
  p.weight.assign(c_out * c_in * kernel, T(0));
  if (with_bias) p.bias.assign(c_out, T(0));
  p.stride = stride;
  p.padding = padding;
  return p;
}

template <typename T>
std::size_t TemporalConvParams<T>::output_frames(std::size_t frames) const {
  if (stride == 0) throw ConfigError("temporal conv: stride must be positive");
  const std::size_t padded = frames + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("temporal conv: kernel " + std::to_string(kernel) +
                     " longer than padded input of " + std::to_string(padded) + " frames");
  }
  return (padded - kernel) / stride + 1;
}

template <typename T>
void TemporalConvParams<T>::validate(std::string_view what) const {
  if (c_out == 0 || c_in == 0 || kernel == 0) {
    throw ConfigError(std::string(what) + ": channels and kernel must be >= 1");
  }
  if (stride == 0) throw ConfigError(std::string(what) + ": stride must be positive");
  if (weight.size() != c_out * c_in * kernel) {
    throw ShapeError(dims_message(what, "weight", weight.size(), c_out * c_in * kernel));
  }
  if (!bias.empty() && bias.size() != c_out) {
    throw ShapeError(dims_message(what, "bias", bias.size(), c_out));
  }
  require_finite(weight, what, "weight");
  require_finite(bias, what, "bias");
}

template <typename T>
PointwiseConvParams<T> PointwiseConvParams<T>::zeros(std::size_t c_out, std::size_t c_in,
                                                     bool with_bias) {
  PointwiseConvParams p;
  p.c_out = c_out;
  p.c_in = c_in;
  p.weight.assign(c_out * c_in, T(0));
  if (with_bias) p.bias.assign(c_out, T(0));
  return p;
}

template <typename T>
PointwiseConvParams<T> PointwiseConvParams<T>::identity(std::size_t c) {
  auto p = zeros(c, c, false);
  for (std::size_t i = 0; i < c; ++i) p.w(i, i) = T(1);
  return p;
}

template <typename T>
void PointwiseConvParams<T>::validate(std::string_view what) const {
  if (c_out == 0 || c_in == 0) throw ConfigError(std::string(what) + ": channels must be >= 1");
  if (weight.size() != c_out * c_in) {
    throw ShapeError(dims_message(what, "weight", weight.size(), c_out * c_in));
  }
  if (!bias.empty() && bias.size() != c_out) {
    throw ShapeError(dims_message(what, "bias", bias.size(), c_out));
  }
  require_finite(weight, what, "weight");
  require_finite(bias, what, "bias");
}

template <typename T>
BatchNormParams<T> BatchNormParams<T>::identity(std::size_t c, T epsilon) {
  BatchNormParams p;
  p.mean.assign(c, T(0));
  p.variance.assign(c, T(1) - epsilon);
  p.scale.assign(c, T(1));
  p.shift.assign(c, T(0));
  p.epsilon = epsilon;
  return p;
}

template <typename T>
std::vector<T> BatchNormParams<T>::factor() const {
  std::vector<T> f(mean.size());
  for (std::size_t c = 0; c < f.size(); ++c) f[c] = scale[c] / std::sqrt(variance[c] + epsilon);
  return f;
}

template <typename T>
void BatchNormParams<T>::validate(std::string_view what) const {
  const std::size_t c = mean.size();
  if (c == 0) throw ConfigError(std::string(what) + ": no channels");
  if (variance.size() != c) throw ShapeError(dims_message(what, "variance", variance.size(), c));
  if (scale.size() != c) throw ShapeError(dims_message(what, "scale", scale.size(), c));
  if (shift.size() != c) throw ShapeError(dims_message(what, "shift", shift.size(), c));
  require_finite(mean, what, "mean");
  require_finite(variance, what, "variance");
  require_finite(scale, what, "scale");
  require_finite(shift, what, "shift");
  if (!(epsilon > T(0))) throw ConfigError(std::string(what) + ": epsilon must be positive");
  for (std::size_t i = 0; i < c; ++i) {
    if (variance[i] < T(0) || !(variance[i] + epsilon > T(0))) {
      throw ConfigError(std::string(what) + ": variance must be >= 0 (channel " +
                        std::to_string(i) + ")");
    }
  }
}

template <typename T>
AdjacencyParam<T> AdjacencyParam<T>::identity(std::size_t v) {
  auto a = zeros(v);
  for (std::size_t i = 0; i < v; ++i) a.at(i, i) = T(1);
  return a;
}

template <typename T>
AdjacencyParam<T> AdjacencyParam<T>::zeros(std::size_t v) {
  AdjacencyParam a;
  a.v = v;
  a.matrix.assign(v * v, T(0));
  return a;
}

template <typename T>
void AdjacencyParam<T>::validate(std::string_view what) const {
  if (v == 0) throw ConfigError(std::string(what) + ": empty matrix");
  if (matrix.size() != v * v) throw ShapeError(dims_message(what, "matrix", matrix.size(), v * v));
  require_finite(matrix, what, "entry");
}

template <typename T>
TemporalConvParams<T> as_temporal(const PointwiseConvParams<T>& p, std::size_t stride) {
  TemporalConvParams<T> t;
  t.c_out = p.c_out;
  t.c_in = p.c_in;
  t.kernel = 1;
  t.weight = p.weight;
  t.bias = p.bias;
  t.stride = stride;
  t.padding = 0;
  return t;
}

template <typename T>
PointwiseConvParams<T> as_pointwise(const TemporalConvParams<T>& p) {
  if (p.kernel != 1 || p.padding != 0) {
    throw ConfigError("as_pointwise: kernel must be 1 with no padding");
  }
  PointwiseConvParams<T> q;
  q.c_out = p.c_out;
  q.c_in = p.c_in;
  q.weight = p.weight;
  q.bias = p.bias;
  return q;
}

template struct TemporalConvParams<float>;
template struct TemporalConvParams<double>;
template struct PointwiseConvParams<float>;
template struct PointwiseConvParams<double>;
template struct BatchNormParams<float>;
template struct BatchNormParams<double>;
template struct AdjacencyParam<float>;
template struct AdjacencyParam<double>;
template TemporalConvParams<float> as_temporal(const PointwiseConvParams<float>&, std::size_t);
template TemporalConvParams<double> as_temporal(const PointwiseConvParams<double>&, std::size_t);
template PointwiseConvParams<float> as_pointwise(const TemporalConvParams<float>&);
template PointwiseConvParams<double> as_pointwise(const TemporalConvParams<double>&);

}  // namespace hpigcn
