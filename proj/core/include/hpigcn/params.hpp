#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace hpigcn {

/// K x 1 temporal convolution. Weight layout is (c_out, c_in, kernel);
/// an empty bias means the conv is bias-free.
template <typename T>
struct TemporalConvParams {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::size_t kernel = 1;
  std::vector<T> weight;
  std::vector<T> bias;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static TemporalConvParams zeros(std::size_t c_out, std::size_t c_in, std::size_t kernel,
                                  std::size_t stride, std::size_t padding, bool with_bias);

  T& w(std::size_t o, std::size_t i, std::size_t k) { return weight[(o * c_in + i) * kernel + k]; }
  T w(std::size_t o, std::size_t i, std::size_t k) const {
    return weight[(o * c_in + i) * kernel + k];
  }
  bool has_bias() const noexcept { return !bias.empty(); }
  std::size_t param_count() const noexcept { return weight.size() + bias.size(); }

  /// Output frame count for an input of `frames`; throws ShapeError if < 1.
  std::size_t output_frames(std::size_t frames) const;

  /// Sizes agree with the declared dims, stride >= 1, entries finite.
  void validate(std::string_view what = "temporal conv") const;

  friend bool operator==(const TemporalConvParams&, const TemporalConvParams&) = default;
};

/// 1 x 1 convolution (channel mixing only). Also used for the dense
/// classifier head, where it acts on (N, C, 1, 1) features.
template <typename T>
struct PointwiseConvParams {
  std::size_t c_out = 0;
  std::size_t c_in = 0;
  std::vector<T> weight;  // (c_out, c_in)
  std::vector<T> bias;    // empty or c_out

  static PointwiseConvParams zeros(std::size_t c_out, std::size_t c_in, bool with_bias);
  static PointwiseConvParams identity(std::size_t c);

  T& w(std::size_t o, std::size_t i) { return weight[o * c_in + i]; }
  T w(std::size_t o, std::size_t i) const { return weight[o * c_in + i]; }
  bool has_bias() const noexcept { return !bias.empty(); }
  std::size_t param_count() const noexcept { return weight.size() + bias.size(); }
  void validate(std::string_view what = "pointwise conv") const;

  friend bool operator==(const PointwiseConvParams&, const PointwiseConvParams&) = default;
};

/// Inference-mode batch norm. sigma = sqrt(variance + epsilon).
template <typename T>
struct BatchNormParams {
  std::vector<T> mean;
  std::vector<T> variance;
  std::vector<T> scale;
  std::vector<T> shift;
  T epsilon = T(1e-5);

  /// mean 0, variance 1 - epsilon, scale 1, shift 0.
  static BatchNormParams identity(std::size_t c, T epsilon = T(1e-5));

  std::size_t channels() const noexcept { return mean.size(); }
  /// Learnable parameters only (scale and shift); running stats are buffers.
  std::size_t param_count() const noexcept { return scale.size() + shift.size(); }
  /// Per-channel multiplier scale / sigma.
  std::vector<T> factor() const;
  void validate(std::string_view what = "batch norm") const;

  friend bool operator==(const BatchNormParams&, const BatchNormParams&) = default;
};

/// Learnable V x V joint topology (PA). Unconstrained: no symmetry or
/// normalization is imposed.
template <typename T>
struct AdjacencyParam {
  std::size_t v = 0;
  std::vector<T> matrix;  // (v, v), row u maps to column targets

  static AdjacencyParam identity(std::size_t v);
  static AdjacencyParam zeros(std::size_t v);

  T& at(std::size_t u, std::size_t w) { return matrix[u * v + w]; }
  T at(std::size_t u, std::size_t w) const { return matrix[u * v + w]; }
  std::size_t param_count() const noexcept { return matrix.size(); }
  void validate(std::string_view what = "adjacency") const;

  friend bool operator==(const AdjacencyParam&, const AdjacencyParam&) = default;
};

/// View a pointwise conv as a K=1 temporal conv with the given stride.
template <typename T>
TemporalConvParams<T> as_temporal(const PointwiseConvParams<T>& p, std::size_t stride = 1);

/// Inverse of as_temporal; requires kernel == 1.
template <typename T>
PointwiseConvParams<T> as_pointwise(const TemporalConvParams<T>& p);

}  // namespace hpigcn
