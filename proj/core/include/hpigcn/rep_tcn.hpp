#pragma once

#include <cstddef>
#include <optional>

#include "hpigcn/blending.hpp"
#include "hpigcn/params.hpp"
#include "hpigcn/tensor.hpp"

namespace hpigcn {

/// Geometry of a re-parameterized temporal conv block.
struct RepTcnConfig {
  std::size_t c_in = 64;
  std::size_t c_out = 64;
  std::size_t k_max = 5;
  std::size_t stride = 1;

  /// The pooling branch only exists when channels are preserved.
  bool has_pool_branch() const noexcept { return c_in == c_out; }
  void validate() const;
};

template <typename T>
struct ConvBnBranch {
  TemporalConvParams<T> conv;
  BatchNormParams<T> bn;
};

template <typename T>
struct PoolBnBranch {
  std::size_t kernel = 3;
  BatchNormParams<T> bn;
};

/// Training structure: four linear branches summed in order A, B, C, D.
///   A: K_max x 1 conv -> BN
///   B: 1x1 conv -> 5x1 conv -> BN
///   C: 1x1 conv -> 3x1 conv -> BN
///   D: 3x1 average pool -> BN   (only when c_in == c_out)
/// All branches share the block stride and pad (K - 1) / 2.
/// Branch A is mandatory; B, C and D may be absent.
template <typename T>
struct RepTcnTrainParams {
  RepTcnConfig config;
  ConvBnBranch<T> a;
  std::optional<SerialBranchParams<T>> b;
  std::optional<SerialBranchParams<T>> c;
  std::optional<PoolBnBranch<T>> d;

  std::size_t param_count() const noexcept;
  std::size_t branch_count() const noexcept { return 1 + (b ? 1 : 0) + (c ? 1 : 0) + (d ? 1 : 0); }
  void validate() const;
};

/// Inference structure: a single K_max x 1 conv with bias.
template <typename T>
struct RepTcnInferParams {
  TemporalConvParams<T> fused;

  std::size_t param_count() const noexcept { return fused.param_count(); }
};

template <typename T>
Tensor4<T> rep_tcn_forward_train(const Tensor4<T>& x, const RepTcnTrainParams<T>& p);

/// Three steps: (1) pool -> conv via blending 1 and every conv-bn via
/// blending 2, (2) serial branches via blending 3 and every kernel padded
/// to K_max via blending 5, (3) branches summed via blending 4.
template <typename T>
RepTcnInferParams<T> rep_tcn_fuse(const RepTcnTrainParams<T>& p);

template <typename T>
Tensor4<T> rep_tcn_forward_infer(const Tensor4<T>& x, const RepTcnInferParams<T>& p);

}  // namespace hpigcn
