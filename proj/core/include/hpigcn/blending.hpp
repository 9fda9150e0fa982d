#pragma once

#include <cstddef>
#include <span>

#include "hpigcn/params.hpp"

namespace hpigcn {

// Structural re-parameterization rules. Each maps the parameters of a
// linear training structure to a single conv (or adjacency) whose forward
// pass reproduces it, border positions included.

/// 1x1 conv (bias-free) -> K x 1 conv -> batch norm, with no nonlinearity.
/// The 1x1 conv carries no bias so zero padding of the intermediate stays
/// zero and the fused conv is exact at the borders.
template <typename T>
struct SerialBranchParams {
  PointwiseConvParams<T> first;
  TemporalConvParams<T> second;
  BatchNormParams<T> bn;

  std::size_t param_count() const noexcept {
    return first.param_count() + second.param_count() + bn.param_count();
  }
  void validate() const;
};

/// Blending 1: K x 1 average pool over C channels as a full (C, C, K) conv
/// with 1/K on the channel diagonal and zero bias.
template <typename T>
TemporalConvParams<T> blend1_avgpool_to_conv(std::size_t kernel, std::size_t channels,
                                             std::size_t stride, std::size_t padding);

/// Blending 2: fold an inference batch norm into the preceding conv.
/// w' = w * s, b' = (b - mean) * s + shift with s = scale / sqrt(var + eps).
template <typename T>
TemporalConvParams<T> blend2_fuse_bn(const TemporalConvParams<T>& conv,
                                     const BatchNormParams<T>& bn);

/// Blending 3: contract the 1x1 conv into the K x 1 conv
/// (w'[o,i,k] = sum_m second[o,m,k] * first[m,i]), then apply blending 2.
template <typename T>
TemporalConvParams<T> blend3_fuse_serial(const SerialBranchParams<T>& branch);

/// Blending 4: sum parallel convs of identical geometry. The result has a
/// bias iff any branch has one.
template <typename T>
TemporalConvParams<T> blend4_add_parallel(std::span<const TemporalConvParams<T>> branches);

/// Blending 5: zero-pad a K x 1 kernel symmetrically to `kernel` taps,
/// growing the padding by the same amount so outputs stay aligned.
template <typename T>
TemporalConvParams<T> blend5_pad_kernel(const TemporalConvParams<T>& conv, std::size_t kernel);

/// Blending 6: X * A_1 + ... + X * A_n == X * (A_1 + ... + A_n).
template <typename T>
AdjacencyParam<T> blend6_fuse_adjacency(std::span<const AdjacencyParam<T>> pas);

}  // namespace hpigcn
