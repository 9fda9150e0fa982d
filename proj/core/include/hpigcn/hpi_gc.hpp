#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "hpigcn/params.hpp"
#include "hpigcn/tensor.hpp"

namespace hpigcn {

// Spatial graph convolution modules. Both share the layout
//   y = relu(bn(post(G(pre(x)))))
// and differ only in G:
//   RP: G(h) = sum_i h * PA_i     (n parallel PAs; fuses to one PA)
//   OP: G(h) = per-group h_g * PA_g over 8 contiguous channel groups
// The bn is optional so that fused parameters can carry it folded into
// `post` instead.

template <typename T>
struct HpiGcRpParams {
  PointwiseConvParams<T> pre;
  std::vector<AdjacencyParam<T>> pas;
  PointwiseConvParams<T> post;
  std::optional<BatchNormParams<T>> bn;

  std::size_t param_count() const noexcept;
  void validate() const;
};

template <typename T>
struct HpiGcOpParams {
  static constexpr std::size_t kGroups = 8;

  PointwiseConvParams<T> pre;
  std::vector<AdjacencyParam<T>> pas;  // exactly kGroups
  PointwiseConvParams<T> post;
  std::optional<BatchNormParams<T>> bn;

  std::size_t param_count() const noexcept;
  void validate() const;
};

enum class FoldBn { kNo, kYes };

/// Training form (any n); the fused form is the same computation with n = 1.
template <typename T>
Tensor4<T> hpi_gc_rp_forward_train(const Tensor4<T>& x, const HpiGcRpParams<T>& p);

/// Replaces the PAs by their sum. With FoldBn::kYes the batch norm is also
/// folded into `post` (blending 2 on a 1x1 conv).
template <typename T>
HpiGcRpParams<T> hpi_gc_rp_fuse(const HpiGcRpParams<T>& p, FoldBn fold = FoldBn::kNo);

template <typename T>
Tensor4<T> hpi_gc_op_forward(const Tensor4<T>& x, const HpiGcOpParams<T>& p);

/// Folds the OP module's batch norm into `post`; the grouped PAs are kept.
template <typename T>
HpiGcOpParams<T> hpi_gc_op_fold_bn(const HpiGcOpParams<T>& p);

/// Multiply-adds of one forward pass for an input of `in`.
template <typename T>
std::size_t hpi_gc_rp_macs(const HpiGcRpParams<T>& p, const Shape4& in);
template <typename T>
std::size_t hpi_gc_op_macs(const HpiGcOpParams<T>& p, const Shape4& in);

}  // namespace hpigcn
