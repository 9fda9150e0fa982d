#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hpigcn/hpi_gc.hpp"
#include "hpigcn/params.hpp"
#include "hpigcn/rep_tcn.hpp"
#include "hpigcn/tensor.hpp"

namespace hpigcn {

enum class Variant { kRp, kOp };
enum class Structure { kTrain, kFused };

std::string to_string(Variant v);
std::string to_string(Structure s);

/// Architecture of the nine-block network.
struct ModelSpec {
  static constexpr std::size_t kBlocks = 9;

  Variant variant = Variant::kRp;
  std::size_t k_max = 5;
  std::size_t n_pas = 5;  // RP only; ignored by OP, which always has 8 grouped PAs
  std::size_t joints = 25;
  std::size_t num_classes = 120;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels = {64, 64, 64, 128, 128, 128, 256, 256, 256};
  std::vector<std::size_t> downsample_blocks = {4, 7};  // 1-based
  double bn_epsilon = 1e-5;

  /// Throws ConfigError. Channels must stay constant except at downsample
  /// blocks, where they double and time is halved.
  void validate() const;

  /// 0-based block index helpers.
  std::size_t block_in(std::size_t b) const { return b == 0 ? channels.front() : channels[b - 1]; }
  std::size_t block_out(std::size_t b) const { return channels[b]; }
  std::size_t block_stride(std::size_t b) const;
  /// Input frame counts must be a multiple of this (2 per downsample).
  std::size_t time_divisor() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct IdentityResidual {
  friend bool operator==(const IdentityResidual&, const IdentityResidual&) = default;
};
struct NoResidual {
  friend bool operator==(const NoResidual&, const NoResidual&) = default;
};

/// Residual path: none, identity, or a strided 1x1 conv (kernel 1).
template <typename T>
using ResidualParams = std::variant<NoResidual, IdentityResidual, TemporalConvParams<T>>;

template <typename T>
using GcParams = std::variant<HpiGcRpParams<T>, HpiGcOpParams<T>>;

template <typename T>
using TcnParams = std::variant<RepTcnTrainParams<T>, RepTcnInferParams<T>>;

/// y = relu(tcn(gc(x)) + residual(x))
template <typename T>
struct BlockParams {
  GcParams<T> gc;
  TcnParams<T> tcn;
  ResidualParams<T> residual;

  std::size_t param_count() const;
  /// Number of adjacency matrices evaluated per forward.
  std::size_t pa_count() const;
  /// Temporal kernels in the TCN (4 branches in training form, 1 fused).
  std::size_t tcn_branch_count() const;
};

template <typename T>
struct ModelParams {
  ModelSpec spec;
  PointwiseConvParams<T> stem;  // in_channels -> channels[0]
  std::vector<BlockParams<T>> blocks;
  PointwiseConvParams<T> head;  // channels[8] -> num_classes, with bias

  /// kFused iff every block is in single-branch inference form.
  Structure structure() const;
  std::size_t param_count() const;
};

/// Deterministic random parameters in training structure.
template <typename T>
ModelParams<T> build_model(const ModelSpec& spec, std::uint64_t seed);

template <typename T>
struct ForwardTrace {
  std::vector<Tensor4<T>> block_outputs;
};

template <typename T>
Tensor4<T> block_forward(const BlockParams<T>& block, const Tensor4<T>& x);

/// x: (N, in_channels, T, joints) with T a multiple of spec.time_divisor().
/// Returns logits shaped (N, num_classes, 1, 1).
template <typename T>
Tensor4<T> forward(const ModelParams<T>& params, const Tensor4<T>& x,
                   ForwardTrace<T>* trace = nullptr);

/// Collapses every block to its inference structure: RP PAs summed and the
/// GC batch norm folded into the post conv (OP keeps its 8 PAs), every
/// Rep-TCN fused into one conv. Residuals, stem and head are unchanged.
/// Idempotent.
template <typename T>
ModelParams<T> fuse_model(const ModelParams<T>& params);

struct LayerCount {
  std::string name;
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
};

/// Multiply-adds are reported as FLOPs (x2). Convolutions, graph products,
/// the pooling branch and the head are counted; BN, ReLU and adds are not.
struct FlopParamReport {
  std::uint64_t flops = 0;
  std::uint64_t params = 0;
  std::vector<LayerCount> layers;
};

template <typename T>
FlopParamReport count_flops_params(const ModelParams<T>& params, const Shape4& input);

template <typename T>
struct EnsembleResult {
  Tensor4<T> mean;                       // (N, classes, 1, 1)
  std::vector<std::size_t> predictions;  // argmax per sample
};

/// Weighted mean of per-stream scores, then argmax. Scores that agree to
/// within a few ulps of the row's magnitude are ties; ties go to the lowest
/// class index.
template <typename T>
EnsembleResult<T> ensemble_average(std::span<const Tensor4<T>> scores,
                                   std::span<const double> weights = {});

template <typename T>
std::size_t argmax_lowest_tie(std::span<const T> row);

}  // namespace hpigcn
