#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "hpigcn/model.hpp"
#include "hpigcn/tensor.hpp"
#include "hpigcn/weight_store.hpp"

namespace hpigcn {

inline constexpr int kConfigFormatVersion = 1;

/// Architecture description stored next to a WeightStore.
struct ConfigDocument {
  ModelSpec spec;
  Structure structure = Structure::kTrain;

  friend bool operator==(const ConfigDocument&, const ConfigDocument&) = default;
};

/// JSON text with a fixed key order; the same document always prints the
/// same bytes.
std::string to_json(const ConfigDocument& doc);

/// Throws FormatError(kBadConfig) on syntax errors, missing or unknown keys,
/// wrong types, an unsupported format_version or an invalid spec.
ConfigDocument parse_config(std::string_view text);

ConfigDocument read_config(const std::filesystem::path& path);
void write_config(const ConfigDocument& doc, const std::filesystem::path& path);

/// Tensor naming:
///   stem.weight, stem.bias, head.weight, head.bias
///   block{i}.gc.{pre|post}.{weight|bias}, block{i}.gc.pa[j],
///   block{i}.gc.bn.{mean|variance|scale|shift}
///   block{i}.tcn.a.conv.weight, block{i}.tcn.{a|b|c|d}.bn.*,
///   block{i}.tcn.{b|c}.{first|second}.weight, block{i}.tcn.fused.{weight|bias}
///   block{i}.residual.{weight|bias}
/// with i counted from 1.
template <typename T>
WeightStore to_weight_store(const ModelParams<T>& params);

/// Rebuilds parameters from `doc` and `store`. Optional parts (biases,
/// batch norms, TCN branches) are taken from whatever the store holds;
/// leftover tensors raise kUnexpectedTensor.
template <typename T>
ModelParams<T> from_weight_store(const ConfigDocument& doc, const WeightStore& store,
                                 DtypePolicy policy = DtypePolicy::kConvert);

template <typename T>
void save_model(const ModelParams<T>& params, const std::filesystem::path& config_path,
                const std::filesystem::path& weights_path);

template <typename T>
ModelParams<T> load_model(const std::filesystem::path& config_path,
                          const std::filesystem::path& weights_path,
                          DtypePolicy policy = DtypePolicy::kConvert);

/// A WeightStore with one rank-4 entry named "tensor".
template <typename T>
void save_tensor(const Tensor4<T>& tensor, const std::filesystem::path& path);

template <typename T>
Tensor4<T> load_tensor(const std::filesystem::path& path,
                       DtypePolicy policy = DtypePolicy::kConvert);

}  // namespace hpigcn
