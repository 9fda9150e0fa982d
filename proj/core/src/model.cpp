#include "hpigcn/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hpigcn/errors.hpp"
#include "hpigcn/ops.hpp"
#include "hpigcn/random.hpp"

namespace hpigcn {
namespace {

template <class... Fs>
struct Overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

// Random parameters sized so activations stay O(1) through all nine blocks.
template <typename T>
class Initializer {
 public:
  Initializer(std::uint64_t seed, T epsilon) : rng_(seed), epsilon_(epsilon) {}

  std::vector<T> fill(std::size_t count, double lo, double hi) {
    std::vector<T> out(count);
    for (T& value : out) value = static_cast<T>(rng_.uniform(lo, hi));
    return out;
  }

  PointwiseConvParams<T> pointwise(std::size_t c_out, std::size_t c_in, bool bias) {
    PointwiseConvParams<T> p;
    p.c_out = c_out;
    p.c_in = c_in;
    const double bound = std::sqrt(3.0 / static_cast<double>(c_in));
    p.weight = fill(c_out * c_in, -bound, bound);
    if (bias) p.bias = fill(c_out, -0.1, 0.1);
    return p;
  }

  TemporalConvParams<T> temporal(std::size_t c_out, std::size_t c_in, std::size_t kernel,
                                 std::size_t stride, bool bias) {
    TemporalConvParams<T> p;
    p.c_out = c_out;
    p.c_in = c_in;
    p.kernel = kernel;
    p.stride = stride;
    p.padding = (kernel - 1) / 2;
    const double bound = std::sqrt(3.0 / static_cast<double>(c_in * kernel));
    p.weight = fill(c_out * c_in * kernel, -bound, bound);
    if (bias) p.bias = fill(c_out, -0.1, 0.1);
    return p;
  }

  // Running variance scaled by `var_scale` mimics statistics of a branch
  // whose output spread is that much larger than unit.
  BatchNormParams<T> bn(std::size_t c, double scale_lo, double scale_hi, double var_scale) {
    BatchNormParams<T> p;
    p.mean = fill(c, -0.1, 0.1);
    p.variance = fill(c, 0.5 * var_scale, 1.5 * var_scale);
    p.scale = fill(c, scale_lo, scale_hi);
    p.shift = fill(c, -0.1, 0.1);
    p.epsilon = epsilon_;
    return p;
  }

  // Identity plus uniform noise in [-0.05, 0.05].
  AdjacencyParam<T> pa(std::size_t v) {
    auto a = AdjacencyParam<T>::identity(v);
    for (T& value : a.matrix) value += static_cast<T>(rng_.uniform(-0.05, 0.05));
    return a;
  }

 private:
  Rng rng_;
  T epsilon_;
};

template <typename T>
SerialBranchParams<T> serial_branch(Initializer<T>& init, std::size_t c_in, std::size_t c_out,
                                    std::size_t kernel, std::size_t stride) {
  SerialBranchParams<T> s;
  s.first = init.pointwise(c_out, c_in, false);
  s.second = init.temporal(c_out, c_out, kernel, stride, false);
  s.bn = init.bn(c_out, 0.2, 0.5, 1.0);
  return s;
}

std::string block_tag(std::size_t b) { return "block " + std::to_string(b + 1) + ": "; }

template <typename T>
std::size_t residual_params(const ResidualParams<T>& r) {
  if (const auto* conv = std::get_if<TemporalConvParams<T>>(&r)) return conv->param_count();
  return 0;
}

template <typename T>
std::size_t tcn_params(const TcnParams<T>& tcn) {
  return std::visit([](const auto& p) { return p.param_count(); }, tcn);
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::kRp ? "rp" : "op"; }
std::string to_string(Structure s) { return s == Structure::kTrain ? "train" : "fused"; }

void ModelSpec::validate() const {
  if (k_max < 5 || k_max % 2 == 0) {
    throw ConfigError("model: k_max must be odd and >= 5, got " + std::to_string(k_max));
  }
  if (variant == Variant::kRp && n_pas < 1) throw ConfigError("model: n_pas must be >= 1");
  if (joints < 1) throw ConfigError("model: joints must be >= 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (in_channels < 1) throw ConfigError("model: in_channels must be >= 1");
  if (!(bn_epsilon > 0.0) || !std::isfinite(bn_epsilon)) {
    throw ConfigError("model: bn_epsilon must be positive");
  }
  if (channels.size() != kBlocks) {
    throw ConfigError("model: channel schedule must list 9 blocks, got " +
                      std::to_string(channels.size()));
  }
  for (const std::size_t b : downsample_blocks) {
    if (b < 2 || b > kBlocks) {
      throw ConfigError("model: downsample block " + std::to_string(b) + " outside 2..9");
    }
  }
  if (!std::is_sorted(downsample_blocks.begin(), downsample_blocks.end()) ||
      std::adjacent_find(downsample_blocks.begin(), downsample_blocks.end()) !=
          downsample_blocks.end()) {
    throw ConfigError("model: downsample blocks must be strictly increasing");
  }
  if (channels.front() < 1) throw ConfigError("model: channels must be >= 1");
  for (std::size_t b = 1; b < kBlocks; ++b) {
    const bool down = block_stride(b) == 2;
    const std::size_t want = down ? 2 * channels[b - 1] : channels[b - 1];
    if (channels[b] != want) {
      throw ConfigError("model: block " + std::to_string(b + 1) + " has " +
                        std::to_string(channels[b]) + " channels, expected " +
                        std::to_string(want) + (down ? " (doubled at downsample)" : ""));
    }
  }
  if (variant == Variant::kOp) {
    for (const std::size_t c : channels) {
      if (c % HpiGcOpParams<float>::kGroups != 0) {
        throw ConfigError("model: OP variant needs channel counts divisible by 8, got " +
                          std::to_string(c));
      }
    }
  }
}

std::size_t ModelSpec::block_stride(std::size_t b) const {
  return std::find(downsample_blocks.begin(), downsample_blocks.end(), b + 1) !=
                 downsample_blocks.end()
             ? 2
             : 1;
}

std::size_t ModelSpec::time_divisor() const {
  return std::size_t{1} << downsample_blocks.size();
}

template <typename T>
std::size_t BlockParams<T>::param_count() const {
  return std::visit([](const auto& g) { return g.param_count(); }, gc) + tcn_params(tcn) +
         residual_params(residual);
}

template <typename T>
std::size_t BlockParams<T>::pa_count() const {
  return std::visit([](const auto& g) { return g.pas.size(); }, gc);
}

template <typename T>
std::size_t BlockParams<T>::tcn_branch_count() const {
  return std::visit(Overloaded{[](const RepTcnTrainParams<T>& p) { return p.branch_count(); },
                               [](const RepTcnInferParams<T>&) { return std::size_t{1}; }},
                    tcn);
}

template <typename T>
Structure ModelParams<T>::structure() const {
  for (const auto& block : blocks) {
    if (std::holds_alternative<RepTcnTrainParams<T>>(block.tcn)) return Structure::kTrain;
    const bool gc_fused = std::visit(
        Overloaded{[](const HpiGcRpParams<T>& g) { return g.pas.size() == 1 && !g.bn; },
                   [](const HpiGcOpParams<T>& g) { return !g.bn.has_value(); }},
        block.gc);
    if (!gc_fused) return Structure::kTrain;
  }
  return Structure::kFused;
}

template <typename T>
std::size_t ModelParams<T>::param_count() const {
  std::size_t n = stem.param_count() + head.param_count();
  for (const auto& block : blocks) n += block.param_count();
  return n;
}

template <typename T>
ModelParams<T> build_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  Initializer<T> init(seed, static_cast<T>(spec.bn_epsilon));
  ModelParams<T> m;
  m.spec = spec;
  m.stem = init.pointwise(spec.channels.front(), spec.in_channels, true);
  m.blocks.reserve(ModelSpec::kBlocks);
  for (std::size_t b = 0; b < ModelSpec::kBlocks; ++b) {
    const std::size_t c_in = spec.block_in(b);
    const std::size_t c_out = spec.block_out(b);
    const std::size_t stride = spec.block_stride(b);
    BlockParams<T> block;

    // Spatial module; the mid width equals the output width.
    const std::size_t pas = spec.variant == Variant::kRp ? spec.n_pas : HpiGcOpParams<T>::kGroups;
    auto pre = init.pointwise(c_out, c_in, true);
    std::vector<AdjacencyParam<T>> mats;
    for (std::size_t i = 0; i < pas; ++i) mats.push_back(init.pa(spec.joints));
    auto post = init.pointwise(c_out, c_out, false);
    const double summed = spec.variant == Variant::kRp ? static_cast<double>(spec.n_pas) : 1.0;
    auto bn = init.bn(c_out, 0.5, 1.0, summed * summed);
    if (spec.variant == Variant::kRp) {
      block.gc = HpiGcRpParams<T>{std::move(pre), std::move(mats), std::move(post), std::move(bn)};
    } else {
      block.gc = HpiGcOpParams<T>{std::move(pre), std::move(mats), std::move(post), std::move(bn)};
    }

    // Temporal module operates at c_out -> c_out.
    RepTcnTrainParams<T> tcn;
    tcn.config = RepTcnConfig{c_out, c_out, spec.k_max, stride};
    tcn.a.conv = init.temporal(c_out, c_out, spec.k_max, stride, false);
    tcn.a.bn = init.bn(c_out, 0.2, 0.5, 1.0);
    tcn.b = serial_branch(init, c_out, c_out, 5, stride);
    tcn.c = serial_branch(init, c_out, c_out, 3, stride);
    if (tcn.config.has_pool_branch()) {
      tcn.d = PoolBnBranch<T>{3, init.bn(c_out, 0.2, 0.5, 1.0)};
    }
    block.tcn = std::move(tcn);

    if (c_in == c_out && stride == 1) {
      block.residual = IdentityResidual{};
    } else {
      auto res = init.temporal(c_out, c_in, 1, stride, true);
      block.residual = std::move(res);
    }
    m.blocks.push_back(std::move(block));
  }
  m.head = init.pointwise(spec.num_classes, spec.channels.back(), true);
  return m;
}

template <typename T>
Tensor4<T> block_forward(const BlockParams<T>& block, const Tensor4<T>& x) {
  Tensor4<T> y = std::visit(
      Overloaded{[&](const HpiGcRpParams<T>& g) { return hpi_gc_rp_forward_train(x, g); },
                 [&](const HpiGcOpParams<T>& g) { return hpi_gc_op_forward(x, g); }},
      block.gc);
  y = std::visit(
      Overloaded{[&](const RepTcnTrainParams<T>& p) { return rep_tcn_forward_train(y, p); },
                 [&](const RepTcnInferParams<T>& p) { return rep_tcn_forward_infer(y, p); }},
      block.tcn);
  std::visit(Overloaded{[](const NoResidual&) {},
                        [&](const IdentityResidual&) { add_inplace(y, x); },
                        [&](const TemporalConvParams<T>& conv) {
                          add_inplace(y, temporal_conv(x, conv));
                        }},
             block.residual);
  relu_inplace(y);
  return y;
}

template <typename T>
Tensor4<T> forward(const ModelParams<T>& params, const Tensor4<T>& x, ForwardTrace<T>* trace) {
  const auto& spec = params.spec;
  const auto& s = x.shape();
  if (s.c != spec.in_channels || s.v != spec.joints || s.t % spec.time_divisor() != 0) {
    throw ShapeError("model input " + to_string(s) + " does not match expected (N, " +
                     std::to_string(spec.in_channels) + ", T, " + std::to_string(spec.joints) +
                     ") with T a multiple of " + std::to_string(spec.time_divisor()));
  }
  if (trace != nullptr) trace->block_outputs.clear();
  Tensor4<T> h = pointwise_conv(x, params.stem);
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    try {
      h = block_forward(params.blocks[b], h);
    } catch (const ShapeError& e) {
      throw ShapeError(block_tag(b) + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(block_tag(b) + e.what());
    }
    if (trace != nullptr) trace->block_outputs.push_back(h);
  }
  return linear_head(global_avg_pool(h), params.head);
}

template <typename T>
ModelParams<T> fuse_model(const ModelParams<T>& params) {
  ModelParams<T> out;
  out.spec = params.spec;
  out.stem = params.stem;
  out.head = params.head;
  out.blocks.reserve(params.blocks.size());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& src = params.blocks[b];
    BlockParams<T> block;
    try {
      block.gc = std::visit(
          Overloaded{[](const HpiGcRpParams<T>& g) -> GcParams<T> {
                       return hpi_gc_rp_fuse(g, FoldBn::kYes);
                     },
                     [](const HpiGcOpParams<T>& g) -> GcParams<T> { return hpi_gc_op_fold_bn(g); }},
          src.gc);
      block.tcn = std::visit(
          Overloaded{[](const RepTcnTrainParams<T>& p) -> TcnParams<T> { return rep_tcn_fuse(p); },
                     [](const RepTcnInferParams<T>& p) -> TcnParams<T> { return p; }},
          src.tcn);
    } catch (const ShapeError& e) {
      throw ShapeError(block_tag(b) + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(block_tag(b) + e.what());
    }
    block.residual = src.residual;
    out.blocks.push_back(std::move(block));
  }
  return out;
}

template <typename T>
FlopParamReport count_flops_params(const ModelParams<T>& params, const Shape4& input) {
  FlopParamReport report;
  const auto add = [&](std::string name, std::uint64_t macs, std::uint64_t count) {
    report.layers.push_back(LayerCount{std::move(name), 2 * macs, count});
    report.flops += 2 * macs;
    report.params += count;
  };
  const std::uint64_t n = input.n;
  const std::uint64_t v = input.v;
  std::uint64_t frames = input.t;
  const auto conv_macs = [&](const TemporalConvParams<T>& c, std::uint64_t t_in) {
    const std::uint64_t t_out = (t_in + 2 * c.padding - c.kernel) / c.stride + 1;
    return n * c.c_out * c.c_in * c.kernel * t_out * v;
  };

  add("stem", n * params.stem.c_out * params.stem.c_in * frames * v, params.stem.param_count());
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const auto& block = params.blocks[b];
    const Shape4 in{input.n, params.spec.block_in(b), frames, input.v};
    std::uint64_t macs = std::visit(
        Overloaded{[&](const HpiGcRpParams<T>& g) { return std::uint64_t{hpi_gc_rp_macs(g, in)}; },
                   [&](const HpiGcOpParams<T>& g) { return std::uint64_t{hpi_gc_op_macs(g, in)}; }},
        block.gc);
    std::uint64_t t_out = frames;
    std::visit(
        Overloaded{
            [&](const RepTcnTrainParams<T>& p) {
              macs += conv_macs(p.a.conv, frames);
              for (const auto* s : {p.b ? &*p.b : nullptr, p.c ? &*p.c : nullptr}) {
                if (s == nullptr) continue;
                macs += n * s->first.c_out * s->first.c_in * frames * v;
                macs += conv_macs(s->second, frames);
              }
              t_out = p.a.conv.output_frames(frames);
              if (p.d) macs += n * p.config.c_out * p.d->kernel * t_out * v;
            },
            [&](const RepTcnInferParams<T>& p) {
              macs += conv_macs(p.fused, frames);
              t_out = p.fused.output_frames(frames);
            }},
        block.tcn);
    if (const auto* conv = std::get_if<TemporalConvParams<T>>(&block.residual)) {
      macs += conv_macs(*conv, frames);
    }
    add("block" + std::to_string(b + 1), macs, block.param_count());
    frames = t_out;
  }
  add("head", n * params.head.c_out * params.head.c_in, params.head.param_count());
  return report;
}

template <typename T>
std::size_t argmax_lowest_tie(std::span<const T> row) {
  if (row.empty()) throw ShapeError("argmax: empty score row");
  T scale = T(0);
  for (const T value : row) scale = std::max(scale, std::abs(value));
  const T tolerance = T(4) * std::numeric_limits<T>::epsilon() * scale;
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best] + tolerance) best = j;
  }
  return best;
}

template <typename T>
EnsembleResult<T> ensemble_average(std::span<const Tensor4<T>> scores,
                                   std::span<const double> weights) {
  if (scores.empty()) throw ShapeError("ensemble: no score streams");
  if (!weights.empty() && weights.size() != scores.size()) {
    throw ShapeError("ensemble: " + std::to_string(weights.size()) + " weights for " +
                     std::to_string(scores.size()) + " streams");
  }
  const Shape4 shape = scores.front().shape();
  if (shape.t != 1 || shape.v != 1) {
    throw ShapeError("ensemble: scores must be (N, classes, 1, 1), got " + to_string(shape));
  }
  double total = 0.0;
  for (std::size_t s = 0; s < scores.size(); ++s) {
    if (scores[s].shape() != shape) {
      throw ShapeError("ensemble: stream " + std::to_string(s) + " has shape " +
                       to_string(scores[s].shape()) + ", stream 0 has " + to_string(shape));
    }
    const double w = weights.empty() ? 1.0 : weights[s];
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("ensemble: weights must be >= 0");
    total += w;
  }
  if (!(total > 0.0)) throw ConfigError("ensemble: weights sum to zero");

  EnsembleResult<T> result{Tensor4<T>(shape), {}};
  auto mean = result.mean.data();
  for (std::size_t s = 0; s < scores.size(); ++s) {
    const T w = static_cast<T>(weights.empty() ? 1.0 : weights[s]);
    const auto src = scores[s].data();
    for (std::size_t e = 0; e < mean.size(); ++e) mean[e] += w * src[e];
  }
  const T norm = static_cast<T>(total);
  for (T& value : mean) value /= norm;
  result.predictions.reserve(shape.n);
  for (std::size_t n = 0; n < shape.n; ++n) {
    result.predictions.push_back(
        argmax_lowest_tie<T>(std::span<const T>(mean).subspan(n * shape.c, shape.c)));
  }
  return result;
}

#define HPIGCN_INSTANTIATE_MODEL(T)                                                          \
  template struct BlockParams<T>;                                                            \
  template struct ModelParams<T>;                                                            \
  template ModelParams<T> build_model<T>(const ModelSpec&, std::uint64_t);                   \
  template Tensor4<T> block_forward(const BlockParams<T>&, const Tensor4<T>&);               \
  template Tensor4<T> forward(const ModelParams<T>&, const Tensor4<T>&, ForwardTrace<T>*);   \
  template ModelParams<T> fuse_model(const ModelParams<T>&);                                 \
  template FlopParamReport count_flops_params(const ModelParams<T>&, const Shape4&);         \
  template std::size_t argmax_lowest_tie(std::span<const T>);                                \
  template EnsembleResult<T> ensemble_average(std::span<const Tensor4<T>>, std::span<const double>);

HPIGCN_INSTANTIATE_MODEL(float)
HPIGCN_INSTANTIATE_MODEL(double)

#undef HPIGCN_INSTANTIATE_MODEL

}  // namespace hpigcn
