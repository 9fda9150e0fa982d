#include "hpigcn/rep_tcn.hpp"

#include <string>
#include <vector>

#include "hpigcn/errors.hpp"
#include "hpigcn/ops.hpp"

namespace hpigcn {
namespace {

template <typename T>
void check_branch_geometry(const TemporalConvParams<T>& conv, const RepTcnConfig& cfg,
                           const char* name) {
  if (conv.c_in != cfg.c_in || conv.c_out != cfg.c_out) {
    throw ShapeError(std::string("rep-tcn branch ") + name + ": conv is " +
                     std::to_string(conv.c_in) + "->" + std::to_string(conv.c_out) +
                     ", block is " + std::to_string(cfg.c_in) + "->" + std::to_string(cfg.c_out));
  }
  if (conv.stride != cfg.stride) {
    throw ConfigError(std::string("rep-tcn branch ") + name + ": stride " +
                      std::to_string(conv.stride) + " differs from block stride " +
                      std::to_string(cfg.stride));
  }
  if (conv.kernel % 2 == 0 || conv.kernel > cfg.k_max) {
    throw ConfigError(std::string("rep-tcn branch ") + name + ": kernel " +
                      std::to_string(conv.kernel) + " must be odd and <= " +
                      std::to_string(cfg.k_max));
  }
  if (conv.padding != (conv.kernel - 1) / 2) {
    throw ConfigError(std::string("rep-tcn branch ") + name + ": padding must be (K - 1) / 2");
  }
}

template <typename T>
void check_serial(const SerialBranchParams<T>& s, const RepTcnConfig& cfg, const char* name) {
  try {
    s.validate();
  } catch (const ShapeError& e) {
    throw ShapeError(std::string("rep-tcn branch ") + name + ": " + e.what());
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("rep-tcn branch ") + name + ": " + e.what());
  }
  if (s.first.c_in != cfg.c_in) {
    throw ShapeError(std::string("rep-tcn branch ") + name + ": 1x1 conv expects " +
                     std::to_string(s.first.c_in) + " channels, block has " +
                     std::to_string(cfg.c_in));
  }
  auto geometry = s.second;
  geometry.c_in = cfg.c_in;  // the 1x1 conv absorbs the mid width
  check_branch_geometry(geometry, cfg, name);
  if (s.second.c_out != cfg.c_out) {
    throw ShapeError(std::string("rep-tcn branch ") + name + ": emits " +
                     std::to_string(s.second.c_out) + " channels, block has " +
                     std::to_string(cfg.c_out));
  }
}

}  // namespace

void RepTcnConfig::validate() const {
  if (c_in == 0 || c_out == 0) throw ConfigError("rep-tcn: channels must be >= 1");
  if (k_max < 5 || k_max % 2 == 0) {
    throw ConfigError("rep-tcn: K_max must be odd and >= 5, got " + std::to_string(k_max));
  }
  if (stride != 1 && stride != 2) {
    throw ConfigError("rep-tcn: stride must be 1 or 2, got " + std::to_string(stride));
  }
}

template <typename T>
std::size_t RepTcnTrainParams<T>::param_count() const noexcept {
  std::size_t n = a.conv.param_count() + a.bn.param_count();
  if (b) n += b->param_count();
  if (c) n += c->param_count();
  if (d) n += d->bn.param_count();
  return n;
}

template <typename T>
void RepTcnTrainParams<T>::validate() const {
  config.validate();
  a.conv.validate("rep-tcn branch A conv");
  a.bn.validate("rep-tcn branch A batch norm");
  check_branch_geometry(a.conv, config, "A");
  if (a.bn.channels() != config.c_out) {
    throw ShapeError("rep-tcn branch A: batch norm has " + std::to_string(a.bn.channels()) +
                     " channels, expected " + std::to_string(config.c_out));
  }
  if (b) check_serial(*b, config, "B");
  if (c) check_serial(*c, config, "C");
  if (d) {
    if (!config.has_pool_branch()) {
      throw ConfigError("rep-tcn branch D: pooling needs c_in == c_out (" +
                        std::to_string(config.c_in) + " != " + std::to_string(config.c_out) + ")");
    }
    if (d->kernel % 2 == 0 || d->kernel > config.k_max) {
      throw ConfigError("rep-tcn branch D: pool kernel must be odd and <= K_max");
    }
    d->bn.validate("rep-tcn branch D batch norm");
    if (d->bn.channels() != config.c_out) {
      throw ShapeError("rep-tcn branch D: batch norm has " + std::to_string(d->bn.channels()) +
                       " channels, expected " + std::to_string(config.c_out));
    }
  }
}

template <typename T>
Tensor4<T> rep_tcn_forward_train(const Tensor4<T>& x, const RepTcnTrainParams<T>& p) {
  p.validate();
  if (x.shape().c != p.config.c_in) {
    throw ShapeError("rep-tcn: input has " + std::to_string(x.shape().c) + " channels, expected " +
                     std::to_string(p.config.c_in));
  }
  Tensor4<T> out = batch_norm_infer(temporal_conv(x, p.a.conv), p.a.bn);
  for (const auto* serial : {p.b ? &*p.b : nullptr, p.c ? &*p.c : nullptr}) {
    if (serial == nullptr) continue;
    add_inplace(out, batch_norm_infer(temporal_conv(pointwise_conv(x, serial->first),
                                                    serial->second),
                                      serial->bn));
  }
  if (p.d) {
    const std::size_t pad = (p.d->kernel - 1) / 2;
    add_inplace(out, batch_norm_infer(avg_pool_time(x, p.d->kernel, p.config.stride, pad),
                                      p.d->bn));
  }
  return out;
}

template <typename T>
RepTcnInferParams<T> rep_tcn_fuse(const RepTcnTrainParams<T>& p) {
  p.validate();
  const std::size_t k_max = p.config.k_max;
  const auto step = [](const char* branch, auto&& fn) {
    try {
      return fn();
    } catch (const ShapeError& e) {
      throw ShapeError(std::string("rep-tcn fuse, branch ") + branch + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("rep-tcn fuse, branch ") + branch + ": " + e.what());
    }
  };

  std::vector<TemporalConvParams<T>> branches;
  branches.reserve(4);
  // Step 1: conv-bn and pool-bn become plain convs.
  branches.push_back(step("A", [&] {
    return blend5_pad_kernel(blend2_fuse_bn(p.a.conv, p.a.bn), k_max);
  }));
  // Step 2: serial branches collapse to one conv each, padded to K_max.
  if (p.b) {
    branches.push_back(
        step("B", [&] { return blend5_pad_kernel(blend3_fuse_serial(*p.b), k_max); }));
  }
  if (p.c) {
    branches.push_back(
        step("C", [&] { return blend5_pad_kernel(blend3_fuse_serial(*p.c), k_max); }));
  }
  if (p.d) {
    branches.push_back(step("D", [&] {
      const auto pool = blend1_avgpool_to_conv<T>(p.d->kernel, p.config.c_out, p.config.stride,
                                                  (p.d->kernel - 1) / 2);
      return blend5_pad_kernel(blend2_fuse_bn(pool, p.d->bn), k_max);
    }));
  }
  // Step 3: one conv.
  RepTcnInferParams<T> out;
  out.fused = blend4_add_parallel(std::span<const TemporalConvParams<T>>(branches));
  return out;
}

template <typename T>
Tensor4<T> rep_tcn_forward_infer(const Tensor4<T>& x, const RepTcnInferParams<T>& p) {
  return temporal_conv(x, p.fused);
}

#define HPIGCN_INSTANTIATE_REP_TCN(T)                                                    \
  template struct RepTcnTrainParams<T>;                                                  \
  template Tensor4<T> rep_tcn_forward_train(const Tensor4<T>&, const RepTcnTrainParams<T>&); \
  template RepTcnInferParams<T> rep_tcn_fuse(const RepTcnTrainParams<T>&);               \
  template Tensor4<T> rep_tcn_forward_infer(const Tensor4<T>&, const RepTcnInferParams<T>&);

HPIGCN_INSTANTIATE_REP_TCN(float)
HPIGCN_INSTANTIATE_REP_TCN(double)

#undef HPIGCN_INSTANTIATE_REP_TCN

}  // namespace hpigcn
