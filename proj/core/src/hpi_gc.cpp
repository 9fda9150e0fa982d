#include "hpigcn/hpi_gc.hpp"

#include <span>
#include <string>

#include "hpigcn/blending.hpp"
#include "hpigcn/errors.hpp"
#include "hpigcn/ops.hpp"

namespace hpigcn {
namespace {

template <typename P>
void validate_common(const P& p, const char* name) {
  p.pre.validate(std::string(name) + " pre conv");
  p.post.validate(std::string(name) + " post conv");
  if (p.pas.empty()) throw ConfigError(std::string(name) + ": at least one PA required");
  const std::size_t v = p.pas.front().v;
  for (std::size_t i = 0; i < p.pas.size(); ++i) {
    p.pas[i].validate(std::string(name) + " PA " + std::to_string(i));
    if (p.pas[i].v != v) {
      throw ShapeError(std::string(name) + ": PA " + std::to_string(i) + " is " +
                       std::to_string(p.pas[i].v) + "x" + std::to_string(p.pas[i].v) +
                       ", PA 0 is " + std::to_string(v) + "x" + std::to_string(v));
    }
  }
  if (p.post.c_in != p.pre.c_out) {
    throw ShapeError(std::string(name) + ": pre conv emits " + std::to_string(p.pre.c_out) +
                     " channels, post conv expects " + std::to_string(p.post.c_in));
  }
  if (p.bn) {
    p.bn->validate(std::string(name) + " batch norm");
    if (p.bn->channels() != p.post.c_out) {
      throw ShapeError(std::string(name) + ": batch norm has " +
                       std::to_string(p.bn->channels()) + " channels, post conv emits " +
                       std::to_string(p.post.c_out));
    }
  }
}

template <typename P>
std::size_t count_common(const P& p) {
  std::size_t n = p.pre.param_count() + p.post.param_count();
  for (const auto& a : p.pas) n += a.param_count();
  if (p.bn) n += p.bn->param_count();
  return n;
}

template <typename T, typename P>
Tensor4<T> finish(Tensor4<T> mixed, const P& p) {
  Tensor4<T> y = pointwise_conv(mixed, p.post);
  if (p.bn) y = batch_norm_infer(y, *p.bn);
  relu_inplace(y);
  return y;
}

template <typename T>
PointwiseConvParams<T> fold_into_post(const PointwiseConvParams<T>& post,
                                      const BatchNormParams<T>& bn) {
  return as_pointwise(blend2_fuse_bn(as_temporal(post), bn));
}

}  // namespace

template <typename T>
std::size_t HpiGcRpParams<T>::param_count() const noexcept {
  return count_common(*this);
}

template <typename T>
void HpiGcRpParams<T>::validate() const {
  validate_common(*this, "hpi-gc-rp");
}

template <typename T>
std::size_t HpiGcOpParams<T>::param_count() const noexcept {
  return count_common(*this);
}

template <typename T>
void HpiGcOpParams<T>::validate() const {
  validate_common(*this, "hpi-gc-op");
  if (pas.size() != kGroups) {
    throw ConfigError("hpi-gc-op: expected " + std::to_string(kGroups) + " PAs, got " +
                      std::to_string(pas.size()));
  }
  if (pre.c_out % kGroups != 0) {
    throw ConfigError("hpi-gc-op: mid width " + std::to_string(pre.c_out) +
                      " not divisible by " + std::to_string(kGroups));
  }
}

template <typename T>
Tensor4<T> hpi_gc_rp_forward_train(const Tensor4<T>& x, const HpiGcRpParams<T>& p) {
  p.validate();
  const Tensor4<T> h = pointwise_conv(x, p.pre);
  Tensor4<T> mixed = graph_conv(h, p.pas.front());
  for (std::size_t i = 1; i < p.pas.size(); ++i) add_inplace(mixed, graph_conv(h, p.pas[i]));
  return finish(std::move(mixed), p);
}

template <typename T>
HpiGcRpParams<T> hpi_gc_rp_fuse(const HpiGcRpParams<T>& p, FoldBn fold) {
  p.validate();
  HpiGcRpParams<T> out;
  out.pre = p.pre;
  out.pas = {blend6_fuse_adjacency(std::span<const AdjacencyParam<T>>(p.pas))};
  if (fold == FoldBn::kYes && p.bn) {
    out.post = fold_into_post(p.post, *p.bn);
  } else {
    out.post = p.post;
    out.bn = p.bn;
  }
  return out;
}

template <typename T>
Tensor4<T> hpi_gc_op_forward(const Tensor4<T>& x, const HpiGcOpParams<T>& p) {
  p.validate();
  const Tensor4<T> h = pointwise_conv(x, p.pre);
  return finish(grouped_graph_conv(h, std::span<const AdjacencyParam<T>>(p.pas), p.kGroups), p);
}

template <typename T>
HpiGcOpParams<T> hpi_gc_op_fold_bn(const HpiGcOpParams<T>& p) {
  p.validate();
  HpiGcOpParams<T> out = p;
  if (p.bn) {
    out.post = fold_into_post(p.post, *p.bn);
    out.bn.reset();
  }
  return out;
}

template <typename T>
std::size_t hpi_gc_rp_macs(const HpiGcRpParams<T>& p, const Shape4& in) {
  const std::size_t tv = in.t * in.v;
  const std::size_t mid = p.pre.c_out;
  return in.n * (mid * p.pre.c_in * tv + p.pas.size() * mid * in.t * in.v * in.v +
                 p.post.c_out * mid * tv);
}

template <typename T>
std::size_t hpi_gc_op_macs(const HpiGcOpParams<T>& p, const Shape4& in) {
  const std::size_t tv = in.t * in.v;
  const std::size_t mid = p.pre.c_out;
  // Each of the 8 groups multiplies mid/8 channels by its own V x V matrix.
  const std::size_t graph = p.kGroups * (mid / p.kGroups) * in.t * in.v * in.v;
  return in.n * (mid * p.pre.c_in * tv + graph + p.post.c_out * mid * tv);
}

#define HPIGCN_INSTANTIATE_HPI_GC(T)                                                     \
  template struct HpiGcRpParams<T>;                                                      \
  template struct HpiGcOpParams<T>;                                                      \
  template Tensor4<T> hpi_gc_rp_forward_train(const Tensor4<T>&, const HpiGcRpParams<T>&); \
  template HpiGcRpParams<T> hpi_gc_rp_fuse(const HpiGcRpParams<T>&, FoldBn);             \
  template Tensor4<T> hpi_gc_op_forward(const Tensor4<T>&, const HpiGcOpParams<T>&);     \
  template HpiGcOpParams<T> hpi_gc_op_fold_bn(const HpiGcOpParams<T>&);                  \
  template std::size_t hpi_gc_rp_macs(const HpiGcRpParams<T>&, const Shape4&);           \
  template std::size_t hpi_gc_op_macs(const HpiGcOpParams<T>&, const Shape4&);

HPIGCN_INSTANTIATE_HPI_GC(float)
HPIGCN_INSTANTIATE_HPI_GC(double)

#undef HPIGCN_INSTANTIATE_HPI_GC

}  // namespace hpigcn
