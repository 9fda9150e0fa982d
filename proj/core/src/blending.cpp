#include "hpigcn/blending.hpp"

#include <algorithm>
#include <string>
#include <vector>

#include "hpigcn/errors.hpp"
#include "kernels.hpp"

namespace hpigcn {

template <typename T>
void SerialBranchParams<T>::validate() const {
  first.validate("serial branch 1x1 conv");
  second.validate("serial branch Kx1 conv");
  bn.validate("serial branch batch norm");
  if (first.has_bias()) {
    throw ConfigError("serial branch: the 1x1 conv must be bias-free");
  }
  if (first.c_out != second.c_in) {
    throw ShapeError("serial branch: 1x1 conv emits " + std::to_string(first.c_out) +
                     " channels, Kx1 conv expects " + std::to_string(second.c_in));
  }
  if (bn.channels() != second.c_out) {
    throw ShapeError("serial branch: batch norm has " + std::to_string(bn.channels()) +
                     " channels, Kx1 conv emits " + std::to_string(second.c_out));
  }
}

template <typename T>
TemporalConvParams<T> blend1_avgpool_to_conv(std::size_t kernel, std::size_t channels,
                                             std::size_t stride, std::size_t padding) {
  if (kernel < 1) throw ConfigError("blend1: pooling kernel must be >= 1");
  if (channels < 1) throw ConfigError("blend1: channel count must be >= 1");
  if (stride < 1) throw ConfigError("blend1: stride must be >= 1");
  auto conv = TemporalConvParams<T>::zeros(channels, channels, kernel, stride, padding, true);
  const T tap = T(1) / static_cast<T>(kernel);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t k = 0; k < kernel; ++k) conv.w(c, c, k) = tap;
  }
  return conv;
}

template <typename T>
TemporalConvParams<T> blend2_fuse_bn(const TemporalConvParams<T>& conv,
                                     const BatchNormParams<T>& bn) {
  conv.validate("blend2 conv");
  bn.validate("blend2 batch norm");
  if (bn.channels() != conv.c_out) {
    throw ShapeError("blend2: batch norm has " + std::to_string(bn.channels()) +
                     " channels, conv emits " + std::to_string(conv.c_out));
  }
  const std::vector<T> f = bn.factor();
  TemporalConvParams<T> out = conv;
  out.bias.assign(conv.c_out, T(0));
  const std::size_t per_out = conv.c_in * conv.kernel;
  for (std::size_t o = 0; o < conv.c_out; ++o) {
    for (std::size_t j = 0; j < per_out; ++j) out.weight[o * per_out + j] *= f[o];
    const T b = conv.has_bias() ? conv.bias[o] : T(0);
    out.bias[o] = (b - bn.mean[o]) * f[o] + bn.shift[o];
  }
  return out;
}

template <typename T>
TemporalConvParams<T> blend3_fuse_serial(const SerialBranchParams<T>& branch) {
  branch.validate();
  const auto& first = branch.first;
  const auto& second = branch.second;
  auto merged = TemporalConvParams<T>::zeros(second.c_out, first.c_in, second.kernel,
                                             second.stride, second.padding, false);
  merged.bias = second.bias;
  const std::size_t c_in = first.c_in;
  const std::size_t kernel = second.kernel;
  // acc[k][i] for one output channel; m ascending for every element.
  std::vector<T> acc(kernel * c_in);
  for (std::size_t o = 0; o < second.c_out; ++o) {
    std::fill(acc.begin(), acc.end(), T(0));
    for (std::size_t m = 0; m < second.c_in; ++m) {
      const T* row = first.weight.data() + m * c_in;
      for (std::size_t k = 0; k < kernel; ++k) {
        const T s = second.w(o, m, k);
        T* dst = acc.data() + k * c_in;
        for (std::size_t i = 0; i < c_in; ++i) dst[i] = detail::madd(s, row[i], dst[i]);
      }
    }
    for (std::size_t i = 0; i < c_in; ++i) {
      for (std::size_t k = 0; k < kernel; ++k) merged.w(o, i, k) = acc[k * c_in + i];
    }
  }
  return blend2_fuse_bn(merged, branch.bn);
}

template <typename T>
TemporalConvParams<T> blend4_add_parallel(std::span<const TemporalConvParams<T>> branches) {
  if (branches.empty()) throw ConfigError("blend4: no branches to add");
  const auto& ref = branches.front();
  bool any_bias = false;
  for (std::size_t b = 0; b < branches.size(); ++b) {
    const auto& br = branches[b];
    br.validate("blend4 branch " + std::to_string(b));
    if (br.c_out != ref.c_out || br.c_in != ref.c_in || br.kernel != ref.kernel ||
        br.stride != ref.stride || br.padding != ref.padding) {
      throw ConfigError("blend4: branch " + std::to_string(b) +
                        " differs in channels, kernel, stride or padding from branch 0");
    }
    any_bias = any_bias || br.has_bias();
  }
  auto sum = TemporalConvParams<T>::zeros(ref.c_out, ref.c_in, ref.kernel, ref.stride,
                                          ref.padding, any_bias);
  for (const auto& br : branches) {
    for (std::size_t j = 0; j < sum.weight.size(); ++j) sum.weight[j] += br.weight[j];
    if (br.has_bias()) {
      for (std::size_t o = 0; o < sum.bias.size(); ++o) sum.bias[o] += br.bias[o];
    }
  }
  return sum;
}

template <typename T>
TemporalConvParams<T> blend5_pad_kernel(const TemporalConvParams<T>& conv, std::size_t kernel) {
  conv.validate("blend5 conv");
  if (conv.kernel % 2 == 0 || kernel % 2 == 0) {
    throw ConfigError("blend5: kernels must be odd (got " + std::to_string(conv.kernel) +
                      " -> " + std::to_string(kernel) + ")");
  }
  if (kernel < conv.kernel) {
    throw ConfigError("blend5: cannot shrink kernel " + std::to_string(conv.kernel) + " to " +
                      std::to_string(kernel));
  }
  const std::size_t shift = (kernel - conv.kernel) / 2;
  auto out = TemporalConvParams<T>::zeros(conv.c_out, conv.c_in, kernel, conv.stride,
                                          conv.padding + shift, false);
  out.bias = conv.bias;
  for (std::size_t o = 0; o < conv.c_out; ++o) {
    for (std::size_t i = 0; i < conv.c_in; ++i) {
      for (std::size_t k = 0; k < conv.kernel; ++k) out.w(o, i, k + shift) = conv.w(o, i, k);
    }
  }
  return out;
}

template <typename T>
AdjacencyParam<T> blend6_fuse_adjacency(std::span<const AdjacencyParam<T>> pas) {
  if (pas.empty()) throw ConfigError("blend6: no adjacency matrices to fuse");
  const std::size_t v = pas.front().v;
  auto fused = AdjacencyParam<T>::zeros(v);
  for (std::size_t j = 0; j < pas.size(); ++j) {
    pas[j].validate("blend6 adjacency " + std::to_string(j));
    if (pas[j].v != v) {
      throw ShapeError("blend6: adjacency " + std::to_string(j) + " is " +
                       std::to_string(pas[j].v) + "x" + std::to_string(pas[j].v) +
                       ", expected " + std::to_string(v) + "x" + std::to_string(v));
    }
    for (std::size_t e = 0; e < fused.matrix.size(); ++e) fused.matrix[e] += pas[j].matrix[e];
  }
  return fused;
}

#define HPIGCN_INSTANTIATE_BLENDING(T)                                                          \
  template struct SerialBranchParams<T>;                                                        \
  template TemporalConvParams<T> blend1_avgpool_to_conv<T>(std::size_t, std::size_t,            \
                                                           std::size_t, std::size_t);           \
  template TemporalConvParams<T> blend2_fuse_bn(const TemporalConvParams<T>&,                   \
                                                const BatchNormParams<T>&);                     \
  template TemporalConvParams<T> blend3_fuse_serial(const SerialBranchParams<T>&);              \
  template TemporalConvParams<T> blend4_add_parallel(std::span<const TemporalConvParams<T>>);   \
  template TemporalConvParams<T> blend5_pad_kernel(const TemporalConvParams<T>&, std::size_t); \
  template AdjacencyParam<T> blend6_fuse_adjacency(std::span<const AdjacencyParam<T>>);

HPIGCN_INSTANTIATE_BLENDING(float)
HPIGCN_INSTANTIATE_BLENDING(double)

#undef HPIGCN_INSTANTIATE_BLENDING

}  // namespace hpigcn
