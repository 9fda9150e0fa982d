#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "hpigcn/params.hpp"
#include "hpigcn/tensor.hpp"

namespace hpigcn {

// Dense operators over (N, C, T, V) tensors.
//
// Every reduction accumulates in the tensor dtype in a fixed order (input
// channel outer, kernel tap inner for convolutions; source vertex ascending
// for graph convs) and the bias is added after the sum. Zero padding is
// materialized, so border taps contribute w * 0 like any other tap.
// Results do not depend on the thread count.

/// out[n,o,t,v] = bias[o] + sum_{i,k} w[o,i,k] * x_pad[n,i,t*stride+k,v]
template <typename T>
Tensor4<T> temporal_conv(const Tensor4<T>& x, const TemporalConvParams<T>& p);

/// out[n,o,t,v] = bias[o] + sum_i w[o,i] * x[n,i,t,v]
template <typename T>
Tensor4<T> pointwise_conv(const Tensor4<T>& x, const PointwiseConvParams<T>& p);

/// out[n,c,t,v] = sum_u x[n,c,t,u] * a[u,v]
template <typename T>
Tensor4<T> graph_conv(const Tensor4<T>& x, const AdjacencyParam<T>& a);

/// Contiguous channel block g of C/groups channels is multiplied by pas[g].
template <typename T>
Tensor4<T> grouped_graph_conv(const Tensor4<T>& x, std::span<const AdjacencyParam<T>> pas,
                              std::size_t groups);

/// K x 1 average pooling over time. Padded positions count as zeros and the
/// divisor is always K, so this equals a depth-wise conv with taps 1/K.
template <typename T>
Tensor4<T> avg_pool_time(const Tensor4<T>& x, std::size_t kernel, std::size_t stride,
                         std::size_t padding);

/// (x - mean) * scale / sqrt(variance + epsilon) + shift, per channel.
template <typename T>
Tensor4<T> batch_norm_infer(const Tensor4<T>& x, const BatchNormParams<T>& p);

template <typename T>
Tensor4<T> relu(Tensor4<T> x);

template <typename T>
void relu_inplace(Tensor4<T>& x);

/// acc += y element-wise.
template <typename T>
void add_inplace(Tensor4<T>& acc, const Tensor4<T>& y);

/// Mean over T and V: (N, C, T, V) -> (N, C, 1, 1).
template <typename T>
Tensor4<T> global_avg_pool(const Tensor4<T>& x);

/// Dense classifier on pooled features: (N, C, 1, 1) -> (N, classes, 1, 1).
template <typename T>
Tensor4<T> linear_head(const Tensor4<T>& features, const PointwiseConvParams<T>& head);

/// Per-thread tallies of kernel invocations. Used to assert structural
/// contracts (one conv per fused Rep-TCN, one V x V product per fused GC).
struct KernelCounters {
  std::uint64_t temporal_conv = 0;
  std::uint64_t pointwise_conv = 0;
  std::uint64_t graph_matmul = 0;
  std::uint64_t avg_pool = 0;
};

KernelCounters& kernel_counters() noexcept;
void reset_kernel_counters() noexcept;

/// Worker threads used by the kernels (1 when built without OpenMP).
int num_threads() noexcept;
void set_num_threads(int threads) noexcept;

}  // namespace hpigcn
