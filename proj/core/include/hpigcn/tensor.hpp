#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hpigcn/errors.hpp"

namespace hpigcn {

/// (batch, channel, time, vertex) extents of a rank-4 activation.
struct Shape4 {
  std::size_t n = 1;
  std::size_t c = 1;
  std::size_t t = 1;
  std::size_t v = 1;

  constexpr std::size_t numel() const noexcept { return n * c * t * v; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;
};

std::string to_string(const Shape4& s);

/// Dense rank-4 tensor stored row-major in (N, C, T, V) order.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() : data_(1, T{0}) {}

  explicit Tensor4(Shape4 shape, T fill = T{0}) : shape_(shape) {
    check_dims(shape_);
    data_.assign(shape_.numel(), fill);
  }

  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_dims(shape_);
    if (data_.size() != shape_.numel()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + to_string(shape_));
    }
  }

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t numel() const noexcept { return data_.size(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t t, std::size_t v) const noexcept {
    return ((n * shape_.c + c) * shape_.t + t) * shape_.v + v;
  }

  T& operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t v) noexcept {
    return data_[offset(n, c, t, v)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t t, std::size_t v) const noexcept {
    return data_[offset(n, c, t, v)];
  }

  /// The contiguous T*V plane of sample n, channel c.
  std::span<T> plane(std::size_t n, std::size_t c) noexcept {
    return std::span<T>(data_).subspan(offset(n, c, 0, 0), shape_.t * shape_.v);
  }
  std::span<const T> plane(std::size_t n, std::size_t c) const noexcept {
    return std::span<const T>(data_).subspan(offset(n, c, 0, 0), shape_.t * shape_.v);
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  static void check_dims(const Shape4& s) {
    if (s.n == 0 || s.c == 0 || s.t == 0 || s.v == 0) {
      throw ShapeError("tensor dimensions must be >= 1, got " + to_string(s));
    }
  }

  Shape4 shape_{};
  std::vector<T> data_;
};

/// Largest absolute element-wise difference; shapes must match.
template <typename T>
T max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b);

}  // namespace hpigcn
