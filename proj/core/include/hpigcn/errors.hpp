#pragma once

#include <stdexcept>
#include <string>

namespace hpigcn {

/// Tensor or parameter dimensions do not line up.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A configuration is invalid regardless of input data (odd/even kernel,
/// indivisible groups, bad architecture spec, non-finite weights).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hpigcn
