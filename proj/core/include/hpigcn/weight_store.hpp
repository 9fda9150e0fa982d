#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hpigcn {

// Binary tensor container. All integers little-endian.
//
//   "HPIW"            4 bytes magic
//   version           u32 (kWeightStoreVersion)
//   count             u32
//   count x entry:
//     name_len        u32, then name_len bytes of UTF-8
//     dtype           u8  (0 = f32, 1 = f64)
//     rank            u8
//     dims            u32 x rank
//     offset          u64 absolute byte offset of the payload
//   payloads          raw little-endian element data
//
// Writers emit entries in insertion order with payloads packed back to back
// directly after the table, so equal stores serialize to equal bytes.

inline constexpr std::uint32_t kWeightStoreVersion = 1;

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1 };

std::size_t dtype_size(DType d) noexcept;
std::string to_string(DType d);

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<double>() { return DType::kF64; }

enum class FormatErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kOverlap,
  kBadDtype,
  kBadName,
  kDuplicateName,
  kBadShape,
  kMissingTensor,
  kUnexpectedTensor,
  kDtypeMismatch,
  kBadConfig,
};

std::string to_string(FormatErrorKind kind);

/// Malformed or incompatible file. what() is "<kind>: <detail>".
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& detail)
      : std::runtime_error(to_string(kind) + ": " + detail), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

/// Loading a tensor whose stored dtype differs from the requested one.
enum class DtypePolicy { kConvert, kStrict };

struct StoredTensor {
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> dims;
  std::vector<std::byte> payload;  // little-endian elements

  std::size_t numel() const noexcept;
  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

class WeightStore {
 public:
  /// Adds a tensor; names must be unique and non-empty.
  void put(const std::string& name, StoredTensor tensor);

  template <typename T>
  void put_values(const std::string& name, std::vector<std::uint32_t> dims,
                  std::span<const T> values);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const StoredTensor& at(const std::string& name) const;
  StoredTensor& at(const std::string& name);
  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }

  /// Values of `name` as T. If `dims` is non-empty the stored dims must
  /// match exactly (kBadShape otherwise).
  template <typename T>
  std::vector<T> get_values(const std::string& name, std::span<const std::uint32_t> dims = {},
                            DtypePolicy policy = DtypePolicy::kConvert) const;

  std::vector<std::byte> serialize() const;
  static WeightStore deserialize(std::span<const std::byte> bytes);

  void save(const std::filesystem::path& path) const;
  static WeightStore load(const std::filesystem::path& path);

  friend bool operator==(const WeightStore& a, const WeightStore& b) {
    return a.names_ == b.names_ && a.tensors_ == b.tensors_;
  }

 private:
  std::vector<std::string> names_;
  std::vector<StoredTensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

std::vector<std::byte> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace hpigcn
