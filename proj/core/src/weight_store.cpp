#include "hpigcn/weight_store.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <limits>
#include <numeric>

namespace hpigcn {
namespace {

constexpr std::byte kMagic[4] = {std::byte{'H'}, std::byte{'P'}, std::byte{'I'}, std::byte{'W'}};
constexpr std::size_t kHeaderBytes = 12;
// name_len + dtype + rank + offset, for an entry with an empty name and rank 0.
constexpr std::size_t kMinEntryBytes = 4 + 1 + 1 + 8;

template <typename U>
void put_le(std::vector<std::byte>& out, U value) {
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    out.push_back(static_cast<std::byte>((value >> (8 * i)) & 0xFF));
  }
}

template <typename U>
U get_le(const std::byte* p) {
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    value |= static_cast<U>(std::to_integer<unsigned>(p[i])) << (8 * i);
  }
  return value;
}

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

template <typename T>
void encode(std::span<const T> values, std::vector<std::byte>& out) {
  out.reserve(out.size() + values.size() * sizeof(T));
  for (const T v : values) put_le(out, std::bit_cast<Bits<T>>(v));
}

template <typename T>
T decode_at(const std::byte* p) {
  return std::bit_cast<T>(get_le<Bits<T>>(p));
}

bool valid_utf8(std::span<const std::byte> s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const unsigned c = std::to_integer<unsigned>(s[i]);
    std::size_t extra = 0;
    unsigned min_cp = 0;
    unsigned cp = 0;
    if (c < 0x80) {
      ++i;
      continue;
    } else if ((c & 0xE0) == 0xC0) {
      extra = 1, min_cp = 0x80, cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      extra = 2, min_cp = 0x800, cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      extra = 3, min_cp = 0x10000, cp = c & 0x07;
    } else {
      return false;
    }
    if (i + extra >= s.size()) return false;
    for (std::size_t k = 1; k <= extra; ++k) {
      const unsigned cc = std::to_integer<unsigned>(s[i + k]);
      if ((cc & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += extra + 1;
  }
  return true;
}

std::string named(const std::string& name) { return "'" + name + "'"; }

}  // namespace

std::size_t dtype_size(DType d) noexcept { return d == DType::kF32 ? 4 : 8; }

std::string to_string(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

std::string to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kVersionMismatch: return "version mismatch";
    case FormatErrorKind::kTruncated: return "truncated";
    case FormatErrorKind::kOverlap: return "overlapping offsets";
    case FormatErrorKind::kBadDtype: return "bad dtype";
    case FormatErrorKind::kBadName: return "bad name";
    case FormatErrorKind::kDuplicateName: return "duplicate name";
    case FormatErrorKind::kBadShape: return "bad shape";
    case FormatErrorKind::kMissingTensor: return "missing tensor";
    case FormatErrorKind::kUnexpectedTensor: return "unexpected tensor";
    case FormatErrorKind::kDtypeMismatch: return "dtype mismatch";
    case FormatErrorKind::kBadConfig: return "bad config";
  }
  return "format error";
}

std::size_t StoredTensor::numel() const noexcept {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t d) { return a * d; });
}

void WeightStore::put(const std::string& name, StoredTensor tensor) {
  if (name.empty()) throw FormatError(FormatErrorKind::kBadName, "empty tensor name");
  if (!valid_utf8(std::as_bytes(std::span(name.data(), name.size())))) {
    throw FormatError(FormatErrorKind::kBadName, "tensor name is not valid UTF-8");
  }
  if (contains(name)) throw FormatError(FormatErrorKind::kDuplicateName, named(name));
  if (tensor.dims.size() > std::numeric_limits<std::uint8_t>::max()) {
    throw FormatError(FormatErrorKind::kBadShape, named(name) + " has rank > 255");
  }
  if (tensor.payload.size() != tensor.numel() * dtype_size(tensor.dtype)) {
    throw FormatError(FormatErrorKind::kBadShape,
                      named(name) + " payload does not match its dims and dtype");
  }
  index_.emplace(name, names_.size());
  names_.push_back(name);
  tensors_.push_back(std::move(tensor));
}

template <typename T>
void WeightStore::put_values(const std::string& name, std::vector<std::uint32_t> dims,
                             std::span<const T> values) {
  StoredTensor t;
  t.dtype = dtype_of<T>();
  t.dims = std::move(dims);
  encode(values, t.payload);
  put(name, std::move(t));
}

const StoredTensor& WeightStore::at(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw FormatError(FormatErrorKind::kMissingTensor, named(name));
  return tensors_[it->second];
}

StoredTensor& WeightStore::at(const std::string& name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw FormatError(FormatErrorKind::kMissingTensor, named(name));
  return tensors_[it->second];
}

template <typename T>
std::vector<T> WeightStore::get_values(const std::string& name,
                                       std::span<const std::uint32_t> dims,
                                       DtypePolicy policy) const {
  const StoredTensor& t = at(name);
  if (!dims.empty() && !std::equal(dims.begin(), dims.end(), t.dims.begin(), t.dims.end())) {
    std::string want;
    std::string got;
    for (const auto d : dims) want += (want.empty() ? "" : "x") + std::to_string(d);
    for (const auto d : t.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
    throw FormatError(FormatErrorKind::kBadShape,
                      named(name) + " has dims " + got + ", expected " + want);
  }
  if (t.dtype != dtype_of<T>() && policy == DtypePolicy::kStrict) {
    throw FormatError(FormatErrorKind::kDtypeMismatch, named(name) + " is stored as " +
                                                           to_string(t.dtype) + ", requested " +
                                                           to_string(dtype_of<T>()));
  }
  const std::size_t n = t.numel();
  std::vector<T> out(n);
  const std::byte* p = t.payload.data();
  if (t.dtype == DType::kF32) {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(decode_at<float>(p + 4 * i));
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(decode_at<double>(p + 8 * i));
  }
  return out;
}

std::vector<std::byte> WeightStore::serialize() const {
  std::vector<std::byte> out(std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kWeightStoreVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(names_.size()));

  std::size_t table = 0;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    table += kMinEntryBytes + names_[i].size() + 4 * tensors_[i].dims.size();
  }
  std::uint64_t offset = kHeaderBytes + table;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& name = names_[i];
    const auto& t = tensors_[i];
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    for (const char ch : name) out.push_back(static_cast<std::byte>(ch));
    out.push_back(static_cast<std::byte>(t.dtype));
    out.push_back(static_cast<std::byte>(t.dims.size()));
    for (const auto d : t.dims) put_le<std::uint32_t>(out, d);
    put_le<std::uint64_t>(out, offset);
    offset += t.payload.size();
  }
  for (const auto& t : tensors_) out.insert(out.end(), t.payload.begin(), t.payload.end());
  return out;
}

WeightStore WeightStore::deserialize(std::span<const std::byte> bytes) {
  const std::size_t size = bytes.size();
  const std::size_t magic_seen = std::min<std::size_t>(size, 4);
  if (!std::equal(bytes.begin(), bytes.begin() + magic_seen, std::begin(kMagic))) {
    throw FormatError(FormatErrorKind::kBadMagic, "file does not start with \"HPIW\"");
  }
  if (size < kHeaderBytes) {
    throw FormatError(FormatErrorKind::kTruncated,
                      "file header needs 12 bytes, found " + std::to_string(size));
  }
  const auto version = get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kWeightStoreVersion) {
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      "file version " + std::to_string(version) + ", reader supports " +
                          std::to_string(kWeightStoreVersion));
  }
  const auto count = get_le<std::uint32_t>(bytes.data() + 8);
  if (static_cast<std::uint64_t>(count) * kMinEntryBytes > size - kHeaderBytes) {
    throw FormatError(FormatErrorKind::kTruncated, "tensor table declares " +
                                                       std::to_string(count) +
                                                       " entries but the file is too short");
  }

  struct Entry {
    std::string name;
    StoredTensor tensor;
    std::uint64_t offset = 0;
    std::uint64_t length = 0;
  };
  std::vector<Entry> entries;
  entries.reserve(count);
  std::size_t pos = kHeaderBytes;
  const auto need = [&](std::size_t n, std::uint32_t entry) {
    if (size - pos < n) {
      throw FormatError(FormatErrorKind::kTruncated,
                        "tensor table entry " + std::to_string(entry) + " is cut short");
    }
  };
  for (std::uint32_t e = 0; e < count; ++e) {
    Entry entry;
    need(4, e);
    const auto name_len = get_le<std::uint32_t>(bytes.data() + pos);
    pos += 4;
    need(name_len, e);
    const auto name_bytes = bytes.subspan(pos, name_len);
    if (name_len == 0 || !valid_utf8(name_bytes)) {
      throw FormatError(FormatErrorKind::kBadName,
                        "tensor table entry " + std::to_string(e) + " has an invalid name");
    }
    entry.name.assign(reinterpret_cast<const char*>(name_bytes.data()), name_len);
    pos += name_len;
    need(2, e);
    const auto dtype = std::to_integer<std::uint8_t>(bytes[pos]);
    const auto rank = std::to_integer<std::uint8_t>(bytes[pos + 1]);
    pos += 2;
    if (dtype > 1) {
      throw FormatError(FormatErrorKind::kBadDtype,
                        named(entry.name) + " has dtype code " + std::to_string(dtype));
    }
    entry.tensor.dtype = static_cast<DType>(dtype);
    need(4 * std::size_t{rank} + 8, e);
    std::uint64_t numel = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      const auto d = get_le<std::uint32_t>(bytes.data() + pos);
      pos += 4;
      if (d == 0) {
        throw FormatError(FormatErrorKind::kBadShape, named(entry.name) + " has a zero dim");
      }
      if (numel > std::numeric_limits<std::uint64_t>::max() / d) {
        throw FormatError(FormatErrorKind::kBadShape,
                          named(entry.name) + " element count overflows");
      }
      numel *= d;
      entry.tensor.dims.push_back(d);
    }
    entry.offset = get_le<std::uint64_t>(bytes.data() + pos);
    pos += 8;
    const std::uint64_t elem = dtype_size(entry.tensor.dtype);
    if (numel > std::numeric_limits<std::uint64_t>::max() / elem) {
      throw FormatError(FormatErrorKind::kBadShape, named(entry.name) + " byte size overflows");
    }
    entry.length = numel * elem;
    entries.push_back(std::move(entry));
  }

  const std::uint64_t table_end = pos;
  std::vector<std::size_t> order(entries.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return entries[a].offset < entries[b].offset;
  });
  const Entry* previous = nullptr;
  for (const std::size_t i : order) {
    const Entry& entry = entries[i];
    if (entry.offset < table_end) {
      throw FormatError(FormatErrorKind::kOverlap,
                        named(entry.name) + " payload overlaps the header or tensor table");
    }
    if (entry.offset > size || entry.length > size - entry.offset) {
      throw FormatError(FormatErrorKind::kTruncated,
                        "payload of tensor " + named(entry.name) + " is missing (needs " +
                            std::to_string(entry.length) + " bytes at offset " +
                            std::to_string(entry.offset) + ", file has " + std::to_string(size) +
                            ")");
    }
    if (previous != nullptr && previous->offset + previous->length > entry.offset) {
      throw FormatError(FormatErrorKind::kOverlap, "payloads of " + named(previous->name) +
                                                       " and " + named(entry.name) + " overlap");
    }
    previous = &entry;
  }

  WeightStore store;
  for (auto& entry : entries) {
    if (store.contains(entry.name)) {
      throw FormatError(FormatErrorKind::kDuplicateName, named(entry.name));
    }
    const auto* begin = bytes.data() + entry.offset;
    entry.tensor.payload.assign(begin, begin + entry.length);
    store.put(entry.name, std::move(entry.tensor));
  }
  return store;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  const auto end = in.tellg();
  if (end < 0) throw FormatError(FormatErrorKind::kIo, "cannot size " + path.string());
  std::vector<std::byte> bytes(static_cast<std::size_t>(end));
  in.seekg(0);
  if (!bytes.empty() && !in.read(reinterpret_cast<char*>(bytes.data()),
                                 static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError(FormatErrorKind::kIo, "cannot read " + path.string());
  }
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot create " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + path.string());
}

void WeightStore::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

WeightStore WeightStore::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return deserialize(bytes);
}

template void WeightStore::put_values<float>(const std::string&, std::vector<std::uint32_t>,
                                             std::span<const float>);
template void WeightStore::put_values<double>(const std::string&, std::vector<std::uint32_t>,
                                              std::span<const double>);
template std::vector<float> WeightStore::get_values<float>(const std::string&,
                                                           std::span<const std::uint32_t>,
                                                           DtypePolicy) const;
template std::vector<double> WeightStore::get_values<double>(const std::string&,
                                                             std::span<const std::uint32_t>,
                                                             DtypePolicy) const;

}  // namespace hpigcn
