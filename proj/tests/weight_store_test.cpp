#include <gtest/gtest.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "hpigcn/random.hpp"
#include "hpigcn/weight_store.hpp"

namespace hpigcn {
namespace {

using Bytes = std::vector<std::byte>;

Bytes bytes(std::initializer_list<int> values) {
  Bytes out;
  for (int v : values) out.push_back(static_cast<std::byte>(v));
  return out;
}

void append(Bytes& out, const Bytes& more) { out.insert(out.end(), more.begin(), more.end()); }

void append_u32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void append_u64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::byte>((v >> (8 * i)) & 0xff));
}

void append_name(Bytes& out, const std::string& name) {
  append_u32(out, static_cast<std::uint32_t>(name.size()));
  for (char c : name) out.push_back(static_cast<std::byte>(c));
}

Bytes header(std::uint32_t count, std::uint32_t version = 1) {
  Bytes out = bytes({'H', 'P', 'I', 'W'});
  append_u32(out, version);
  append_u32(out, count);
  return out;
}

// One f32 entry with dims {n} whose payload sits at `offset`.
void append_entry(Bytes& out, const std::string& name, std::uint32_t n, std::uint64_t offset,
                  int dtype = 0) {
  append_name(out, name);
  out.push_back(static_cast<std::byte>(dtype));
  out.push_back(std::byte{1});
  append_u32(out, n);
  append_u64(out, offset);
}

FormatErrorKind kind_of(const Bytes& data) {
  try {
    (void)WeightStore::deserialize(data);
  } catch (const FormatError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "malformed input was accepted";
  return FormatErrorKind::kIo;
}

std::string message_of(const Bytes& data) {
  try {
    (void)WeightStore::deserialize(data);
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(WeightStore, GoldenBytes) {
  WeightStore store;
  const std::vector<float> values{1.0f, -2.0f};
  store.put_values<float>("w", {2}, values);
  Bytes expect = header(1);
  append_entry(expect, "w", 2, 31);
  append(expect, bytes({0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0}));
  EXPECT_EQ(store.serialize(), expect);
  EXPECT_EQ(WeightStore::deserialize(expect), store);
}

TEST(WeightStore, DoublePayloadIsLittleEndian) {
  WeightStore store;
  const std::vector<double> values{1.5};
  store.put_values<double>("d", {1, 1}, values);
  const auto data = store.serialize();
  const Bytes tail(data.end() - 8, data.end());
  EXPECT_EQ(tail, bytes({0, 0, 0, 0, 0, 0, 0xf8, 0x3f}));
}

TEST(WeightStore, EmptyStoreRoundTrips) {
  const WeightStore store;
  EXPECT_EQ(store.serialize(), header(0));
  EXPECT_EQ(WeightStore::deserialize(header(0)).size(), 0u);
}

TEST(WeightStoreMalformed, BadMagic) {
  auto data = header(0);
  data[0] = std::byte{'X'};
  EXPECT_EQ(kind_of(data), FormatErrorKind::kBadMagic);
  EXPECT_EQ(kind_of(bytes({'H', 'P', 'X'})), FormatErrorKind::kBadMagic);
}

TEST(WeightStoreMalformed, ShortHeader) {
  EXPECT_EQ(kind_of({}), FormatErrorKind::kTruncated);
  EXPECT_EQ(kind_of(bytes({'H', 'P', 'I', 'W', 1, 0})), FormatErrorKind::kTruncated);
}

TEST(WeightStoreMalformed, VersionMismatch) {
  EXPECT_EQ(kind_of(header(0, 2)), FormatErrorKind::kVersionMismatch);
  EXPECT_EQ(kind_of(header(0, 0)), FormatErrorKind::kVersionMismatch);
}

TEST(WeightStoreMalformed, CountExceedsFile) {
  EXPECT_EQ(kind_of(header(1)), FormatErrorKind::kTruncated);
  EXPECT_EQ(kind_of(header(0xffffffffu)), FormatErrorKind::kTruncated);
}

TEST(WeightStoreMalformed, EntryCutShort) {
  auto data = header(1);
  append_entry(data, "w", 2, 31);
  data.resize(data.size() - 3);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kTruncated);
  // A name length pointing past the end of the file.
  auto long_name = header(1);
  append_u32(long_name, 1000);
  append(long_name, Bytes(20, std::byte{'a'}));
  EXPECT_EQ(kind_of(long_name), FormatErrorKind::kTruncated);
}

TEST(WeightStoreMalformed, MissingPayloadNamesTensor) {
  auto data = header(2);
  append_entry(data, "first", 1, 12 + 2 * 19 + 4 + 5);
  append_entry(data, "second", 4, 12 + 2 * 19 + 4 + 5 + 4);
  data.resize(data.size() + 4 + 8);  // second payload is short by 8 bytes
  EXPECT_EQ(kind_of(data), FormatErrorKind::kTruncated);
  EXPECT_NE(message_of(data).find("'second'"), std::string::npos) << message_of(data);
}

TEST(WeightStoreMalformed, OverlappingPayloads) {
  auto data = header(2);
  const std::uint64_t base = 12 + 2 * (19 + 1);
  append_entry(data, "a", 2, base);
  append_entry(data, "b", 2, base + 4);
  data.resize(base + 12);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kOverlap);
}

TEST(WeightStoreMalformed, PayloadInsideTable) {
  auto data = header(1);
  append_entry(data, "a", 1, 12);
  data.resize(data.size() + 4);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kOverlap);
}

TEST(WeightStoreMalformed, BadDtype) {
  auto data = header(1);
  append_entry(data, "a", 1, 31, 7);
  data.resize(35);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kBadDtype);
}

TEST(WeightStoreMalformed, BadNames) {
  auto empty = header(1);
  append_entry(empty, "", 1, 30);
  empty.resize(34);
  EXPECT_EQ(kind_of(empty), FormatErrorKind::kBadName);
  auto invalid = header(1);
  append_entry(invalid, std::string("\xff\xfe", 2), 1, 32);
  invalid.resize(36);
  EXPECT_EQ(kind_of(invalid), FormatErrorKind::kBadName);
  auto overlong = header(1);
  append_entry(overlong, std::string("\xc0\xaf", 2), 1, 32);  // overlong '/'
  overlong.resize(36);
  EXPECT_EQ(kind_of(overlong), FormatErrorKind::kBadName);
}

TEST(WeightStoreMalformed, DuplicateNames) {
  auto data = header(2);
  const std::uint64_t base = 12 + 2 * 20;
  append_entry(data, "a", 1, base);
  append_entry(data, "a", 1, base + 4);
  data.resize(base + 8);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kDuplicateName);
}

TEST(WeightStoreMalformed, ZeroDimension) {
  auto data = header(1);
  append_entry(data, "a", 0, 32);
  data.resize(36);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kBadShape);
}

TEST(WeightStoreMalformed, ElementCountOverflow) {
  auto data = header(1);
  append_name(data, "a");
  data.push_back(std::byte{1});
  data.push_back(std::byte{3});
  for (int i = 0; i < 3; ++i) append_u32(data, 0xffffffffu);
  append_u64(data, 12 + 4 + 1 + 2 + 12 + 8);
  EXPECT_EQ(kind_of(data), FormatErrorKind::kBadShape);
}

TEST(WeightStore, PutRejectsBadInput) {
  WeightStore store;
  const std::vector<float> one{1};
  EXPECT_THROW(store.put_values<float>("", {1}, one), FormatError);
  EXPECT_THROW(store.put_values<float>(std::string("\xff", 1), {1}, one), FormatError);
  EXPECT_THROW(store.put_values<float>("x", {2}, one), FormatError);
  store.put_values<float>("x", {1}, one);
  EXPECT_THROW(store.put_values<float>("x", {1}, one), FormatError);
}

TEST(WeightStore, DtypePolicy) {
  WeightStore store;
  const std::vector<double> values{0.1, 2.5};
  store.put_values<double>("d", {2}, values);
  const std::vector<float> converted = store.get_values<float>("d");
  EXPECT_EQ(converted, (std::vector<float>{0.1f, 2.5f}));
  try {
    (void)store.get_values<float>("d", {}, DtypePolicy::kStrict);
    FAIL() << "strict policy converted";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kDtypeMismatch);
  }
  EXPECT_EQ(store.get_values<double>("d", {}, DtypePolicy::kStrict), values);
}

TEST(WeightStore, DimensionCheckAndMissingTensor) {
  WeightStore store;
  const std::vector<float> values{1, 2, 3, 4, 5, 6};
  store.put_values<float>("m", {2, 3}, values);
  const std::vector<std::uint32_t> good{2, 3};
  const std::vector<std::uint32_t> bad{3, 2};
  EXPECT_EQ(store.get_values<float>("m", good), values);
  try {
    (void)store.get_values<float>("m", bad);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kBadShape);
  }
  try {
    (void)store.get_values<float>("nope");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kMissingTensor);
  }
}

TEST(WeightStore, FileRoundTripAndIoErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "hpigcn_weight_store_test";
  std::filesystem::create_directories(dir);
  WeightStore store;
  const std::vector<float> values{3, 1, 4};
  store.put_values<float>("pi", {3}, values);
  store.save(dir / "w.hpiw");
  EXPECT_EQ(WeightStore::load(dir / "w.hpiw"), store);
  try {
    (void)WeightStore::load(dir / "absent.hpiw");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.kind(), FormatErrorKind::kIo);
  }
  std::filesystem::remove_all(dir);
}

WeightStore random_store(Rng& rng) {
  static const std::vector<std::string> pieces{"a", "block", "\xc3\xa9", "\xe2\x82\xac", ".",
                                               "w", "\xf0\x9f\x98\x80", "[0]", "bias"};
  WeightStore store;
  const std::size_t count = rng.next() % 6;
  for (std::size_t i = 0; i < count; ++i) {
    std::string name = std::to_string(i);
    const std::size_t len = rng.next() % 5;
    for (std::size_t j = 0; j < len; ++j) name += pieces[rng.next() % pieces.size()];
    StoredTensor t;
    t.dtype = rng.next() % 2 == 0 ? DType::kF32 : DType::kF64;
    const std::size_t rank = rng.next() % 5;
    for (std::size_t r = 0; r < rank; ++r) t.dims.push_back(1 + rng.next() % 4);
    t.payload.resize(t.numel() * dtype_size(t.dtype));
    // Arbitrary bit patterns, NaN payloads and signed zeros included.
    for (auto& b : t.payload) b = static_cast<std::byte>(rng.next() & 0xff);
    store.put(name, std::move(t));
  }
  return store;
}

TEST(WeightStoreFuzz, RoundTripIsBitIdentical) {
  Rng rng(2024);
  for (int iter = 0; iter < 1000; ++iter) {
    const auto store = random_store(rng);
    const auto data = store.serialize();
    const auto back = WeightStore::deserialize(data);
    ASSERT_EQ(back, store) << "iteration " << iter;
    ASSERT_EQ(back.serialize(), data) << "iteration " << iter;
  }
}

TEST(WeightStoreFuzz, CorruptedInputFailsClosed) {
  Rng rng(77);
  for (int iter = 0; iter < 1000; ++iter) {
    auto data = random_store(rng).serialize();
    switch (rng.next() % 3) {
      case 0:
        data.resize(rng.next() % (data.size() + 1));
        break;
      case 1:
        for (int flips = 0; flips < 3; ++flips) {
          data[rng.next() % data.size()] = static_cast<std::byte>(rng.next() & 0xff);
        }
        break;
      default:
        data.insert(data.begin() + static_cast<long>(rng.next() % (data.size() + 1)),
                    static_cast<std::byte>(rng.next() & 0xff));
        break;
    }
    try {
      const auto parsed = WeightStore::deserialize(data);
      // Anything accepted must itself be a consistent store.
      EXPECT_EQ(WeightStore::deserialize(parsed.serialize()), parsed);
    } catch (const FormatError&) {
    }
  }
}

}  // namespace
}  // namespace hpigcn
