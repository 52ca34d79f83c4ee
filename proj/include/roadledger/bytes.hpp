#pragma once

// Byte strings, fixed-size digests, hex rendering and the canonical
// big-endian / length-prefixed encoding shared by every module.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "roadledger/error.hpp"

namespace roadledger {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// 32-byte value used for hashes, roots, keys and seeds.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  static Digest from_hex(std::string_view hex);
  static Digest from_bytes(ByteView b);
  std::string hex() const;
  bool is_zero() const;
  ByteView view() const { return {bytes.data(), bytes.size()}; }

  auto operator<=>(const Digest&) const = default;
};

std::string to_hex(ByteView b);
Bytes from_hex(std::string_view hex);
inline ByteView as_view(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}
inline Bytes to_bytes(std::string_view s) {
  return Bytes(s.begin(), s.end());
}
inline std::string to_string(ByteView b) {
  return std::string(b.begin(), b.end());
}

/// Appends canonical big-endian fields to a byte buffer.
class Writer {
 public:
  Writer& u8(std::uint8_t v) {
    out_.push_back(v);
    return *this;
  }
  Writer& u32(std::uint32_t v);
  Writer& u64(std::uint64_t v);
  Writer& i64(std::int64_t v) { return u64(static_cast<std::uint64_t>(v)); }
  Writer& raw(ByteView b) {
    out_.insert(out_.end(), b.begin(), b.end());
    return *this;
  }
  Writer& digest(const Digest& d) { return raw(d.view()); }
  /// be32 length followed by the bytes.
  Writer& blob(ByteView b) {
    u32(static_cast<std::uint32_t>(b.size()));
    return raw(b);
  }
  Writer& str(std::string_view s) { return blob(as_view(s)); }

  const Bytes& bytes() const& { return out_; }
  Bytes take() { return std::move(out_); }

 private:
  Bytes out_;
};

/// Reads canonical fields; throws Error(kMalformed) on truncation.
class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  ByteView raw(std::size_t n);
  Digest digest() { return Digest::from_bytes(raw(32)); }
  Bytes blob();
  std::string str() { return to_string(blob_view()); }
  ByteView blob_view();

  bool done() const { return pos_ == in_.size(); }
  std::size_t remaining() const { return in_.size() - pos_; }
  void expect_done() const;

 private:
  ByteView in_;
  std::size_t pos_ = 0;
};

}  // namespace roadledger

template <>
struct std::hash<roadledger::Digest> {
  std::size_t operator()(const roadledger::Digest& d) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
    return h;
  }
};
