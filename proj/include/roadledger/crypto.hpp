#pragma once

// Hashing, signatures and the keystream cipher. Backed by libsodium.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "roadledger/bytes.hpp"

namespace roadledger {

Digest sha256(ByteView data);
inline Digest sha256(const Digest& d) { return sha256(d.view()); }

/// Incremental SHA-256 over concatenated parts.
class Sha256 {
 public:
  Sha256();
  Sha256& update(ByteView part);
  Sha256& update(const Digest& d) { return update(d.view()); }
  Sha256& update(std::string_view s) { return update(as_view(s)); }
  Sha256& update_u64(std::uint64_t v);
  Digest finish();

 private:
  alignas(64) std::array<std::uint8_t, 128> state_{};
};

/// Number of zero bits at the low end of the digest read as a big-endian
/// 256-bit integer (last byte first, least significant bit first).
int trailing_zero_bits(const Digest& d);

using PublicKey = std::array<std::uint8_t, 32>;
using Signature = std::array<std::uint8_t, 64>;

/// 20-byte account identifier: first 20 bytes of SHA-256(public key).
struct Address {
  std::array<std::uint8_t, 20> bytes{};

  static Address of(const PublicKey& pk);
  static Address from_hex(std::string_view hex);
  std::string hex() const;
  ByteView view() const { return {bytes.data(), bytes.size()}; }

  auto operator<=>(const Address&) const = default;
};

/// Ed25519 key pair, deterministically derived from a 32-byte seed.
class KeyPair {
 public:
  static KeyPair from_seed(const Digest& seed);
  static KeyPair generate();

  const PublicKey& public_key() const { return pk_; }
  const Digest& seed() const { return seed_; }
  Address address() const { return Address::of(pk_); }
  Signature sign(ByteView message) const;

 private:
  Digest seed_;
  PublicKey pk_{};
  std::array<std::uint8_t, 64> sk_{};
};

bool verify_signature(const PublicKey& pk, ByteView message, const Signature& sig);

PublicKey public_key_from_hex(std::string_view hex);
Signature signature_from_hex(std::string_view hex);
inline std::string hex(const PublicKey& pk) { return to_hex({pk.data(), pk.size()}); }
inline std::string hex(const Signature& s) { return to_hex({s.data(), s.size()}); }

/// XORs data with a ChaCha20 keystream. `domain` separates uses of one key
/// (it becomes the IETF nonce), so the same key can encrypt a MAM message
/// and the object it references without keystream reuse.
Bytes keystream_xor(const Digest& key, std::uint32_t domain, ByteView data);

inline constexpr std::uint32_t kDomainMessage = 0;
inline constexpr std::uint32_t kDomainObject = 1;

/// Fills a buffer from the OS CSPRNG.
Digest random_digest();

}  // namespace roadledger

template <>
struct std::hash<roadledger::Address> {
  std::size_t operator()(const roadledger::Address& a) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | a.bytes[i];
    return h;
  }
};
