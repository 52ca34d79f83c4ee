#include "roadledger/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <bit>
#include <cstring>

namespace roadledger {

namespace {

void ensure_sodium() {
  static const bool ok = [] { return sodium_init() >= 0; }();
  if (!ok) throw std::runtime_error("libsodium initialisation failed");
}

static_assert(sizeof(crypto_hash_sha256_state) <= 128);

crypto_hash_sha256_state* as_state(std::array<std::uint8_t, 128>& raw) {
  return reinterpret_cast<crypto_hash_sha256_state*>(raw.data());
}

}  // namespace

Digest sha256(ByteView data) {
  ensure_sodium();
  Digest d;
  crypto_hash_sha256(d.bytes.data(), data.data(), data.size());
  return d;
}

Sha256::Sha256() {
  ensure_sodium();
  crypto_hash_sha256_init(as_state(state_));
}

Sha256& Sha256::update(ByteView part) {
  crypto_hash_sha256_update(as_state(state_), part.data(), part.size());
  return *this;
}

Sha256& Sha256::update_u64(std::uint64_t v) {
  Writer w;
  w.u64(v);
  return update(w.bytes());
}

Digest Sha256::finish() {
  Digest d;
  crypto_hash_sha256_final(as_state(state_), d.bytes.data());
  return d;
}

int trailing_zero_bits(const Digest& d) {
  int count = 0;
  for (auto it = d.bytes.rbegin(); it != d.bytes.rend(); ++it) {
    if (*it == 0) {
      count += 8;
      continue;
    }
    return count + std::countr_zero(static_cast<unsigned>(*it));
  }
  return count;
}

Address Address::of(const PublicKey& pk) {
  auto h = sha256(ByteView{pk.data(), pk.size()});
  Address a;
  std::copy_n(h.bytes.begin(), a.bytes.size(), a.bytes.begin());
  return a;
}

Address Address::from_hex(std::string_view hex) {
  auto b = roadledger::from_hex(hex);
  if (b.size() != 20) throw Error(ErrorCode::kMalformed, "address must be 20 bytes");
  Address a;
  std::copy(b.begin(), b.end(), a.bytes.begin());
  return a;
}

std::string Address::hex() const { return to_hex(view()); }

KeyPair KeyPair::from_seed(const Digest& seed) {
  ensure_sodium();
  KeyPair kp;
  kp.seed_ = seed;
  crypto_sign_seed_keypair(kp.pk_.data(), kp.sk_.data(), seed.bytes.data());
  return kp;
}

KeyPair KeyPair::generate() { return from_seed(random_digest()); }

Signature KeyPair::sign(ByteView message) const {
  Signature sig{};
  crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), sk_.data());
  return sig;
}

bool verify_signature(const PublicKey& pk, ByteView message, const Signature& sig) {
  ensure_sodium();
  return crypto_sign_verify_detached(sig.data(), message.data(), message.size(),
                                     pk.data()) == 0;
}

PublicKey public_key_from_hex(std::string_view hex) {
  auto b = from_hex(hex);
  if (b.size() != 32) throw Error(ErrorCode::kMalformed, "public key must be 32 bytes");
  PublicKey pk{};
  std::copy(b.begin(), b.end(), pk.begin());
  return pk;
}

Signature signature_from_hex(std::string_view hex) {
  auto b = from_hex(hex);
  if (b.size() != 64) throw Error(ErrorCode::kMalformed, "signature must be 64 bytes");
  Signature s{};
  std::copy(b.begin(), b.end(), s.begin());
  return s;
}

Bytes keystream_xor(const Digest& key, std::uint32_t domain, ByteView data) {
  ensure_sodium();
  std::array<std::uint8_t, crypto_stream_chacha20_ietf_NONCEBYTES> nonce{};
  for (int i = 0; i < 4; ++i) nonce[8 + i] = static_cast<std::uint8_t>(domain >> (24 - 8 * i));
  Bytes out(data.size());
  if (!data.empty()) {
    crypto_stream_chacha20_ietf_xor(out.data(), data.data(), data.size(), nonce.data(),
                                    key.bytes.data());
  }
  return out;
}

Digest random_digest() {
  ensure_sodium();
  Digest d;
  randombytes_buf(d.bytes.data(), d.bytes.size());
  return d;
}

}  // namespace roadledger
