#include "roadledger/bytes.hpp"

#include <algorithm>

namespace roadledger {

std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformed: return "Malformed";
    case ErrorCode::kPayloadTooLarge: return "PayloadTooLarge";
    case ErrorCode::kLedgerError: return "LedgerError";
    case ErrorCode::kMissingFeatureName: return "MissingFeatureName";
    case ErrorCode::kAuthFailure: return "AuthFailure";
    case ErrorCode::kWrongChannelKind: return "WrongChannelKind";
    case ErrorCode::kNotFound: return "NotFound";
    case ErrorCode::kIntegrityFailure: return "IntegrityFailure";
    case ErrorCode::kInvalidTopic: return "InvalidTopic";
    case ErrorCode::kDuplicateRegistration: return "DuplicateRegistration";
    case ErrorCode::kUnknownAccount: return "UnknownAccount";
    case ErrorCode::kUnknownContract: return "UnknownContract";
    case ErrorCode::kUnknownBundle: return "UnknownBundle";
    case ErrorCode::kInsufficientFunds: return "InsufficientFunds";
    case ErrorCode::kAlreadyGranted: return "AlreadyGranted";
    case ErrorCode::kNotOwner: return "NotOwner";
    case ErrorCode::kUnknownChannel: return "UnknownChannel";
    case ErrorCode::kExceedsDeposit: return "ExceedsDeposit";
    case ErrorCode::kInvalidProof: return "InvalidProof";
    case ErrorCode::kChallengeExpired: return "ChallengeExpired";
    case ErrorCode::kAlreadySettled: return "AlreadySettled";
    case ErrorCode::kChannelNotOpen: return "ChannelNotOpen";
    case ErrorCode::kBadSignature: return "BadSignature";
    case ErrorCode::kAccessDenied: return "AccessDenied";
    case ErrorCode::kUnknownItem: return "UnknownItem";
    case ErrorCode::kUnregisteredDevice: return "UnregisteredDevice";
    case ErrorCode::kUnknownDevice: return "UnknownDevice";
    case ErrorCode::kAreaTooLarge: return "AreaTooLarge";
    case ErrorCode::kOutsideArea: return "OutsideArea";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kConfig: return "ConfigError";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

namespace {

int nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

std::string to_hex(ByteView b) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(b.size() * 2);
  for (auto v : b) {
    out.push_back(kDigits[v >> 4]);
    out.push_back(kDigits[v & 0xf]);
  }
  return out;
}

Bytes from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorCode::kMalformed, "odd-length hex");
  Bytes out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(hex[2 * i]);
    int lo = nibble(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw Error(ErrorCode::kMalformed, "bad hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != 64) throw Error(ErrorCode::kMalformed, "digest must be 64 hex chars");
  return from_bytes(roadledger::from_hex(hex));
}

Digest Digest::from_bytes(ByteView b) {
  if (b.size() != 32) throw Error(ErrorCode::kMalformed, "digest must be 32 bytes");
  Digest d;
  std::copy(b.begin(), b.end(), d.bytes.begin());
  return d;
}

std::string Digest::hex() const { return to_hex(view()); }

bool Digest::is_zero() const {
  return std::all_of(bytes.begin(), bytes.end(), [](auto v) { return v == 0; });
}

Writer& Writer::u32(std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  return *this;
}

Writer& Writer::u64(std::uint64_t v) {
  for (int s = 56; s >= 0; s -= 8) out_.push_back(static_cast<std::uint8_t>(v >> s));
  return *this;
}

std::uint8_t Reader::u8() { return raw(1)[0]; }

std::uint32_t Reader::u32() {
  auto b = raw(4);
  std::uint32_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

std::uint64_t Reader::u64() {
  auto b = raw(8);
  std::uint64_t v = 0;
  for (auto x : b) v = (v << 8) | x;
  return v;
}

ByteView Reader::raw(std::size_t n) {
  if (remaining() < n) throw Error(ErrorCode::kMalformed, "truncated input");
  auto out = in_.subspan(pos_, n);
  pos_ += n;
  return out;
}

ByteView Reader::blob_view() {
  auto n = u32();
  return raw(n);
}

Bytes Reader::blob() {
  auto v = blob_view();
  return Bytes(v.begin(), v.end());
}

void Reader::expect_done() const {
  if (!done()) throw Error(ErrorCode::kMalformed, "trailing bytes");
}

}  // namespace roadledger
