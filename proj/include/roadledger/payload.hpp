#pragma once

// Values carried inside MAM messages and referenced by contracts:
// channel references, object references, transaction addresses and the
// tagged Payload union with its wire encoding
// (1 type byte + be32 length-prefixed body).

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

#include "roadledger/bytes.hpp"

namespace roadledger {

enum class ChannelKind : std::uint8_t { kFeature = 0, kSession = 1, kIndex = 2 };

std::string_view kind_name(ChannelKind kind);
ChannelKind parse_kind(std::string_view name);

/// Points at the first message of a channel.
struct ChannelRef {
  ChannelKind kind = ChannelKind::kFeature;
  Digest root;
  std::string feature_name;  // empty unless kind == kFeature

  /// "feature:<root-hex>:<name>", "session:<root-hex>" or "index:<root-hex>".
  std::string to_string() const;
  static ChannelRef parse(std::string_view text);

  auto operator<=>(const ChannelRef&) const = default;
};

/// Content address of an object in the store.
struct ObjectRef {
  Digest digest;
  auto operator<=>(const ObjectRef&) const = default;
};

/// Address of one MAM message on the ledger, H(root).
struct TxAddress {
  Digest address;
  auto operator<=>(const TxAddress&) const = default;
};

/// Something a contract can sell or a key request can name.
using ItemRef = std::variant<TxAddress, ChannelRef>;

/// "tx:<hex>" or "chan:<channel-ref>".
std::string item_to_string(const ItemRef& item);
ItemRef parse_item(std::string_view text);

struct InlineDatum {
  Bytes data;
  bool operator==(const InlineDatum&) const = default;
};

/// Canonical LocationCertificate bytes; decoded by the pol module.
struct CertificateBlob {
  Bytes bytes;
  bool operator==(const CertificateBlob&) const = default;
};

enum class PayloadType : std::uint8_t {
  kInline = 0,
  kObjectRef = 1,
  kChannelRef = 2,
  kTxAddress = 3,
  kCertificate = 4,
};

struct Payload {
  std::variant<InlineDatum, ObjectRef, ChannelRef, TxAddress, CertificateBlob> value;

  PayloadType type() const { return static_cast<PayloadType>(value.index()); }
  Bytes serialize() const;
  static Payload deserialize(ByteView in);

  bool operator==(const Payload&) const = default;
};

inline Payload inline_payload(Bytes data) { return {InlineDatum{std::move(data)}}; }

}  // namespace roadledger
