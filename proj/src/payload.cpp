#include "roadledger/payload.hpp"

namespace roadledger {

std::string_view kind_name(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::kFeature: return "feature";
    case ChannelKind::kSession: return "session";
    case ChannelKind::kIndex: return "index";
  }
  return "?";
}

ChannelKind parse_kind(std::string_view name) {
  if (name == "feature") return ChannelKind::kFeature;
  if (name == "session") return ChannelKind::kSession;
  if (name == "index") return ChannelKind::kIndex;
  throw Error(ErrorCode::kMalformed, "unknown channel kind '" + std::string(name) + "'");
}

std::string ChannelRef::to_string() const {
  std::string out(kind_name(kind));
  out += ':';
  out += root.hex();
  if (kind == ChannelKind::kFeature) {
    out += ':';
    out += feature_name;
  }
  return out;
}

ChannelRef ChannelRef::parse(std::string_view text) {
  auto colon = text.find(':');
  if (colon == std::string_view::npos) throw Error(ErrorCode::kMalformed, "bad channel ref");
  ChannelRef ref;
  ref.kind = parse_kind(text.substr(0, colon));
  auto rest = text.substr(colon + 1);
  ref.root = Digest::from_hex(rest.substr(0, 64));
  rest.remove_prefix(std::min<std::size_t>(64, rest.size()));
  if (ref.kind == ChannelKind::kFeature) {
    if (rest.size() < 2 || rest[0] != ':')
      throw Error(ErrorCode::kMalformed, "feature ref needs a name");
    ref.feature_name = std::string(rest.substr(1));
  } else if (!rest.empty()) {
    throw Error(ErrorCode::kMalformed, "trailing text in channel ref");
  }
  return ref;
}

std::string item_to_string(const ItemRef& item) {
  if (auto* tx = std::get_if<TxAddress>(&item)) return "tx:" + tx->address.hex();
  return "chan:" + std::get<ChannelRef>(item).to_string();
}

ItemRef parse_item(std::string_view text) {
  if (text.starts_with("tx:")) return TxAddress{Digest::from_hex(text.substr(3))};
  if (text.starts_with("chan:")) return ChannelRef::parse(text.substr(5));
  throw Error(ErrorCode::kMalformed, "item must start with tx: or chan:");
}

Bytes Payload::serialize() const {
  Writer body;
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, InlineDatum>) {
          body.raw(v.data);
        } else if constexpr (std::is_same_v<T, ObjectRef>) {
          body.digest(v.digest);
        } else if constexpr (std::is_same_v<T, ChannelRef>) {
          body.u8(static_cast<std::uint8_t>(v.kind)).digest(v.root).str(v.feature_name);
        } else if constexpr (std::is_same_v<T, TxAddress>) {
          body.digest(v.address);
        } else {
          body.raw(v.bytes);
        }
      },
      value);
  Writer w;
  w.u8(static_cast<std::uint8_t>(type())).blob(body.bytes());
  return w.take();
}

Payload Payload::deserialize(ByteView in) {
  Reader r(in);
  auto type = r.u8();
  auto body = r.blob_view();
  r.expect_done();
  Reader b(body);
  Payload p;
  switch (static_cast<PayloadType>(type)) {
    case PayloadType::kInline:
      p.value = InlineDatum{Bytes(body.begin(), body.end())};
      return p;
    case PayloadType::kObjectRef:
      p.value = ObjectRef{b.digest()};
      break;
    case PayloadType::kChannelRef: {
      ChannelRef ref;
      auto kind = b.u8();
      if (kind > 2) throw Error(ErrorCode::kMalformed, "bad channel kind");
      ref.kind = static_cast<ChannelKind>(kind);
      ref.root = b.digest();
      ref.feature_name = b.str();
      p.value = std::move(ref);
      break;
    }
    case PayloadType::kTxAddress:
      p.value = TxAddress{b.digest()};
      break;
    case PayloadType::kCertificate:
      p.value = CertificateBlob{Bytes(body.begin(), body.end())};
      return p;
    default:
      throw Error(ErrorCode::kMalformed, "unknown payload type " + std::to_string(type));
  }
  b.expect_done();
  return p;
}

}  // namespace roadledger
