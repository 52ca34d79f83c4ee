#include "roadledger/mam.hpp"

#include <algorithm>

#include "roadledger/derive_key.hpp"

namespace roadledger::mam {

namespace {

constexpr std::string_view kOverheadMagic = "MAM1";
constexpr std::size_t kOverheadSize = 4 + 32 * 4 + 32 * 2 + 64 + 4;

std::uint64_t attach_seed(const Digest& root) {
  auto d = Sha256().update(root).update("tips").finish();
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d.bytes[i];
  return v;
}

PublicKey read_key(Reader& r) {
  PublicKey pk{};
  auto b = r.raw(pk.size());
  std::copy(b.begin(), b.end(), pk.begin());
  return pk;
}

}  // namespace

Digest root_at(const Digest& seed, std::uint64_t index, ChannelKind kind) {
  return Sha256().update(seed).update_u64(index).update(kind_name(kind)).finish();
}

KeyPair signing_key_at(const Digest& seed, std::uint64_t index) {
  return KeyPair::from_seed(Sha256().update(seed).update("sig").update_u64(index).finish());
}

ChannelRef ChannelState::ref() const { return {kind, entry_root(), feature_name}; }

ChannelState create_channel(const Digest& seed, ChannelKind kind, const Digest& side_key,
                            std::string feature_name) {
  if (kind == ChannelKind::kFeature && feature_name.empty())
    throw Error(ErrorCode::kMissingFeatureName);
  if (kind != ChannelKind::kFeature) feature_name.clear();
  ChannelState ch;
  ch.seed = seed;
  ch.kind = kind;
  ch.feature_name = std::move(feature_name);
  ch.index = 0;
  ch.current_root = root_at(seed, 0, kind);
  ch.side_key = side_key;
  return ch;
}

Bytes MamMessage::signed_bytes() const {
  Writer w;
  w.raw(as_view("MAMSIG"))
      .digest(root)
      .digest(next_root)
      .raw({next_public_key.data(), next_public_key.size()})
      .raw(ciphertext);
  return w.take();
}

std::vector<Bytes> MamMessage::to_fragments() const {
  Writer head;
  head.raw(as_view(kOverheadMagic))
      .digest(address)
      .digest(root)
      .digest(next_root)
      .digest(auth_tag)
      .raw({public_key.data(), public_key.size()})
      .raw({next_public_key.data(), next_public_key.size()})
      .raw({signature.data(), signature.size()})
      .u32(static_cast<std::uint32_t>(ciphertext.size()));

  std::vector<Bytes> out;
  out.push_back(head.take());
  const std::size_t frag = (ciphertext.size() + kFragments - 1) / kFragments;
  for (std::uint32_t k = 0; k < kFragments; ++k) {
    Bytes f(frag, 0);
    const std::size_t begin = std::min(ciphertext.size(), k * frag);
    const std::size_t end = std::min(ciphertext.size(), begin + frag);
    std::copy(ciphertext.begin() + begin, ciphertext.begin() + end, f.begin());
    out.push_back(std::move(f));
  }
  return out;
}

MamMessage MamMessage::from_bundle(const Bundle& bundle) {
  if (bundle.size() != kBundleLen) throw Error(ErrorCode::kMalformed, "MAM bundle must hold 4 txs");
  Reader r(bundle[0].payload);
  if (to_string(r.raw(kOverheadMagic.size())) != kOverheadMagic)
    throw Error(ErrorCode::kMalformed, "not a MAM overhead transaction");
  MamMessage m;
  m.address = r.digest();
  m.root = r.digest();
  m.next_root = r.digest();
  m.auth_tag = r.digest();
  m.public_key = read_key(r);
  m.next_public_key = read_key(r);
  auto sig = r.raw(64);
  std::copy(sig.begin(), sig.end(), m.signature.begin());
  const auto ct_len = r.u32();
  r.expect_done();

  Bytes joined;
  for (std::uint32_t k = 1; k < kBundleLen; ++k)
    joined.insert(joined.end(), bundle[k].payload.begin(), bundle[k].payload.end());
  if (joined.size() < ct_len) throw Error(ErrorCode::kMalformed, "ciphertext truncated");
  joined.resize(ct_len);
  m.ciphertext = std::move(joined);
  return m;
}

Digest mac(const Digest& key, ByteView ciphertext) {
  return Sha256().update(key).update(ciphertext).finish();
}

Payload open_message(const MamMessage& msg, const Digest& key) {
  if (sha256(msg.root) != msg.address)
    throw Error(ErrorCode::kAuthFailure, "address is not H(root)");
  if (!verify_signature(msg.public_key, msg.signed_bytes(), msg.signature))
    throw Error(ErrorCode::kAuthFailure, "bad message signature");
  if (mac(key, msg.ciphertext) != msg.auth_tag)
    throw Error(ErrorCode::kAuthFailure, "auth tag mismatch");
  try {
    return Payload::deserialize(keystream_xor(key, kDomainMessage, msg.ciphertext));
  } catch (const Error&) {
    throw Error(ErrorCode::kAuthFailure, "plaintext does not parse");
  }
}

std::size_t max_payload_size(const NetworkConfig& config) {
  return kFragments * config.payload_max;
}

Published publish(ChannelState& channel, Tangle& tangle, const Payload& payload,
                  const NetworkConfig& config) {
  if (config.payload_max < kOverheadSize)
    throw Error(ErrorCode::kConfig, "payload_max too small for the MAM overhead slot");
  auto plaintext = payload.serialize();
  if (plaintext.size() > max_payload_size(config))
    throw Error(ErrorCode::kPayloadTooLarge, std::to_string(plaintext.size()) + " bytes");

  MamMessage m;
  m.root = channel.current_root;
  m.next_root = root_at(channel.seed, channel.index + 1, channel.kind);
  m.address = sha256(m.root);
  const Digest key = authsvc::derive_key(channel.side_key, m.root);
  m.ciphertext = keystream_xor(key, kDomainMessage, plaintext);
  m.auth_tag = mac(key, m.ciphertext);
  const KeyPair signer = signing_key_at(channel.seed, channel.index);
  m.public_key = signer.public_key();
  m.next_public_key = signing_key_at(channel.seed, channel.index + 1).public_key();
  m.signature = signer.sign(m.signed_bytes());

  Bundle bundle;
  try {
    bundle = tangle.attach(m.to_fragments(), config, attach_seed(m.root), m.address);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kPayloadTooLarge) throw;
    throw Error(ErrorCode::kLedgerError, e.what());
  }
  ++channel.index;
  channel.current_root = m.next_root;
  return {std::move(m), std::move(bundle)};
}

std::optional<MamMessage> read_message(const Tangle& tangle, const Digest& address) {
  for (const auto& bundle : tangle.find_by_address(address)) {
    try {
      auto m = MamMessage::from_bundle(bundle);
      if (m.address == address) return m;
    } catch (const Error&) {
      // Not a MAM bundle; keep looking.
    }
  }
  return std::nullopt;
}

std::vector<FetchedMessage> walk_stream(const Tangle& tangle, const Digest& entry_root,
                                        const KeyLookup& key_for,
                                        std::optional<std::size_t> limit) {
  std::vector<FetchedMessage> out;
  std::optional<PublicKey> expected_signer;
  Digest root = entry_root;
  while (!limit || out.size() < *limit) {
    const Digest address = sha256(root);
    auto msg = read_message(tangle, address);
    if (!msg) break;
    if (msg->root != root) throw Error(ErrorCode::kAuthFailure, "root mismatch");
    auto key = key_for(root);
    if (!key) break;
    if (expected_signer && msg->public_key != *expected_signer)
      throw Error(ErrorCode::kAuthFailure, "signer does not continue the chain");
    out.push_back({root, address, open_message(*msg, *key), msg->next_root, msg->public_key,
                   msg->next_public_key});
    expected_signer = msg->next_public_key;
    root = msg->next_root;
  }
  return out;
}

std::vector<Payload> fetch_stream(const Tangle& tangle, const Digest& entry_root,
                                  const Digest& side_key, std::optional<std::size_t> limit) {
  auto msgs = walk_stream(
      tangle, entry_root,
      [&](const Digest& root) -> std::optional<Digest> {
        return authsvc::derive_key(side_key, root);
      },
      limit);
  std::vector<Payload> out;
  out.reserve(msgs.size());
  for (auto& m : msgs) out.push_back(std::move(m.payload));
  return out;
}

FetchedMessage fetch_message(const Tangle& tangle, const Digest& address, const Digest& key) {
  auto msg = read_message(tangle, address);
  if (!msg) throw Error(ErrorCode::kNotFound, "no message at " + address.hex());
  return {msg->root, address, open_message(*msg, key), msg->next_root, msg->public_key,
          msg->next_public_key};
}

std::vector<MamMessage> walk_chain(const Tangle& tangle, const Digest& entry_root,
                                   std::optional<std::size_t> limit) {
  std::vector<MamMessage> out;
  Digest root = entry_root;
  while (!limit || out.size() < *limit) {
    auto msg = read_message(tangle, sha256(root));
    if (!msg) break;
    if (msg->root != root || !verify_signature(msg->public_key, msg->signed_bytes(), msg->signature))
      throw Error(ErrorCode::kAuthFailure, "bad message in chain");
    if (!out.empty() && out.back().next_public_key != msg->public_key)
      throw Error(ErrorCode::kAuthFailure, "signer does not continue the chain");
    root = msg->next_root;
    out.push_back(std::move(*msg));
  }
  return out;
}

MamMessage register_channel(ChannelState& index_channel, Tangle& tangle, const ChannelRef& ref,
                            const NetworkConfig& config) {
  if (index_channel.kind != ChannelKind::kIndex)
    throw Error(ErrorCode::kWrongChannelKind, "register_channel needs an index channel");
  return publish(index_channel, tangle, Payload{ref}, config).message;
}

ChannelState open_session(ChannelState& index_channel, Tangle& tangle,
                          const NetworkConfig& config, const Digest& seed,
                          const Digest& side_key) {
  if (index_channel.kind != ChannelKind::kIndex)
    throw Error(ErrorCode::kWrongChannelKind, "open_session needs an index channel");
  auto session = create_channel(seed, ChannelKind::kSession, side_key);
  register_channel(index_channel, tangle, session.ref(), config);
  return session;
}

MamMessage record_in_session(ChannelState& session, Tangle& tangle, const TxAddress& tx,
                             const NetworkConfig& config) {
  if (session.kind != ChannelKind::kSession)
    throw Error(ErrorCode::kWrongChannelKind, "record_in_session needs a session channel");
  return publish(session, tangle, Payload{tx}, config).message;
}

std::vector<ChannelRef> list_channels(const Tangle& tangle, const Digest& index_root,
                                      const Digest& side_key) {
  std::vector<ChannelRef> out;
  for (auto& p : fetch_stream(tangle, index_root, side_key)) {
    if (auto* ref = std::get_if<ChannelRef>(&p.value)) out.push_back(std::move(*ref));
  }
  return out;
}

}  // namespace roadledger::mam
