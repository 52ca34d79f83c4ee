#pragma once

// Masked authenticated messaging over the tangle. A channel is a hash chain
// of roots derived from a secret seed; each message is encrypted under
// derive_key(side_key, root), MAC'd, signed with a per-index one-time key and
// attached as a 4-transaction bundle at address H(root).

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "roadledger/crypto.hpp"
#include "roadledger/ledger.hpp"
#include "roadledger/payload.hpp"

namespace roadledger::mam {

inline constexpr std::uint32_t kBundleLen = 4;
inline constexpr std::uint32_t kFragments = kBundleLen - 1;

/// root_at(seed, i) = H(seed || be64(i) || kind tag)
Digest root_at(const Digest& seed, std::uint64_t index, ChannelKind kind);

/// One-time signing key for message `index`, seeded by H(seed || "sig" || be64(i)).
KeyPair signing_key_at(const Digest& seed, std::uint64_t index);

struct ChannelState {
  Digest seed;
  ChannelKind kind = ChannelKind::kFeature;
  std::string feature_name;
  std::uint64_t index = 0;
  Digest current_root;
  Digest side_key;

  ChannelRef ref() const;
  /// Root of the first message, the channel's public entry point.
  Digest entry_root() const { return root_at(seed, 0, kind); }
};

ChannelState create_channel(const Digest& seed, ChannelKind kind, const Digest& side_key,
                            std::string feature_name = {});

struct MamMessage {
  Digest root;
  Digest next_root;
  Digest address;
  Bytes ciphertext;
  Digest auth_tag;
  PublicKey public_key{};
  PublicKey next_public_key{};
  Signature signature{};

  /// Bytes covered by the signature.
  Bytes signed_bytes() const;
  /// Overhead transaction followed by kFragments ciphertext fragments.
  std::vector<Bytes> to_fragments() const;
  static MamMessage from_bundle(const Bundle& bundle);
};

Digest mac(const Digest& key, ByteView ciphertext);

/// Checks address, signature and MAC, then decrypts.
Payload open_message(const MamMessage& msg, const Digest& key);

struct Published {
  MamMessage message;
  Bundle bundle;
};

/// Largest serialized payload a single message can hold.
std::size_t max_payload_size(const NetworkConfig& config);

Published publish(ChannelState& channel, Tangle& tangle, const Payload& payload,
                  const NetworkConfig& config);

/// Locates the message at `address`; nullopt if absent.
std::optional<MamMessage> read_message(const Tangle& tangle, const Digest& address);

struct FetchedMessage {
  Digest root;
  Digest address;
  Payload payload;
  Digest next_root;
  PublicKey public_key{};
  PublicKey next_public_key{};
};

/// Returns the key for a root, or nullopt to stop the walk there.
using KeyLookup = std::function<std::optional<Digest>(const Digest& root)>;

/// Walks H(root), H(next_root), ... until a missing address, a root without
/// a key, or `limit` messages. Throws AuthFailure on any tag, signature or
/// chaining mismatch.
std::vector<FetchedMessage> walk_stream(const Tangle& tangle, const Digest& entry_root,
                                        const KeyLookup& key_for,
                                        std::optional<std::size_t> limit = std::nullopt);

std::vector<Payload> fetch_stream(const Tangle& tangle, const Digest& entry_root,
                                  const Digest& side_key,
                                  std::optional<std::size_t> limit = std::nullopt);

/// Reads and decrypts the single message at `address`.
FetchedMessage fetch_message(const Tangle& tangle, const Digest& address, const Digest& key);

/// Walks only the public chain structure (roots and addresses) without
/// decrypting. Signatures and chaining are still checked.
std::vector<MamMessage> walk_chain(const Tangle& tangle, const Digest& entry_root,
                                   std::optional<std::size_t> limit = std::nullopt);

MamMessage register_channel(ChannelState& index_channel, Tangle& tangle, const ChannelRef& ref,
                            const NetworkConfig& config);

/// Creates a session channel from `seed` and registers it in the index.
ChannelState open_session(ChannelState& index_channel, Tangle& tangle,
                          const NetworkConfig& config, const Digest& seed,
                          const Digest& side_key);

MamMessage record_in_session(ChannelState& session, Tangle& tangle, const TxAddress& tx,
                             const NetworkConfig& config);

/// Channel references found in an index channel, in registration order.
std::vector<ChannelRef> list_channels(const Tangle& tangle, const Digest& index_root,
                                      const Digest& side_key);

}  // namespace roadledger::mam
