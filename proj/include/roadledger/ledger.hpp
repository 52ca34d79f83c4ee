#pragma once

// In-process DAG ledger: every transaction approves two earlier ones
// (trunk and branch), carries a hashcash-style nonce, and belongs to a bundle.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "roadledger/bytes.hpp"

namespace roadledger {

struct NetworkConfig {
  std::string name = "desk";
  int difficulty = 8;  // trailing zero bits, 0..32
  std::size_t payload_max = 1024;

  static NetworkConfig mainnet() { return {"mainnet", 14, 1024}; }
  static NetworkConfig devnet() { return {"devnet", 9, 1024}; }
  static NetworkConfig desk() { return {"desk", 8, 1024}; }
  static NetworkConfig named(std::string_view name);

  void validate() const;
};

struct Transaction {
  Digest hash;
  Digest trunk;
  Digest branch;
  Bytes payload;
  std::uint64_t timestamp = 0;
  std::uint64_t nonce = 0;
  Digest bundle_hash;
  std::uint32_t bundle_index = 0;
  std::uint32_t bundle_len = 1;

  /// Canonical encoding of every field except `hash`; the nonce comes last.
  Bytes body_bytes() const;
  Digest compute_hash() const;
  /// hash || body, the on-disk / wire form.
  Bytes serialize() const;
  static Transaction deserialize(ByteView in);

  bool operator==(const Transaction&) const = default;
};

using Bundle = std::vector<Transaction>;

struct PowResult {
  std::uint64_t nonce = 0;
  std::uint64_t attempts = 0;
};

/// Searches nonces 0, 1, 2, ... until the hash has `difficulty` trailing
/// zero bits. The draft's own nonce and hash are ignored.
PowResult do_pow(const Transaction& draft, int difficulty);

/// True iff the stored hash matches the recomputed one and has at least
/// `difficulty` trailing zero bits.
bool verify_pow(const Transaction& tx, int difficulty);

/// Thread-safe tangle. Attachment (tip read, PoW, insert) is atomic with
/// respect to other attachments.
class Tangle {
 public:
  Tangle();
  Tangle(const Tangle&) = delete;
  Tangle& operator=(const Tangle&) = delete;

  const Digest& genesis() const { return genesis_; }
  std::size_t size() const;
  bool contains(const Digest& hash) const;
  std::optional<Transaction> get(const Digest& hash) const;
  /// Current tips, sorted ascending.
  std::vector<Digest> tips() const;

  /// Two tips drawn uniformly; distinct whenever more than one tip exists.
  std::pair<Digest, Digest> select_tips(std::uint64_t rng_seed) const;

  /// Attaches one transaction per payload as a single chained bundle.
  /// When `address` is set, the bundle becomes retrievable through
  /// find_by_address.
  Bundle attach(const std::vector<Bytes>& payloads, const NetworkConfig& config,
                std::uint64_t rng_seed, std::optional<Digest> address = std::nullopt);

  /// Bundles attached under `address`, in attachment order.
  std::vector<Bundle> find_by_address(const Digest& address) const;
  /// Transactions of a bundle ordered by bundle_index; empty if unknown.
  Bundle bundle(const Digest& bundle_hash) const;
  /// All stored transactions in insertion order (a topological order with
  /// approved transactions first, genesis at position 0).
  std::vector<Transaction> transactions() const;

  /// Snapshot persistence. load() re-validates references and PoW.
  void save(const std::filesystem::path& file) const;
  void load(const std::filesystem::path& file, int difficulty);
  void load_bytes(ByteView snapshot, int difficulty);
  Bytes snapshot_bytes() const;
  Digest state_hash() const;

 private:
  std::pair<Digest, Digest> select_tips_locked(std::uint64_t rng_seed) const;
  void insert_locked(Transaction tx);

  mutable std::mutex mu_;
  Digest genesis_;
  std::unordered_map<Digest, Transaction> txs_;
  std::vector<Digest> order_;
  std::unordered_map<Digest, std::vector<Digest>> bundles_;
  std::set<Digest> tips_;
  std::map<Digest, std::vector<Digest>> by_address_;  // address -> bundle hashes
  std::vector<std::pair<Digest, Digest>> address_log_;  // (bundle, address)
};

Transaction make_genesis();

}  // namespace roadledger
