#pragma once

// Deterministic smart-contract emulation: a token ledger, factory-deployed
// feature contracts selling access to data bundles, and unidirectional
// payment channels settled on-chain from payer-signed balance proofs.
//
// Every mutating call goes through one dispatcher and appends a JSON line
// {"op", "args", "state"} to the operation log, where "state" is the state
// hash after the op. Replaying a log from genesis reproduces the state and
// re-checks every hash.

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "roadledger/crypto.hpp"
#include "roadledger/payload.hpp"

namespace roadledger::contracts {

using Tokens = std::uint64_t;

inline constexpr std::uint64_t kDefaultChallengePeriod = 100;

struct DataBundle {
  std::uint64_t id = 0;
  std::vector<ItemRef> items;
  Tokens price = 0;

  bool operator==(const DataBundle&) const = default;
};

struct FeatureContract {
  Digest contract_id;
  Address owner;
  std::map<std::uint64_t, DataBundle> catalog;
  std::map<Address, std::set<std::uint64_t>> acl;
};

struct AclEntry {
  Digest contract_id;
  Address grantee;
  std::uint64_t bundle_id = 0;
};

struct BalanceProof {
  Digest channel_id;
  Tokens cumulative = 0;
  std::uint64_t seq = 0;
  Signature signature{};

  Bytes signed_bytes() const;
  bool verify(const PublicKey& payer_key) const;
  bool operator==(const BalanceProof&) const = default;
};

enum class ChannelStatus { kOpen, kClosing, kSettled };
std::string_view status_name(ChannelStatus s);

struct PaymentChannel {
  Digest channel_id;
  Address payer;
  PublicKey payer_key{};
  Address payee;
  Tokens deposit = 0;
  ChannelStatus status = ChannelStatus::kOpen;
  std::uint64_t deadline = 0;  // meaningful while Closing
  std::optional<BalanceProof> best_proof;
  Tokens paid_to_payee = 0;  // set on settlement
};

/// Payer-side, purely off-chain: signs cumulative = prior + amount with
/// seq = prior seq + 1 and records it as the channel's latest proof.
/// `channel` is the payer's local view.
BalanceProof make_micropayment(PaymentChannel& channel, const KeyPair& payer_key, Tokens amount);

/// Tells whether a ChannelRef grant covers a given message address.
using MembershipResolver = std::function<bool(const ChannelRef&, const TxAddress&)>;

/// Plain copyable contract state; the hash covers every field.
struct StateData {
  std::map<Address, Tokens> balances;
  Tokens total_supply = 0;
  std::uint64_t registration_nonce = 0;
  std::uint64_t channel_nonce = 0;
  std::map<Digest, FeatureContract> contracts;
  std::map<Address, Digest> contract_of_owner;
  std::map<Digest, PaymentChannel> channels;

  Digest hash() const;
  /// Deposits held by channels that are not yet settled.
  Tokens escrowed() const;
  Tokens balance(const Address& a) const;
};

bool check_access(const StateData& state, const Digest& contract_id, const Address& who,
                  const ItemRef& item, const MembershipResolver& resolver = {});

/// Single-writer state machine with an append-only operation log.
class ContractState {
 public:
  /// Genesis: the whole supply is minted to the given allocations.
  explicit ContractState(const std::vector<std::pair<Address, Tokens>>& allocations);

  /// Rebuilds state from log lines, checking each recorded state hash.
  static ContractState replay(const std::vector<std::string>& log_lines);

  void create_account(const Address& who);
  void transfer(const Address& from, const Address& to, Tokens amount);

  Digest deploy_feature_contract(const Address& owner, const std::vector<DataBundle>& catalog);
  void add_bundle(const Digest& contract_id, const Address& caller, const DataBundle& bundle);
  AclEntry purchase_access(const Address& buyer, const Digest& contract_id,
                           std::uint64_t bundle_id);
  bool check_access(const Digest& contract_id, const Address& who, const ItemRef& item,
                    const MembershipResolver& resolver = {}) const;

  PaymentChannel open_channel(const PublicKey& payer_key, const Address& payee, Tokens deposit);
  /// Payee with a proof settles at once. Payer starts Closing(now +
  /// challenge_period); during that window the payee may answer with a
  /// newer proof. Any call after the deadline settles with the best proof.
  PaymentChannel close_channel(const Digest& channel_id, const Address& caller,
                               const std::optional<BalanceProof>& proof, std::uint64_t now,
                               std::uint64_t challenge_period = kDefaultChallengePeriod);

  StateData snapshot() const;
  Digest state_hash() const;
  Tokens balance(const Address& a) const;
  std::optional<FeatureContract> contract(const Digest& id) const;
  std::optional<Digest> contract_of(const Address& owner) const;
  std::optional<PaymentChannel> channel(const Digest& id) const;
  std::vector<std::string> log() const;
  std::size_t log_size() const;

  ContractState(const ContractState&) = delete;
  ContractState& operator=(const ContractState&) = delete;
  ContractState(ContractState&& other) noexcept;

 private:
  ContractState() = default;
  /// Executes one operation (JSON args) and appends its log line; returns
  /// the JSON-encoded result.
  std::string run(const std::string& op, const std::string& args_json);

  mutable std::mutex mu_;
  StateData data_;
  std::vector<std::string> log_;
};

}  // namespace roadledger::contracts
