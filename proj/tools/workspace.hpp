#pragma once

// On-disk state behind the roadledger command line.
//
//   workspace.json   seed, network, parameters
//   users.json       registered user names, in creation order
//   tangle.bin       ledger snapshot
//   objects/         content-addressed object store
//   contracts.log    contract operation log (JSON lines)
//   registrations.json  auth service registrations
//   pki.json         ORD registry
//   offchain.json    latest balance proof per payment channel
//
// Account and device keys are derived from the workspace seed and never
// written out. Master keys do appear in registrations.json, which belongs
// to the auth service.

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "roadledger/authsvc.hpp"
#include "roadledger/contracts.hpp"
#include "roadledger/ledger.hpp"
#include "roadledger/mam.hpp"
#include "roadledger/pol.hpp"
#include "roadledger/store.hpp"

namespace roadledger::cli {

struct UserKeys {
  std::string name;
  KeyPair account;
  Digest master;
  Digest index_seed;

  Digest feature_seed(const std::string& feature) const;
};

struct WorkspaceParams {
  Digest seed;
  NetworkConfig network = NetworkConfig::desk();
  contracts::Tokens supply = 1000000;
  std::size_t inline_max = 256;
  std::uint64_t challenge_period = contracts::kDefaultChallengePeriod;
};

class Workspace {
 public:
  static std::unique_ptr<Workspace> init(const std::filesystem::path& root,
                                         const WorkspaceParams& params);
  static std::unique_ptr<Workspace> open(const std::filesystem::path& root);

  void save() const;

  const std::filesystem::path& root() const { return root_; }
  const WorkspaceParams& params() const { return params_; }

  Tangle& tangle() { return *tangle_; }
  store::ObjectStore& store() { return *store_; }
  contracts::ContractState& contracts() { return *contracts_; }
  pol::PkiRegistry& pki() { return pki_; }

  const std::vector<std::string>& users() const { return users_; }
  bool has_user(const std::string& name) const;
  /// Keys of a registered user; UnknownAccount otherwise.
  UserKeys user(const std::string& name) const;
  UserKeys derive_user(const std::string& name) const;
  void add_user(const std::string& name);
  /// Resolves a user name or a 40-hex address.
  Address address_of(const std::string& who) const;

  KeyPair treasury() const;
  KeyPair ord_key(const std::string& ord_id) const;

  /// Current state of a channel, recovered by walking the tangle.
  mam::ChannelState channel(const UserKeys& user, ChannelKind kind,
                            const std::string& feature = {});
  std::vector<ChannelRef> feature_channels(const UserKeys& user);

  std::unique_ptr<authsvc::AuthService> auth_service();
  void add_registration(const authsvc::UserRegistration& reg);

  std::map<std::string, contracts::BalanceProof>& offchain() { return offchain_; }
  /// Logical time for channel deadlines: the contract log length.
  std::uint64_t now() const { return contracts_->log_size(); }

  /// Fingerprint of everything persisted.
  Digest state_hash();

 private:
  explicit Workspace(std::filesystem::path root);
  void load();

  std::filesystem::path root_;
  WorkspaceParams params_;
  std::unique_ptr<Tangle> tangle_;
  std::unique_ptr<store::ObjectStore> store_;
  std::unique_ptr<contracts::ContractState> contracts_;
  pol::PkiRegistry pki_;
  std::vector<std::string> users_;
  std::map<std::string, contracts::BalanceProof> offchain_;
};

/// Workspace directory from --workspace, ROADLEDGER_WORKSPACE, or ./workspace.
std::filesystem::path workspace_path(const std::string& flag);

}  // namespace roadledger::cli
