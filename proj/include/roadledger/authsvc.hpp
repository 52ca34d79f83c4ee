#pragma once

// Key-release service. Users hand over their master key and index root; the
// service walks their channels on the tangle and answers signed key requests
// for items the requester may access under the owner's feature contract.

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "roadledger/contracts.hpp"
#include "roadledger/derive_key.hpp"
#include "roadledger/ledger.hpp"

namespace roadledger::authsvc {

struct UserRegistration {
  Address owner;
  PublicKey owner_key{};
  Digest master_key;
  Digest index_root;
  Digest contract_id;
  Signature signature{};

  Bytes signed_bytes() const;
  static UserRegistration make(const KeyPair& owner, const Digest& master_key,
                               const Digest& index_root, const Digest& contract_id);
};

struct KeyRequest {
  Address requester;
  PublicKey requester_key{};
  std::vector<ItemRef> items;
  Signature signature{};

  Bytes signed_bytes() const;
  bool verify() const;
  static KeyRequest make(const KeyPair& requester, std::vector<ItemRef> items);

  std::string to_json() const;
  static KeyRequest from_json(const std::string& text);
};

struct ReleasedKey {
  Digest address;
  Digest root;
  Digest key;

  bool operator==(const ReleasedKey&) const = default;
};

struct ItemResult {
  ItemRef ref;
  /// One entry for a transaction, every current message for a channel.
  std::vector<ReleasedKey> keys;
  /// Channel entry root, for channel items.
  std::optional<Digest> root;
  std::optional<ErrorCode> denied;

  bool granted() const { return !denied.has_value(); }
  bool operator==(const ItemResult&) const = default;
};

struct KeyResponse {
  std::vector<ItemResult> items;
  /// Contract state hash the decision was taken against.
  Digest state;

  std::string to_json() const;
  static KeyResponse from_json(const std::string& text);
  bool operator==(const KeyResponse&) const = default;
};

class AuthService {
 public:
  AuthService(const Tangle& tangle, const contracts::ContractState& contracts);

  void register_user(const UserRegistration& registration);
  KeyResponse handle_key_request(const KeyRequest& request);
  /// JSON in, JSON out; failures become {"error": name, "message": text}.
  std::string handle_json(const std::string& request_json);

  /// Entry roots of every channel found in the user's index.
  std::vector<ChannelRef> channels_of(const Address& owner);
  std::vector<UserRegistration> registrations() const;

  void save_registrations(const std::filesystem::path& file) const;
  void load_registrations(const std::filesystem::path& file);

 private:
  struct Message {
    Digest address;
    Digest root;
    Payload payload;
  };
  struct Track {
    ChannelRef ref;
    Digest next_root;
    std::optional<PublicKey> next_signer;
    std::vector<Message> messages;
  };
  struct User {
    UserRegistration reg;
    Track index;
    std::map<Digest, Track> channels;  // by entry root
  };
  struct Location {
    std::size_t user;
    Digest channel;
    Digest root;
  };

  void refresh_locked();
  void advance(const User& user, Track& track);
  std::vector<ReleasedKey> channel_keys(const User& user, const Track& track) const;
  bool in_channel(const ChannelRef& channel, const TxAddress& tx) const;
  std::optional<std::size_t> owner_of_channel(const Digest& entry_root) const;

  const Tangle& tangle_;
  const contracts::ContractState& contracts_;
  mutable std::mutex mu_;
  std::vector<User> users_;
  std::map<Digest, Location> by_address_;
};

/// Blocking TCP front end: 4-byte big-endian length prefix, then UTF-8 JSON.
class TcpServer {
 public:
  /// Port 0 picks an ephemeral port.
  TcpServer(AuthService& service, const std::string& host, std::uint16_t port);
  ~TcpServer();
  TcpServer(const TcpServer&) = delete;
  TcpServer& operator=(const TcpServer&) = delete;

  std::uint16_t port() const { return port_; }
  void stop();

 private:
  void accept_loop();
  void serve(int fd);

  AuthService& service_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  std::mutex workers_mu_;
  std::vector<std::thread> workers_;
};

/// One request/response exchange over a fresh connection.
std::string exchange(const std::string& host, std::uint16_t port, const std::string& payload);
KeyResponse request_keys(const std::string& host, std::uint16_t port, const KeyRequest& request);

}  // namespace roadledger::authsvc
