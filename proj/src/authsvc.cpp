#include "roadledger/authsvc.hpp"

#include <algorithm>
#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "roadledger/mam.hpp"

namespace roadledger::authsvc {

using json = nlohmann::json;

namespace {

constexpr std::uint32_t kMaxFrame = 16u << 20;

template <typename F>
auto parse_json(F&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, e.what());
  }
}

json item_result_to_json(const ItemResult& r) {
  json j{{"ref", item_to_string(r.ref)}};
  if (r.denied) {
    j["denied"] = std::string(error_name(*r.denied));
    return j;
  }
  if (std::holds_alternative<TxAddress>(r.ref)) {
    if (!r.keys.empty()) {
      j["key"] = r.keys.front().key.hex();
      j["root"] = r.keys.front().root.hex();
    }
    return j;
  }
  json keys = json::array();
  for (const auto& k : r.keys)
    keys.push_back({{"address", k.address.hex()}, {"root", k.root.hex()}, {"key", k.key.hex()}});
  j["keys"] = keys;
  if (r.root) j["root"] = r.root->hex();
  return j;
}

ErrorCode denial_from_name(std::string_view name) {
  if (name == error_name(ErrorCode::kAccessDenied)) return ErrorCode::kAccessDenied;
  if (name == error_name(ErrorCode::kUnknownItem)) return ErrorCode::kUnknownItem;
  throw Error(ErrorCode::kMalformed, "unknown denial reason " + std::string(name));
}

ItemResult item_result_from_json(const json& j) {
  ItemResult r{parse_item(j.at("ref").get<std::string>()), {}, std::nullopt, std::nullopt};
  if (j.contains("denied")) {
    r.denied = denial_from_name(j.at("denied").get<std::string>());
    return r;
  }
  if (const auto* tx = std::get_if<TxAddress>(&r.ref)) {
    r.keys.push_back({tx->address, Digest::from_hex(j.at("root").get<std::string>()),
                      Digest::from_hex(j.at("key").get<std::string>())});
    return r;
  }
  for (const auto& k : j.at("keys"))
    r.keys.push_back({Digest::from_hex(k.at("address").get<std::string>()),
                      Digest::from_hex(k.at("root").get<std::string>()),
                      Digest::from_hex(k.at("key").get<std::string>())});
  if (j.contains("root")) r.root = Digest::from_hex(j.at("root").get<std::string>());
  return r;
}

json registration_to_json(const UserRegistration& r) {
  return {{"owner", r.owner.hex()},           {"owner_key", hex(r.owner_key)},
          {"master_key", r.master_key.hex()}, {"index_root", r.index_root.hex()},
          {"contract", r.contract_id.hex()},  {"sig", hex(r.signature)}};
}

UserRegistration registration_from_json(const json& j) {
  UserRegistration r;
  r.owner = Address::from_hex(j.at("owner").get<std::string>());
  r.owner_key = public_key_from_hex(j.at("owner_key").get<std::string>());
  r.master_key = Digest::from_hex(j.at("master_key").get<std::string>());
  r.index_root = Digest::from_hex(j.at("index_root").get<std::string>());
  r.contract_id = Digest::from_hex(j.at("contract").get<std::string>());
  r.signature = signature_from_hex(j.at("sig").get<std::string>());
  return r;
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    auto w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0 && errno == EINTR) continue;
    if (w <= 0) throw Error(ErrorCode::kIo, std::string("send: ") + std::strerror(errno));
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// False on a clean end of stream before the first byte.
bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    auto r = ::recv(fd, data + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw Error(ErrorCode::kIo, std::string("recv: ") + std::strerror(errno));
    if (r == 0) {
      if (got == 0) return false;
      throw Error(ErrorCode::kIo, "connection closed mid-frame");
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void write_frame(int fd, const std::string& body) {
  if (body.size() > kMaxFrame) throw Error(ErrorCode::kInvalidArgument, "frame too large");
  Writer w;
  w.u32(static_cast<std::uint32_t>(body.size()));
  w.raw(as_view(body));
  const auto& bytes = w.bytes();
  write_all(fd, bytes.data(), bytes.size());
}

std::optional<std::string> read_frame(int fd) {
  std::uint8_t header[4];
  if (!read_all(fd, header, 4)) return std::nullopt;
  Reader r(ByteView(header, 4));
  const auto len = r.u32();
  if (len > kMaxFrame) throw Error(ErrorCode::kMalformed, "frame too large");
  std::string body(len, '\0');
  if (len > 0 && !read_all(fd, reinterpret_cast<std::uint8_t*>(body.data()), len))
    throw Error(ErrorCode::kIo, "connection closed mid-frame");
  return body;
}

struct Fd {
  int fd = -1;
  ~Fd() {
    if (fd >= 0) ::close(fd);
  }
};

}  // namespace

Bytes UserRegistration::signed_bytes() const {
  Writer w;
  w.str("register");
  w.raw(owner_key);
  w.digest(master_key);
  w.digest(index_root);
  w.digest(contract_id);
  return w.take();
}

UserRegistration UserRegistration::make(const KeyPair& owner, const Digest& master_key,
                                        const Digest& index_root, const Digest& contract_id) {
  UserRegistration r{owner.address(), owner.public_key(), master_key, index_root, contract_id, {}};
  r.signature = owner.sign(r.signed_bytes());
  return r;
}

Bytes KeyRequest::signed_bytes() const {
  Writer w;
  w.str("keyreq");
  w.raw(requester_key);
  w.u32(static_cast<std::uint32_t>(items.size()));
  for (const auto& item : items) w.str(item_to_string(item));
  return w.take();
}

bool KeyRequest::verify() const {
  return Address::of(requester_key) == requester &&
         verify_signature(requester_key, signed_bytes(), signature);
}

KeyRequest KeyRequest::make(const KeyPair& requester, std::vector<ItemRef> items) {
  KeyRequest r{requester.address(), requester.public_key(), std::move(items), {}};
  r.signature = requester.sign(r.signed_bytes());
  return r;
}

std::string KeyRequest::to_json() const {
  json items_j = json::array();
  for (const auto& item : items) items_j.push_back(item_to_string(item));
  return json{{"requester", requester.hex()},
              {"pubkey", hex(requester_key)},
              {"items", items_j},
              {"sig", hex(signature)}}
      .dump();
}

KeyRequest KeyRequest::from_json(const std::string& text) {
  return parse_json([&] {
    auto j = json::parse(text);
    KeyRequest r;
    r.requester = Address::from_hex(j.at("requester").get<std::string>());
    r.requester_key = public_key_from_hex(j.at("pubkey").get<std::string>());
    for (const auto& item : j.at("items")) r.items.push_back(parse_item(item.get<std::string>()));
    r.signature = signature_from_hex(j.at("sig").get<std::string>());
    return r;
  });
}

std::string KeyResponse::to_json() const {
  json items_j = json::array();
  for (const auto& r : items) items_j.push_back(item_result_to_json(r));
  return json{{"items", items_j}, {"state", state.hex()}}.dump();
}

KeyResponse KeyResponse::from_json(const std::string& text) {
  return parse_json([&] {
    auto j = json::parse(text);
    if (j.contains("error")) {
      const auto name = j.at("error").get<std::string>();
      auto message = j.value("message", std::string());
      // Messages carry the "Name: " prefix of Error::what().
      if (message.rfind(name, 0) == 0) message.erase(0, std::min(message.size(), name.size() + 2));
      for (int c = 0; c <= static_cast<int>(ErrorCode::kIo); ++c) {
        const auto code = static_cast<ErrorCode>(c);
        if (error_name(code) == name) throw message.empty() ? Error(code) : Error(code, message);
      }
      throw Error(ErrorCode::kMalformed, name + ": " + message);
    }
    KeyResponse r;
    for (const auto& item : j.at("items")) r.items.push_back(item_result_from_json(item));
    r.state = Digest::from_hex(j.at("state").get<std::string>());
    return r;
  });
}

AuthService::AuthService(const Tangle& tangle, const contracts::ContractState& contracts)
    : tangle_(tangle), contracts_(contracts) {}

void AuthService::register_user(const UserRegistration& reg) {
  if (Address::of(reg.owner_key) != reg.owner ||
      !verify_signature(reg.owner_key, reg.signed_bytes(), reg.signature))
    throw Error(ErrorCode::kBadSignature, "registration signature");
  auto contract = contracts_.contract(reg.contract_id);
  if (!contract || contract->owner != reg.owner)
    throw Error(ErrorCode::kUnknownContract, reg.contract_id.hex());

  std::lock_guard lock(mu_);
  for (auto& u : users_) {
    if (u.reg.owner == reg.owner) {
      if (u.reg.master_key == reg.master_key && u.reg.index_root == reg.index_root &&
          u.reg.contract_id == reg.contract_id)
        return;
      throw Error(ErrorCode::kDuplicateRegistration, reg.owner.hex());
    }
  }
  User u;
  u.reg = reg;
  u.index.ref = ChannelRef{ChannelKind::kIndex, reg.index_root, {}};
  u.index.next_root = reg.index_root;
  users_.push_back(std::move(u));
  refresh_locked();
}

void AuthService::advance(const User& user, Track& track) {
  const auto& master = user.reg.master_key;
  auto fresh = mam::walk_stream(tangle_, track.next_root, [&](const Digest& root) {
    return std::optional<Digest>(derive_key(master, root));
  });
  if (fresh.empty()) return;
  if (track.next_signer && fresh.front().public_key != *track.next_signer)
    throw Error(ErrorCode::kAuthFailure, "signer does not continue the chain");
  for (auto& m : fresh) track.messages.push_back({m.address, m.root, std::move(m.payload)});
  track.next_root = fresh.back().next_root;
  track.next_signer = fresh.back().next_public_key;
}

void AuthService::refresh_locked() {
  for (std::size_t ui = 0; ui < users_.size(); ++ui) {
    auto& user = users_[ui];
    const auto before = user.index.messages.size();
    advance(user, user.index);
    for (std::size_t i = before; i < user.index.messages.size(); ++i) {
      const auto* ref = std::get_if<ChannelRef>(&user.index.messages[i].payload.value);
      if (!ref || user.channels.contains(ref->root)) continue;
      Track t;
      t.ref = *ref;
      t.next_root = ref->root;
      user.channels.emplace(ref->root, std::move(t));
    }
    for (auto& [entry, track] : user.channels) {
      const auto seen = track.messages.size();
      advance(user, track);
      for (std::size_t i = seen; i < track.messages.size(); ++i)
        by_address_[track.messages[i].address] = {ui, entry, track.messages[i].root};
    }
  }
}

std::optional<std::size_t> AuthService::owner_of_channel(const Digest& entry_root) const {
  for (std::size_t ui = 0; ui < users_.size(); ++ui)
    if (users_[ui].channels.contains(entry_root)) return ui;
  return std::nullopt;
}

bool AuthService::in_channel(const ChannelRef& channel, const TxAddress& tx) const {
  auto owner = owner_of_channel(channel.root);
  if (!owner) return false;
  const auto& track = users_[*owner].channels.at(channel.root);
  if (track.ref != channel) return false;
  for (const auto& m : track.messages) {
    if (m.address == tx.address) return true;
    if (channel.kind == ChannelKind::kSession) {
      const auto* ref = std::get_if<TxAddress>(&m.payload.value);
      if (ref && ref->address == tx.address) return true;
    }
  }
  return false;
}

std::vector<ReleasedKey> AuthService::channel_keys(const User& user, const Track& track) const {
  std::vector<ReleasedKey> out;
  const auto& master = user.reg.master_key;
  for (const auto& m : track.messages) {
    out.push_back({m.address, m.root, derive_key(master, m.root)});
    if (track.ref.kind != ChannelKind::kSession) continue;
    const auto* ref = std::get_if<TxAddress>(&m.payload.value);
    if (!ref) continue;
    auto loc = by_address_.find(ref->address);
    if (loc == by_address_.end() || loc->second.user != static_cast<std::size_t>(&user - users_.data()))
      continue;
    out.push_back({ref->address, loc->second.root, derive_key(master, loc->second.root)});
  }
  return out;
}

KeyResponse AuthService::handle_key_request(const KeyRequest& request) {
  if (!request.verify()) throw Error(ErrorCode::kBadSignature, "key request signature");
  const auto state = contracts_.snapshot();

  std::lock_guard lock(mu_);
  refresh_locked();
  const contracts::MembershipResolver resolver = [&](const ChannelRef& c, const TxAddress& t) {
    return in_channel(c, t);
  };

  KeyResponse response;
  response.state = state.hash();
  for (const auto& item : request.items) {
    ItemResult r{item, {}, std::nullopt, std::nullopt};
    const User* owner = nullptr;
    const Track* track = nullptr;
    const Location* loc = nullptr;
    if (const auto* tx = std::get_if<TxAddress>(&item)) {
      auto it = by_address_.find(tx->address);
      if (it != by_address_.end()) {
        loc = &it->second;
        owner = &users_[loc->user];
      }
    } else {
      const auto& ref = std::get<ChannelRef>(item);
      if (auto ui = owner_of_channel(ref.root)) {
        const auto& t = users_[*ui].channels.at(ref.root);
        if (t.ref == ref) {
          owner = &users_[*ui];
          track = &t;
        }
      }
    }

    if (!owner) {
      r.denied = ErrorCode::kUnknownItem;
    } else if (!contracts::check_access(state, owner->reg.contract_id, request.requester, item,
                                        resolver)) {
      r.denied = ErrorCode::kAccessDenied;
    } else if (loc) {
      r.keys.push_back({std::get<TxAddress>(item).address, loc->root,
                        derive_key(owner->reg.master_key, loc->root)});
    } else {
      r.keys = channel_keys(*owner, *track);
      r.root = track->ref.root;
    }
    response.items.push_back(std::move(r));
  }
  return response;
}

std::string AuthService::handle_json(const std::string& request_json) {
  try {
    return handle_key_request(KeyRequest::from_json(request_json)).to_json();
  } catch (const Error& e) {
    return json{{"error", std::string(error_name(e.code()))}, {"message", e.what()}}.dump();
  }
}

std::vector<ChannelRef> AuthService::channels_of(const Address& owner) {
  std::lock_guard lock(mu_);
  refresh_locked();
  std::vector<ChannelRef> out;
  for (const auto& u : users_) {
    if (u.reg.owner != owner) continue;
    for (const auto& m : u.index.messages)
      if (const auto* ref = std::get_if<ChannelRef>(&m.payload.value)) out.push_back(*ref);
  }
  return out;
}

std::vector<UserRegistration> AuthService::registrations() const {
  std::lock_guard lock(mu_);
  std::vector<UserRegistration> out;
  for (const auto& u : users_) out.push_back(u.reg);
  return out;
}

void AuthService::save_registrations(const std::filesystem::path& file) const {
  json arr = json::array();
  for (const auto& r : registrations()) arr.push_back(registration_to_json(r));
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << arr.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file);
}

void AuthService::load_registrations(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + file.string());
  auto regs = parse_json([&] {
    std::vector<UserRegistration> out;
    for (const auto& j : json::parse(in)) out.push_back(registration_from_json(j));
    return out;
  });
  for (const auto& r : regs) register_user(r);
}

TcpServer::TcpServer(AuthService& service, const std::string& host, std::uint16_t port)
    : service_(service) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kIo, std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::kConfig, "listen address must be IPv4: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 ||
      ::listen(listen_fd_, 64) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::kIo, "bind " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

TcpServer::~TcpServer() { stop(); }

void TcpServer::stop() {
  if (stopping_.exchange(true)) return;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  std::lock_guard lock(workers_mu_);
  for (auto& w : workers_) w.join();
  workers_.clear();
}

void TcpServer::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 50) <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void TcpServer::serve(int fd) {
  Fd guard{fd};
  try {
    while (!stopping_) {
      pollfd p{fd, POLLIN, 0};
      const int ready = ::poll(&p, 1, 50);
      if (ready < 0) return;
      if (ready == 0) continue;
      auto body = read_frame(fd);
      if (!body) return;
      write_frame(fd, service_.handle_json(*body));
    }
  } catch (const Error&) {
    // Broken connection; drop it.
  }
}

std::string exchange(const std::string& host, std::uint16_t port, const std::string& payload) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const auto service = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &res); rc != 0)
    throw Error(ErrorCode::kIo, "resolve " + host + ": " + ::gai_strerror(rc));
  Fd sock;
  for (auto* ai = res; ai; ai = ai->ai_next) {
    sock.fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (sock.fd < 0) continue;
    if (::connect(sock.fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(sock.fd);
    sock.fd = -1;
  }
  ::freeaddrinfo(res);
  if (sock.fd < 0) throw Error(ErrorCode::kIo, "cannot connect to " + host + ":" + service);
  write_frame(sock.fd, payload);
  auto reply = read_frame(sock.fd);
  if (!reply) throw Error(ErrorCode::kIo, "server closed the connection");
  return *reply;
}

KeyResponse request_keys(const std::string& host, std::uint16_t port, const KeyRequest& request) {
  return KeyResponse::from_json(exchange(host, port, request.to_json()));
}

}  // namespace roadledger::authsvc
