#include "roadledger/contracts.hpp"

#include <algorithm>

#include "json.hpp"

namespace roadledger::contracts {

using json = nlohmann::json;

namespace {

Digest digest_arg(const json& j) { return Digest::from_hex(j.get<std::string>()); }
Address address_arg(const json& j) { return Address::from_hex(j.get<std::string>()); }

json bundle_to_json(const DataBundle& b) {
  json items = json::array();
  for (const auto& it : b.items) items.push_back(item_to_string(it));
  return {{"id", b.id}, {"items", items}, {"price", b.price}};
}

DataBundle bundle_from_json(const json& j) {
  DataBundle b;
  b.id = j.at("id").get<std::uint64_t>();
  b.price = j.at("price").get<Tokens>();
  for (const auto& it : j.at("items")) b.items.push_back(parse_item(it.get<std::string>()));
  return b;
}

json proof_to_json(const BalanceProof& p) {
  return {{"channel", p.channel_id.hex()},
          {"cumulative", p.cumulative},
          {"seq", p.seq},
          {"sig", hex(p.signature)}};
}

BalanceProof proof_from_json(const json& j) {
  BalanceProof p;
  p.channel_id = digest_arg(j.at("channel"));
  p.cumulative = j.at("cumulative").get<Tokens>();
  p.seq = j.at("seq").get<std::uint64_t>();
  p.signature = signature_from_hex(j.at("sig").get<std::string>());
  return p;
}

json channel_to_json(const PaymentChannel& c) {
  json j{{"channel", c.channel_id.hex()},       {"payer", c.payer.hex()},
         {"payer_key", hex(c.payer_key)},       {"payee", c.payee.hex()},
         {"deposit", c.deposit},                {"status", status_name(c.status)},
         {"deadline", c.deadline},              {"paid_to_payee", c.paid_to_payee}};
  if (c.best_proof) j["best_proof"] = proof_to_json(*c.best_proof);
  return j;
}

Tokens& balance_ref(StateData& s, const Address& a) {
  auto it = s.balances.find(a);
  if (it == s.balances.end()) throw Error(ErrorCode::kUnknownAccount, a.hex());
  return it->second;
}

void debit(StateData& s, const Address& a, Tokens amount) {
  auto& bal = balance_ref(s, a);
  if (bal < amount)
    throw Error(ErrorCode::kInsufficientFunds,
                a.hex() + " has " + std::to_string(bal) + ", needs " + std::to_string(amount));
  bal -= amount;
}

void validate_bundle(const DataBundle& b) {
  if (b.items.empty()) throw Error(ErrorCode::kInvalidArgument, "bundle has no items");
}

void settle(StateData& s, PaymentChannel& ch) {
  const Tokens to_payee = ch.best_proof ? ch.best_proof->cumulative : 0;
  s.balances[ch.payee] += to_payee;
  s.balances[ch.payer] += ch.deposit - to_payee;
  ch.paid_to_payee = to_payee;
  ch.status = ChannelStatus::kSettled;
}

bool newer(const BalanceProof& a, const std::optional<BalanceProof>& b) {
  if (!b) return true;
  return std::tie(a.seq, a.cumulative) > std::tie(b->seq, b->cumulative);
}

// All state transitions. Validation happens before mutation, and the caller
// works on a copy, so a throwing op leaves the state untouched.
json dispatch(StateData& s, const std::string& op, const json& a) {
  if (op == "create_account") {
    s.balances.try_emplace(address_arg(a.at("who")), 0);
    return nullptr;
  }
  if (op == "transfer") {
    const auto from = address_arg(a.at("from"));
    const auto to = address_arg(a.at("to"));
    const auto amount = a.at("amount").get<Tokens>();
    debit(s, from, amount);
    s.balances[to] += amount;
    return nullptr;
  }
  if (op == "deploy_feature_contract") {
    const auto owner = address_arg(a.at("owner"));
    if (!s.balances.contains(owner)) throw Error(ErrorCode::kUnknownAccount, owner.hex());
    if (s.contract_of_owner.contains(owner))
      throw Error(ErrorCode::kDuplicateRegistration, owner.hex());
    FeatureContract c;
    c.owner = owner;
    c.contract_id = Sha256()
                        .update("contract")
                        .update(owner.view())
                        .update_u64(s.registration_nonce)
                        .finish();
    for (const auto& bj : a.at("catalog")) {
      auto b = bundle_from_json(bj);
      validate_bundle(b);
      if (!c.catalog.emplace(b.id, b).second)
        throw Error(ErrorCode::kInvalidArgument, "duplicate bundle id");
    }
    ++s.registration_nonce;
    s.contract_of_owner[owner] = c.contract_id;
    auto id = c.contract_id;
    s.contracts.emplace(id, std::move(c));
    return id.hex();
  }
  if (op == "add_bundle") {
    auto it = s.contracts.find(digest_arg(a.at("contract")));
    if (it == s.contracts.end()) throw Error(ErrorCode::kUnknownContract);
    if (it->second.owner != address_arg(a.at("caller"))) throw Error(ErrorCode::kNotOwner);
    auto b = bundle_from_json(a.at("bundle"));
    validate_bundle(b);
    if (!it->second.catalog.emplace(b.id, b).second)
      throw Error(ErrorCode::kInvalidArgument, "duplicate bundle id");
    return nullptr;
  }
  if (op == "purchase_access") {
    const auto buyer = address_arg(a.at("buyer"));
    const auto bundle_id = a.at("bundle").get<std::uint64_t>();
    auto it = s.contracts.find(digest_arg(a.at("contract")));
    if (it == s.contracts.end()) throw Error(ErrorCode::kUnknownContract);
    auto& c = it->second;
    auto b = c.catalog.find(bundle_id);
    if (b == c.catalog.end()) throw Error(ErrorCode::kUnknownBundle, std::to_string(bundle_id));
    if (buyer == c.owner || (c.acl.contains(buyer) && c.acl.at(buyer).contains(bundle_id)))
      throw Error(ErrorCode::kAlreadyGranted);
    debit(s, buyer, b->second.price);
    s.balances[c.owner] += b->second.price;
    c.acl[buyer].insert(bundle_id);
    return {{"contract", c.contract_id.hex()}, {"grantee", buyer.hex()}, {"bundle", bundle_id}};
  }
  if (op == "open_channel") {
    PaymentChannel ch;
    ch.payer_key = public_key_from_hex(a.at("payer_key").get<std::string>());
    ch.payer = Address::of(ch.payer_key);
    ch.payee = address_arg(a.at("payee"));
    ch.deposit = a.at("deposit").get<Tokens>();
    if (ch.deposit == 0) throw Error(ErrorCode::kInsufficientFunds, "deposit must be positive");
    if (!s.balances.contains(ch.payee)) throw Error(ErrorCode::kUnknownAccount, ch.payee.hex());
    debit(s, ch.payer, ch.deposit);
    ch.channel_id = Sha256()
                        .update("channel")
                        .update(ch.payer.view())
                        .update(ch.payee.view())
                        .update_u64(s.channel_nonce)
                        .finish();
    ++s.channel_nonce;
    s.channels.emplace(ch.channel_id, ch);
    return channel_to_json(ch);
  }
  if (op == "close_channel") {
    auto it = s.channels.find(digest_arg(a.at("channel")));
    if (it == s.channels.end()) throw Error(ErrorCode::kUnknownChannel);
    auto& ch = it->second;
    const auto caller = address_arg(a.at("caller"));
    const auto now = a.at("now").get<std::uint64_t>();
    const auto period = a.at("challenge_period").get<std::uint64_t>();
    std::optional<BalanceProof> proof;
    if (a.contains("proof")) proof = proof_from_json(a.at("proof"));

    if (ch.status == ChannelStatus::kSettled) throw Error(ErrorCode::kAlreadySettled);
    if (proof) {
      if (proof->channel_id != ch.channel_id || !proof->verify(ch.payer_key) ||
          proof->cumulative > ch.deposit)
        throw Error(ErrorCode::kInvalidProof);
    }
    const bool expired = ch.status == ChannelStatus::kClosing && now > ch.deadline;

    if (caller == ch.payee) {
      if (expired && proof) throw Error(ErrorCode::kChallengeExpired);
      if (proof && newer(*proof, ch.best_proof)) ch.best_proof = proof;
      settle(s, ch);
    } else if (caller == ch.payer) {
      if (ch.status == ChannelStatus::kOpen) {
        ch.status = ChannelStatus::kClosing;
        ch.deadline = now + period;
        if (proof) ch.best_proof = proof;
      } else if (expired) {
        settle(s, ch);
      } else {
        throw Error(ErrorCode::kInvalidArgument, "challenge period still running");
      }
    } else if (expired) {
      settle(s, ch);
    } else {
      throw Error(ErrorCode::kNotOwner, "caller is not a party to the channel");
    }
    return channel_to_json(ch);
  }
  throw Error(ErrorCode::kMalformed, "unknown operation '" + op + "'");
}

}  // namespace

std::string_view status_name(ChannelStatus s) {
  switch (s) {
    case ChannelStatus::kOpen: return "open";
    case ChannelStatus::kClosing: return "closing";
    case ChannelStatus::kSettled: return "settled";
  }
  return "?";
}

Bytes BalanceProof::signed_bytes() const {
  Writer w;
  w.raw(as_view("balance-proof")).digest(channel_id).u64(cumulative).u64(seq);
  return w.take();
}

bool BalanceProof::verify(const PublicKey& payer_key) const {
  return verify_signature(payer_key, signed_bytes(), signature);
}

BalanceProof make_micropayment(PaymentChannel& channel, const KeyPair& payer_key,
                               Tokens amount) {
  if (channel.status != ChannelStatus::kOpen) throw Error(ErrorCode::kChannelNotOpen);
  if (payer_key.public_key() != channel.payer_key)
    throw Error(ErrorCode::kBadSignature, "key does not belong to the payer");
  if (amount == 0) throw Error(ErrorCode::kInvalidArgument, "amount must be positive");
  const Tokens prior = channel.best_proof ? channel.best_proof->cumulative : 0;
  const std::uint64_t seq = channel.best_proof ? channel.best_proof->seq : 0;
  if (amount > channel.deposit || prior > channel.deposit - amount)
    throw Error(ErrorCode::kExceedsDeposit,
                std::to_string(prior) + " + " + std::to_string(amount) + " > " +
                    std::to_string(channel.deposit));
  BalanceProof p;
  p.channel_id = channel.channel_id;
  p.cumulative = prior + amount;
  p.seq = seq + 1;
  p.signature = payer_key.sign(p.signed_bytes());
  channel.best_proof = p;
  return p;
}

Digest StateData::hash() const {
  Writer w;
  w.u64(total_supply).u64(registration_nonce).u64(channel_nonce);
  w.u32(static_cast<std::uint32_t>(balances.size()));
  for (const auto& [a, b] : balances) w.raw(a.view()).u64(b);
  w.u32(static_cast<std::uint32_t>(contracts.size()));
  for (const auto& [id, c] : contracts) {
    w.digest(id).raw(c.owner.view());
    w.u32(static_cast<std::uint32_t>(c.catalog.size()));
    for (const auto& [bid, b] : c.catalog) {
      w.u64(bid).u64(b.price).u32(static_cast<std::uint32_t>(b.items.size()));
      for (const auto& it : b.items) w.str(item_to_string(it));
    }
    w.u32(static_cast<std::uint32_t>(c.acl.size()));
    for (const auto& [who, ids] : c.acl) {
      w.raw(who.view()).u32(static_cast<std::uint32_t>(ids.size()));
      for (auto id2 : ids) w.u64(id2);
    }
  }
  w.u32(static_cast<std::uint32_t>(channels.size()));
  for (const auto& [id, ch] : channels) {
    w.digest(id).raw(ch.payer.view()).raw({ch.payer_key.data(), ch.payer_key.size()});
    w.raw(ch.payee.view()).u64(ch.deposit).u8(static_cast<std::uint8_t>(ch.status));
    w.u64(ch.deadline).u64(ch.paid_to_payee).u8(ch.best_proof ? 1 : 0);
    if (ch.best_proof) {
      w.u64(ch.best_proof->cumulative).u64(ch.best_proof->seq);
      w.raw({ch.best_proof->signature.data(), ch.best_proof->signature.size()});
    }
  }
  return sha256(w.bytes());
}

Tokens StateData::escrowed() const {
  Tokens sum = 0;
  for (const auto& [id, ch] : channels)
    if (ch.status != ChannelStatus::kSettled) sum += ch.deposit;
  return sum;
}

Tokens StateData::balance(const Address& a) const {
  auto it = balances.find(a);
  return it == balances.end() ? 0 : it->second;
}

bool check_access(const StateData& state, const Digest& contract_id, const Address& who,
                  const ItemRef& item, const MembershipResolver& resolver) {
  auto it = state.contracts.find(contract_id);
  if (it == state.contracts.end()) throw Error(ErrorCode::kUnknownContract);
  const auto& c = it->second;
  if (who == c.owner) return true;
  auto grants = c.acl.find(who);
  if (grants == c.acl.end()) return false;
  for (auto bundle_id : grants->second) {
    for (const auto& granted : c.catalog.at(bundle_id).items) {
      if (granted == item) return true;
      const auto* chan = std::get_if<ChannelRef>(&granted);
      const auto* tx = std::get_if<TxAddress>(&item);
      if (chan && tx && resolver && resolver(*chan, *tx)) return true;
    }
  }
  return false;
}

ContractState::ContractState(const std::vector<std::pair<Address, Tokens>>& allocations) {
  json list = json::array();
  for (const auto& [a, t] : allocations) list.push_back({a.hex(), t});
  for (const auto& [a, t] : allocations) {
    data_.balances[a] += t;
    data_.total_supply += t;
  }
  json line{{"op", "genesis"}, {"args", {{"allocations", list}}}, {"state", data_.hash().hex()}};
  log_.push_back(line.dump());
}

ContractState::ContractState(ContractState&& other) noexcept {
  std::lock_guard lock(other.mu_);
  data_ = std::move(other.data_);
  log_ = std::move(other.log_);
}

ContractState ContractState::replay(const std::vector<std::string>& log_lines) {
  if (log_lines.empty()) throw Error(ErrorCode::kMalformed, "empty operation log");
  auto first = json::parse(log_lines[0]);
  if (first.at("op") != "genesis") throw Error(ErrorCode::kMalformed, "log must start with genesis");
  std::vector<std::pair<Address, Tokens>> alloc;
  for (const auto& e : first.at("args").at("allocations"))
    alloc.emplace_back(Address::from_hex(e.at(0).get<std::string>()), e.at(1).get<Tokens>());
  ContractState s(alloc);
  if (s.log_[0] != json::parse(log_lines[0]).dump())
    throw Error(ErrorCode::kIntegrityFailure, "genesis state hash mismatch");
  for (std::size_t i = 1; i < log_lines.size(); ++i) {
    if (log_lines[i].empty()) continue;
    auto line = json::parse(log_lines[i]);
    s.run(line.at("op").get<std::string>(), line.at("args").dump());
    if (json::parse(s.log_.back()).at("state") != line.at("state"))
      throw Error(ErrorCode::kIntegrityFailure, "state hash mismatch at log line " + std::to_string(i + 1));
  }
  return s;
}

std::string ContractState::run(const std::string& op, const std::string& args_json) {
  std::lock_guard lock(mu_);
  auto args = json::parse(args_json);
  StateData next = data_;
  json result = dispatch(next, op, args);
  data_ = std::move(next);
  json line{{"op", op}, {"args", args}, {"state", data_.hash().hex()}};
  log_.push_back(line.dump());
  return result.dump();
}

void ContractState::create_account(const Address& who) {
  run("create_account", json{{"who", who.hex()}}.dump());
}

void ContractState::transfer(const Address& from, const Address& to, Tokens amount) {
  run("transfer", json{{"from", from.hex()}, {"to", to.hex()}, {"amount", amount}}.dump());
}

Digest ContractState::deploy_feature_contract(const Address& owner,
                                              const std::vector<DataBundle>& catalog) {
  json cat = json::array();
  for (const auto& b : catalog) cat.push_back(bundle_to_json(b));
  auto r = json::parse(run("deploy_feature_contract", json{{"owner", owner.hex()}, {"catalog", cat}}.dump()));
  return Digest::from_hex(r.get<std::string>());
}

void ContractState::add_bundle(const Digest& contract_id, const Address& caller,
                               const DataBundle& bundle) {
  run("add_bundle", json{{"contract", contract_id.hex()},
                         {"caller", caller.hex()},
                         {"bundle", bundle_to_json(bundle)}}
                        .dump());
}

AclEntry ContractState::purchase_access(const Address& buyer, const Digest& contract_id,
                                        std::uint64_t bundle_id) {
  run("purchase_access",
      json{{"buyer", buyer.hex()}, {"contract", contract_id.hex()}, {"bundle", bundle_id}}.dump());
  return {contract_id, buyer, bundle_id};
}

bool ContractState::check_access(const Digest& contract_id, const Address& who,
                                 const ItemRef& item, const MembershipResolver& resolver) const {
  return contracts::check_access(snapshot(), contract_id, who, item, resolver);
}

PaymentChannel ContractState::open_channel(const PublicKey& payer_key, const Address& payee,
                                           Tokens deposit) {
  auto r = json::parse(run("open_channel", json{{"payer_key", hex(payer_key)},
                                                {"payee", payee.hex()},
                                                {"deposit", deposit}}
                                               .dump()));
  return *channel(Digest::from_hex(r.at("channel").get<std::string>()));
}

PaymentChannel ContractState::close_channel(const Digest& channel_id, const Address& caller,
                                            const std::optional<BalanceProof>& proof,
                                            std::uint64_t now, std::uint64_t challenge_period) {
  json args{{"channel", channel_id.hex()},
            {"caller", caller.hex()},
            {"now", now},
            {"challenge_period", challenge_period}};
  if (proof) args["proof"] = proof_to_json(*proof);
  run("close_channel", args.dump());
  return *channel(channel_id);
}

StateData ContractState::snapshot() const {
  std::lock_guard lock(mu_);
  return data_;
}

Digest ContractState::state_hash() const {
  std::lock_guard lock(mu_);
  return data_.hash();
}

Tokens ContractState::balance(const Address& a) const {
  std::lock_guard lock(mu_);
  return data_.balance(a);
}

std::optional<FeatureContract> ContractState::contract(const Digest& id) const {
  std::lock_guard lock(mu_);
  auto it = data_.contracts.find(id);
  if (it == data_.contracts.end()) return std::nullopt;
  return it->second;
}

std::optional<Digest> ContractState::contract_of(const Address& owner) const {
  std::lock_guard lock(mu_);
  auto it = data_.contract_of_owner.find(owner);
  if (it == data_.contract_of_owner.end()) return std::nullopt;
  return it->second;
}

std::optional<PaymentChannel> ContractState::channel(const Digest& id) const {
  std::lock_guard lock(mu_);
  auto it = data_.channels.find(id);
  if (it == data_.channels.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> ContractState::log() const {
  std::lock_guard lock(mu_);
  return log_;
}

std::size_t ContractState::log_size() const {
  std::lock_guard lock(mu_);
  return log_.size();
}

}  // namespace roadledger::contracts
