// roadledger: command-line front end over a workspace directory.
//
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "roadledger/simbench.hpp"
#include "workspace.hpp"

using namespace roadledger;
using namespace roadledger::cli;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

struct Globals {
  std::string workspace;
  bool json = false;
  bool reveal = false;
  std::string remote;
};

Globals g;

// Collects a command's result; printed as JSON or as "key: value" lines.
class Output {
 public:
  ojson& doc() { return doc_; }
  template <typename T>
  Output& set(const std::string& key, T&& value) {
    doc_[key] = std::forward<T>(value);
    return *this;
  }
  void table(const std::string& key, std::vector<std::string> headers,
             std::vector<std::vector<std::string>> rows) {
    ojson arr = ojson::array();
    for (const auto& r : rows) {
      ojson o;
      for (std::size_t c = 0; c < headers.size(); ++c) o[headers[c]] = r[c];
      arr.push_back(o);
    }
    doc_[key] = arr;
    tables_.push_back({key, std::move(headers), std::move(rows)});
  }
  void print() const {
    if (g.json) {
      std::cout << doc_.dump(2) << "\n";
      return;
    }
    for (const auto& [k, v] : doc_.items()) {
      if (is_table(k)) continue;
      std::cout << k << ": " << (v.is_string() ? v.get<std::string>() : v.dump()) << "\n";
    }
    for (const auto& t : tables_) print_table(t);
  }

 private:
  struct Table {
    std::string key;
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;
  };

  bool is_table(const std::string& key) const {
    for (const auto& t : tables_)
      if (t.key == key) return true;
    return false;
  }

  static void print_table(const Table& t) {
    std::vector<std::size_t> w(t.headers.size());
    for (std::size_t c = 0; c < w.size(); ++c) {
      w[c] = t.headers[c].size();
      for (const auto& r : t.rows) w[c] = std::max(w[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      std::string s;
      for (std::size_t c = 0; c < cells.size(); ++c) {
        s += cells[c];
        if (c + 1 < cells.size()) s += std::string(w[c] - cells[c].size() + 2, ' ');
      }
      std::cout << s << "\n";
    };
    line(t.headers);
    for (const auto& r : t.rows) line(r);
  }

  ojson doc_ = ojson::object();
  std::vector<Table> tables_;
};

std::string fixed(double v, int digits = 1) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

Bytes read_file(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + file.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const fs::path& file, ByteView bytes) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + file.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_file(const fs::path& file, const std::string& text) { write_file(file, as_view(text)); }

bool printable(ByteView b) {
  for (auto c : b)
    if ((c < 0x20 && c != '\n' && c != '\t' && c != '\r') || c == 0x7f) return false;
  return true;
}

Digest parse_seed(const std::string& text) {
  if (text.size() == 64 && text.find_first_not_of("0123456789abcdef") == std::string::npos)
    return Digest::from_hex(text);
  return sha256(as_view(text));
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "expected host:port, got " + text);
  const int port = std::stoi(text.substr(colon + 1));
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "bad port in " + text);
  return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

std::unique_ptr<Workspace> open_ws() { return Workspace::open(workspace_path(g.workspace)); }

const std::string& user_of_address(const Workspace& ws, const Address& a) {
  for (const auto& name : ws.users())
    if (ws.derive_user(name).account.address() == a) return name;
  throw Error(ErrorCode::kUnknownAccount, a.hex() + " is not a workspace user");
}

std::string display(const Workspace& ws, const Address& a) {
  for (const auto& name : ws.users())
    if (ws.derive_user(name).account.address() == a) return name;
  if (a == ws.treasury().address()) return "treasury";
  return a.hex();
}

std::optional<ChannelRef> find_feature(Workspace& ws, const UserKeys& keys, const std::string& feature) {
  for (const auto& ref : ws.feature_channels(keys))
    if (ref.kind == ChannelKind::kFeature && ref.feature_name == feature) return ref;
  return std::nullopt;
}

// "tx:<hex>" or "chan:<ref>" as given; "<user>/<feature>" or, with an
// implied owner, a bare feature name, resolves to that feature channel.
ItemRef resolve_item(Workspace& ws, const std::string& text, const std::string& owner = {}) {
  if (text.rfind("tx:", 0) == 0 || text.rfind("chan:", 0) == 0) return parse_item(text);
  std::string user = owner, feature = text;
  if (const auto slash = text.find('/'); slash != std::string::npos) {
    user = text.substr(0, slash);
    feature = text.substr(slash + 1);
  }
  if (user.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot resolve item " + text);
  auto ref = find_feature(ws, ws.user(user), feature);
  if (!ref) throw Error(ErrorCode::kUnknownItem, user + " has no feature channel " + feature);
  return *ref;
}

std::string bundle_items(const contracts::DataBundle& b) {
  std::string s;
  for (const auto& item : b.items) s += (s.empty() ? "" : " ") + item_to_string(item);
  return s;
}

// ---- init / user ---------------------------------------------------------

struct InitArgs {
  std::string seed;
  std::string network = "desk";
  contracts::Tokens supply = 1000000;
  std::size_t inline_max = store::kDefaultInlineMax;
  std::uint64_t challenge_period = contracts::kDefaultChallengePeriod;
};

int cmd_init(const InitArgs& a) {
  WorkspaceParams p;
  p.seed = a.seed.empty() ? random_digest() : parse_seed(a.seed);
  p.network = NetworkConfig::named(a.network);
  p.supply = a.supply;
  p.inline_max = a.inline_max;
  p.challenge_period = a.challenge_period;
  auto ws = Workspace::init(workspace_path(g.workspace), p);
  Output out;
  out.set("workspace", ws->root().string())
      .set("network", p.network.name)
      .set("difficulty", p.network.difficulty)
      .set("treasury", ws->treasury().address().hex())
      .set("supply", p.supply);
  out.print();
  return 0;
}

int cmd_user_new(const std::string& name, contracts::Tokens funds) {
  auto ws = open_ws();
  ws->add_user(name);
  const auto keys = ws->user(name);
  const auto addr = keys.account.address();
  auto& c = ws->contracts();
  if (funds > 0)
    c.transfer(ws->treasury().address(), addr, funds);
  else
    c.create_account(addr);
  const Digest contract = c.deploy_feature_contract(addr, {});
  const Digest index_root = ws->channel(keys, ChannelKind::kIndex).entry_root();
  ws->add_registration(authsvc::UserRegistration::make(keys.account, keys.master, index_root, contract));
  ws->save();

  Output out;
  out.set("name", name)
      .set("address", addr.hex())
      .set("contract_id", contract.hex())
      .set("index_root", index_root.hex())
      .set("balance", c.balance(addr));
  out.print();
  return 0;
}

int cmd_user_show(const std::string& name) {
  auto ws = open_ws();
  const auto keys = ws->user(name);
  const auto addr = keys.account.address();
  Output out;
  out.set("name", name)
      .set("address", addr.hex())
      .set("public_key", hex(keys.account.public_key()));
  if (auto cid = ws->contracts().contract_of(addr)) out.set("contract_id", cid->hex());
  out.set("index_root", ws->channel(keys, ChannelKind::kIndex).entry_root().hex())
      .set("balance", ws->contracts().balance(addr));
  if (g.reveal) {
    out.set("account_seed", keys.account.seed().hex()).set("master_key", keys.master.hex());
  }
  std::vector<std::vector<std::string>> rows;
  for (const auto& ref : ws->feature_channels(keys)) {
    auto ch = ws->channel(keys, ref.kind, ref.feature_name);
    rows.push_back({ref.feature_name, std::to_string(ch.index), ref.to_string()});
  }
  out.table("channels", {"feature", "messages", "ref"}, rows);
  out.print();
  return 0;
}

int cmd_balance(const std::string& who) {
  auto ws = open_ws();
  const auto addr = who == "treasury" ? ws->treasury().address() : ws->address_of(who);
  Output out;
  out.set("address", addr.hex()).set("balance", ws->contracts().balance(addr));
  out.print();
  return 0;
}

// ---- publish -------------------------------------------------------------

struct PublishArgs {
  std::string user, feature, data, cert;
  bool text = false;
};

ojson published_json(const mam::Published& p) {
  ojson txs = ojson::array();
  for (const auto& tx : p.bundle) txs.push_back(tx.hash.hex());
  return {{"root", p.message.root.hex()},
          {"address", p.message.address.hex()},
          {"item", item_to_string(TxAddress{p.message.address})},
          {"bundle", p.bundle.front().bundle_hash.hex()},
          {"transactions", txs}};
}

std::string_view payload_name(PayloadType t) {
  switch (t) {
    case PayloadType::kInline: return "inline";
    case PayloadType::kObjectRef: return "object-ref";
    case PayloadType::kChannelRef: return "channel-ref";
    case PayloadType::kTxAddress: return "tx-address";
    case PayloadType::kCertificate: return "certificate";
  }
  return "unknown";
}

int cmd_publish(const PublishArgs& a) {
  auto ws = open_ws();
  const auto keys = ws->user(a.user);
  const auto& cfg = ws->params().network;

  bool created = false;
  if (!find_feature(*ws, keys, a.feature)) {
    auto index = ws->channel(keys, ChannelKind::kIndex);
    auto fresh = ws->channel(keys, ChannelKind::kFeature, a.feature);
    mam::register_channel(index, ws->tangle(), fresh.ref(), cfg);
    created = true;
  }
  auto ch = ws->channel(keys, ChannelKind::kFeature, a.feature);

  const bool from_file = !a.text && fs::is_regular_file(a.data);
  const Bytes data = from_file ? read_file(a.data) : to_bytes(a.data);
  const Digest key = authsvc::derive_key(keys.master, ch.current_root);
  const Payload payload = store::make_payload(ws->store(), data, key, ws->params().inline_max);
  ojson messages = ojson::array();
  auto p = mam::publish(ch, ws->tangle(), payload, cfg);
  auto m = published_json(p);
  m["payload"] = payload_name(payload.type());
  if (auto* ref = std::get_if<ObjectRef>(&payload.value)) m["object"] = ref->digest.hex();
  messages.push_back(m);

  if (!a.cert.empty()) {
    const auto cert = pol::LocationCertificate::deserialize(read_file(a.cert));
    auto pc = mam::publish(ch, ws->tangle(), cert.to_payload(), cfg);
    auto mc = published_json(pc);
    mc["payload"] = payload_name(PayloadType::kCertificate);
    messages.push_back(mc);
  }
  ws->save();

  Output out;
  out.set("channel", ch.ref().to_string()).set("created", created);
  if (g.json) {
    out.set("messages", messages);
  } else {
    std::vector<std::vector<std::string>> rows;
    for (const auto& msg : messages)
      rows.push_back({msg["payload"], msg["root"], msg["item"]});
    out.table("messages", {"payload", "root", "item"}, rows);
    for (const auto& msg : messages) {
      std::string txs;
      for (const auto& t : msg["transactions"]) txs += (txs.empty() ? "" : " ") + t.get<std::string>();
      out.set("bundle " + msg["bundle"].get<std::string>(), txs);
    }
  }
  out.print();
  return 0;
}

// ---- market / fetch ------------------------------------------------------

int cmd_market_list(const std::string& seller) {
  auto ws = open_ws();
  const auto addr = ws->address_of(seller);
  const auto cid = ws->contracts().contract_of(addr);
  if (!cid) throw Error(ErrorCode::kUnknownContract, seller + " has no feature contract");
  const auto c = *ws->contracts().contract(*cid);
  Output out;
  out.set("owner", display(*ws, addr)).set("contract_id", cid->hex());
  std::vector<std::vector<std::string>> rows;
  for (const auto& [id, b] : c.catalog) {
    std::size_t buyers = 0;
    for (const auto& [who, ids] : c.acl) buyers += ids.count(id);
    rows.push_back({std::to_string(id), std::to_string(b.price), std::to_string(buyers), bundle_items(b)});
  }
  out.table("bundles", {"id", "price", "buyers", "items"}, rows);
  out.print();
  return 0;
}

int cmd_market_offer(const std::string& seller, std::uint64_t id, contracts::Tokens price,
                     const std::vector<std::string>& items) {
  auto ws = open_ws();
  const auto addr = ws->address_of(seller);
  const auto cid = ws->contracts().contract_of(addr);
  if (!cid) throw Error(ErrorCode::kUnknownContract, seller + " has no feature contract");
  contracts::DataBundle b{id, {}, price};
  for (const auto& it : items) b.items.push_back(resolve_item(*ws, it, seller));
  ws->contracts().add_bundle(*cid, addr, b);
  ws->save();
  Output out;
  out.set("contract_id", cid->hex()).set("bundle", id).set("price", price).set("items", bundle_items(b));
  out.print();
  return 0;
}

int cmd_market_buy(const std::string& buyer, const std::string& seller, std::uint64_t bundle) {
  auto ws = open_ws();
  const auto who = ws->address_of(buyer);
  const auto cid = ws->contracts().contract_of(ws->address_of(seller));
  if (!cid) throw Error(ErrorCode::kUnknownContract, seller + " has no feature contract");
  const auto entry = ws->contracts().purchase_access(who, *cid, bundle);
  ws->save();
  Output out;
  out.set("contract_id", entry.contract_id.hex())
      .set("bundle", entry.bundle_id)
      .set("grantee", entry.grantee.hex())
      .set("balance", ws->contracts().balance(who));
  out.print();
  return 0;
}

int cmd_fetch(const std::string& buyer, const std::string& item_text, const std::string& out_file) {
  auto ws = open_ws();
  const auto keys = ws->user(buyer);
  const ItemRef item = resolve_item(*ws, item_text);
  const auto request = authsvc::KeyRequest::make(keys.account, {item});

  authsvc::KeyResponse response;
  if (g.remote.empty()) {
    response = ws->auth_service()->handle_key_request(request);
  } else {
    const auto [host, port] = parse_endpoint(g.remote);
    response = authsvc::request_keys(host, port, request);
  }
  const auto& result = response.items.at(0);
  if (result.denied) throw Error(*result.denied, item_to_string(item));

  Output out;
  out.set("item", item_to_string(item)).set("state", response.state.hex());
  ojson messages = ojson::array();
  Bytes joined;
  std::vector<std::string> lines;
  for (const auto& k : result.keys) {
    const auto msg = mam::fetch_message(ws->tangle(), k.address, k.key);
    ojson m{{"address", k.address.hex()}, {"root", k.root.hex()},
            {"payload", payload_name(msg.payload.type())}};
    if (g.reveal) m["key"] = k.key.hex();
    Bytes data;
    std::string line;
    if (auto* in = std::get_if<InlineDatum>(&msg.payload.value)) {
      data = in->data;
    } else if (auto* ref = std::get_if<ObjectRef>(&msg.payload.value)) {
      data = store::open_object(ws->store(), *ref, k.key);
      m["object"] = ref->digest.hex();
    } else if (auto* blob = std::get_if<CertificateBlob>(&msg.payload.value)) {
      const auto cert = pol::LocationCertificate::deserialize(blob->bytes);
      bool valid = false;
      try {
        valid = pol::verify_certificate(ws->pki(), cert);
      } catch (const Error&) {
      }
      m["certificate"] = {{"ord", cert.ord_id},
                          {"prover", cert.prover.hex()},
                          {"range_m", cert.range_m},
                          {"timestamp", cert.timestamp},
                          {"valid", valid}};
      line = "certificate ord=" + cert.ord_id + " prover=" + cert.prover.hex() +
             (valid ? " valid" : " INVALID");
    } else if (auto* cr = std::get_if<ChannelRef>(&msg.payload.value)) {
      line = cr->to_string();
    } else if (auto* tx = std::get_if<TxAddress>(&msg.payload.value)) {
      line = item_to_string(*tx);
    }
    if (line.empty()) {
      joined.insert(joined.end(), data.begin(), data.end());
      m["size"] = data.size();
      if (printable(data)) {
        m["data"] = to_string(data);
        line = to_string(data);
      } else {
        m["data_hex"] = to_hex(data);
        line = "hex:" + to_hex(data);
      }
    }
    messages.push_back(m);
    lines.push_back(line);
  }

  if (!out_file.empty()) {
    write_file(out_file, joined);
    out.set("messages", messages.size()).set("written", out_file);
    out.print();
  } else if (g.json) {
    out.set("messages", messages);
    out.print();
  } else {
    for (const auto& l : lines) std::cout << l << "\n";
  }
  return 0;
}

// ---- bench ---------------------------------------------------------------

struct BenchArgs {
  std::string preset, config;
  std::vector<std::string> scenarios;
  std::int64_t seed = -1;
  std::string out = "bench-out";
  double bin_width = 500;
};

const std::map<std::string, std::vector<std::string>>& presets() {
  static const std::map<std::string, std::vector<std::string>> p{
      {"provider-comparison", {"provider2-mainnet", "provider1-mainnet"}},
      {"devnet-au-pc", {"pc-devnet", "au-devnet"}},
      {"mainnet-au-pc", {"pc-mainnet", "au-mainnet"}},
      {"rate-limit", {"provider2-mainnet"}},
  };
  return p;
}

int cmd_bench(const BenchArgs& a) {
  const auto calib =
      a.config.empty() ? simbench::Calibration::shipped() : simbench::Calibration::load(a.config);
  std::vector<simbench::Scenario> chosen;
  if (!a.preset.empty()) {
    auto it = presets().find(a.preset);
    if (it == presets().end()) throw Error(ErrorCode::kConfig, "unknown preset " + a.preset);
    for (const auto& n : it->second) chosen.push_back(calib.scenario(n));
  } else if (!a.scenarios.empty()) {
    for (const auto& n : a.scenarios) chosen.push_back(calib.scenario(n));
  } else {
    chosen = calib.scenarios;
  }
  if (chosen.empty()) throw Error(ErrorCode::kConfig, "no scenarios to run");
  if (a.seed >= 0)
    for (auto& s : chosen) s.rng_seed = static_cast<std::uint64_t>(a.seed);

  std::vector<simbench::ScenarioResult> results;
  for (const auto& s : chosen) {
    auto records = simbench::run_scenario(s);
    auto summary = simbench::summarize(records);
    auto h = simbench::histogram(records, a.bin_width);
    results.push_back({s, std::move(records), std::move(summary), std::move(h)});
  }

  const fs::path dir = a.out;
  fs::create_directories(dir);
  ojson files = ojson::array();
  for (const auto& r : results) {
    const auto rec = dir / (r.scenario.name + ".csv");
    const auto hist = dir / (r.scenario.name + "-hist.csv");
    write_file(rec, simbench::records_csv(r.records));
    write_file(hist, r.histogram.to_csv());
    files.push_back(rec.string());
    files.push_back(hist.string());
  }
  write_file(dir / "summary.csv", simbench::comparison_csv(results));
  files.push_back((dir / "summary.csv").string());

  Output out;
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : results) {
    const auto& s = r.summary;
    auto first = simbench::first_with(r.records, simbench::Outcome::kRateLimited);
    std::vector<std::string> row{r.scenario.name, std::to_string(s.accepted) + "/" + std::to_string(s.total)};
    if (s.latency) {
      for (double v : {s.latency->mean_ms, s.latency->median_ms, s.latency->p95_ms}) row.push_back(fixed(v));
    } else {
      row.insert(row.end(), {"-", "-", "-"});
    }
    row.push_back(first ? std::to_string(*first) : "-");
    rows.push_back(row);
  }
  out.table("scenarios", {"scenario", "accepted", "mean_ms", "median_ms", "p95_ms", "first_rate_limit"}, rows);
  if (g.json) out.set("files", files);
  out.print();
  return 0;
}

// ---- pol -----------------------------------------------------------------

pol::Position position_arg(double lat, double lon) { return pol::Position::from_degrees(lat, lon); }

int cmd_pol_register(const std::string& id) {
  auto ws = open_ws();
  const auto key = ws->ord_key(id).public_key();
  ws->pki().register_device(id, key);
  ws->save();
  Output out;
  out.set("ord", id).set("public_key", hex(key)).set("registered", ws->pki().size());
  out.print();
  return 0;
}

struct IssueArgs {
  std::string ord, prover, out;
  double lat = 0, lon = 0;
  std::uint32_t range = 50;
  std::int64_t timestamp = -1;
};

int cmd_pol_issue(const IssueArgs& a) {
  auto ws = open_ws();
  const std::uint64_t ts = a.timestamp >= 0 ? static_cast<std::uint64_t>(a.timestamp) : ws->now();
  const auto cert = pol::issue_certificate(ws->pki(), a.ord, ws->ord_key(a.ord), position_arg(a.lat, a.lon),
                                           a.range, ws->address_of(a.prover), ts);
  const Bytes bytes = cert.serialize();
  Output out;
  out.set("ord", cert.ord_id).set("prover", cert.prover.hex()).set("timestamp", cert.timestamp);
  if (a.out.empty()) {
    out.set("certificate", to_hex(bytes));
  } else {
    write_file(a.out, bytes);
    out.set("written", a.out);
  }
  out.print();
  return 0;
}

struct AreaArgs {
  double lat = 0, lon = 0;
  std::uint32_t radius = 0, cell = pol::kDefaultCellM;
  std::string epoch = "0", salt, out;
};

int cmd_pol_area(const AreaArgs& a) {
  pol::Salt salt{};
  if (!a.salt.empty()) {
    const Bytes s = from_hex(a.salt);
    if (s.size() != salt.size()) throw Error(ErrorCode::kInvalidArgument, "salt must be 16 bytes of hex");
    std::copy(s.begin(), s.end(), salt.begin());
  } else {
    auto ws = open_ws();
    const Digest d = sha256(Writer().digest(ws->params().seed).str("epoch").str(a.epoch).bytes());
    std::copy_n(d.bytes.begin(), salt.size(), salt.begin());
  }
  const auto area = pol::build_area(position_arg(a.lat, a.lon), a.radius, a.cell, salt);
  write_file(a.out, area.serialize());
  Output out;
  out.set("merkle_root", area.merkle_root.hex()).set("cells", area.leaves.size()).set("written", a.out);
  out.print();
  return 0;
}

int cmd_pol_prove(const std::string& area_file, double lat, double lon, const std::string& out_file) {
  auto ws = open_ws();
  const auto area = pol::AreaCommitment::deserialize(read_file(area_file));
  const auto pos = position_arg(lat, lon);
  const Digest nonce = sha256(Writer()
                                  .digest(ws->params().seed)
                                  .str("pol-nonce")
                                  .digest(area.merkle_root)
                                  .i64(pos.lat)
                                  .i64(pos.lon)
                                  .bytes());
  const auto proof = pol::prove_in_area(pos, area, nonce);
  write_file(out_file, proof.serialize());
  Output out;
  out.set("commitment", proof.commitment.hex()).set("leaf", proof.leaf.hex()).set("written", out_file);
  out.print();
  return 0;
}

int cmd_pol_verify(const std::string& cert_file, const std::string& proof_file, const std::string& area_file) {
  bool valid = false;
  Output out;
  if (!cert_file.empty()) {
    auto ws = open_ws();
    const auto cert = pol::LocationCertificate::deserialize(read_file(cert_file));
    valid = pol::verify_certificate(ws->pki(), cert);
    out.set("kind", "certificate").set("ord", cert.ord_id).set("prover", cert.prover.hex());
  } else {
    if (proof_file.empty() || area_file.empty())
      throw CLI::ValidationError("verify", "needs --cert, or --proof with --area");
    const auto area = pol::AreaCommitment::deserialize(read_file(area_file));
    const auto proof = pol::ZkPolProof::deserialize(read_file(proof_file));
    valid = pol::verify_in_area(proof, area);
    out.set("kind", "in-area").set("merkle_root", area.merkle_root.hex());
  }
  out.set("valid", valid);
  out.print();
  return valid ? 0 : 1;
}

// ---- paychan -------------------------------------------------------------

void channel_fields(Output& out, const Workspace& ws, const contracts::PaymentChannel& ch) {
  out.set("channel", ch.channel_id.hex())
      .set("payer", display(ws, ch.payer))
      .set("payee", display(ws, ch.payee))
      .set("deposit", ch.deposit)
      .set("status", std::string(contracts::status_name(ch.status)));
  if (ch.status == contracts::ChannelStatus::kClosing) out.set("deadline", ch.deadline);
  if (ch.best_proof) out.set("best_cumulative", ch.best_proof->cumulative);
  if (ch.status == contracts::ChannelStatus::kSettled) out.set("paid_to_payee", ch.paid_to_payee);
}

contracts::PaymentChannel channel_arg(Workspace& ws, const std::string& id) {
  auto ch = ws.contracts().channel(Digest::from_hex(id));
  if (!ch) throw Error(ErrorCode::kUnknownChannel, id);
  return *ch;
}

int cmd_paychan_open(const std::string& payer, const std::string& payee, contracts::Tokens deposit) {
  auto ws = open_ws();
  const auto ch = ws->contracts().open_channel(ws->user(payer).account.public_key(),
                                               ws->address_of(payee), deposit);
  ws->save();
  Output out;
  channel_fields(out, *ws, ch);
  out.print();
  return 0;
}

int cmd_paychan_pay(const std::string& id, contracts::Tokens amount) {
  auto ws = open_ws();
  auto view = channel_arg(*ws, id);
  const auto keys = ws->user(user_of_address(*ws, view.payer));
  auto& off = ws->offchain();
  if (auto it = off.find(view.channel_id.hex()); it != off.end()) view.best_proof = it->second;
  const auto proof = contracts::make_micropayment(view, keys.account, amount);
  off[view.channel_id.hex()] = proof;
  ws->save();
  Output out;
  out.set("channel", id).set("cumulative", proof.cumulative).set("seq", proof.seq).set("signature", hex(proof.signature));
  out.print();
  return 0;
}

int cmd_paychan_close(const std::string& id, const std::string& by, std::int64_t now, bool no_proof) {
  auto ws = open_ws();
  const auto view = channel_arg(*ws, id);
  std::optional<contracts::BalanceProof> proof;
  if (!no_proof)
    if (auto it = ws->offchain().find(view.channel_id.hex()); it != ws->offchain().end()) proof = it->second;
  const auto t = now >= 0 ? static_cast<std::uint64_t>(now) : ws->now();
  const auto ch = ws->contracts().close_channel(view.channel_id, ws->address_of(by), proof, t,
                                                ws->params().challenge_period);
  ws->save();
  Output out;
  channel_fields(out, *ws, ch);
  out.set("payer_balance", ws->contracts().balance(ch.payer))
      .set("payee_balance", ws->contracts().balance(ch.payee));
  out.print();
  return 0;
}

int cmd_paychan_show(const std::string& id) {
  auto ws = open_ws();
  Output out;
  channel_fields(out, *ws, channel_arg(*ws, id));
  if (auto it = ws->offchain().find(id); it != ws->offchain().end())
    out.set("latest_offchain", it->second.cumulative);
  out.print();
  return 0;
}

// ---- authsvc / status ----------------------------------------------------

int cmd_serve(const std::string& listen) {
  const auto [host, port] = parse_endpoint(listen);
  auto ws = open_ws();
  auto svc = ws->auth_service();

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  authsvc::TcpServer server(*svc, host, port);
  std::cout << "listening " << host << ":" << server.port() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  server.stop();
  return 0;
}

void state_fields(Output& out, Workspace& ws) {
  out.set("network", ws.params().network.name)
      .set("users", ws.users().size())
      .set("transactions", ws.tangle().size())
      .set("tips", ws.tangle().tips().size())
      .set("contract_ops", ws.contracts().log_size())
      .set("devices", ws.pki().size())
      .set("tangle_hash", ws.tangle().state_hash().hex())
      .set("contract_hash", ws.contracts().state_hash().hex())
      .set("state_hash", ws.state_hash().hex());
}

int cmd_status() {
  auto ws = open_ws();
  Output out;
  state_fields(out, *ws);
  std::vector<std::vector<std::string>> rows;
  const auto snap = ws->contracts().snapshot();
  rows.push_back({"treasury", std::to_string(snap.balance(ws->treasury().address()))});
  for (const auto& name : ws->users())
    rows.push_back({name, std::to_string(snap.balance(ws->derive_user(name).account.address()))});
  rows.push_back({"(escrowed)", std::to_string(snap.escrowed())});
  out.table("balances", {"account", "balance"}, rows);
  out.print();
  return 0;
}

int cmd_replay() {
  // Opening the workspace replays the contract log and revalidates the tangle.
  auto ws = open_ws();
  auto svc = ws->auth_service();
  std::size_t channels = 0;
  for (const auto& name : ws->users()) channels += svc->channels_of(ws->derive_user(name).account.address()).size();
  Output out;
  state_fields(out, *ws);
  out.set("channels", channels).set("replayed", true);
  out.print();
  return 0;
}

CLI::App* sub(CLI::App& parent, const std::string& name, const std::string& desc) {
  auto* s = parent.add_subcommand(name, desc);
  s->fallthrough();
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"roadledger: road data market over a DAG ledger"};
  app.require_subcommand(1);
  app.add_option("-w,--workspace", g.workspace, "Workspace directory (default $ROADLEDGER_WORKSPACE or ./workspace)");
  app.add_flag("--json", g.json, "Structured output");
  app.add_flag("--reveal", g.reveal, "Include key material in output");
  app.add_option("--remote", g.remote, "Auth service host:port (default in-process)");

  std::function<int()> run;

  InitArgs init;
  auto* c_init = sub(app, "init", "Create a workspace");
  c_init->add_option("--seed", init.seed, "Workspace seed: 64 hex chars or any text");
  c_init->add_option("--network", init.network, "desk, devnet or mainnet")->check(CLI::IsMember({"desk", "devnet", "mainnet"}));
  c_init->add_option("--supply", init.supply, "Tokens minted to the treasury");
  c_init->add_option("--inline-max", init.inline_max, "Largest datum stored inline (bytes)");
  c_init->add_option("--challenge-period", init.challenge_period, "Payment channel challenge period (ops)");
  c_init->callback([&] { run = [&] { return cmd_init(init); }; });

  std::string name, who, other, item, out_file;
  contracts::Tokens funds = 1000, amount = 0;
  std::uint64_t bundle_id = 0;

  auto* c_user = sub(app, "user", "Manage users");
  c_user->require_subcommand(1);
  auto* c_user_new = sub(*c_user, "new", "Create a user with account, contract and index channel");
  c_user_new->add_option("--name", name, "User name")->required();
  c_user_new->add_option("--funds", funds, "Tokens granted by the treasury");
  c_user_new->callback([&] { run = [&] { return cmd_user_new(name, funds); }; });
  auto* c_user_show = sub(*c_user, "show", "Show a user");
  c_user_show->add_option("name", name)->required();
  c_user_show->callback([&] { run = [&] { return cmd_user_show(name); }; });

  auto* c_balance = sub(app, "balance", "Token balance of a user, address or the treasury");
  c_balance->add_option("who", who)->required();
  c_balance->callback([&] { run = [&] { return cmd_balance(who); }; });

  PublishArgs pub;
  auto* c_pub = sub(app, "publish", "Publish a datum on a feature channel");
  c_pub->add_option("user", pub.user)->required();
  c_pub->add_option("feature", pub.feature)->required();
  c_pub->add_option("data", pub.data, "Literal text or a file path")->required();
  c_pub->add_flag("--text", pub.text, "Treat data as text even if a file of that name exists");
  c_pub->add_option("--cert", pub.cert, "Location certificate file to attach");
  c_pub->callback([&] { run = [&] { return cmd_publish(pub); }; });

  auto* c_market = sub(app, "market", "Feature contract catalog and purchases");
  c_market->require_subcommand(1);
  auto* c_list = sub(*c_market, "list", "List a seller's bundles");
  c_list->add_option("seller", who)->required();
  c_list->callback([&] { run = [&] { return cmd_market_list(who); }; });
  std::vector<std::string> items;
  contracts::Tokens price = 0;
  auto* c_offer = sub(*c_market, "offer", "Add a bundle to a seller's contract");
  c_offer->add_option("seller", who)->required();
  c_offer->add_option("--id", bundle_id)->required();
  c_offer->add_option("--price", price)->required();
  c_offer->add_option("items", items, "Feature names, tx:<hex> or chan:<ref>")->required();
  c_offer->callback([&] { run = [&] { return cmd_market_offer(who, bundle_id, price, items); }; });
  auto* c_buy = sub(*c_market, "buy", "Purchase a bundle");
  c_buy->add_option("buyer", who)->required();
  c_buy->add_option("seller", other)->required();
  c_buy->add_option("bundle", bundle_id)->required();
  c_buy->callback([&] { run = [&] { return cmd_market_buy(who, other, bundle_id); }; });

  auto* c_fetch = sub(app, "fetch", "Request keys and decrypt an item");
  c_fetch->add_option("buyer", who)->required();
  c_fetch->add_option("item", item, "seller/feature, tx:<hex> or chan:<ref>")->required();
  c_fetch->add_option("--out", out_file, "Write plaintext to a file");
  c_fetch->callback([&] { run = [&] { return cmd_fetch(who, item, out_file); }; });

  BenchArgs bench;
  auto* c_bench = sub(app, "bench", "Latency simulation");
  c_bench->require_subcommand(1);
  auto bench_opts = [&](CLI::App* c) {
    c->add_option("--seed", bench.seed, "Override every scenario seed");
    c->add_option("--out", bench.out, "Output directory for CSV files");
    c->add_option("--bin-width", bench.bin_width, "Histogram bin width (ms)");
  };
  auto* c_preset = sub(*c_bench, "preset", "Run a shipped preset");
  c_preset->add_option("name", bench.preset)->required()->check(CLI::IsMember(
      std::vector<std::string>{"provider-comparison", "devnet-au-pc", "mainnet-au-pc", "rate-limit"}));
  bench_opts(c_preset);
  c_preset->callback([&] { run = [&] { return cmd_bench(bench); }; });
  auto* c_config = sub(*c_bench, "config", "Run scenarios from a calibration file");
  c_config->add_option("file", bench.config)->required()->check(CLI::ExistingFile);
  c_config->add_option("--scenario", bench.scenarios, "Scenario names (default all)");
  bench_opts(c_config);
  c_config->callback([&] { run = [&] { return cmd_bench(bench); }; });

  auto* c_pol = sub(app, "pol", "Proof of location");
  c_pol->require_subcommand(1);
  std::string ord;
  auto* c_reg = sub(*c_pol, "register-ord", "Register an on-road device");
  c_reg->add_option("--id", ord)->required();
  c_reg->callback([&] { run = [&] { return cmd_pol_register(ord); }; });
  IssueArgs issue;
  auto* c_issue = sub(*c_pol, "issue", "Issue a location certificate");
  c_issue->add_option("--ord", issue.ord)->required();
  c_issue->add_option("--prover", issue.prover, "User name or address")->required();
  c_issue->add_option("--lat", issue.lat)->required();
  c_issue->add_option("--lon", issue.lon)->required();
  c_issue->add_option("--range", issue.range, "Range in meters");
  c_issue->add_option("--time", issue.timestamp, "Timestamp (default: contract log length)");
  c_issue->add_option("--out", issue.out);
  c_issue->callback([&] { run = [&] { return cmd_pol_issue(issue); }; });
  AreaArgs area;
  auto* c_area = sub(*c_pol, "area", "Commit to a service area");
  c_area->add_option("--lat", area.lat)->required();
  c_area->add_option("--lon", area.lon)->required();
  c_area->add_option("--radius", area.radius, "Radius in meters")->required();
  c_area->add_option("--cell", area.cell, "Cell size in meters");
  c_area->add_option("--epoch", area.epoch, "Epoch label for the salt");
  c_area->add_option("--salt", area.salt, "Explicit 16-byte salt (hex)");
  c_area->add_option("--out", area.out)->required();
  c_area->callback([&] { run = [&] { return cmd_pol_area(area); }; });
  std::string area_file, proof_file, cert_file;
  double lat = 0, lon = 0;
  auto* c_prove = sub(*c_pol, "prove", "Prove presence inside an area");
  c_prove->add_option("--area", area_file)->required();
  c_prove->add_option("--lat", lat)->required();
  c_prove->add_option("--lon", lon)->required();
  c_prove->add_option("--out", out_file)->required();
  c_prove->callback([&] { run = [&] { return cmd_pol_prove(area_file, lat, lon, out_file); }; });
  auto* c_verify = sub(*c_pol, "verify", "Verify a certificate or an in-area proof");
  auto* o_cert = c_verify->add_option("--cert", cert_file);
  auto* o_proof = c_verify->add_option("--proof", proof_file);
  c_verify->add_option("--area", area_file);
  o_cert->excludes(o_proof);
  c_verify->callback([&] { run = [&] { return cmd_pol_verify(cert_file, proof_file, area_file); }; });

  auto* c_pay = sub(app, "paychan", "Payment channels");
  c_pay->require_subcommand(1);
  std::string channel_id;
  std::int64_t now = -1;
  bool no_proof = false;
  auto* c_open = sub(*c_pay, "open", "Open a channel with a deposit");
  c_open->add_option("payer", who)->required();
  c_open->add_option("payee", other)->required();
  c_open->add_option("deposit", amount)->required();
  c_open->callback([&] { run = [&] { return cmd_paychan_open(who, other, amount); }; });
  auto* c_paym = sub(*c_pay, "pay", "Sign an off-chain micropayment");
  c_paym->add_option("channel", channel_id)->required();
  c_paym->add_option("amount", amount)->required();
  c_paym->callback([&] { run = [&] { return cmd_paychan_pay(channel_id, amount); }; });
  auto* c_close = sub(*c_pay, "close", "Close, challenge or settle a channel");
  c_close->add_option("channel", channel_id)->required();
  c_close->add_option("--by", who, "Calling user")->required();
  c_close->add_option("--now", now, "Logical time (default: contract log length)");
  c_close->add_flag("--no-proof", no_proof, "Do not present the latest balance proof");
  c_close->callback([&] { run = [&] { return cmd_paychan_close(channel_id, who, now, no_proof); }; });
  auto* c_pshow = sub(*c_pay, "show", "Show a channel");
  c_pshow->add_option("channel", channel_id)->required();
  c_pshow->callback([&] { run = [&] { return cmd_paychan_show(channel_id); }; });

  auto* c_auth = sub(app, "authsvc", "Key release service");
  c_auth->require_subcommand(1);
  std::string listen = "127.0.0.1:7700";
  auto* c_serve = sub(*c_auth, "serve", "Serve key requests over TCP until interrupted");
  c_serve->add_option("--listen", listen, "host:port");
  c_serve->callback([&] { run = [&] { return cmd_serve(listen); }; });

  sub(app, "status", "Workspace summary and state hashes")->callback([&] { run = cmd_status; });
  sub(app, "replay", "Rebuild state from disk and print state hashes")->callback([&] { run = cmd_replay; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run ? run() : 2;
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    if (g.json)
      std::cerr << ojson{{"error", error_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    else
      std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
