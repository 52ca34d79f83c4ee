#include "workspace.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace roadledger::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json read_json(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, file.string() + ": " + e.what());
  }
}

void write_text(const fs::path& file, const std::string& text) {
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, file);
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return {};
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Digest tagged(const Digest& seed, std::string_view tag, std::string_view name = {}) {
  Writer w;
  w.digest(seed).str(tag).str(name);
  return sha256(w.bytes());
}

}  // namespace

Digest UserKeys::feature_seed(const std::string& feature) const {
  return tagged(index_seed, "feature", feature);
}

Workspace::Workspace(fs::path root) : root_(std::move(root)) {}

std::unique_ptr<Workspace> Workspace::init(const fs::path& root, const WorkspaceParams& params) {
  if (fs::exists(root / "workspace.json"))
    throw Error(ErrorCode::kConfig, "workspace already initialised at " + root.string());
  params.network.validate();
  fs::create_directories(root);
  std::unique_ptr<Workspace> ws(new Workspace(root));
  ws->params_ = params;
  ws->tangle_ = std::make_unique<Tangle>();
  ws->store_ = std::make_unique<store::ObjectStore>(root);
  ws->contracts_ = std::make_unique<contracts::ContractState>(
      std::vector<std::pair<Address, contracts::Tokens>>{{ws->treasury().address(), params.supply}});
  ws->save();
  return ws;
}

std::unique_ptr<Workspace> Workspace::open(const fs::path& root) {
  if (!fs::exists(root / "workspace.json"))
    throw Error(ErrorCode::kConfig, "no workspace at " + root.string() + " (run init first)");
  std::unique_ptr<Workspace> ws(new Workspace(root));
  ws->load();
  return ws;
}

void Workspace::load() {
  try {
    auto cfg = read_json(root_ / "workspace.json");
    params_.seed = Digest::from_hex(cfg.at("seed").get<std::string>());
    params_.network.name = cfg.at("network").get<std::string>();
    params_.network.difficulty = cfg.at("difficulty").get<int>();
    params_.network.payload_max = cfg.at("payload_max").get<std::size_t>();
    params_.supply = cfg.at("supply").get<contracts::Tokens>();
    params_.inline_max = cfg.at("inline_max").get<std::size_t>();
    params_.challenge_period = cfg.at("challenge_period").get<std::uint64_t>();

    users_ = read_json(root_ / "users.json").get<std::vector<std::string>>();

    offchain_.clear();
    const auto off = read_json(root_ / "offchain.json");
    for (const auto& el : off.items()) {
      const auto& v = el.value();
      contracts::BalanceProof p;
      p.channel_id = Digest::from_hex(el.key());
      p.cumulative = v.at("cumulative").get<contracts::Tokens>();
      p.seq = v.at("seq").get<std::uint64_t>();
      p.signature = signature_from_hex(v.at("sig").get<std::string>());
      offchain_[el.key()] = p;
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("workspace files: ") + e.what());
  }

  tangle_ = std::make_unique<Tangle>();
  tangle_->load(root_ / "tangle.bin", params_.network.difficulty);
  store_ = std::make_unique<store::ObjectStore>(root_);

  std::vector<std::string> lines;
  std::istringstream log(read_text(root_ / "contracts.log"));
  for (std::string line; std::getline(log, line);)
    if (!line.empty()) lines.push_back(line);
  contracts_ = std::make_unique<contracts::ContractState>(contracts::ContractState::replay(lines));
  pki_ = pol::PkiRegistry::load(root_ / "pki.json");
}

void Workspace::save() const {
  json cfg{{"seed", params_.seed.hex()},
           {"network", params_.network.name},
           {"difficulty", params_.network.difficulty},
           {"payload_max", params_.network.payload_max},
           {"supply", params_.supply},
           {"inline_max", params_.inline_max},
           {"challenge_period", params_.challenge_period}};
  write_text(root_ / "workspace.json", cfg.dump(2) + "\n");
  write_text(root_ / "users.json", json(users_).dump(2) + "\n");

  json off = json::object();
  for (const auto& [id, p] : offchain_)
    off[id] = {{"cumulative", p.cumulative}, {"seq", p.seq}, {"sig", hex(p.signature)}};
  write_text(root_ / "offchain.json", off.dump(2) + "\n");

  tangle_->save(root_ / "tangle.bin");
  std::string log;
  for (const auto& line : contracts_->log()) log += line + "\n";
  write_text(root_ / "contracts.log", log);
  pki_.save(root_ / "pki.json");
}

bool Workspace::has_user(const std::string& name) const {
  return std::find(users_.begin(), users_.end(), name) != users_.end();
}

UserKeys Workspace::derive_user(const std::string& name) const {
  const Digest user_seed = tagged(params_.seed, "user", name);
  return {name, KeyPair::from_seed(tagged(user_seed, "account")), tagged(user_seed, "master"),
          tagged(user_seed, "index")};
}

UserKeys Workspace::user(const std::string& name) const {
  if (!has_user(name)) throw Error(ErrorCode::kUnknownAccount, "no user named " + name);
  return derive_user(name);
}

void Workspace::add_user(const std::string& name) {
  if (has_user(name)) throw Error(ErrorCode::kDuplicateRegistration, "user " + name + " exists");
  users_.push_back(name);
}

Address Workspace::address_of(const std::string& who) const {
  if (has_user(who)) return derive_user(who).account.address();
  if (who.size() == 40) return Address::from_hex(who);
  throw Error(ErrorCode::kUnknownAccount, "no user named " + who);
}

KeyPair Workspace::treasury() const { return KeyPair::from_seed(tagged(params_.seed, "treasury")); }

KeyPair Workspace::ord_key(const std::string& ord_id) const {
  return KeyPair::from_seed(tagged(params_.seed, "ord", ord_id));
}

mam::ChannelState Workspace::channel(const UserKeys& user, ChannelKind kind,
                                     const std::string& feature) {
  const Digest seed = kind == ChannelKind::kIndex ? user.index_seed : user.feature_seed(feature);
  auto ch = mam::create_channel(seed, kind, user.master, feature);
  const auto published = mam::walk_chain(*tangle_, ch.entry_root()).size();
  ch.index = published;
  ch.current_root = mam::root_at(seed, published, kind);
  return ch;
}

std::vector<ChannelRef> Workspace::feature_channels(const UserKeys& user) {
  auto index = mam::create_channel(user.index_seed, ChannelKind::kIndex, user.master);
  return mam::list_channels(*tangle_, index.entry_root(), user.master);
}

std::unique_ptr<authsvc::AuthService> Workspace::auth_service() {
  auto svc = std::make_unique<authsvc::AuthService>(*tangle_, *contracts_);
  if (fs::exists(root_ / "registrations.json")) svc->load_registrations(root_ / "registrations.json");
  return svc;
}

void Workspace::add_registration(const authsvc::UserRegistration& reg) {
  auto svc = auth_service();
  svc->register_user(reg);
  svc->save_registrations(root_ / "registrations.json");
}

Digest Workspace::state_hash() {
  Sha256 h;
  h.update(tangle_->state_hash());
  h.update(contracts_->state_hash());
  for (const char* f : {"workspace.json", "users.json", "offchain.json", "pki.json",
                        "registrations.json", "contracts.log"}) {
    h.update(std::string_view(f));
    h.update(std::string_view(read_text(root_ / f)));
  }
  std::vector<std::string> objects;
  if (fs::exists(root_ / "objects"))
    for (const auto& e : fs::directory_iterator(root_ / "objects"))
      objects.push_back(e.path().filename().string());
  std::sort(objects.begin(), objects.end());
  for (const auto& o : objects) h.update(std::string_view(o));
  return h.finish();
}

fs::path workspace_path(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ROADLEDGER_WORKSPACE"); env && *env) return env;
  return "workspace";
}

}  // namespace roadledger::cli
