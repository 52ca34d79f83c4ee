#include "roadledger/ledger.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include "roadledger/crypto.hpp"
#include "roadledger/rng.hpp"

namespace roadledger {

namespace {

constexpr std::string_view kSnapshotMagic = "RLTANGLE1";

}  // namespace

NetworkConfig NetworkConfig::named(std::string_view name) {
  if (name == "mainnet") return mainnet();
  if (name == "devnet") return devnet();
  if (name == "desk") return desk();
  throw Error(ErrorCode::kConfig, "unknown network '" + std::string(name) + "'");
}

void NetworkConfig::validate() const {
  if (difficulty < 0 || difficulty > 32)
    throw Error(ErrorCode::kConfig, "difficulty must be within 0..32");
  if (payload_max == 0) throw Error(ErrorCode::kConfig, "payload_max must be positive");
}

Bytes Transaction::body_bytes() const {
  Writer w;
  w.digest(trunk)
      .digest(branch)
      .blob(payload)
      .u64(timestamp)
      .digest(bundle_hash)
      .u32(bundle_index)
      .u32(bundle_len)
      .u64(nonce);
  return w.take();
}

Digest Transaction::compute_hash() const { return sha256(body_bytes()); }

Bytes Transaction::serialize() const {
  Writer w;
  w.digest(hash).raw(body_bytes());
  return w.take();
}

Transaction Transaction::deserialize(ByteView in) {
  Reader r(in);
  Transaction tx;
  tx.hash = r.digest();
  tx.trunk = r.digest();
  tx.branch = r.digest();
  tx.payload = r.blob();
  tx.timestamp = r.u64();
  tx.bundle_hash = r.digest();
  tx.bundle_index = r.u32();
  tx.bundle_len = r.u32();
  tx.nonce = r.u64();
  r.expect_done();
  return tx;
}

PowResult do_pow(const Transaction& draft, int difficulty) {
  if (difficulty < 0 || difficulty > 32)
    throw Error(ErrorCode::kInvalidArgument, "difficulty must be within 0..32");
  auto body = draft.body_bytes();
  // Everything but the trailing 8-byte nonce is hashed once.
  Sha256 prefix;
  prefix.update(ByteView(body).first(body.size() - 8));
  PowResult result;
  for (std::uint64_t nonce = 0;; ++nonce) {
    ++result.attempts;
    Sha256 h = prefix;
    if (trailing_zero_bits(h.update_u64(nonce).finish()) >= difficulty) {
      result.nonce = nonce;
      return result;
    }
  }
}

bool verify_pow(const Transaction& tx, int difficulty) {
  auto h = tx.compute_hash();
  return h == tx.hash && trailing_zero_bits(h) >= difficulty;
}

Transaction make_genesis() {
  Transaction g;
  g.bundle_len = 1;
  g.hash = g.compute_hash();
  return g;
}

Tangle::Tangle() {
  auto g = make_genesis();
  genesis_ = g.hash;
  order_.push_back(g.hash);
  tips_.insert(g.hash);
  txs_.emplace(g.hash, std::move(g));
}

std::size_t Tangle::size() const {
  std::lock_guard lock(mu_);
  return txs_.size();
}

bool Tangle::contains(const Digest& hash) const {
  std::lock_guard lock(mu_);
  return txs_.contains(hash);
}

std::optional<Transaction> Tangle::get(const Digest& hash) const {
  std::lock_guard lock(mu_);
  auto it = txs_.find(hash);
  if (it == txs_.end()) return std::nullopt;
  return it->second;
}

std::vector<Digest> Tangle::tips() const {
  std::lock_guard lock(mu_);
  return {tips_.begin(), tips_.end()};
}

std::pair<Digest, Digest> Tangle::select_tips(std::uint64_t rng_seed) const {
  std::lock_guard lock(mu_);
  return select_tips_locked(rng_seed);
}

std::pair<Digest, Digest> Tangle::select_tips_locked(std::uint64_t rng_seed) const {
  const std::vector<Digest> tips(tips_.begin(), tips_.end());
  if (tips.size() == 1) return {tips[0], tips[0]};
  Rng rng(rng_seed);
  auto first = uniform_below(rng, tips.size());
  auto second = uniform_below(rng, tips.size() - 1);
  if (second >= first) ++second;
  return {tips[first], tips[second]};
}

void Tangle::insert_locked(Transaction tx) {
  tips_.erase(tx.trunk);
  tips_.erase(tx.branch);
  tips_.insert(tx.hash);
  order_.push_back(tx.hash);
  bundles_[tx.bundle_hash].push_back(tx.hash);
  txs_.emplace(tx.hash, std::move(tx));
}

Bundle Tangle::attach(const std::vector<Bytes>& payloads, const NetworkConfig& config,
                      std::uint64_t rng_seed, std::optional<Digest> address) {
  config.validate();
  if (payloads.empty()) throw Error(ErrorCode::kInvalidArgument, "no payloads to attach");
  for (const auto& p : payloads) {
    if (p.size() > config.payload_max)
      throw Error(ErrorCode::kPayloadTooLarge,
                  std::to_string(p.size()) + " > " + std::to_string(config.payload_max));
  }

  std::lock_guard lock(mu_);
  const auto [trunk_tip, branch_tip] = select_tips_locked(rng_seed);

  Sha256 bh;
  bh.update("bundle").update_u64(rng_seed).update_u64(txs_.size());
  for (const auto& p : payloads) bh.update_u64(p.size()).update(p);
  const Digest bundle_hash = bh.finish();

  const auto n = static_cast<std::uint32_t>(payloads.size());
  Bundle bundle(n);
  for (std::uint32_t i = n; i-- > 0;) {
    Transaction& tx = bundle[i];
    tx.trunk = (i + 1 == n) ? trunk_tip : bundle[i + 1].hash;
    tx.branch = branch_tip;
    tx.payload = payloads[i];
    tx.timestamp = txs_.size();
    tx.bundle_hash = bundle_hash;
    tx.bundle_index = i;
    tx.bundle_len = n;
    tx.nonce = do_pow(tx, config.difficulty).nonce;
    tx.hash = tx.compute_hash();
  }
  for (std::uint32_t i = n; i-- > 0;) insert_locked(bundle[i]);
  if (address) {
    by_address_[*address].push_back(bundle_hash);
    address_log_.emplace_back(bundle_hash, *address);
  }
  return bundle;
}

std::vector<Bundle> Tangle::find_by_address(const Digest& address) const {
  std::vector<Digest> hashes;
  {
    std::lock_guard lock(mu_);
    auto it = by_address_.find(address);
    if (it == by_address_.end()) return {};
    hashes = it->second;
  }
  std::vector<Bundle> out;
  for (const auto& h : hashes) out.push_back(bundle(h));
  return out;
}

Bundle Tangle::bundle(const Digest& bundle_hash) const {
  std::lock_guard lock(mu_);
  Bundle out;
  auto it = bundles_.find(bundle_hash);
  if (it == bundles_.end()) return out;
  for (const auto& h : it->second) {
    if (h != genesis_) out.push_back(txs_.at(h));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.bundle_index < b.bundle_index; });
  return out;
}

std::vector<Transaction> Tangle::transactions() const {
  std::lock_guard lock(mu_);
  std::vector<Transaction> out;
  out.reserve(order_.size());
  for (const auto& h : order_) out.push_back(txs_.at(h));
  return out;
}

Bytes Tangle::snapshot_bytes() const {
  std::lock_guard lock(mu_);
  Writer w;
  w.raw(as_view(kSnapshotMagic));
  w.u32(static_cast<std::uint32_t>(order_.size() - 1));
  for (std::size_t i = 1; i < order_.size(); ++i) w.blob(txs_.at(order_[i]).serialize());
  w.u32(static_cast<std::uint32_t>(address_log_.size()));
  for (const auto& [bundle_hash, address] : address_log_) w.digest(bundle_hash).digest(address);
  return w.take();
}

Digest Tangle::state_hash() const { return sha256(snapshot_bytes()); }

void Tangle::save(const std::filesystem::path& file) const {
  auto bytes = snapshot_bytes();
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, file);
}

void Tangle::load(const std::filesystem::path& file, int difficulty) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + file.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  load_bytes(bytes, difficulty);
}

void Tangle::load_bytes(ByteView snapshot, int difficulty) {
  Reader r(snapshot);
  if (to_string(r.raw(kSnapshotMagic.size())) != kSnapshotMagic)
    throw Error(ErrorCode::kMalformed, "not a tangle snapshot");

  std::lock_guard lock(mu_);
  auto count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    auto tx = Transaction::deserialize(r.blob_view());
    if (!verify_pow(tx, difficulty))
      throw Error(ErrorCode::kLedgerError, "snapshot tx fails PoW: " + tx.hash.hex());
    if (!txs_.contains(tx.trunk) || !txs_.contains(tx.branch))
      throw Error(ErrorCode::kLedgerError, "snapshot tx references unknown parent");
    if (txs_.contains(tx.hash)) continue;
    insert_locked(std::move(tx));
  }
  auto n_addr = r.u32();
  for (std::uint32_t i = 0; i < n_addr; ++i) {
    auto bundle_hash = r.digest();
    auto address = r.digest();
    by_address_[address].push_back(bundle_hash);
    address_log_.emplace_back(bundle_hash, address);
  }
  r.expect_done();
}

}  // namespace roadledger
