#include "roadledger/pol.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>

#include "json.hpp"

namespace roadledger::pol {

namespace {

constexpr double kMicro = 1e-6;

double to_radians(std::int64_t micro) { return static_cast<double>(micro) * kMicro * std::numbers::pi / 180.0; }

std::int64_t to_micro(double radians) {
  return std::llround(radians * 180.0 / std::numbers::pi / kMicro);
}

void write_cell(Writer& w, const CellId& c) { w.i64(c.i).i64(c.j); }
CellId read_cell(Reader& r) {
  CellId c;
  c.i = r.i64();
  c.j = r.i64();
  return c;
}

}  // namespace

Position Position::from_degrees(double lat, double lon) {
  return {std::llround(lat / kMicro), std::llround(lon / kMicro)};
}

std::pair<double, double> project(const Position& origin, const Position& p) {
  const double lat0 = to_radians(origin.lat);
  const double east = kEarthRadiusM * to_radians(p.lon - origin.lon) * std::cos(lat0);
  const double north = kEarthRadiusM * to_radians(p.lat - origin.lat);
  return {east, north};
}

Position offset(const Position& origin, double east_m, double north_m) {
  const double lat0 = to_radians(origin.lat);
  return {origin.lat + to_micro(north_m / kEarthRadiusM),
          origin.lon + to_micro(east_m / (kEarthRadiusM * std::cos(lat0)))};
}

Bytes LocationCertificate::signed_bytes() const {
  Writer w;
  w.str("loccert").str(ord_id).i64(ord_position.lat).i64(ord_position.lon);
  w.u32(range_m).u64(timestamp).raw(prover.view());
  return w.take();
}

Bytes LocationCertificate::serialize() const {
  Writer w;
  w.raw(signed_bytes()).raw(signature);
  return w.take();
}

LocationCertificate LocationCertificate::deserialize(ByteView bytes) {
  Reader r(bytes);
  if (r.str() != "loccert") throw Error(ErrorCode::kMalformed, "not a location certificate");
  LocationCertificate c;
  c.ord_id = r.str();
  c.ord_position.lat = r.i64();
  c.ord_position.lon = r.i64();
  c.range_m = r.u32();
  c.timestamp = r.u64();
  auto addr = r.raw(20);
  std::copy(addr.begin(), addr.end(), c.prover.bytes.begin());
  auto sig = r.raw(64);
  std::copy(sig.begin(), sig.end(), c.signature.begin());
  r.expect_done();
  return c;
}

PkiRegistry::PkiRegistry(const PkiRegistry& other) {
  std::shared_lock lock(other.mu_);
  devices_ = other.devices_;
}

PkiRegistry& PkiRegistry::operator=(const PkiRegistry& other) {
  if (this == &other) return *this;
  std::map<std::string, PublicKey> copy;
  {
    std::shared_lock lock(other.mu_);
    copy = other.devices_;
  }
  std::unique_lock lock(mu_);
  devices_ = std::move(copy);
  return *this;
}

void PkiRegistry::register_device(const std::string& ord_id, const PublicKey& key) {
  if (ord_id.empty()) throw Error(ErrorCode::kInvalidArgument, "empty device id");
  std::unique_lock lock(mu_);
  auto [it, inserted] = devices_.try_emplace(ord_id, key);
  if (!inserted && it->second != key) throw Error(ErrorCode::kDuplicateRegistration, ord_id);
}

std::optional<PublicKey> PkiRegistry::lookup(const std::string& ord_id) const {
  std::shared_lock lock(mu_);
  auto it = devices_.find(ord_id);
  if (it == devices_.end()) return std::nullopt;
  return it->second;
}

std::size_t PkiRegistry::size() const {
  std::shared_lock lock(mu_);
  return devices_.size();
}

void PkiRegistry::save(const std::filesystem::path& file) const {
  nlohmann::json j = nlohmann::json::object();
  {
    std::shared_lock lock(mu_);
    for (const auto& [id, pk] : devices_) j[id] = hex(pk);
  }
  auto tmp = file;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, file);
}

PkiRegistry PkiRegistry::load(const std::filesystem::path& file) {
  PkiRegistry reg;
  if (!std::filesystem::exists(file)) return reg;
  std::ifstream in(file);
  try {
    const auto doc = nlohmann::json::parse(in);
    for (const auto& el : doc.items())
      reg.register_device(el.key(), public_key_from_hex(el.value().get<std::string>()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformed, file.string() + ": " + e.what());
  }
  return reg;
}

LocationCertificate issue_certificate(const PkiRegistry& registry, const std::string& ord_id,
                                      const KeyPair& ord_key, const Position& ord_position,
                                      std::uint32_t range_m, const Address& prover,
                                      std::uint64_t timestamp) {
  auto registered = registry.lookup(ord_id);
  if (!registered || *registered != ord_key.public_key())
    throw Error(ErrorCode::kUnregisteredDevice, ord_id);
  LocationCertificate c{ord_id, ord_position, range_m, timestamp, prover, {}};
  c.signature = ord_key.sign(c.signed_bytes());
  return c;
}

bool verify_certificate(const PkiRegistry& registry, const LocationCertificate& cert) {
  auto pk = registry.lookup(cert.ord_id);
  if (!pk) throw Error(ErrorCode::kUnknownDevice, cert.ord_id);
  return verify_signature(*pk, cert.signed_bytes(), cert.signature);
}

Digest leaf_hash(const CellId& cell, const Salt& salt) {
  Writer w;
  write_cell(w, cell);
  w.raw(salt);
  return sha256(w.bytes());
}

Digest cell_commitment(const CellId& cell, const Digest& nonce) {
  Writer w;
  write_cell(w, cell);
  w.digest(nonce);
  return sha256(w.bytes());
}

CellId AreaCommitment::cell_of(const Position& p) const {
  auto [east, north] = project(center, p);
  const double c = cell_m;
  return {static_cast<std::int64_t>(std::floor(east / c + 0.5)),
          static_cast<std::int64_t>(std::floor(north / c + 0.5))};
}

bool AreaCommitment::contains_cell(const CellId& cell) const {
  const __int128 i = cell.i, j = cell.j, c = cell_m, r = radius_m;
  return (i * i + j * j) * c * c <= r * r;
}

std::vector<CellId> AreaCommitment::cells() const {
  const std::int64_t k = radius_m / cell_m;
  std::vector<CellId> out;
  for (std::int64_t i = -k; i <= k; ++i)
    for (std::int64_t j = -k; j <= k; ++j)
      if (contains_cell({i, j})) out.push_back({i, j});
  return out;
}

Bytes AreaCommitment::serialize() const {
  Writer w;
  w.str("area").i64(center.lat).i64(center.lon).u32(radius_m).u32(cell_m);
  w.raw(epoch_salt).digest(merkle_root);
  return w.take();
}

AreaCommitment AreaCommitment::deserialize(ByteView bytes) {
  Reader r(bytes);
  if (r.str() != "area") throw Error(ErrorCode::kMalformed, "not an area commitment");
  Position center;
  center.lat = r.i64();
  center.lon = r.i64();
  const auto radius = r.u32();
  const auto cell = r.u32();
  Salt salt;
  auto s = r.raw(salt.size());
  std::copy(s.begin(), s.end(), salt.begin());
  const auto root = r.digest();
  r.expect_done();
  auto area = build_area(center, radius, cell, salt);
  if (area.merkle_root != root)
    throw Error(ErrorCode::kIntegrityFailure, "area root does not match its public fields");
  return area;
}

AreaCommitment build_area(const Position& center, std::uint32_t radius_m, std::uint32_t cell_m,
                          const Salt& epoch_salt) {
  if (radius_m == 0 || cell_m == 0)
    throw Error(ErrorCode::kInvalidArgument, "radius and cell size must be positive");
  AreaCommitment a{center, radius_m, cell_m, epoch_salt, {}, {}};

  // Count row by row before materialising anything.
  const std::int64_t k = radius_m / cell_m;
  if (2 * k + 1 > static_cast<std::int64_t>(kMaxCells))
    throw Error(ErrorCode::kAreaTooLarge, "more than 10^6 cells");
  std::size_t count = 0;
  for (std::int64_t i = -k; i <= k; ++i) {
    std::int64_t j = static_cast<std::int64_t>(
        std::sqrt(std::max(0.0, std::pow(double(radius_m) / cell_m, 2) - double(i) * i)));
    while (j > 0 && !a.contains_cell({i, j})) --j;
    while (a.contains_cell({i, j + 1})) ++j;
    if (a.contains_cell({i, j})) count += static_cast<std::size_t>(2 * j + 1);
    if (count > kMaxCells) throw Error(ErrorCode::kAreaTooLarge, "more than 10^6 cells");
  }

  for (const auto& cell : a.cells()) a.leaves.push_back(leaf_hash(cell, epoch_salt));
  std::sort(a.leaves.begin(), a.leaves.end());
  a.merkle_root = merkle_root(a.leaves);
  return a;
}

namespace {

Digest hash_pair(const Digest& l, const Digest& r) { return Sha256().update(l).update(r).finish(); }

std::vector<Digest> next_level(const std::vector<Digest>& level) {
  std::vector<Digest> up;
  up.reserve((level.size() + 1) / 2);
  for (std::size_t i = 0; i + 1 < level.size(); i += 2) up.push_back(hash_pair(level[i], level[i + 1]));
  if (level.size() % 2 == 1) up.push_back(level.back());
  return up;
}

}  // namespace

Digest merkle_root(const std::vector<Digest>& sorted_leaves) {
  if (sorted_leaves.empty()) return Digest{};
  auto level = sorted_leaves;
  while (level.size() > 1) level = next_level(level);
  return level.front();
}

std::vector<PathStep> merkle_path(const std::vector<Digest>& sorted_leaves, std::size_t index) {
  if (index >= sorted_leaves.size()) throw Error(ErrorCode::kInvalidArgument, "leaf index");
  std::vector<PathStep> path;
  auto level = sorted_leaves;
  while (level.size() > 1) {
    if (index % 2 == 1) {
      path.push_back({level[index - 1], true});
    } else if (index + 1 < level.size()) {
      path.push_back({level[index + 1], false});
    }
    level = next_level(level);
    index /= 2;
  }
  return path;
}

Digest fold_path(const Digest& leaf, const std::vector<PathStep>& path) {
  Digest h = leaf;
  for (const auto& step : path) h = step.sibling_on_left ? hash_pair(step.sibling, h) : hash_pair(h, step.sibling);
  return h;
}

Bytes ZkPolProof::public_bytes() const {
  Writer w;
  w.digest(commitment).digest(leaf).u32(static_cast<std::uint32_t>(path.size()));
  for (const auto& s : path) w.digest(s.sibling).u8(s.sibling_on_left ? 1 : 0);
  return w.take();
}

Bytes ZkPolProof::serialize() const {
  Writer w;
  w.blob(public_bytes());
  write_cell(w, opening.cell);
  w.digest(opening.nonce);
  return w.take();
}

ZkPolProof ZkPolProof::deserialize(ByteView bytes) {
  Reader outer(bytes);
  auto pub = outer.blob();
  ZkPolProof p;
  p.opening.cell = read_cell(outer);
  p.opening.nonce = outer.digest();
  outer.expect_done();

  Reader r(pub);
  p.commitment = r.digest();
  p.leaf = r.digest();
  const auto n = r.u32();
  if (n > 64) throw Error(ErrorCode::kMalformed, "merkle path too long");
  for (std::uint32_t i = 0; i < n; ++i) {
    PathStep s;
    s.sibling = r.digest();
    const auto dir = r.u8();
    if (dir > 1) throw Error(ErrorCode::kMalformed, "bad direction bit");
    s.sibling_on_left = dir == 1;
    p.path.push_back(s);
  }
  r.expect_done();
  return p;
}

ZkPolProof prove_in_area(const Position& position, const AreaCommitment& area) {
  return prove_in_area(position, area, random_digest());
}

ZkPolProof prove_in_area(const Position& position, const AreaCommitment& area,
                         const Digest& nonce) {
  const auto cell = area.cell_of(position);
  if (!area.contains_cell(cell)) throw Error(ErrorCode::kOutsideArea, "position is outside the area");
  const auto leaf = leaf_hash(cell, area.epoch_salt);
  auto it = std::lower_bound(area.leaves.begin(), area.leaves.end(), leaf);
  if (it == area.leaves.end() || *it != leaf)
    throw Error(ErrorCode::kOutsideArea, "cell missing from the area's leaf set");
  const auto index = static_cast<std::size_t>(it - area.leaves.begin());
  return {cell_commitment(cell, nonce), leaf, merkle_path(area.leaves, index), {cell, nonce}};
}

bool verify_in_area(const ZkPolProof& proof, const AreaCommitment& area) {
  return fold_path(proof.leaf, proof.path) == area.merkle_root &&
         leaf_hash(proof.opening.cell, area.epoch_salt) == proof.leaf &&
         cell_commitment(proof.opening.cell, proof.opening.nonce) == proof.commitment;
}

}  // namespace roadledger::pol
