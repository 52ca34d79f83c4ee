#pragma once

// Proof of location. Two mechanisms:
//  * proximity certificates signed by registered on-road devices (ORDs);
//  * in-area proofs: the service area is a salted Merkle set of grid cells,
//    the prover shows membership of its cell and opens a commitment to the
//    cell to the designated verifier only. Privacy is cell granularity; no
//    zero-knowledge machinery beyond that.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "roadledger/crypto.hpp"
#include "roadledger/payload.hpp"

namespace roadledger::pol {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr std::size_t kMaxCells = 1000000;
inline constexpr std::uint32_t kDefaultCellM = 100;

/// Coordinates in microdegrees.
struct Position {
  std::int64_t lat = 0;
  std::int64_t lon = 0;

  static Position from_degrees(double lat, double lon);
  auto operator<=>(const Position&) const = default;
};

/// Point `east_m`/`north_m` meters away from `origin` in the local projection.
Position offset(const Position& origin, double east_m, double north_m);
/// Local equirectangular (east, north) meters of `p` relative to `origin`.
std::pair<double, double> project(const Position& origin, const Position& p);

using Salt = std::array<std::uint8_t, 16>;

struct LocationCertificate {
  std::string ord_id;
  Position ord_position;
  std::uint32_t range_m = 0;
  std::uint64_t timestamp = 0;
  Address prover;
  Signature signature{};

  Bytes signed_bytes() const;
  Bytes serialize() const;
  static LocationCertificate deserialize(ByteView bytes);
  Payload to_payload() const { return Payload{CertificateBlob{serialize()}}; }
  bool operator==(const LocationCertificate&) const = default;
};

/// Append-only device id -> public key map.
class PkiRegistry {
 public:
  /// Re-registering an id with the same key is a no-op; another key is
  /// DuplicateRegistration.
  void register_device(const std::string& ord_id, const PublicKey& key);
  std::optional<PublicKey> lookup(const std::string& ord_id) const;
  std::size_t size() const;

  void save(const std::filesystem::path& file) const;
  static PkiRegistry load(const std::filesystem::path& file);

  PkiRegistry() = default;
  PkiRegistry(const PkiRegistry& other);
  PkiRegistry& operator=(const PkiRegistry& other);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::string, PublicKey> devices_;
};

LocationCertificate issue_certificate(const PkiRegistry& registry, const std::string& ord_id,
                                      const KeyPair& ord_key, const Position& ord_position,
                                      std::uint32_t range_m, const Address& prover,
                                      std::uint64_t timestamp);

/// Throws UnknownDevice for an unregistered id.
bool verify_certificate(const PkiRegistry& registry, const LocationCertificate& cert);

/// Grid cell indices; cell (0, 0) is centered on the area center.
struct CellId {
  std::int64_t i = 0;
  std::int64_t j = 0;
  auto operator<=>(const CellId&) const = default;
};

Digest leaf_hash(const CellId& cell, const Salt& salt);
Digest cell_commitment(const CellId& cell, const Digest& nonce);

struct AreaCommitment {
  Position center;
  std::uint32_t radius_m = 0;
  std::uint32_t cell_m = kDefaultCellM;
  Salt epoch_salt{};
  Digest merkle_root;
  /// Sorted leaf set, recomputable from the fields above.
  std::vector<Digest> leaves;

  CellId cell_of(const Position& p) const;
  bool contains_cell(const CellId& cell) const;
  /// Every in-radius cell, by brute-force enumeration of the bounding box.
  std::vector<CellId> cells() const;

  Bytes serialize() const;
  static AreaCommitment deserialize(ByteView bytes);
};

AreaCommitment build_area(const Position& center, std::uint32_t radius_m, std::uint32_t cell_m,
                          const Salt& epoch_salt);

struct PathStep {
  Digest sibling;
  bool sibling_on_left = false;
  bool operator==(const PathStep&) const = default;
};

Digest merkle_root(const std::vector<Digest>& sorted_leaves);
std::vector<PathStep> merkle_path(const std::vector<Digest>& sorted_leaves, std::size_t index);
Digest fold_path(const Digest& leaf, const std::vector<PathStep>& path);

struct Opening {
  CellId cell;
  Digest nonce;
  bool operator==(const Opening&) const = default;
};

struct ZkPolProof {
  Digest commitment;
  Digest leaf;
  std::vector<PathStep> path;
  Opening opening;

  /// What third parties see: commitment, leaf and path.
  Bytes public_bytes() const;
  Bytes serialize() const;
  static ZkPolProof deserialize(ByteView bytes);
  bool operator==(const ZkPolProof&) const = default;
};

/// Throws OutsideArea if the position's cell is not in the set.
ZkPolProof prove_in_area(const Position& position, const AreaCommitment& area);
ZkPolProof prove_in_area(const Position& position, const AreaCommitment& area,
                         const Digest& nonce);

bool verify_in_area(const ZkPolProof& proof, const AreaCommitment& area);

}  // namespace roadledger::pol
