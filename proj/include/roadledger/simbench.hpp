#pragma once

// Seeded discrete-event model of clients attaching MAM messages through
// full-node providers. Time is a logical millisecond counter; PoW is
// sampled, not computed.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "roadledger/ledger.hpp"
#include "roadledger/rng.hpp"

namespace roadledger::simbench {

/// Lognormal parameterised by its mean; mean 0 is a point mass at 0.
struct LogNormal {
  double mean_ms = 0;
  double sigma = 0;

  double mu() const;
  /// Always consumes exactly one normal draw.
  double sample(Rng& rng) const;
};

struct RateLimit {
  std::uint32_t max_mam_messages = 30;
  double window_s = 120;
  double blacklist_s = 3600;
};

struct NodeProfile {
  std::string name;
  LogNormal tip_latency;
  double pow_rate = 1;  // attempts per second
  std::optional<RateLimit> rate_limit;
  double availability = 1;

  void validate() const;
};

struct ClientProfile {
  std::string name;
  double mam_overhead_ms = 1;
  LogNormal network_rtt;

  void validate() const;
};

struct Scenario {
  std::string name;
  ClientProfile client;
  NodeProfile provider;
  NetworkConfig network;
  std::uint32_t n_messages = 100;
  double send_rate = 0;  // messages/s; 0 sends each after the previous completes
  std::uint64_t rng_seed = 1;

  void validate() const;
};

enum class Outcome { kAccepted, kRateLimited, kBlacklisted, kUnavailable };
std::string_view outcome_name(Outcome o);

struct LatencyRecord {
  std::uint32_t msg_index = 0;
  double bundle_ms = 0;
  double tips_ms = 0;
  double pow_ms = 0;
  double net_ms = 0;
  double total_ms = 0;
  Outcome outcome = Outcome::kAccepted;

  bool accepted() const { return outcome == Outcome::kAccepted; }
  bool operator==(const LatencyRecord&) const = default;
};

std::vector<LatencyRecord> run_scenario(const Scenario& scenario);

struct PhaseMeans {
  double bundle_ms = 0;
  double tips_ms = 0;
  double pow_ms = 0;
  double net_ms = 0;
};

struct LatencyStats {
  double mean_ms = 0;
  double median_ms = 0;
  double p95_ms = 0;
  PhaseMeans phases;
};

struct Summary {
  std::size_t total = 0;
  std::size_t accepted = 0;
  double acceptance_rate = 0;
  std::optional<LatencyStats> latency;

  /// Throws EmptyInput when nothing was accepted.
  const LatencyStats& stats() const;
};

Summary summarize(const std::vector<LatencyRecord>& records);

/// 1-based index of the first record with the given outcome.
std::optional<std::uint32_t> first_with(const std::vector<LatencyRecord>& records, Outcome o);

struct Histogram {
  double bin_width_ms = 0;
  std::vector<std::uint64_t> counts;  // bin k covers [k*w, (k+1)*w)

  std::string to_csv() const;
};

/// Over accepted records only.
Histogram histogram(const std::vector<LatencyRecord>& records, double bin_width_ms);

struct ScenarioResult {
  Scenario scenario;
  std::vector<LatencyRecord> records;
  Summary summary;
  Histogram histogram;
};

std::vector<ScenarioResult> compare_scenarios(const std::vector<Scenario>& scenarios,
                                              double bin_width_ms = 500);

std::string records_csv(const std::vector<LatencyRecord>& records);
std::string comparison_csv(const std::vector<ScenarioResult>& results);

/// Named profiles and scenarios loaded from a JSON document.
struct Calibration {
  std::map<std::string, NetworkConfig> networks;
  std::map<std::string, NodeProfile> nodes;
  std::map<std::string, ClientProfile> clients;
  std::vector<Scenario> scenarios;

  static Calibration parse(const std::string& json_text);
  static Calibration load(const std::string& path);
  /// The calibration compiled into the library.
  static Calibration shipped();

  const Scenario& scenario(const std::string& name) const;
};

}  // namespace roadledger::simbench
