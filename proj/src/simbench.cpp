#include "roadledger/simbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "roadledger/mam.hpp"

namespace roadledger::simbench {

using json = nlohmann::json;

extern const char* const kShippedCalibration;

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

LogNormal lognormal_from(const json& j) {
  LogNormal l;
  l.mean_ms = j.at("mean_ms").get<double>();
  l.sigma = j.value("sigma", 0.0);
  return l;
}

}  // namespace

double LogNormal::mu() const { return std::log(mean_ms) - sigma * sigma / 2; }

double LogNormal::sample(Rng& rng) const {
  const double z = standard_normal(rng);
  if (mean_ms <= 0) return 0;
  return std::exp(mu() + sigma * z);
}

void NodeProfile::validate() const {
  if (!(pow_rate > 0)) throw Error(ErrorCode::kConfig, name + ": pow_rate must be > 0");
  if (!(availability > 0 && availability <= 1))
    throw Error(ErrorCode::kConfig, name + ": availability must be in (0, 1]");
  if (tip_latency.mean_ms < 0 || tip_latency.sigma < 0)
    throw Error(ErrorCode::kConfig, name + ": bad tip latency");
  if (rate_limit && (rate_limit->max_mam_messages == 0 || !(rate_limit->window_s > 0)))
    throw Error(ErrorCode::kConfig, name + ": bad rate limit");
}

void ClientProfile::validate() const {
  if (!(mam_overhead_ms > 0)) throw Error(ErrorCode::kConfig, name + ": mam_overhead_ms must be > 0");
  if (network_rtt.mean_ms < 0 || network_rtt.sigma < 0)
    throw Error(ErrorCode::kConfig, name + ": bad network rtt");
}

void Scenario::validate() const {
  client.validate();
  provider.validate();
  network.validate();
  if (n_messages == 0) throw Error(ErrorCode::kConfig, name + ": n_messages must be > 0");
  if (send_rate < 0) throw Error(ErrorCode::kConfig, name + ": send_rate must be >= 0");
}

std::string_view outcome_name(Outcome o) {
  switch (o) {
    case Outcome::kAccepted: return "accepted";
    case Outcome::kRateLimited: return "rejected:rate-limit";
    case Outcome::kBlacklisted: return "rejected:blacklisted";
    case Outcome::kUnavailable: return "rejected:unavailable";
  }
  return "unknown";
}

std::vector<LatencyRecord> run_scenario(const Scenario& s) {
  s.validate();
  Rng rng(s.rng_seed);
  const double p = std::ldexp(1.0, -s.network.difficulty);
  std::deque<double> window;  // arrival times at the provider
  double blacklisted_until = -1;
  double clock = 0;
  std::vector<LatencyRecord> out;
  out.reserve(s.n_messages);

  for (std::uint32_t i = 0; i < s.n_messages; ++i) {
    // Every draw happens for every message so paired seeds stay aligned
    // across profiles.
    const double tips = s.provider.tip_latency.sample(rng);
    const bool available = uniform_open01(rng) <= s.provider.availability;
    std::uint64_t attempts = 0;
    for (std::uint32_t t = 0; t < mam::kBundleLen; ++t) attempts += geometric_trials(rng, p);
    const double net = s.client.network_rtt.sample(rng);

    const double send = s.send_rate > 0 ? i * 1000.0 / s.send_rate : clock;
    LatencyRecord r;
    r.msg_index = i;
    r.bundle_ms = s.client.mam_overhead_ms;
    r.net_ms = net;
    const double arrival = send + r.bundle_ms;

    if (const auto& rl = s.provider.rate_limit) {
      while (!window.empty() && window.front() <= arrival - rl->window_s * 1000) window.pop_front();
      if (arrival < blacklisted_until) {
        r.outcome = Outcome::kBlacklisted;
      } else {
        window.push_back(arrival);
        if (window.size() > rl->max_mam_messages) {
          r.outcome = Outcome::kRateLimited;
          blacklisted_until = arrival + rl->blacklist_s * 1000;
        }
      }
    }
    if (r.outcome == Outcome::kAccepted && !available) r.outcome = Outcome::kUnavailable;
    if (r.accepted()) {
      r.tips_ms = tips;
      r.pow_ms = s.network.difficulty == 0 ? 0 : static_cast<double>(attempts) / s.provider.pow_rate * 1000;
    }
    r.total_ms = r.bundle_ms + r.tips_ms + r.pow_ms + r.net_ms;
    clock = send + r.total_ms;
    out.push_back(r);
  }
  return out;
}

const LatencyStats& Summary::stats() const {
  if (!latency) throw Error(ErrorCode::kEmptyInput, "no accepted records");
  return *latency;
}

Summary summarize(const std::vector<LatencyRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kEmptyInput, "no records");
  Summary s;
  s.total = records.size();
  std::vector<double> totals, bundle, tips, pow, net;
  for (const auto& r : records) {
    if (!r.accepted()) continue;
    totals.push_back(r.total_ms);
    bundle.push_back(r.bundle_ms);
    tips.push_back(r.tips_ms);
    pow.push_back(r.pow_ms);
    net.push_back(r.net_ms);
  }
  s.accepted = totals.size();
  s.acceptance_rate = static_cast<double>(s.accepted) / static_cast<double>(s.total);
  if (totals.empty()) return s;

  LatencyStats st;
  st.mean_ms = mean_of(totals);
  std::sort(totals.begin(), totals.end());
  const std::size_t n = totals.size();
  st.median_ms = n % 2 ? totals[n / 2] : (totals[n / 2 - 1] + totals[n / 2]) / 2;
  // Nearest-rank percentile.
  const auto rank = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(n)));
  st.p95_ms = totals[std::max<std::size_t>(rank, 1) - 1];
  st.phases = {mean_of(bundle), mean_of(tips), mean_of(pow), mean_of(net)};
  s.latency = st;
  return s;
}

std::optional<std::uint32_t> first_with(const std::vector<LatencyRecord>& records, Outcome o) {
  for (const auto& r : records)
    if (r.outcome == o) return r.msg_index + 1;
  return std::nullopt;
}

std::string Histogram::to_csv() const {
  std::string out = "bin_start_ms,count\n";
  for (std::size_t k = 0; k < counts.size(); ++k)
    out += fmt(static_cast<double>(k) * bin_width_ms) + "," + std::to_string(counts[k]) + "\n";
  return out;
}

Histogram histogram(const std::vector<LatencyRecord>& records, double bin_width_ms) {
  if (!(bin_width_ms > 0)) throw Error(ErrorCode::kInvalidArgument, "bin width must be > 0");
  Histogram h{bin_width_ms, {}};
  for (const auto& r : records) {
    if (!r.accepted()) continue;
    const auto bin = static_cast<std::size_t>(std::floor(r.total_ms / bin_width_ms));
    if (bin >= h.counts.size()) h.counts.resize(bin + 1, 0);
    ++h.counts[bin];
  }
  return h;
}

std::vector<ScenarioResult> compare_scenarios(const std::vector<Scenario>& scenarios,
                                              double bin_width_ms) {
  if (scenarios.size() < 2) throw Error(ErrorCode::kInvalidArgument, "need at least two scenarios");
  std::vector<ScenarioResult> out;
  for (const auto& s : scenarios) {
    auto records = run_scenario(s);
    auto summary = summarize(records);
    auto h = histogram(records, bin_width_ms);
    out.push_back({s, std::move(records), std::move(summary), std::move(h)});
  }
  return out;
}

std::string records_csv(const std::vector<LatencyRecord>& records) {
  std::string out = "msg_index,bundle_ms,tips_ms,pow_ms,net_ms,total_ms,outcome\n";
  for (const auto& r : records) {
    out += std::to_string(r.msg_index) + "," + fmt(r.bundle_ms) + "," + fmt(r.tips_ms) + "," +
           fmt(r.pow_ms) + "," + fmt(r.net_ms) + "," + fmt(r.total_ms) + "," +
           std::string(outcome_name(r.outcome)) + "\n";
  }
  return out;
}

std::string comparison_csv(const std::vector<ScenarioResult>& results) {
  std::string out =
      "scenario,messages,accepted,acceptance_rate,mean_ms,median_ms,p95_ms,bundle_ms,tips_ms,"
      "pow_ms,net_ms\n";
  for (const auto& r : results) {
    const auto& s = r.summary;
    out += r.scenario.name + "," + std::to_string(s.total) + "," + std::to_string(s.accepted) +
           "," + fmt(s.acceptance_rate);
    if (s.latency) {
      const auto& l = *s.latency;
      for (double v : {l.mean_ms, l.median_ms, l.p95_ms, l.phases.bundle_ms, l.phases.tips_ms,
                       l.phases.pow_ms, l.phases.net_ms})
        out += "," + fmt(v);
    } else {
      out += ",,,,,,,";
    }
    out += "\n";
  }
  return out;
}

Calibration Calibration::parse(const std::string& text) {
  try {
    const auto j = json::parse(text);
    Calibration c;
    for (const auto& el : j.at("networks").items()) {
      NetworkConfig n;
      n.name = el.key();
      n.difficulty = el.value().at("difficulty").get<int>();
      n.payload_max = el.value().value("payload_max", std::size_t{1024});
      n.validate();
      c.networks[el.key()] = n;
    }
    for (const auto& el : j.at("nodes").items()) {
      const auto& v = el.value();
      NodeProfile p;
      p.name = el.key();
      p.tip_latency = lognormal_from(v.at("tip_latency"));
      p.pow_rate = v.at("pow_rate").get<double>();
      p.availability = v.value("availability", 1.0);
      if (v.contains("rate_limit") && !v.at("rate_limit").is_null()) {
        const auto& rl = v.at("rate_limit");
        RateLimit r;
        r.max_mam_messages = rl.at("max_mam_messages").get<std::uint32_t>();
        r.window_s = rl.at("window_s").get<double>();
        r.blacklist_s = rl.value("blacklist_s", r.blacklist_s);
        p.rate_limit = r;
      }
      p.validate();
      c.nodes[el.key()] = p;
    }
    for (const auto& el : j.at("clients").items()) {
      ClientProfile p;
      p.name = el.key();
      p.mam_overhead_ms = el.value().at("mam_overhead_ms").get<double>();
      p.network_rtt = lognormal_from(el.value().at("network_rtt"));
      p.validate();
      c.clients[el.key()] = p;
    }
    auto pick = [](const auto& map, const std::string& key, const char* what) {
      auto it = map.find(key);
      if (it == map.end()) throw Error(ErrorCode::kConfig, std::string("unknown ") + what + " " + key);
      return it->second;
    };
    for (const auto& v : j.value("scenarios", json::array())) {
      Scenario s;
      s.name = v.at("name").get<std::string>();
      s.client = pick(c.clients, v.at("client").get<std::string>(), "client");
      s.provider = pick(c.nodes, v.at("provider").get<std::string>(), "provider");
      s.network = pick(c.networks, v.at("network").get<std::string>(), "network");
      s.n_messages = v.value("n_messages", 100u);
      s.send_rate = v.value("send_rate", 0.0);
      s.rng_seed = v.value("seed", std::uint64_t{1});
      s.validate();
      c.scenarios.push_back(s);
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
}

Calibration Calibration::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Calibration Calibration::shipped() { return parse(kShippedCalibration); }

const Scenario& Calibration::scenario(const std::string& name) const {
  for (const auto& s : scenarios)
    if (s.name == name) return s;
  throw Error(ErrorCode::kConfig, "unknown scenario " + name);
}

}  // namespace roadledger::simbench
