#include <gtest/gtest.h>

#include <cmath>

#include "roadledger/simbench.hpp"

using namespace roadledger;
using namespace roadledger::simbench;

namespace {

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::kMalformed;
}

LatencyRecord accepted(double total) {
  LatencyRecord r;
  r.bundle_ms = total;
  r.total_ms = total;
  return r;
}

Scenario degenerate() {
  Scenario s;
  s.name = "zero";
  s.client = {"pc", 224, {}};
  s.provider = {"instant", {}, 1000, std::nullopt, 1.0};
  s.network = {"flat", 0, 1024};
  s.n_messages = 20;
  return s;
}

}  // namespace

TEST(Scenario, ZeroLatencyProfilesLeaveOnlyBundleBuild) {
  for (const auto& r : run_scenario(degenerate())) {
    EXPECT_TRUE(r.accepted());
    EXPECT_EQ(r.total_ms, 224.0);
  }
}

TEST(Scenario, SameSeedSameRecordsAndCsv) {
  const auto s = Calibration::shipped().scenario("provider2-mainnet");
  auto a = run_scenario(s);
  auto b = run_scenario(s);
  EXPECT_EQ(a, b);
  EXPECT_EQ(records_csv(a), records_csv(b));
  auto other = s;
  other.rng_seed += 1;
  EXPECT_NE(records_csv(run_scenario(other)), records_csv(a));
}

TEST(Scenario, AcceptedTotalsAreExactPhaseSums) {
  for (const auto& s : Calibration::shipped().scenarios) {
    for (const auto& r : run_scenario(s)) {
      if (r.accepted()) EXPECT_EQ(r.total_ms, r.bundle_ms + r.tips_ms + r.pow_ms + r.net_ms);
    }
  }
}

TEST(Scenario, RateLimitRejectsAfterThirtyAndBlacklists) {
  auto s = Calibration::shipped().scenario("provider2-mainnet");
  auto records = run_scenario(s);
  EXPECT_EQ(first_with(records, Outcome::kRateLimited), 31u);
  for (std::size_t i = 31; i < records.size(); ++i)
    EXPECT_EQ(records[i].outcome, Outcome::kBlacklisted) << i;
  // At half the rate a 120 s window never holds more than 24 requests.
  s.send_rate = 0.2;
  EXPECT_FALSE(first_with(run_scenario(s), Outcome::kRateLimited));
}

TEST(Scenario, PowPhaseMeanMatchesGeometricExpectation) {
  auto s = degenerate();
  s.network.difficulty = 6;
  s.n_messages = 4000;
  s.provider.pow_rate = 1000;  // 1 attempt per ms
  auto sum = summarize(run_scenario(s));
  // Four transactions at 2^6 expected attempts each.
  EXPECT_NEAR(sum.stats().phases.pow_ms, 256.0, 256.0 * 0.05);
}

TEST(Scenario, DifficultyNeverLowersLatencyUnderPairedSeeds) {
  for (const auto& name : {"pc-devnet", "au-mainnet", "provider1-mainnet"}) {
    auto s = Calibration::shipped().scenario(name);
    double prev = -1;
    for (int d = 0; d <= 16; d += 2) {
      s.network.difficulty = d;
      const double mean = summarize(run_scenario(s)).stats().mean_ms;
      EXPECT_GE(mean, prev) << name << " d=" << d;
      prev = mean;
    }
  }
}

TEST(Scenario, InvalidScenariosRejected) {
  auto s = degenerate();
  s.n_messages = 0;
  EXPECT_EQ(code_of([&] { run_scenario(s); }), ErrorCode::kConfig);
  s = degenerate();
  s.provider.pow_rate = 0;
  EXPECT_EQ(code_of([&] { run_scenario(s); }), ErrorCode::kConfig);
  s = degenerate();
  s.provider.availability = 0;
  EXPECT_EQ(code_of([&] { run_scenario(s); }), ErrorCode::kConfig);
  s = degenerate();
  s.client.mam_overhead_ms = 0;
  EXPECT_EQ(code_of([&] { run_scenario(s); }), ErrorCode::kConfig);
}

TEST(Summary, MeanMedianPercentile) {
  auto s = summarize({accepted(1), accepted(2), accepted(3)});
  EXPECT_DOUBLE_EQ(s.stats().mean_ms, 2);
  EXPECT_DOUBLE_EQ(s.stats().median_ms, 2);
  EXPECT_DOUBLE_EQ(s.stats().p95_ms, 3);
  EXPECT_DOUBLE_EQ(s.acceptance_rate, 1);
  EXPECT_DOUBLE_EQ(summarize({accepted(1), accepted(4)}).stats().median_ms, 2.5);
  std::vector<LatencyRecord> hundred;
  for (int i = 1; i <= 100; ++i) hundred.push_back(accepted(i));
  EXPECT_DOUBLE_EQ(summarize(hundred).stats().p95_ms, 95);
}

TEST(Summary, AllRejectedAndEmpty) {
  auto r = accepted(5);
  r.outcome = Outcome::kRateLimited;
  auto s = summarize({r, r});
  EXPECT_EQ(s.acceptance_rate, 0);
  EXPECT_EQ(code_of([&] { s.stats(); }), ErrorCode::kEmptyInput);
  EXPECT_EQ(code_of([&] { summarize({}); }), ErrorCode::kEmptyInput);
}

TEST(Calibration, ShippedFiguresLandOnTargets) {
  auto c = Calibration::shipped();
  auto mean = [&](const char* n) { return summarize(run_scenario(c.scenario(n))).stats().mean_ms; };
  const double p1 = mean("provider1-mainnet");
  const double p2 = mean("provider2-mainnet");
  EXPECT_GT(p1, 30000);
  EXPECT_NEAR(p1, 30000, 6000);
  EXPECT_GE(p2, 7000);
  EXPECT_LE(p2, 11000);
  EXPECT_LT(p2, p1);
  const double pc_dev = mean("pc-devnet");
  const double au_dev = mean("au-devnet");
  EXPECT_GE(pc_dev, 350);
  EXPECT_LE(pc_dev, 550);
  EXPECT_GE(au_dev, 1050);
  EXPECT_LE(au_dev, 1600);
  const double pc_main = mean("pc-mainnet");
  const double au_main = mean("au-mainnet");
  EXPECT_LT(std::abs(au_main - pc_main) / pc_main, 0.10);
  EXPECT_NEAR(pc_main, 50000, 5000);
  EXPECT_GT(pc_main, 10 * pc_dev);
}

TEST(Compare, TableAndHistograms) {
  auto c = Calibration::shipped();
  auto results = compare_scenarios({c.scenario("pc-devnet"), c.scenario("au-devnet")}, 100);
  ASSERT_EQ(results.size(), 2u);
  EXPECT_GT(results[1].summary.stats().mean_ms, results[0].summary.stats().mean_ms);
  for (const auto& r : results) {
    std::uint64_t n = 0;
    for (auto k : r.histogram.counts) n += k;
    EXPECT_EQ(n, r.summary.accepted);
  }
  auto csv = comparison_csv(results);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "scenario,messages,accepted,acceptance_rate,mean_ms,median_ms,p95_ms,bundle_ms,tips_ms,"
            "pow_ms,net_ms");
  EXPECT_EQ(results[0].histogram.to_csv().substr(0, 18), "bin_start_ms,count");
  EXPECT_EQ(code_of([&] { compare_scenarios({c.scenario("pc-devnet")}); }),
            ErrorCode::kInvalidArgument);

  auto dev = c.scenario("pc-devnet");
  auto main = dev;
  main.network = c.networks.at("mainnet");
  auto pair = compare_scenarios({dev, main});
  EXPECT_GT(pair[1].summary.stats().mean_ms, pair[0].summary.stats().mean_ms);
}

TEST(Compare, HistogramBinsAreFixedWidth) {
  auto h = histogram({accepted(0), accepted(99.9), accepted(100), accepted(250)}, 100);
  ASSERT_EQ(h.counts.size(), 3u);
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts[2], 1u);
  EXPECT_EQ(h.to_csv(), "bin_start_ms,count\n0.000,2\n100.000,1\n200.000,1\n");
}

TEST(Calibration, ParseErrorsAreConfigErrors) {
  EXPECT_EQ(code_of([&] { Calibration::parse("{"); }), ErrorCode::kConfig);
  EXPECT_EQ(code_of([&] {
              Calibration::parse(R"({"networks":{},"nodes":{},"clients":{},
                "scenarios":[{"name":"x","client":"pc","provider":"p","network":"n"}]})");
            }),
            ErrorCode::kConfig);
  auto c = Calibration::parse(R"({"networks":{"n":{"difficulty":3}},
    "nodes":{"p":{"tip_latency":{"mean_ms":5},"pow_rate":10}},
    "clients":{"pc":{"mam_overhead_ms":1,"network_rtt":{"mean_ms":0}}},
    "scenarios":[{"name":"x","client":"pc","provider":"p","network":"n","n_messages":3}]})");
  EXPECT_EQ(run_scenario(c.scenario("x")).size(), 3u);
}
