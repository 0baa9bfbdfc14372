#include "test_support.hpp"

#include "vsn/error.hpp"
#include "vsn/sim/demo.hpp"
#include "vsn/sim/metrics.hpp"
#include "vsn/sim/pipeline.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace vsn;
using namespace vsn::sim;

namespace {

RunResult empty_run(double duration = 3600.0, double deadline = 600.0) {
  RunResult r;
  r.scenario_hash = "h";
  r.protocol = Protocol::Gpsr;
  r.seed = 1;
  r.sim_duration_s = duration;
  r.deadline_s = deadline;
  return r;
}

void add_packet(RunResult& r, Point origin, double created, std::optional<double> delay, int hops = 1) {
  PacketRecord p;
  p.id = static_cast<PacketId>(r.packets.size());
  p.created = created;
  p.origin = origin;
  if (delay) p.delivered = created + *delay;
  p.hops = hops;
  r.packets.push_back(p);
}

RunResult random_run(std::mt19937_64& rng, std::size_t n, double extent) {
  std::uniform_real_distribution<double> pos(0.0, extent);
  std::uniform_real_distribution<double> when(0.0, 3600.0);
  std::exponential_distribution<double> delay(1.0 / 400.0);
  std::bernoulli_distribution lost(0.2);
  RunResult r = empty_run();
  for (std::size_t k = 0; k < n; ++k) {
    std::optional<double> d;
    if (!lost(rng)) d = delay(rng);
    add_packet(r, {pos(rng), pos(rng)}, when(rng), d);
  }
  return r;
}

SummaryRow row(const std::string& seed, double ratio, const std::string& hash = "h") {
  return {hash, "OVDF-P", seed, {{"delivery_ratio", ratio}, {"generated", 100.0}}};
}

} // namespace

TEST(Censoring, LatePacketsAreLeftOut) {
  RunResult r = empty_run(1000.0, 600.0);
  add_packet(r, {0, 0}, 400.0, 10.0);
  add_packet(r, {0, 0}, 400.5, 10.0);
  EXPECT_TRUE(counted(r.packets[0], r));
  EXPECT_FALSE(counted(r.packets[1], r));
  EXPECT_TRUE(delivered_within(r.packets[0], 600.0));
  EXPECT_FALSE(delivered_within(r.packets[0], 9.0));
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0, 5.0}, 0.9), 4.6);
  EXPECT_DOUBLE_EQ(quantile({7.0}, 0.3), 7.0);
  EXPECT_THROW(quantile({}, 0.5), UsageError);
}

TEST(SquareGrid, SquareRatio) {
  RunResult r = empty_run();
  for (int k = 0; k < 10; ++k) add_packet(r, {100.0 + k, 100.0}, 10.0, k < 7 ? std::optional<double>(60.0) : std::nullopt);
  // One late delivery does not count.
  r.packets[9].delivered = r.packets[9].created + 700.0;
  const auto grid = coverage_grid(r, {0, 0}, {999, 999}, 500.0, 0.9);
  ASSERT_EQ(grid.nx, 2);
  ASSERT_EQ(grid.ny, 2);
  EXPECT_EQ(grid.squares[0].tally.generated, 10U);
  EXPECT_DOUBLE_EQ(*grid.squares[0].tally.ratio(), 0.7);
  EXPECT_TRUE(grid.squares[0].valid);
  for (std::size_t k = 1; k < 4; ++k) {
    EXPECT_EQ(grid.squares[k].tally.generated, 0U);
    EXPECT_FALSE(grid.squares[k].tally.ratio().has_value());
    EXPECT_FALSE(grid.squares[k].valid);
  }
  const std::string csv = coverage_csv_rows(r, grid);
  EXPECT_NE(csv.find("GPSR,1,0,0,10,7,0.7,1\n"), std::string::npos);
  EXPECT_NE(csv.find("GPSR,1,1,0,0,0,,0\n"), std::string::npos);
}

TEST(SquareGrid, ThresholdKeepsNinetyPercent) {
  // Counts per square: 50, 30, 12, 5, 3 (total 100).
  RunResult r = empty_run();
  const int counts[] = {50, 30, 12, 5, 3};
  for (int s = 0; s < 5; ++s) {
    for (int k = 0; k < counts[s]; ++k) add_packet(r, {250.0 + 500.0 * s, 250.0}, 1.0, 1.0);
  }
  const auto grid = coverage_grid(r, {0, 0}, {2999, 499}, 500.0, 0.9);
  // 50 + 30 = 80 < 90, 50 + 30 + 12 = 92 >= 90.
  EXPECT_EQ(grid.threshold, 12U);
  std::size_t valid = 0;
  std::size_t carried = 0;
  for (const auto& sq : grid.squares) {
    if (!sq.valid) continue;
    ++valid;
    carried += sq.tally.generated;
  }
  EXPECT_EQ(valid, 3U);
  EXPECT_GE(carried, 90U);
}

TEST(SquareGrid, SquaresPartitionCountedPackets) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const RunResult r = random_run(rng, 500, 2600.0);
    const auto grid = coverage_grid(r, {0, 0}, {2600, 2600}, 500.0, 0.9);
    std::size_t sum = 0;
    std::size_t delivered = 0;
    for (const auto& sq : grid.squares) {
      sum += sq.tally.generated;
      delivered += sq.tally.delivered;
      if (sq.tally.ratio()) {
        EXPECT_GE(*sq.tally.ratio(), 0.0);
        EXPECT_LE(*sq.tally.ratio(), 1.0);
      }
    }
    std::size_t expected = 0;
    std::size_t expected_delivered = 0;
    for (const auto& p : r.packets) {
      if (!counted(p, r)) continue;
      ++expected;
      if (delivered_within(p, r.deadline_s)) ++expected_delivered;
    }
    EXPECT_EQ(sum, expected);
    EXPECT_EQ(delivered, expected_delivered);
  }
}

TEST(Distance, BinsMatchBruteForceNearestAp) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> pos(0.0, 3000.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> aps;
    for (int k = 0; k < 1 + trial % 5; ++k) aps.push_back({pos(rng), pos(rng)});
    const RunResult r = random_run(rng, 400, 3000.0);
    const auto bins = ratio_by_distance(r, aps, 200.0);

    std::map<int, Tally> expected;
    for (const auto& p : r.packets) {
      if (!counted(p, r)) continue;
      double best = 1e300;
      for (const auto& a : aps) best = std::min(best, std::hypot(p.origin.x - a.x, p.origin.y - a.y));
      auto& t = expected[static_cast<int>(best / 200.0)];
      ++t.generated;
      if (delivered_within(p, r.deadline_s)) ++t.delivered;
    }
    ASSERT_EQ(bins.size(), expected.size());
    std::size_t k = 0;
    for (const auto& [bin, t] : expected) {
      EXPECT_DOUBLE_EQ(bins[k].lo_m, 200.0 * bin);
      EXPECT_DOUBLE_EQ(bins[k].hi_m, 200.0 * (bin + 1));
      EXPECT_EQ(bins[k].tally.generated, t.generated);
      EXPECT_EQ(bins[k].tally.delivered, t.delivered);
      EXPECT_GT(bins[k].tally.generated, 0U);
      ++k;
    }
  }
}

TEST(Distance, EmptyBinsOmitted) {
  RunResult r = empty_run();
  const std::vector<Point> aps{{0, 0}};
  add_packet(r, {50, 0}, 1.0, 1.0);
  add_packet(r, {650, 0}, 1.0, std::nullopt);
  const auto bins = ratio_by_distance(r, aps, 200.0);
  ASSERT_EQ(bins.size(), 2U);
  EXPECT_DOUBLE_EQ(bins[0].lo_m, 0.0);
  EXPECT_DOUBLE_EQ(*bins[0].tally.ratio(), 1.0);
  EXPECT_DOUBLE_EQ(bins[1].lo_m, 600.0);
  EXPECT_DOUBLE_EQ(*bins[1].tally.ratio(), 0.0);
  EXPECT_EQ(distance_csv_rows(r, bins), "GPSR,1,0,200,1,1,1\nGPSR,1,600,800,1,0,0\n");
  EXPECT_THROW(ratio_by_distance(r, aps, 0.0), UsageError);
}

TEST(Summary, NearApPacketsAllDeliveredInSimulation) {
  const Scenario toy = toy_scenario();
  const auto records = training_records(toy);
  const auto build = build_policy(toy, Protocol::OvdfP, observed_stats(toy, Protocol::OvdfP, records));
  RunOptions opt;
  opt.table = &build.forwarding;
  const RunResult r = run(toy, Protocol::OvdfP, opt);
  const Summary s = summarize(r, toy.graph, toy.radio, toy.metrics);
  ASSERT_GT(s.near_ap.generated, 0U);
  EXPECT_EQ(s.near_ap.delivered, s.near_ap.generated);
  const auto bins = ratio_by_distance(r, toy.graph, 150.0);
  ASSERT_FALSE(bins.empty());
  EXPECT_DOUBLE_EQ(*bins.front().tally.ratio(), 1.0);
}

TEST(Summary, RatiosShrinkWithTheDeadline) {
  std::mt19937_64 rng(5);
  const RunResult base = random_run(rng, 2000, 3000.0);
  const RoadGraph g = test::make_grid(4, 4, 1000.0, {1, 16});
  std::optional<double> previous;
  for (double deadline : {900.0, 600.0, 300.0, 120.0, 30.0}) {
    // Hold the counted population fixed so only the deadline moves.
    RunResult r = base;
    r.deadline_s = deadline;
    r.sim_duration_s = 3600.0 - 600.0 + deadline;
    const Summary s = summarize(r, g, {}, {});
    ASSERT_TRUE(s.all.ratio().has_value());
    EXPECT_EQ(s.all.generated + s.censored, r.packets.size());
    if (previous) EXPECT_LE(*s.all.ratio(), *previous);
    previous = s.all.ratio();
  }
}

TEST(Summary, DelayStatisticsOverDeliveredPackets) {
  RunResult r = empty_run();
  add_packet(r, {5000, 5000}, 0.0, 10.0, 2);
  add_packet(r, {5000, 5000}, 0.0, 30.0, 4);
  add_packet(r, {5000, 5000}, 0.0, std::nullopt, 0);
  add_packet(r, {5000, 5000}, 0.0, 900.0, 9); // past the deadline
  const RoadGraph g = test::make_grid(2, 2, 100.0, {1});
  const Summary s = summarize(r, g, {}, {});
  EXPECT_EQ(s.all.generated, 4U);
  EXPECT_EQ(s.all.delivered, 2U);
  EXPECT_EQ(s.far.generated, 4U);
  EXPECT_EQ(s.near_ap.generated, 0U);
  EXPECT_DOUBLE_EQ(*s.delay_mean_s, 20.0);
  EXPECT_DOUBLE_EQ(*s.delay_p50_s, 20.0);
  EXPECT_DOUBLE_EQ(*s.hops_mean, 3.0);
}

TEST(Compare, GainArithmetic) {
  const std::vector<SummaryRow> a{row("1", 0.6)};
  const std::vector<SummaryRow> b{row("1", 0.5)};
  const auto gains = compare(a, b);
  const auto it = std::find_if(gains.begin(), gains.end(), [](const Gain& g) { return g.column == "delivery_ratio"; });
  ASSERT_NE(it, gains.end());
  EXPECT_NEAR(*it->gain, 0.2, 1e-12);
  EXPECT_NEAR(*it->seed_gain_mean, 0.2, 1e-12);
}

TEST(Compare, IdenticalSetsHaveZeroGain) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<SummaryRow> a;
  for (int s = 0; s < 10; ++s) a.push_back(row(std::to_string(s), u(rng)));
  for (const auto& g : compare(a, a)) {
    ASSERT_TRUE(g.gain.has_value());
    EXPECT_EQ(*g.gain, 0.0);
    EXPECT_EQ(*g.seed_gain_mean, 0.0);
    EXPECT_EQ(*g.seed_gain_sd, 0.0);
  }
}

TEST(Compare, MismatchedScenariosRejected) {
  const std::vector<SummaryRow> a{row("1", 0.6, "aaaa")};
  const std::vector<SummaryRow> b{row("1", 0.5, "bbbb")};
  EXPECT_THROW(compare(a, b), ValidationError);
}

TEST(Compare, SweepStatisticsMatchRecomputation) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.2, 0.9);
  std::vector<SummaryRow> a;
  std::vector<SummaryRow> b;
  std::vector<double> xa;
  std::vector<double> xb;
  for (int s = 0; s < 10; ++s) {
    xa.push_back(u(rng));
    xb.push_back(u(rng));
    a.push_back(row(std::to_string(s), xa.back()));
    b.push_back(row(std::to_string(s), xb.back()));
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto sd = [&](const std::vector<double>& v) {
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  std::vector<double> seed_gains;
  for (int s = 0; s < 10; ++s) seed_gains.push_back((xa[s] - xb[s]) / xb[s]);

  const auto [am, asd] = aggregate(a);
  EXPECT_EQ(am.seed, "mean");
  EXPECT_EQ(asd.seed, "sd");
  EXPECT_NEAR(am.values.at("delivery_ratio"), mean(xa), 1e-12);
  EXPECT_NEAR(asd.values.at("delivery_ratio"), sd(xa), 1e-12);

  const auto gains = compare(a, b);
  const auto it = std::find_if(gains.begin(), gains.end(), [](const Gain& g) { return g.column == "delivery_ratio"; });
  ASSERT_NE(it, gains.end());
  EXPECT_NEAR(it->a_mean, mean(xa), 1e-12);
  EXPECT_NEAR(it->b_sd, sd(xb), 1e-12);
  EXPECT_NEAR(*it->gain, (mean(xa) - mean(xb)) / mean(xb), 1e-12);
  EXPECT_NEAR(*it->seed_gain_mean, mean(seed_gains), 1e-12);
  EXPECT_NEAR(*it->seed_gain_sd, sd(seed_gains), 1e-12);

  // Aggregate rows in the input are ignored.
  auto with_agg = a;
  with_agg.push_back(am);
  with_agg.push_back(asd);
  const auto again = compare(with_agg, b);
  const auto it2 = std::find_if(again.begin(), again.end(), [](const Gain& g) { return g.column == "delivery_ratio"; });
  EXPECT_EQ(*it2->gain, *it->gain);
}

TEST(SummaryCsv, RoundTrip) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<SummaryRow> rows;
  for (int s = 0; s < 4; ++s) {
    SummaryRow r{"abc123", "EPIDEMIC", std::to_string(s), {}};
    for (const auto& c : summary_columns()) r.values[c] = u(rng) * 1000.0;
    rows.push_back(r);
  }
  rows[2].values.erase("delay_p90_s");
  const auto [m, sd] = aggregate(rows);
  rows.push_back(m);
  rows.push_back(sd);
  const auto path = std::filesystem::temp_directory_path() / "vsn_summary_roundtrip.csv";
  write_summary_csv(path, rows);
  const auto back = read_summary_csv(path);
  ASSERT_EQ(back.size(), rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(back[k].scenario_hash, rows[k].scenario_hash);
    EXPECT_EQ(back[k].protocol, rows[k].protocol);
    EXPECT_EQ(back[k].seed, rows[k].seed);
    EXPECT_EQ(back[k].values, rows[k].values);
  }
  std::filesystem::remove(path);
}
