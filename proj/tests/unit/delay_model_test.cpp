#include "test_support.hpp"

#include "vsn/delay_model.hpp"
#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace vsn;

TEST(V2vDelay, NoDensityIsPureCarry) {
  EXPECT_EQ(v2v_delay(500.0, 10.0, 0.0, 150.0, 0.004), 500.0 / 10.0);
  EXPECT_EQ(v2v_delay(123.0, 7.0, 0.0, 150.0, 0.004), 123.0 / 7.0);
}

TEST(V2vDelay, SaturatedDensityIsPureRelay) {
  const double relay = 500.0 * 0.004 / 150.0;
  EXPECT_NEAR(v2v_delay(500.0, 10.0, 1e6, 150.0, 0.004), relay, 1e-9 * relay);
}

TEST(V2vDelay, WorkedFiveHundredMetreExample) {
  // Hand expansion: (1 - e^-1.5) * 500 * 0.004 / 150 + e^-1.5 * 500 / 10.
  const double e = 0.22313016014842982;
  const double expected = (1.0 - e) * (2.0 / 150.0) + e * 50.0;
  const double d = v2v_delay(500.0, 10.0, 0.01, 150.0, 0.004);
  EXPECT_NEAR(d, expected, 1e-12);
  EXPECT_NEAR(d, 11.166, 0.001);
}

TEST(V2vDelay, DomainViolationsRejected) {
  EXPECT_THROW(v2v_delay(0.0, 10.0, 0.0, 150.0, 0.004), UsageError);
  EXPECT_THROW(v2v_delay(10.0, 0.0, 0.0, 150.0, 0.004), UsageError);
  EXPECT_THROW(v2v_delay(10.0, 1.0, -0.1, 150.0, 0.004), UsageError);
  EXPECT_THROW(v2v_delay(10.0, 1.0, 0.1, 0.0, 0.004), UsageError);
  EXPECT_THROW(v2v_delay(10.0, 1.0, 0.1, 150.0, 0.0), UsageError);
  EXPECT_THROW(v2v_delay(10.0, 1.0, std::nan(""), 150.0, 0.004), UsageError);
}

TEST(V2vDelay, MonotoneBoundedAndLinearInLength) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> len(10.0, 2000.0), speed(1.0, 30.0), rho(0.0, 0.05);
  for (int n = 0; n < 2000; ++n) {
    const double l = len(rng), s = speed(rng), r = rho(rng);
    const double d = v2v_delay(l, s, r, 150.0, 0.004);
    EXPECT_GE(d, l * 0.004 / 150.0 * (1 - 1e-12));
    EXPECT_LE(d, l / s * (1 + 1e-12));
    EXPECT_LT(v2v_delay(l, s, r + 0.001, 150.0, 0.004), d);
    EXPECT_LT(v2v_delay(l, s * 1.1, r, 150.0, 0.004), d);
    EXPECT_NEAR(v2v_delay(3.0 * l, s, r, 150.0, 0.004), 3.0 * d, 1e-12 * d);
  }
}

namespace {

struct BusFixture {
  RoadGraph graph;
  TrafficStats stats;
};

BusFixture three_stop_line(double first_len, double second_len, double bus_speed) {
  std::vector<Intersection> nodes{{1, {0, 0}, false}, {2, {first_len, 0}, false}, {3, {first_len + second_len, 0}, false}};
  std::vector<SegmentSpec> segs{{1, 2, first_len}, {2, 3, second_len}};
  const std::vector<BusLine> lines{{1, {1, 2, 3}, false}};
  BusFixture f{augment(build_graph(nodes, segs, {}), lines), {}};
  f.stats.per_segment[{1, 2}] = SegmentStats{0.0, 10.0, {{1, bus_speed}}};
  f.stats.per_segment[{2, 3}] = SegmentStats{0.0, 10.0, {{1, bus_speed}}};
  return f;
}

} // namespace

TEST(BusDelay, SingleSegmentLengthOverSpeed) {
  auto f = three_stop_line(300.0, 100.0, 10.0);
  const auto e = *f.graph.find_edge(0, 1, 1);
  EXPECT_DOUBLE_EQ(bus_delay(f.graph.edge(e), f.graph, f.stats), 30.0);
}

TEST(BusDelay, TwoSegmentsSum) {
  auto f = three_stop_line(200.0, 400.0, 5.0);
  const auto e = *f.graph.find_edge(0, 2, 1);
  EXPECT_DOUBLE_EQ(bus_delay(f.graph.edge(e), f.graph, f.stats), 120.0);
}

TEST(BusDelay, AdditiveOverConcatenation) {
  auto f = three_stop_line(250.0, 730.0, 6.5);
  auto& seg23 = f.stats.per_segment[{2, 3}];
  seg23.bus_speed_mps[1] = 3.25;
  const double whole = bus_delay(f.graph.edge(*f.graph.find_edge(0, 2, 1)), f.graph, f.stats);
  const double a = bus_delay(f.graph.edge(*f.graph.find_edge(0, 1, 1)), f.graph, f.stats);
  const double b = bus_delay(f.graph.edge(*f.graph.find_edge(1, 2, 1)), f.graph, f.stats);
  EXPECT_NEAR(whole, a + b, 1e-12);
}

TEST(BusDelay, MissingBusSpeedIsAValidationError) {
  auto f = three_stop_line(200.0, 400.0, 5.0);
  f.stats.per_segment[{2, 3}].bus_speed_mps.clear();
  EXPECT_THROW(bus_delay(f.graph.edge(*f.graph.find_edge(0, 2, 1)), f.graph, f.stats), ValidationError);
}

TEST(BusDelay, NeverFasterThanRelayOnSameSegment) {
  auto f = three_stop_line(300.0, 100.0, 10.0);
  const double bus = bus_delay(f.graph.edge(*f.graph.find_edge(0, 1, 1)), f.graph, f.stats);
  EXPECT_DOUBLE_EQ(bus, v2v_delay(300.0, 10.0, 0.0, 150.0, 0.004));
  for (double rho : {1e-4, 0.001, 0.01, 0.1}) EXPECT_GT(bus, v2v_delay(300.0, 10.0, rho, 150.0, 0.004));
}

TEST(EdgeDelays, Fig3BusAndRoadEdges) {
  const RoadGraph g = make_graph(load_graph_document(VSN_FIXTURE_DIR "/fig2_graph.json"));
  std::mt19937_64 rng(9);
  const TrafficStats stats = test::random_stats(g, rng);
  const auto d = edge_delays(g, stats);
  ASSERT_EQ(d.size(), g.edges().size());

  const auto long_edge = *g.find_edge(g.index_of(1), g.index_of(9), 1);
  double carry = 0.0;
  for (auto [a, b] : std::vector<std::pair<int, int>>{{1, 2}, {2, 5}, {5, 8}, {8, 9}}) {
    carry += 500.0 / stats.segment(a, b)->bus_speed_mps.at(1);
  }
  EXPECT_NEAR(d[long_edge], carry, 1e-9);

  const auto road = *g.find_edge(g.index_of(1), g.index_of(2), 0);
  const auto* s12 = stats.segment(1, 2);
  EXPECT_DOUBLE_EQ(d[road], v2v_delay(500.0, s12->speed_mps, s12->density_per_m, 150.0, 0.004));
  // The parallel single-segment bus shortcut carries.
  const auto bus12 = *g.find_edge(g.index_of(1), g.index_of(2), 1);
  EXPECT_DOUBLE_EQ(d[bus12], 500.0 / s12->bus_speed_mps.at(1));
}

TEST(EdgeDelays, HigherDensityOnOneSegmentLowersOnlyThatDelay) {
  const RoadGraph g = test::make_grid(3, 3, 400.0);
  std::mt19937_64 rng(21);
  const TrafficStats base = test::random_stats(g, rng);
  TrafficStats denser = base;
  denser.per_segment[{4, 5}].density_per_m += 0.01;
  const auto a = edge_delays(g, base);
  const auto b = edge_delays(g, denser);
  const auto target = *g.find_edge(g.index_of(4), g.index_of(5), 0);
  for (EdgeIndex e = 0; e < a.size(); ++e) {
    if (e == target) {
      EXPECT_LT(b[e], a[e]);
    } else {
      EXPECT_EQ(b[e], a[e]);
    }
  }
}
