#include "test_support.hpp"

#include "vsn/delay_model.hpp"
#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"
#include "vsn/policy_solver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace vsn;

namespace {

std::vector<ForwardingOption> random_options(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<ForwardingOption> opts(k);
  double total = 0.0;
  for (auto& o : opts) {
    o.q = unit(rng);
    o.c = unit(rng);
    total += o.q;
  }
  for (auto& o : opts) o.q /= total;
  return opts;
}

std::vector<CandidateOption> random_candidates(std::mt19937_64& rng, std::size_t k) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<CandidateOption> cands;
  for (const auto& o : random_options(rng, k)) cands.push_back({o.q, o.c, 1.0 + 200.0 * unit(rng)});
  return cands;
}

// First priority position whose option is available: the holder turns onto it or a contact heads there.
std::size_t sample_forwarding(std::span<const ForwardingOption> opts, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double u = unit(rng);
  std::size_t turn = opts.size();
  double acc = 0.0;
  for (std::size_t k = 0; k < opts.size(); ++k) {
    acc += opts[k].q;
    if (u < acc) {
      turn = k;
      break;
    }
  }
  for (std::size_t k = 0; k < opts.size(); ++k) {
    const bool contact = unit(rng) < opts[k].c;
    if (turn == k || contact) return k;
  }
  return opts.size();
}

struct Instance {
  RoadGraph graph;
  TrafficStats stats;
};

// A -> B -> AP with deterministic turns and no contacts.
Instance line_instance() {
  std::vector<Intersection> nodes{{1, {0, 0}, false}, {2, {100, 0}, false}, {3, {200, 0}, true}};
  std::vector<SegmentSpec> segs{{1, 2, std::nullopt}, {2, 3, std::nullopt}};
  Instance inst{build_graph(nodes, segs, {}), {}};
  inst.stats.per_intersection[1].q0[2] = 1.0;
  inst.stats.per_intersection[2].q0[3] = 1.0;
  return inst;
}

Instance random_grid_instance(std::mt19937_64& rng, std::vector<IntersectionId> aps) {
  Instance inst{test::make_grid(4, 4, 300.0, std::move(aps)), {}};
  inst.stats = test::random_stats(inst.graph, rng);
  return inst;
}

double chain_walk(const std::vector<std::vector<Transition>>& trans, const RoadGraph& g, NodeIndex start,
                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double total = 0.0;
  NodeIndex at = start;
  while (!g.is_ap(at)) {
    double u = unit(rng);
    const Transition* pick = &trans[at].back();
    for (const auto& t : trans[at]) {
      if (u < t.probability) {
        pick = &t;
        break;
      }
      u -= t.probability;
    }
    total += pick->delay;
    at = pick->to;
  }
  return total;
}

} // namespace

TEST(ForwardingProbability, TwoEdgeWorkedExample) {
  const std::vector<ForwardingOption> opts{{0.6, 0.5}, {0.4, 0.2}};
  const auto p = forwarding_probabilities(opts);
  EXPECT_NEAR(p[0], 0.8, 1e-15);
  EXPECT_NEAR(p[1], 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(forwarding_prob(opts, 1), p[1]);

  std::mt19937_64 rng(1);
  const int trials = 1000000;
  std::vector<int> hits(3, 0);
  for (int n = 0; n < trials; ++n) ++hits[sample_forwarding(opts, rng)];
  EXPECT_NEAR(static_cast<double>(hits[0]) / trials, 0.8, 0.002);
  EXPECT_NEAR(static_cast<double>(hits[1]) / trials, 0.2, 0.002);
  EXPECT_EQ(hits[2], 0);
}

TEST(ForwardingProbability, DegenerateReductions) {
  const std::vector<ForwardingOption> one{{0.3, 0.45}};
  EXPECT_NEAR(forwarding_prob(one, 0), 0.3 + 0.45 - 0.3 * 0.45, 1e-15);
  const std::vector<ForwardingOption> carry{{0.1, 0.0}, {0.5, 0.0}, {0.4, 0.0}};
  const auto p = forwarding_probabilities(carry);
  for (std::size_t k = 0; k < carry.size(); ++k) EXPECT_DOUBLE_EQ(p[k], carry[k].q);
  EXPECT_THROW(forwarding_prob(one, 1), UsageError);
}

TEST(ForwardingProbability, OverfullPrefixRejected) {
  const std::vector<ForwardingOption> bad{{0.7, 0.0}, {0.7, 0.0}, {0.1, 0.0}};
  EXPECT_THROW(forwarding_probabilities(bad), ValidationError);
}

TEST(ForwardingProbability, ConservationOverRandomDecisions) {
  std::mt19937_64 rng(2);
  for (int n = 0; n < 10000; ++n) {
    auto opts = random_options(rng, 1 + rng() % 8);
    const auto p = forwarding_probabilities(opts);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(ForwardingProbability, MonteCarloAgreesOnRandomOrders) {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 5; ++n) {
    const auto opts = random_options(rng, 4);
    const auto p = forwarding_probabilities(opts);
    const int trials = 200000;
    std::vector<int> hits(5, 0);
    for (int t = 0; t < trials; ++t) ++hits[sample_forwarding(opts, rng)];
    for (std::size_t k = 0; k < 4; ++k) {
      const double se = std::sqrt(p[k] * (1 - p[k]) / trials);
      EXPECT_NEAR(static_cast<double>(hits[k]) / trials, p[k], 5 * se + 1e-6);
    }
  }
}

TEST(OrderValue, TwoCandidateExpectedDelay) {
  const std::vector<CandidateOption> cands{{0.6, 0.5, 5.0}, {0.4, 0.2, 20.0}};
  const std::vector<std::size_t> order{0, 1};
  EXPECT_NEAR(order_value(cands, order), 8.0, 1e-12);
}

TEST(BruteForce, CheaperEdgeFirstWhenOptionsIdentical) {
  const std::vector<CandidateOption> cands{{0.5, 0.3, 100.0}, {0.5, 0.3, 10.0}};
  const auto best = brute_force_order(cands);
  EXPECT_EQ(best.order, (std::vector<std::size_t>{1, 0}));
  const std::vector<CandidateOption> single{{1.0, 0.4, 7.0}};
  EXPECT_NEAR(brute_force_order(single).value, 7.0, 1e-15);
}

TEST(BruteForce, MatchesExhaustiveEnumerationAndGreedy) {
  std::mt19937_64 rng(4);
  for (int n = 0; n < 1000; ++n) {
    const auto cands = random_candidates(rng, 1 + rng() % 6);
    const auto best = brute_force_order(cands);
    std::vector<std::size_t> perm(cands.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    do {
      EXPECT_LE(best.value, order_value(cands, perm) + 1e-12 * best.value);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(greedy_order(cands).value, best.value, 1e-9 * best.value) << "instance " << n;
  }
}

TEST(ForwardingModel, QcFollowsEdgeTypeAndRetention) {
  const RoadGraph g = make_graph(load_graph_document(VSN_FIXTURE_DIR "/fig2_graph.json"));
  std::mt19937_64 rng(5);
  TrafficStats stats = test::random_stats(g, rng);
  auto& s5 = stats.per_intersection.at(5);
  s5.q0 = {{2, 0.6}, {4, 0.1}, {6, 0.05}, {8, 0.05}};
  s5.p0 = {{2, 0.3}, {4, 0.0}, {6, 0.0}, {8, 0.0}};
  s5.qv = {{1, 0.2}};
  s5.pv = {{1, 0.5}};
  const ForwardingModel model(g, stats, edge_delays(g, stats));
  const NodeIndex i5 = g.index_of(5);
  const EdgeIndex road = *g.find_edge(i5, g.index_of(2), 0);
  const EdgeIndex to8 = *g.find_edge(i5, g.index_of(8), 1);
  const EdgeIndex to9 = *g.find_edge(i5, g.index_of(9), 1);
  const RoutingDecision decision{i5, {to9, road, to8}};
  EXPECT_DOUBLE_EQ(model.qc(road, decision).q, 0.6);
  EXPECT_DOUBLE_EQ(model.qc(road, decision).c, 0.3);
  EXPECT_DOUBLE_EQ(model.qc(to9, decision).q, 0.2);
  EXPECT_DOUBLE_EQ(model.qc(to9, decision).c, 0.5);
  EXPECT_DOUBLE_EQ(model.qc(to8, decision).q, 0.0);
  EXPECT_DOUBLE_EQ(model.qc(to8, decision).c, 0.0);
}

TEST(ForwardingModel, CandidatesKeepBestBusEdgeWithIdTieBreak) {
  const RoadGraph g = make_graph(load_graph_document(VSN_FIXTURE_DIR "/fig2_graph.json"));
  std::mt19937_64 rng(6);
  const TrafficStats stats = test::random_stats(g, rng);
  std::vector<double> d(g.edges().size(), 50.0);
  const NodeIndex i5 = g.index_of(5);
  const EdgeIndex to8 = *g.find_edge(i5, g.index_of(8), 1);
  const EdgeIndex to9 = *g.find_edge(i5, g.index_of(9), 1);
  d[to8] = 100.0;
  d[to9] = 150.0;
  const ForwardingModel model(g, stats, d);
  DelayVector delays(g.intersection_count(), 0.0);
  auto has = [](const std::vector<EdgeIndex>& v, EdgeIndex e) { return std::find(v.begin(), v.end(), e) != v.end(); };

  delays[g.index_of(8)] = 50.0; // tie: 100 + 50 == 150 + 0
  auto c = model.candidates(i5, delays);
  EXPECT_TRUE(has(c, to8));
  EXPECT_FALSE(has(c, to9));
  EXPECT_EQ(c.size(), 4u + 1u);

  delays[g.index_of(8)] = 60.0;
  c = model.candidates(i5, delays);
  EXPECT_FALSE(has(c, to8));
  EXPECT_TRUE(has(c, to9));

  // Without buses the candidates are the road out-edges.
  const RoadGraph plain = g.without_buses();
  const ForwardingModel road_only(plain, stats, edge_delays(plain, stats));
  EXPECT_EQ(road_only.candidates(plain.index_of(5), delays).size(), 4u);
}

TEST(ForwardingModel, BusReductionMatchesFullPermutationSearch) {
  const RoadGraph g = make_graph(load_graph_document(VSN_FIXTURE_DIR "/fig2_graph.json"));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const TrafficStats stats = test::random_stats(g, rng);
    const ForwardingModel model(g, stats, edge_delays(g, stats));
    DelayVector delays(g.intersection_count());
    for (NodeIndex i = 0; i < delays.size(); ++i) delays[i] = g.is_ap(i) ? 0.0 : 400.0 * unit(rng);
    for (IntersectionId id : {1, 2, 5}) {
      const NodeIndex i = g.index_of(id);
      auto outs = g.out_edges(i);
      std::vector<EdgeIndex> perm(outs.begin(), outs.end());
      std::sort(perm.begin(), perm.end());
      double full = std::numeric_limits<double>::infinity();
      do {
        full = std::min(full, model.expected_delay_at({i, perm}, delays));
      } while (std::next_permutation(perm.begin(), perm.end()));
      const auto [decision, value] = model.best_decision(i, delays);
      EXPECT_NEAR(value, full, 1e-9 * full);
      EXPECT_NEAR(model.expected_delay_at(decision, delays), value, 1e-9 * value);
    }
  }
}

TEST(Bellman, LineGraphSweeps) {
  const Instance inst = line_instance();
  const ForwardingModel model(inst.graph, inst.stats, {10.0, 10.0});
  DelayVector d(3, 0.0);
  d = model.bellman_update(d);
  EXPECT_EQ(d, (DelayVector{10.0, 10.0, 0.0}));
  d = model.bellman_update(d);
  EXPECT_EQ(d, (DelayVector{20.0, 10.0, 0.0}));

  SolverOptions opts;
  opts.epsilon = 1e-6;
  const auto sol = value_iteration(model, opts);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_LE(sol.report.iterations, 4u);
  EXPECT_EQ(sol.delays, (DelayVector{20.0, 10.0, 0.0}));
  EXPECT_EQ(policy_evaluation(sol.policy, model), sol.delays);
}

TEST(Bellman, AllApsGiveZero) {
  const RoadGraph g = test::make_grid(2, 2, 100.0, {1, 2, 3, 4});
  const TrafficStats stats = with_defaults({}, g);
  const ForwardingModel model(g, stats, edge_delays(g, stats));
  EXPECT_EQ(model.bellman_update(DelayVector(4, 5.0)), DelayVector(4, 0.0));
}

TEST(ValueIteration, EveryIntersectionNextToAnAp) {
  // Star: leaves 1..4 each with a single road into the AP hub 5.
  std::vector<Intersection> nodes{{1, {-100, 0}, false}, {2, {100, 0}, false}, {3, {0, 100}, false},
                                  {4, {0, -300}, false}, {5, {0, 0}, true}};
  std::vector<SegmentSpec> segs;
  TrafficStats stats;
  for (IntersectionId leaf : {1, 2, 3, 4}) {
    segs.push_back({leaf, 5, std::nullopt});
    stats.per_intersection[leaf].q0[5] = 1.0;
    stats.per_segment[{leaf, 5}] = SegmentStats{0.0, 10.0, {}};
  }
  const RoadGraph g = build_graph(nodes, segs, {});
  const ForwardingModel model(g, stats, edge_delays(g, stats));
  const auto sol = value_iteration(model);
  EXPECT_EQ(sol.report.iterations, 2u);
  EXPECT_DOUBLE_EQ(sol.delays[g.index_of(1)], 10.0);
  EXPECT_DOUBLE_EQ(sol.delays[g.index_of(4)], 30.0);
}

TEST(ValueIteration, RejectsNonPositiveEpsilon) {
  const Instance inst = line_instance();
  const ForwardingModel model(inst.graph, inst.stats, {10.0, 10.0});
  SolverOptions opts;
  opts.epsilon = 0.0;
  EXPECT_THROW(value_iteration(model, opts), UsageError);
}

TEST(ValueIteration, UnreachableIntersectionsFlagged) {
  // 1 <-> 2 never head toward the AP at 3.
  std::vector<Intersection> nodes{{1, {0, 0}, false}, {2, {100, 0}, false}, {3, {200, 0}, true}};
  std::vector<SegmentSpec> segs{{1, 2, std::nullopt}, {2, 1, std::nullopt}, {2, 3, std::nullopt}};
  const RoadGraph g = build_graph(nodes, segs, {});
  TrafficStats stats;
  stats.per_intersection[1].q0[2] = 1.0;
  stats.per_intersection[2].q0 = {{1, 1.0}, {3, 0.0}};
  const ForwardingModel model(g, stats, {10.0, 10.0, 10.0});
  const auto sol = value_iteration(model);
  EXPECT_TRUE(sol.report.converged);
  EXPECT_EQ(sol.report.unreachable, (std::vector<IntersectionId>{1, 2}));
  try {
    policy_evaluation(sol.policy, model);
    FAIL() << "expected a trapped-component error";
  } catch (const SolverError& e) {
    EXPECT_NE(std::string(e.what()).find("1,2"), std::string::npos) << e.what();
  }
}

TEST(ValueIteration, GaussSeidelReachesSameFixedPoint) {
  std::mt19937_64 rng(8);
  const Instance inst = random_grid_instance(rng, {16});
  const ForwardingModel model(inst.graph, inst.stats, edge_delays(inst.graph, inst.stats));
  SolverOptions jacobi;
  jacobi.epsilon = 1e-9;
  SolverOptions gs = jacobi;
  gs.gauss_seidel = true;
  const auto a = value_iteration(model, jacobi);
  const auto b = value_iteration(model, gs);
  EXPECT_LE(b.report.iterations, a.report.iterations);
  for (std::size_t i = 0; i < a.delays.size(); ++i) EXPECT_NEAR(a.delays[i], b.delays[i], 1e-6);
}

TEST(ValueIteration, RandomGridsMonotoneConsistentAndOneStepOptimal) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Instance inst = random_grid_instance(rng, {static_cast<IntersectionId>(1 + rng() % 16)});
    const ForwardingModel model(inst.graph, inst.stats, edge_delays(inst.graph, inst.stats));
    SolverOptions opts;
    opts.epsilon = 1e-9;
    DelayVector prev(inst.graph.intersection_count(), 0.0);
    bool monotone = true;
    opts.observer = [&](std::size_t, const DelayVector& d) {
      for (std::size_t i = 0; i < d.size(); ++i) monotone = monotone && d[i] >= prev[i];
      prev = d;
    };
    const auto sol = value_iteration(model, opts);
    EXPECT_TRUE(monotone);
    ASSERT_TRUE(sol.report.converged);
    EXPECT_LT(sol.report.final_residual, opts.epsilon);
    const auto exact = policy_evaluation(sol.policy, model);
    for (std::size_t i = 0; i < exact.size(); ++i) EXPECT_NEAR(exact[i], sol.delays[i], 1e-6);

    for (NodeIndex i = 0; i < inst.graph.intersection_count(); ++i) {
      if (inst.graph.is_ap(i)) continue;
      auto outs = inst.graph.out_edges(i);
      std::vector<EdgeIndex> perm(outs.begin(), outs.end());
      std::sort(perm.begin(), perm.end());
      do {
        Policy deviated = sol.policy;
        deviated.decisions[i] = RoutingDecision{i, perm};
        const auto alt = policy_evaluation(deviated, model);
        for (std::size_t j = 0; j < alt.size(); ++j) EXPECT_GE(alt[j], exact[j] - 1e-6);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
}

TEST(ValueIteration, AddingAnApNeverIncreasesDelay) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const auto seed = rng();
    std::mt19937_64 a_rng(seed), b_rng(seed);
    const IntersectionId first = static_cast<IntersectionId>(1 + rng() % 16);
    IntersectionId second = static_cast<IntersectionId>(1 + rng() % 16);
    if (second == first) second = first % 16 + 1;
    const Instance one = random_grid_instance(a_rng, {first});
    const std::vector<IntersectionId> both{first, second};
    Instance two{one.graph.with_aps(both), one.stats};
    const ForwardingModel m1(one.graph, one.stats, edge_delays(one.graph, one.stats));
    const ForwardingModel m2(two.graph, two.stats, edge_delays(two.graph, two.stats));
    const auto d1 = value_iteration(m1).delays;
    const auto d2 = value_iteration(m2).delays;
    for (std::size_t i = 0; i < d1.size(); ++i) EXPECT_LE(d2[i], d1[i]);
  }
}

TEST(ValueIteration, ScalingDelaysScalesSolution) {
  std::mt19937_64 rng(11);
  const Instance inst = random_grid_instance(rng, {6, 11});
  const auto base_delays = edge_delays(inst.graph, inst.stats);
  const ForwardingModel base(inst.graph, inst.stats, base_delays);
  const auto ref = value_iteration(base);
  for (double lambda : {2.0, 0.25, 3.7}) {
    auto scaled_delays = base_delays;
    for (auto& d : scaled_delays) d *= lambda;
    const ForwardingModel scaled(inst.graph, inst.stats, scaled_delays);
    SolverOptions opts;
    opts.epsilon *= lambda;
    opts.ceiling *= lambda;
    const auto sol = value_iteration(scaled, opts);
    EXPECT_EQ(sol.report.iterations, ref.report.iterations);
    for (std::size_t i = 0; i < ref.delays.size(); ++i) {
      EXPECT_NEAR(sol.delays[i], lambda * ref.delays[i], 1e-12 * lambda * ref.delays[i]);
      if (!inst.graph.is_ap(static_cast<NodeIndex>(i))) {
        EXPECT_EQ(sol.policy.at(static_cast<NodeIndex>(i)).order, ref.policy.at(static_cast<NodeIndex>(i)).order);
      }
    }
  }
}

TEST(PolicyEvaluation, SingleEdgeToAp) {
  std::vector<Intersection> nodes{{1, {0, 0}, false}, {2, {70, 0}, true}};
  std::vector<SegmentSpec> segs{{1, 2, std::nullopt}};
  const RoadGraph g = build_graph(nodes, segs, {});
  TrafficStats stats;
  stats.per_intersection[1].q0[2] = 1.0;
  const ForwardingModel model(g, stats, {7.0});
  Policy policy;
  policy.decisions = {RoutingDecision{0, {0}}, std::nullopt};
  EXPECT_DOUBLE_EQ(policy_evaluation(policy, model)[0], 7.0);
}

TEST(PolicyEvaluation, MatchesChainMonteCarlo) {
  std::mt19937_64 rng(12);
  const Instance inst = random_grid_instance(rng, {16});
  const ForwardingModel model(inst.graph, inst.stats, edge_delays(inst.graph, inst.stats));
  const auto sol = value_iteration(model);
  const auto exact = policy_evaluation(sol.policy, model);
  const auto trans = model.transitions(sol.policy);
  for (IntersectionId start : {1, 6, 12}) {
    const NodeIndex s = inst.graph.index_of(start);
    const int walks = 100000;
    double sum = 0.0, sq = 0.0;
    for (int w = 0; w < walks; ++w) {
      const double x = chain_walk(trans, inst.graph, s, rng);
      sum += x;
      sq += x * x;
    }
    const double mean = sum / walks;
    const double se = std::sqrt((sq / walks - mean * mean) / walks);
    EXPECT_NEAR(mean, exact[s], 3.0 * se) << "start " << start;
  }
}
