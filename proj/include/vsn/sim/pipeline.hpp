#pragma once

#include "vsn/policy_solver.hpp"
#include "vsn/routing_table.hpp"
#include "vsn/sim/scenario.hpp"
#include "vsn/sim/simulator.hpp"
#include "vsn/traffic_stats.hpp"

#include <cstdint>

namespace vsn::sim {

struct TrainingOptions {
  std::uint64_t seed = 0x5eed; // synthetic training fleet; disjoint from evaluation seeds
  double sample_period_s = 2.0;
};

// GPS-like records the OVDF policies are trained on: the scenario's trace, or
// a sampled synthetic run of the scenario's fleet.
std::vector<TraceRecord> training_records(const Scenario& scenario, const TrainingOptions& options = {});

// Observed statistics for one protocol: OVDF-U sees every vehicle as
// unpredictable on the bus-free road graph, OVDF-P keeps bus lines.
TrafficStats observed_stats(const Scenario& scenario, Protocol protocol, std::span<const TraceRecord> records);

// The graph a protocol's routing table is solved on.
RoadGraph policy_graph(const Scenario& scenario, Protocol protocol);

struct PolicyBuild {
  RoadGraph graph;
  TrafficStats stats;
  Solution solution;
  RoutingTable table;
  ForwardingTable forwarding; // resolved against the scenario graph
};

// Solves the OVDF routing table for `protocol` from observed statistics.
PolicyBuild build_policy(const Scenario& scenario, Protocol protocol, const TrafficStats& observed,
                         const SolverOptions& solver = {});

} // namespace vsn::sim
