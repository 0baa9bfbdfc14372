#include "vsn/sim/pipeline.hpp"

#include "vsn/delay_model.hpp"
#include "vsn/error.hpp"
#include "vsn/sim/mobility.hpp"

#include <fmt/format.h>

namespace vsn::sim {

std::vector<TraceRecord> training_records(const Scenario& scenario, const TrainingOptions& options) {
  if (scenario.mobility.kind == MobilityKind::Trace) {
    TraceReadOptions read;
    read.planar = scenario.mobility.planar;
    read.geo_origin = scenario.geo_origin;
    return read_trace_csv(scenario.mobility.trace_file, read);
  }
  const auto fleet = build_fleet(scenario, options.seed);
  return sample_fleet(fleet, scenario.graph, options.sample_period_s, scenario.sim_duration_s);
}

RoadGraph policy_graph(const Scenario& scenario, Protocol protocol) {
  switch (protocol) {
  case Protocol::OvdfP: return scenario.graph;
  case Protocol::OvdfU: return scenario.graph.without_buses();
  default: throw UsageError(fmt::format("{} does not use a routing table", protocol_name(protocol)));
  }
}

TrafficStats observed_stats(const Scenario& scenario, Protocol protocol, std::span<const TraceRecord> records) {
  EstimationOptions est;
  est.arrival_radius_m = scenario.intersection_radius_m;
  est.radio_range_m = scenario.radio.range_m;
  est.hop_delay_s = scenario.radio.hop_delay_s;
  est.unpredictable_only = protocol == Protocol::OvdfU;
  const RoadGraph graph = policy_graph(scenario, protocol);
  return with_defaults(estimate_from_traces(records, graph, est), graph, est.default_speed_mps);
}

PolicyBuild build_policy(const Scenario& scenario, Protocol protocol, const TrafficStats& observed,
                         const SolverOptions& solver) {
  PolicyBuild out{policy_graph(scenario, protocol), observed, {}, {}, {}};
  check_coverage(out.stats, out.graph);
  const ForwardingModel model(out.graph, out.stats, edge_delays(out.graph, out.stats));
  out.solution = value_iteration(model, solver);
  out.table = routing_table_from_policy(out.solution.policy, out.graph, std::string(protocol_name(protocol)));
  out.forwarding = resolve_table(out.table, out.graph, scenario.graph);
  return out;
}

} // namespace vsn::sim
