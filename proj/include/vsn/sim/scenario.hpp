#pragma once

#include "vsn/road_graph.hpp"
#include "vsn/traffic_stats.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace vsn::sim {

enum class Protocol { OvdfP, OvdfU, Gpsr, Epidemic };

std::string_view protocol_name(Protocol p);
// Accepts OVDF-P, OVDF-U, GPSR, EPIDEMIC (case-insensitive); UsageError otherwise.
Protocol parse_protocol(std::string_view name);
inline bool uses_routing_table(Protocol p) { return p == Protocol::OvdfP || p == Protocol::OvdfU; }

struct RadioOptions {
  double range_m = 150.0;
  double beacon_period_s = 1.0;
  double hop_delay_s = 0.004;
  int packet_size_bytes = 512;
  // Packets a node may send plus receive per beacon period.
  int transfer_budget = 250;
  // No budget, and a batch completes after a single hop delay.
  bool ideal = false;
};

struct GenerationRule {
  double distance_m = 100.0;
  double interval_s = 30.0;
};

enum class MobilityKind { Synthetic, Trace };

struct MobilitySpec {
  MobilityKind kind = MobilityKind::Synthetic;
  int vehicles = 0; // total fleet, buses included (synthetic)
  int buses = 0;    // spread round-robin over the bus lines (synthetic)
  std::filesystem::path trace_file;
  bool planar = true;
};

struct MetricsOptions {
  double square_m = 500.0;
  double distance_bin_m = 200.0;
  double far_threshold_m = 400.0;
  double coverage_share = 0.9;
};

struct Scenario {
  std::string name;
  RoadGraph graph;        // augmented with the bus lines
  TrafficStats stats;     // drives synthetic mobility
  MobilitySpec mobility;
  RadioOptions radio;
  GenerationRule generation;
  MetricsOptions metrics;
  double deadline_s = 600.0;
  double sim_duration_s = 3600.0;
  double intersection_radius_m = 30.0;
  std::size_t buffer_capacity = 5000;
  std::uint64_t seed = 1;
  std::optional<std::pair<double, double>> geo_origin;

  // Content hash over the graph, the mobility statistics and the parameters
  // that shape results; seed excluded so seed sweeps compare.
  std::string hash() const;
};

// Scenario JSON. Graph and stats are file paths relative to the scenario file.
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json scenario_json(const Scenario& s, const std::string& graph_file, const std::string& stats_file);

void check_scenario(const Scenario& s);

} // namespace vsn::sim
