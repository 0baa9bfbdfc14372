#pragma once

#include "vsn/road_graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace vsn {

// Turning and contact statistics observed at one intersection.
//   q0[j]: fraction of arrivals that are type-0 vehicles continuing to neighbor j
//   p0[j]: probability of meeting a type-0 vehicle that continues to j
//   qv[v]: fraction of arrivals that are type-v buses
//   pv[v]: probability of meeting a type-v bus
struct IntersectionStats {
  std::map<IntersectionId, double> q0;
  std::map<IntersectionId, double> p0;
  std::map<VehicleType, double> qv;
  std::map<VehicleType, double> pv;

  double q_total() const;
  friend bool operator==(const IntersectionStats&, const IntersectionStats&) = default;
};

struct SegmentStats {
  double density_per_m = 0.0;
  double speed_mps = 0.0;
  std::map<VehicleType, double> bus_speed_mps;

  friend bool operator==(const SegmentStats&, const SegmentStats&) = default;
};

using SegmentKey = std::pair<IntersectionId, IntersectionId>;

struct TrafficStats {
  std::map<IntersectionId, IntersectionStats> per_intersection;
  std::map<SegmentKey, SegmentStats> per_segment;
  double radio_range_m = 150.0;
  double hop_delay_s = 0.004;
  // Non-AP intersections without observed arrivals.
  std::set<IntersectionId> missing;

  const IntersectionStats* intersection(IntersectionId id) const;
  const SegmentStats* segment(IntersectionId from, IntersectionId to) const;

  friend bool operator==(const TrafficStats&, const TrafficStats&) = default;
};

inline constexpr double kNormalizationTolerance = 1e-9;

// Throws ValidationError naming the first intersection whose fractions do not
// sum to one, or any value outside [0, 1] or non-positive speed.
void check_normalization(const TrafficStats& stats);

// Checks that `stats` covers every non-AP intersection and every segment of
// `graph` and that keys refer to real neighbors and bus lines. Intersections
// listed as missing are accepted only when `allow_missing` is set.
void check_coverage(const TrafficStats& stats, const RoadGraph& graph, bool allow_missing = false);

// Fills missing or absent non-AP intersections with uniform turning over the
// road neighbors and no contacts, and absent segments with `default_speed_mps`.
TrafficStats with_defaults(TrafficStats stats, const RoadGraph& graph, double default_speed_mps = 8.0);

TrafficStats parse_stats(const nlohmann::json& j);
nlohmann::json to_json(const TrafficStats& stats);
// Parses and checks normalization; coverage is checked by the consumer that knows the graph.
TrafficStats load_stats(const std::filesystem::path& path);
void save_stats(const std::filesystem::path& path, const TrafficStats& stats);

// ---------------------------------------------------------------------------
// Estimation from GPS traces

struct TraceRecord {
  std::string vehicle_id;
  VehicleType vtype = kUnpredictable;
  double timestamp = 0.0;
  Point position; // planar meters
  std::size_t line = 0; // 1-based line in the source file, 0 if synthetic
};

struct SnapResult {
  SegmentIndex segment = 0;
  double offset_m = 0.0;   // along-track distance from the segment start
  double distance_m = 0.0; // perpendicular distance to the segment
};

inline constexpr double kDefaultSnapThresholdM = 30.0;

// Nearest segment by perpendicular distance, ties to the smaller (from, to) id
// pair; nullopt when nothing lies within `threshold_m`.
std::optional<SnapResult> snap(Point p, const RoadGraph& graph, double threshold_m = kDefaultSnapThresholdM);

struct EstimationOptions {
  double dwell_window_s = 30.0;
  double arrival_radius_m = 30.0;
  double snap_threshold_m = kDefaultSnapThresholdM;
  double default_speed_mps = 8.0;
  double radio_range_m = 150.0;
  double hop_delay_s = 0.004;
  // Count buses as ordinary type-0 vehicles (statistics for a bus-agnostic policy).
  bool unpredictable_only = false;
};

// Per-vehicle observation counts. Merging is associative and commutative, so
// record sets may be partitioned by vehicle and reduced in any order.
struct TrafficCounts {
  std::map<std::pair<NodeIndex, NodeIndex>, std::size_t> type0_heading; // (i, j) -> arrivals at i continuing to j
  std::map<std::pair<NodeIndex, VehicleType>, std::size_t> bus_arrivals;
  std::map<SegmentIndex, double> occupancy_s;
  std::map<SegmentIndex, std::pair<double, std::size_t>> speed_sum;
  std::map<std::pair<SegmentIndex, VehicleType>, std::pair<double, std::size_t>> bus_speed_sum;

  void merge(const TrafficCounts& other);
};

// Counts for the records of a single vehicle, already in time order.
TrafficCounts count_vehicle(std::span<const TraceRecord> records, const RoadGraph& graph,
                            const EstimationOptions& options);

TrafficStats finalize_stats(const TrafficCounts& counts, const RoadGraph& graph, double observation_s,
                            const EstimationOptions& options);

TrafficStats estimate_from_traces(std::span<const TraceRecord> records, const RoadGraph& graph,
                                  const EstimationOptions& options = {});

// Contact probability under a Poisson meeting model: 1 - exp(-rate * window).
double contact_probability(double rate_per_s, double window_s);

struct TraceReadOptions {
  // Columns x,y in meters rather than lat,lon in degrees.
  bool planar = false;
  std::optional<std::pair<double, double>> geo_origin; // (lat, lon), required unless planar
};

// Reads `vehicle_id,vtype,timestamp,lat,lon` (or `...,x,y`) CSV. Timestamps
// must be non-decreasing per vehicle.
std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path, const TraceReadOptions& options);
void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRecord> records);

// Rejects records whose vtype is neither 0 nor a bus line of `graph`.
void check_trace_types(std::span<const TraceRecord> records, const RoadGraph& graph);

} // namespace vsn
