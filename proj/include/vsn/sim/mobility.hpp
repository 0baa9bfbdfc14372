#pragma once

#include "vsn/road_graph.hpp"
#include "vsn/sim/scenario.hpp"
#include "vsn/traffic_stats.hpp"

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace vsn::sim {

// Constant-speed motion along one segment from offset off0 (at t0) to off1 (at t1).
struct Piece {
  double t0 = 0.0;
  double t1 = 0.0;
  SegmentIndex segment = 0;
  double off0 = 0.0;
  double off1 = 0.0;
};

// Whole-run motion of one vehicle. Between pieces the vehicle waits where the
// previous piece ended; a piece that does not start where the previous one
// ended is a jump (the vehicle left the map and re-entered).
struct Trajectory {
  std::string name;
  VehicleType vtype = kUnpredictable;
  double t_begin = 0.0;
  double t_end = 0.0;
  std::vector<Piece> pieces;
};

struct Location {
  bool present = false;
  std::size_t piece = 0; // piece in progress, or the last one finished
  SegmentIndex segment = 0;
  double offset = 0.0;
  Point position;
};

Point point_on(const RoadGraph& graph, SegmentIndex segment, double offset);

// Location lookups for non-decreasing query times; O(1) amortized per query.
class Cursor {
public:
  explicit Cursor(const Trajectory& traj) : traj_(&traj) {}
  Location at(double t, const RoadGraph& graph);

private:
  const Trajectory* traj_;
  std::size_t next_ = 0;
};

// Where a vehicle will leave from next: the intersection it is at (within
// `radius_m`) or approaching, and the segment it takes from there.
struct Passage {
  NodeIndex node = 0;
  bool in_disc = false;
  std::optional<SegmentIndex> heading;
  std::size_t heading_piece = 0;
};

Passage passage(const Trajectory& traj, const Location& loc, const RoadGraph& graph, double radius_m);

// Intersections reached after leaving on the heading piece, in order, without
// crossing a jump; at most `horizon` of them.
std::vector<NodeIndex> upcoming_nodes(const Trajectory& traj, std::size_t heading_piece, const RoadGraph& graph,
                                      std::size_t horizon);

// Vehicles 0..(vehicles - buses - 1) are type 0 and turn by the q0 fractions
// of `stats`; the rest are buses assigned round-robin to the graph's bus lines.
// Everyone starts at a uniformly random point and stays for the whole run.
std::vector<Trajectory> synthetic_fleet(const RoadGraph& graph, const TrafficStats& stats, int vehicles, int buses,
                                        double duration_s, std::mt19937_64& rng);

// Map-matched trace motion: records are snapped and consecutive fixes joined
// by the shortest road path at constant speed. Time zero is the earliest record.
std::vector<Trajectory> trace_fleet(std::span<const TraceRecord> records, const RoadGraph& graph,
                                    double snap_threshold_m = kDefaultSnapThresholdM);

// GPS-like samples of every present vehicle every `period_s`.
std::vector<TraceRecord> sample_fleet(std::span<const Trajectory> fleet, const RoadGraph& graph, double period_s,
                                      double duration_s);

enum class GenerationReason { Distance, Interval, Intersection };

struct Generation {
  double time = 0.0;
  GenerationReason reason = GenerationReason::Interval;
  Point origin;
  std::optional<NodeIndex> node; // intersection reached, for the intersection rule
};

// Sensing events of one vehicle up to `until_s`: after moving `distance_m`
// or idling `interval_s` since the last one, and at every intersection reached.
std::vector<Generation> generation_schedule(const Trajectory& traj, const RoadGraph& graph, const GenerationRule& rule,
                                            double until_s);

} // namespace vsn::sim
