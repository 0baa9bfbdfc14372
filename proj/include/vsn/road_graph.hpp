#pragma once

#include "vsn/geometry.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace vsn {

using IntersectionId = std::int64_t;
using NodeIndex = std::uint32_t;
using SegmentIndex = std::uint32_t;
using EdgeIndex = std::uint32_t;

// Vehicle type: 0 for vehicles with unpredictable trajectories, v > 0 for bus line v.
using VehicleType = int;
inline constexpr VehicleType kUnpredictable = 0;

struct Intersection {
  IntersectionId id = 0;
  Point position;
  bool is_ap = false;
};

// Segment as given by the caller; the length defaults to the Euclidean
// distance between the endpoints.
struct SegmentSpec {
  IntersectionId from = 0;
  IntersectionId to = 0;
  std::optional<double> length_m;
};

struct RoadSegment {
  NodeIndex from = 0;
  NodeIndex to = 0;
  double length_m = 0.0;
};

struct BusLine {
  VehicleType type = 1;
  std::vector<IntersectionId> route;
  bool cyclic = false;

  friend bool operator==(const BusLine&, const BusLine&) = default;
};

// Edge of the augmented graph. vtype 0 edges mirror a road segment; vtype v
// edges are shortcuts along bus line v and list the segments the bus drives.
struct AugmentedEdge {
  NodeIndex from = 0;
  NodeIndex to = 0;
  VehicleType vtype = kUnpredictable;
  std::vector<SegmentIndex> segments;

  bool single_segment() const { return segments.size() == 1; }
};

// Road network with intersections sorted by id, so index order equals id order.
// Immutable once built; build_graph and augment are the only producers.
class RoadGraph {
public:
  std::size_t intersection_count() const { return intersections_.size(); }
  std::span<const Intersection> intersections() const { return intersections_; }
  const Intersection& intersection(NodeIndex i) const { return intersections_.at(i); }
  IntersectionId id_of(NodeIndex i) const { return intersections_.at(i).id; }
  bool is_ap(NodeIndex i) const { return intersections_.at(i).is_ap; }
  std::vector<NodeIndex> ap_indices() const;

  std::optional<NodeIndex> find(IntersectionId id) const;
  // Throws UsageError for ids not in the graph.
  NodeIndex index_of(IntersectionId id) const;

  std::span<const RoadSegment> segments() const { return segments_; }
  const RoadSegment& segment(SegmentIndex s) const { return segments_.at(s); }
  std::optional<SegmentIndex> find_segment(NodeIndex from, NodeIndex to) const;

  std::span<const AugmentedEdge> edges() const { return edges_; }
  const AugmentedEdge& edge(EdgeIndex e) const { return edges_.at(e); }
  double edge_length(EdgeIndex e) const;
  std::optional<EdgeIndex> find_edge(NodeIndex from, NodeIndex to, VehicleType vtype) const;

  // Outgoing edges of `i`, ordered by (vtype, destination id).
  std::span<const EdgeIndex> out_edges(NodeIndex i) const;
  // Same, addressed by external id; throws UsageError for unknown ids.
  std::span<const EdgeIndex> out_edges_of(IntersectionId id) const { return out_edges(index_of(id)); }

  std::span<const BusLine> bus_lines() const { return bus_lines_; }
  const BusLine* bus_line(VehicleType type) const;

  // Copy of this graph with the AP set replaced.
  RoadGraph with_aps(std::span<const IntersectionId> ap_ids) const;

  // Copy with every bus shortcut and bus line removed (the plain road graph G).
  RoadGraph without_buses() const;

private:
  friend RoadGraph build_graph(std::vector<Intersection>, std::span<const SegmentSpec>,
                               std::span<const IntersectionId>);
  friend RoadGraph augment(const RoadGraph&, std::span<const BusLine>);

  void rebuild_index();

  std::vector<Intersection> intersections_;
  std::vector<RoadSegment> segments_;
  std::vector<AugmentedEdge> edges_;
  std::vector<std::size_t> out_offsets_;
  std::vector<EdgeIndex> out_list_;
  std::vector<BusLine> bus_lines_;
};

// Builds the plain road graph: one vtype-0 edge per segment. Intersections
// listed in `ap_ids` (or flagged is_ap) host an access point.
RoadGraph build_graph(std::vector<Intersection> intersections, std::span<const SegmentSpec> segments,
                      std::span<const IntersectionId> ap_ids);

// Adds bus shortcut edges: from every route position to every later route
// intersection (one wrap for cyclic lines). Duplicate (from, to, type)
// shortcuts keep the one with the shorter driven length. Re-applying a line
// that is already present is a no-op.
RoadGraph augment(const RoadGraph& graph, std::span<const BusLine> bus_lines);

// Intersections a bus of `line` will still reach after leaving `stop_position`
// of its route, in driving order (bounded by one loop for cyclic lines).
std::vector<IntersectionId> downstream_stops(const BusLine& line, std::size_t stop_position);

} // namespace vsn
