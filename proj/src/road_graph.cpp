#include "vsn/road_graph.hpp"

#include "vsn/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

namespace vsn {

namespace {

bool edge_less(const AugmentedEdge& a, const AugmentedEdge& b) {
  return std::tie(a.from, a.vtype, a.to) < std::tie(b.from, b.vtype, b.to);
}

// Closing a loop by repeating the first stop is accepted for cyclic lines.
BusLine normalized(BusLine line) {
  if (line.cyclic && line.route.size() > 2 && line.route.front() == line.route.back()) {
    line.route.pop_back();
  }
  return line;
}

} // namespace

std::vector<NodeIndex> RoadGraph::ap_indices() const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < intersections_.size(); ++i) {
    if (intersections_[i].is_ap) out.push_back(i);
  }
  return out;
}

std::optional<NodeIndex> RoadGraph::find(IntersectionId id) const {
  auto it = std::lower_bound(intersections_.begin(), intersections_.end(), id,
                             [](const Intersection& n, IntersectionId v) { return n.id < v; });
  if (it == intersections_.end() || it->id != id) return std::nullopt;
  return static_cast<NodeIndex>(it - intersections_.begin());
}

NodeIndex RoadGraph::index_of(IntersectionId id) const {
  auto idx = find(id);
  if (!idx) throw UsageError(fmt::format("unknown intersection {}", id));
  return *idx;
}

std::optional<SegmentIndex> RoadGraph::find_segment(NodeIndex from, NodeIndex to) const {
  auto it = std::lower_bound(segments_.begin(), segments_.end(), std::pair{from, to},
                             [](const RoadSegment& s, std::pair<NodeIndex, NodeIndex> key) {
                               return std::pair{s.from, s.to} < key;
                             });
  if (it == segments_.end() || it->from != from || it->to != to) return std::nullopt;
  return static_cast<SegmentIndex>(it - segments_.begin());
}

double RoadGraph::edge_length(EdgeIndex e) const {
  double total = 0.0;
  for (SegmentIndex s : edges_.at(e).segments) total += segments_[s].length_m;
  return total;
}

std::optional<EdgeIndex> RoadGraph::find_edge(NodeIndex from, NodeIndex to, VehicleType vtype) const {
  for (EdgeIndex e : out_edges(from)) {
    if (edges_[e].to == to && edges_[e].vtype == vtype) return e;
  }
  return std::nullopt;
}

std::span<const EdgeIndex> RoadGraph::out_edges(NodeIndex i) const {
  if (i >= intersections_.size()) throw UsageError(fmt::format("unknown intersection index {}", i));
  return std::span<const EdgeIndex>(out_list_).subspan(out_offsets_[i], out_offsets_[i + 1] - out_offsets_[i]);
}

const BusLine* RoadGraph::bus_line(VehicleType type) const {
  for (const auto& line : bus_lines_) {
    if (line.type == type) return &line;
  }
  return nullptr;
}

RoadGraph RoadGraph::with_aps(std::span<const IntersectionId> ap_ids) const {
  RoadGraph copy = *this;
  for (auto& n : copy.intersections_) n.is_ap = false;
  for (IntersectionId id : ap_ids) copy.intersections_[index_of(id)].is_ap = true;
  return copy;
}

RoadGraph RoadGraph::without_buses() const {
  RoadGraph copy = *this;
  std::erase_if(copy.edges_, [](const AugmentedEdge& e) { return e.vtype != kUnpredictable; });
  copy.bus_lines_.clear();
  copy.rebuild_index();
  return copy;
}

void RoadGraph::rebuild_index() {
  std::sort(edges_.begin(), edges_.end(), edge_less);
  out_offsets_.assign(intersections_.size() + 1, 0);
  for (const auto& e : edges_) ++out_offsets_[e.from + 1];
  for (std::size_t i = 1; i < out_offsets_.size(); ++i) out_offsets_[i] += out_offsets_[i - 1];
  // Edges are sorted by (from, vtype, to), so each node's slice is already in out-edge order.
  out_list_.resize(edges_.size());
  for (EdgeIndex e = 0; e < edges_.size(); ++e) out_list_[e] = e;
}

RoadGraph build_graph(std::vector<Intersection> intersections, std::span<const SegmentSpec> segments,
                      std::span<const IntersectionId> ap_ids) {
  RoadGraph g;
  std::sort(intersections.begin(), intersections.end(),
            [](const Intersection& a, const Intersection& b) { return a.id < b.id; });
  for (std::size_t i = 0; i < intersections.size(); ++i) {
    const auto& n = intersections[i];
    if (i > 0 && intersections[i - 1].id == n.id) {
      throw ValidationError(fmt::format("duplicate intersection id {}", n.id));
    }
    if (!std::isfinite(n.position.x) || !std::isfinite(n.position.y)) {
      throw ValidationError(fmt::format("intersection {} has a non-finite position", n.id));
    }
  }
  g.intersections_ = std::move(intersections);

  for (IntersectionId id : ap_ids) {
    auto idx = g.find(id);
    if (!idx) throw ValidationError(fmt::format("AP id {} is not an intersection", id));
    g.intersections_[*idx].is_ap = true;
  }

  for (const auto& spec : segments) {
    auto from = g.find(spec.from);
    auto to = g.find(spec.to);
    if (!from || !to) {
      throw ValidationError(fmt::format("segment {}->{} has a dangling endpoint", spec.from, spec.to));
    }
    if (*from == *to) throw ValidationError(fmt::format("segment {}->{} is a self loop", spec.from, spec.to));
    const double length =
        spec.length_m.value_or(distance(g.intersections_[*from].position, g.intersections_[*to].position));
    if (!(length > 0.0) || !std::isfinite(length)) {
      throw ValidationError(fmt::format("segment {}->{} has non-positive length {}", spec.from, spec.to, length));
    }
    g.segments_.push_back({*from, *to, length});
  }
  std::sort(g.segments_.begin(), g.segments_.end(),
            [](const RoadSegment& a, const RoadSegment& b) { return std::tie(a.from, a.to) < std::tie(b.from, b.to); });
  for (std::size_t s = 1; s < g.segments_.size(); ++s) {
    if (g.segments_[s].from == g.segments_[s - 1].from && g.segments_[s].to == g.segments_[s - 1].to) {
      throw ValidationError(fmt::format("duplicate segment {}->{}", g.id_of(g.segments_[s].from),
                                        g.id_of(g.segments_[s].to)));
    }
  }

  g.edges_.reserve(g.segments_.size());
  for (SegmentIndex s = 0; s < g.segments_.size(); ++s) {
    g.edges_.push_back({g.segments_[s].from, g.segments_[s].to, kUnpredictable, {s}});
  }
  g.rebuild_index();
  return g;
}

std::vector<IntersectionId> downstream_stops(const BusLine& line, std::size_t stop_position) {
  const std::size_t n = line.route.size();
  std::vector<IntersectionId> out;
  if (stop_position >= n) return out;
  const std::size_t horizon = line.cyclic ? stop_position + n : n;
  for (std::size_t r = stop_position + 1; r < horizon; ++r) out.push_back(line.route[r % n]);
  return out;
}

RoadGraph augment(const RoadGraph& graph, std::span<const BusLine> bus_lines) {
  RoadGraph g = graph;

  struct Shortcut {
    std::vector<SegmentIndex> segments;
    double length = 0.0;
  };
  std::map<std::tuple<NodeIndex, NodeIndex, VehicleType>, Shortcut> shortcuts;
  for (const auto& e : g.edges_) {
    if (e.vtype == kUnpredictable) continue;
    double len = 0.0;
    for (SegmentIndex s : e.segments) len += g.segments_[s].length_m;
    shortcuts[{e.from, e.to, e.vtype}] = {e.segments, len};
  }

  for (const auto& raw : bus_lines) {
    const BusLine line = normalized(raw);
    if (line.type <= 0) throw ValidationError(fmt::format("bus line type {} must be positive", line.type));
    if (line.route.size() < 2) throw ValidationError(fmt::format("bus line {} needs at least two stops", line.type));
    if (const BusLine* existing = g.bus_line(line.type)) {
      if (*existing == line) continue;
      throw ValidationError(fmt::format("bus line type {} defined twice", line.type));
    }

    const std::size_t n = line.route.size();
    std::vector<NodeIndex> stops(n);
    for (std::size_t r = 0; r < n; ++r) {
      auto idx = g.find(line.route[r]);
      if (!idx) throw ValidationError(fmt::format("bus line {} visits unknown intersection {}", line.type, line.route[r]));
      stops[r] = *idx;
    }
    // steps[r] is the segment driven from stop r to stop r + 1 (mod n when cyclic).
    const std::size_t step_count = line.cyclic ? n : n - 1;
    std::vector<SegmentIndex> steps(step_count);
    for (std::size_t r = 0; r < step_count; ++r) {
      auto seg = g.find_segment(stops[r], stops[(r + 1) % n]);
      if (!seg) {
        throw ValidationError(fmt::format("bus line {} step {}->{} is not a road segment", line.type,
                                          line.route[r], line.route[(r + 1) % n]));
      }
      steps[r] = *seg;
    }

    for (std::size_t r = 0; r < n; ++r) {
      std::vector<SegmentIndex> path;
      double len = 0.0;
      const std::size_t horizon = line.cyclic ? r + n : n;
      for (std::size_t r2 = r + 1; r2 < horizon; ++r2) {
        const SegmentIndex step = steps[(r2 - 1) % n];
        path.push_back(step);
        len += g.segments_[step].length_m;
        const NodeIndex to = stops[r2 % n];
        if (to == stops[r]) continue;
        auto key = std::tuple{stops[r], to, line.type};
        auto it = shortcuts.find(key);
        if (it == shortcuts.end() || len < it->second.length) shortcuts[key] = {path, len};
      }
    }
    g.bus_lines_.push_back(line);
  }

  std::erase_if(g.edges_, [](const AugmentedEdge& e) { return e.vtype != kUnpredictable; });
  for (auto& [key, sc] : shortcuts) {
    auto [from, to, vtype] = key;
    g.edges_.push_back({from, to, vtype, std::move(sc.segments)});
  }
  std::sort(g.bus_lines_.begin(), g.bus_lines_.end(),
            [](const BusLine& a, const BusLine& b) { return a.type < b.type; });
  g.rebuild_index();
  return g;
}

} // namespace vsn
