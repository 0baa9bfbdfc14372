#include "vsn/delay_model.hpp"

#include "vsn/error.hpp"

#include <fmt/format.h>

#include <cmath>

namespace vsn {

double v2v_delay(double length_m, double speed_mps, double density_per_m, double range_m, double hop_delay_s) {
  if (!(length_m > 0.0) || !(speed_mps > 0.0) || !(density_per_m >= 0.0) || !(range_m > 0.0) ||
      !(hop_delay_s > 0.0) || !std::isfinite(length_m) || !std::isfinite(speed_mps) || !std::isfinite(range_m) ||
      !std::isfinite(hop_delay_s)) {
    throw UsageError(fmt::format("v2v_delay domain violation: l={} s={} rho={} R={} c={}", length_m, speed_mps,
                                 density_per_m, range_m, hop_delay_s));
  }
  const double isolated = std::exp(-range_m * density_per_m);
  const double relay = length_m * hop_delay_s / range_m;
  const double carry = length_m / speed_mps;
  return (1.0 - isolated) * relay + isolated * carry;
}

double bus_delay(const AugmentedEdge& edge, const RoadGraph& graph, const TrafficStats& stats) {
  if (edge.vtype <= 0) throw UsageError("bus_delay needs a bus edge");
  if (edge.segments.empty()) throw UsageError("bus edge without segments");
  double total = 0.0;
  for (SegmentIndex si : edge.segments) {
    const auto& seg = graph.segment(si);
    const IntersectionId from = graph.id_of(seg.from);
    const IntersectionId to = graph.id_of(seg.to);
    const SegmentStats* s = stats.segment(from, to);
    if (s == nullptr || !s->bus_speed_mps.contains(edge.vtype)) {
      throw ValidationError(fmt::format("no speed for bus {} on segment {}->{}", edge.vtype, from, to));
    }
    total += seg.length_m / s->bus_speed_mps.at(edge.vtype);
  }
  return total;
}

std::vector<double> edge_delays(const RoadGraph& graph, const TrafficStats& stats) {
  std::vector<double> out(graph.edges().size());
  for (EdgeIndex e = 0; e < out.size(); ++e) {
    const auto& edge = graph.edge(e);
    if (edge.vtype != kUnpredictable) {
      out[e] = bus_delay(edge, graph, stats);
      continue;
    }
    const auto& seg = graph.segment(edge.segments.front());
    const SegmentStats* s = stats.segment(graph.id_of(seg.from), graph.id_of(seg.to));
    if (s == nullptr) {
      throw ValidationError(
          fmt::format("no stats for segment {}->{}", graph.id_of(seg.from), graph.id_of(seg.to)));
    }
    out[e] = v2v_delay(seg.length_m, s->speed_mps, s->density_per_m, stats.radio_range_m, stats.hop_delay_s);
  }
  return out;
}

} // namespace vsn
