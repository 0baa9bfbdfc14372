#pragma once

#include "vsn/road_graph.hpp"
#include "vsn/traffic_stats.hpp"

#include <vector>

namespace vsn {

// Expected time for a packet to cross a road segment of length `length_m`:
// relayed hop by hop when a neighbor is within range (probability
// 1 - exp(-range * density)), otherwise carried at the traffic speed.
double v2v_delay(double length_m, double speed_mps, double density_per_m, double range_m, double hop_delay_s);

// Time for a type-v bus to carry a packet along every segment of `edge`.
double bus_delay(const AugmentedEdge& edge, const RoadGraph& graph, const TrafficStats& stats);

// Delay of every augmented edge, indexed by EdgeIndex. vtype-0 edges use the
// relay model; bus edges (including single-segment ones) use the carry model.
std::vector<double> edge_delays(const RoadGraph& graph, const TrafficStats& stats);

} // namespace vsn
