#pragma once

#include "vsn/policy_solver.hpp"
#include "vsn/road_graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace vsn {

// Priority-ordered forwarding table loaded on vehicles. Entries at each
// non-AP intersection name augmented edges of the graph it was built for.
struct RoutingTable {
  std::string protocol; // e.g. "OVDF-P" or "OVDF-U"
  std::vector<std::vector<EdgeIndex>> order; // indexed by NodeIndex, empty at APs

  std::span<const EdgeIndex> at(NodeIndex i) const { return order.at(i); }
};

RoutingTable routing_table_from_policy(const Policy& policy, const RoadGraph& graph, std::string protocol);

// JSON: {"protocol": ..., "intersections": [{"id": i, "order": [{"to": j, "vtype": v}, ...]}]}
nlohmann::json to_json(const RoutingTable& table, const RoadGraph& graph);
RoutingTable parse_routing_table(const nlohmann::json& j, const RoadGraph& graph);
RoutingTable load_routing_table(const std::filesystem::path& path, const RoadGraph& graph);

} // namespace vsn
