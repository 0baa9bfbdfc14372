#include "vsn/routing_table.hpp"

#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"

#include <fmt/format.h>

namespace vsn {

RoutingTable routing_table_from_policy(const Policy& policy, const RoadGraph& graph, std::string protocol) {
  RoutingTable table{std::move(protocol), std::vector<std::vector<EdgeIndex>>(graph.intersection_count())};
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (!graph.is_ap(i)) table.order[i] = policy.at(i).order;
  }
  return table;
}

nlohmann::json to_json(const RoutingTable& table, const RoadGraph& graph) {
  nlohmann::json j;
  j["protocol"] = table.protocol;
  j["intersections"] = nlohmann::json::array();
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (graph.is_ap(i)) continue;
    nlohmann::json order = nlohmann::json::array();
    for (EdgeIndex e : table.order.at(i)) {
      order.push_back({{"to", graph.id_of(graph.edge(e).to)}, {"vtype", graph.edge(e).vtype}});
    }
    j["intersections"].push_back({{"id", graph.id_of(i)}, {"order", order}});
  }
  return j;
}

RoutingTable parse_routing_table(const nlohmann::json& j, const RoadGraph& graph) {
  RoutingTable table;
  table.order.resize(graph.intersection_count());
  try {
    table.protocol = j.value("protocol", std::string{});
    std::vector<bool> seen(graph.intersection_count(), false);
    for (const auto& entry : j.at("intersections")) {
      const auto id = entry.at("id").get<IntersectionId>();
      auto i = graph.find(id);
      if (!i) throw ValidationError(fmt::format("routing table names unknown intersection {}", id));
      if (seen[*i]) throw ValidationError(fmt::format("routing table lists intersection {} twice", id));
      seen[*i] = true;
      for (const auto& hop : entry.at("order")) {
        const auto to = hop.at("to").get<IntersectionId>();
        const auto vtype = hop.at("vtype").get<VehicleType>();
        auto j_idx = graph.find(to);
        auto e = j_idx ? graph.find_edge(*i, *j_idx, vtype) : std::nullopt;
        if (!e) throw ValidationError(fmt::format("routing table edge {}->{} (type {}) is not in the graph", id, to, vtype));
        table.order[*i].push_back(*e);
      }
    }
    for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
      if (!graph.is_ap(i) && !seen[i]) {
        throw ValidationError(fmt::format("routing table has no entry for intersection {}", graph.id_of(i)));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed routing table: {}", e.what()));
  }
  return table;
}

RoutingTable load_routing_table(const std::filesystem::path& path, const RoadGraph& graph) {
  return parse_routing_table(read_json_file(path), graph);
}

} // namespace vsn
