#pragma once

#include "vsn/road_graph.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace vsn {

struct GeoOrigin {
  double lat = 0.0;
  double lon = 0.0;
};

// On-disk form of a road network: intersections, segments, bus lines and an
// optional geographic anchor used to project lat/lon traces.
struct GraphDocument {
  std::vector<Intersection> intersections;
  std::vector<SegmentSpec> segments;
  std::vector<BusLine> bus_lines;
  std::optional<GeoOrigin> geo_origin;
};

GraphDocument parse_graph_document(const nlohmann::json& j);
nlohmann::json to_json(const GraphDocument& doc);
GraphDocument load_graph_document(const std::filesystem::path& path);

// Plain graph plus bus shortcuts for every line in the document.
RoadGraph make_graph(const GraphDocument& doc);
GraphDocument document_of(const RoadGraph& graph, std::optional<GeoOrigin> geo_origin = std::nullopt);

RoadGraph load_graph(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
// Writes pretty-printed JSON with a trailing newline.
void write_json_file(const std::filesystem::path& path, const nlohmann::json& j);

} // namespace vsn
