#include "vsn/graph_io.hpp"

#include "vsn/error.hpp"

#include <fmt/format.h>

#include <fstream>

namespace vsn {

namespace {

template <typename T>
T required(const nlohmann::json& j, const char* key, const char* what) {
  if (!j.contains(key)) throw ValidationError(fmt::format("{} is missing field '{}'", what, key));
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("{} field '{}': {}", what, key, e.what()));
  }
}

} // namespace

GraphDocument parse_graph_document(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("graph file must hold a JSON object");
  GraphDocument doc;
  for (const auto& n : j.value("intersections", nlohmann::json::array())) {
    doc.intersections.push_back({required<IntersectionId>(n, "id", "intersection"),
                                 {required<double>(n, "x", "intersection"), required<double>(n, "y", "intersection")},
                                 n.value("is_ap", false)});
  }
  for (const auto& s : j.value("segments", nlohmann::json::array())) {
    SegmentSpec spec{required<IntersectionId>(s, "from", "segment"), required<IntersectionId>(s, "to", "segment"),
                     std::nullopt};
    if (s.contains("length_m") && !s.at("length_m").is_null()) spec.length_m = s.at("length_m").get<double>();
    doc.segments.push_back(spec);
  }
  for (const auto& b : j.value("bus_lines", nlohmann::json::array())) {
    doc.bus_lines.push_back({required<VehicleType>(b, "type", "bus line"),
                             required<std::vector<IntersectionId>>(b, "route", "bus line"), b.value("cyclic", false)});
  }
  if (j.contains("geo_origin")) {
    const auto& g = j.at("geo_origin");
    doc.geo_origin = GeoOrigin{required<double>(g, "lat", "geo_origin"), required<double>(g, "lon", "geo_origin")};
  }
  return doc;
}

nlohmann::json to_json(const GraphDocument& doc) {
  nlohmann::json j;
  j["intersections"] = nlohmann::json::array();
  for (const auto& n : doc.intersections) {
    j["intersections"].push_back({{"id", n.id}, {"x", n.position.x}, {"y", n.position.y}, {"is_ap", n.is_ap}});
  }
  j["segments"] = nlohmann::json::array();
  for (const auto& s : doc.segments) {
    nlohmann::json seg{{"from", s.from}, {"to", s.to}};
    if (s.length_m) seg["length_m"] = *s.length_m;
    j["segments"].push_back(seg);
  }
  j["bus_lines"] = nlohmann::json::array();
  for (const auto& b : doc.bus_lines) {
    j["bus_lines"].push_back({{"type", b.type}, {"route", b.route}, {"cyclic", b.cyclic}});
  }
  if (doc.geo_origin) j["geo_origin"] = {{"lat", doc.geo_origin->lat}, {"lon", doc.geo_origin->lon}};
  return j;
}

GraphDocument load_graph_document(const std::filesystem::path& path) {
  return parse_graph_document(read_json_file(path));
}

RoadGraph make_graph(const GraphDocument& doc) {
  RoadGraph plain = build_graph(doc.intersections, doc.segments, {});
  return augment(plain, doc.bus_lines);
}

GraphDocument document_of(const RoadGraph& graph, std::optional<GeoOrigin> geo_origin) {
  GraphDocument doc;
  doc.intersections.assign(graph.intersections().begin(), graph.intersections().end());
  for (const auto& s : graph.segments()) doc.segments.push_back({graph.id_of(s.from), graph.id_of(s.to), s.length_m});
  doc.bus_lines.assign(graph.bus_lines().begin(), graph.bus_lines().end());
  doc.geo_origin = geo_origin;
  return doc;
}

RoadGraph load_graph(const std::filesystem::path& path) { return make_graph(load_graph_document(path)); }

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << j.dump(2) << '\n';
}

} // namespace vsn
