#include "vsn/sim/scenario.hpp"

#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"
#include "vsn/hash.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace vsn {

std::string hex64(std::uint64_t value) { return fmt::format("{:016x}", value); }

} // namespace vsn

namespace vsn::sim {

std::string_view protocol_name(Protocol p) {
  switch (p) {
  case Protocol::OvdfP: return "OVDF-P";
  case Protocol::OvdfU: return "OVDF-U";
  case Protocol::Gpsr: return "GPSR";
  case Protocol::Epidemic: return "EPIDEMIC";
  }
  return "?";
}

Protocol parse_protocol(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Protocol p : {Protocol::OvdfP, Protocol::OvdfU, Protocol::Gpsr, Protocol::Epidemic}) {
    if (upper == protocol_name(p)) return p;
  }
  throw UsageError(fmt::format("unknown protocol '{}' (expected OVDF-P, OVDF-U, GPSR or EPIDEMIC)", name));
}

namespace {

nlohmann::json parameters_json(const Scenario& s) {
  nlohmann::json mob;
  if (s.mobility.kind == MobilityKind::Synthetic) {
    mob = {{"kind", "synthetic"}, {"vehicles", s.mobility.vehicles}, {"buses", s.mobility.buses}};
  } else {
    mob = {{"kind", "trace"}, {"file", s.mobility.trace_file.filename().generic_string()}, {"planar", s.mobility.planar}};
  }
  return {
      {"mobility", mob},
      {"radio",
       {{"range_m", s.radio.range_m},
        {"beacon_period_s", s.radio.beacon_period_s},
        {"hop_delay_s", s.radio.hop_delay_s},
        {"packet_size_bytes", s.radio.packet_size_bytes},
        {"transfer_budget", s.radio.transfer_budget},
        {"ideal", s.radio.ideal}}},
      {"generation", {{"distance_m", s.generation.distance_m}, {"interval_s", s.generation.interval_s}}},
      {"metrics",
       {{"square_m", s.metrics.square_m},
        {"distance_bin_m", s.metrics.distance_bin_m},
        {"far_threshold_m", s.metrics.far_threshold_m},
        {"coverage_share", s.metrics.coverage_share}}},
      {"deadline_s", s.deadline_s},
      {"sim_duration_s", s.sim_duration_s},
      {"intersection_radius_m", s.intersection_radius_m},
      {"buffer_capacity", s.buffer_capacity},
  };
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

} // namespace

std::string Scenario::hash() const {
  std::uint64_t h = fnv1a(to_json(document_of(graph)).dump());
  h = fnv1a(to_json(stats).dump(), h);
  h = fnv1a(parameters_json(*this).dump(), h);
  if (mobility.kind == MobilityKind::Trace) h = fnv1a(file_bytes(mobility.trace_file), h);
  return hex64(h);
}

void check_scenario(const Scenario& s) {
  auto positive = [](double v, const char* what) {
    if (!(v > 0.0)) throw ValidationError(fmt::format("scenario: {} must be positive", what));
  };
  positive(s.radio.range_m, "radio range");
  positive(s.radio.beacon_period_s, "beacon period");
  positive(s.radio.hop_delay_s, "hop delay");
  positive(s.generation.distance_m, "generation distance");
  positive(s.generation.interval_s, "generation interval");
  positive(s.deadline_s, "deadline");
  positive(s.sim_duration_s, "simulation duration");
  positive(s.intersection_radius_m, "intersection radius");
  positive(s.metrics.square_m, "square side");
  positive(s.metrics.distance_bin_m, "distance bin width");
  if (s.radio.packet_size_bytes <= 0) throw ValidationError("scenario: packet size must be positive");
  if (!s.radio.ideal && s.radio.transfer_budget <= 0) throw ValidationError("scenario: transfer budget must be positive");
  if (s.buffer_capacity == 0) throw ValidationError("scenario: buffer capacity must be positive");
  if (s.graph.ap_indices().empty()) throw ValidationError("scenario: no AP intersections");
  if (s.mobility.kind == MobilityKind::Synthetic) {
    if (s.mobility.vehicles <= 0) throw ValidationError("scenario: synthetic mobility needs vehicles > 0");
    if (s.mobility.buses < 0 || s.mobility.buses > s.mobility.vehicles) {
      throw ValidationError("scenario: bus count must lie in [0, vehicles]");
    }
    if (s.mobility.buses > 0 && s.graph.bus_lines().empty()) {
      throw ValidationError("scenario: buses requested but the graph has no bus lines");
    }
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  const auto base = path.parent_path();
  Scenario s;
  try {
    s.name = j.value("name", path.stem().string());
    const auto doc = load_graph_document(base / j.at("graph").get<std::string>());
    s.graph = make_graph(doc);
    if (doc.geo_origin) s.geo_origin = std::pair{doc.geo_origin->lat, doc.geo_origin->lon};
    s.stats = load_stats(base / j.at("stats").get<std::string>());

    const auto& mob = j.at("mobility");
    const auto kind = mob.at("kind").get<std::string>();
    if (kind == "synthetic") {
      s.mobility.kind = MobilityKind::Synthetic;
      s.mobility.vehicles = mob.at("vehicles").get<int>();
      s.mobility.buses = mob.value("buses", 0);
    } else if (kind == "trace") {
      s.mobility.kind = MobilityKind::Trace;
      s.mobility.trace_file = base / mob.at("file").get<std::string>();
      s.mobility.planar = mob.value("planar", true);
    } else {
      throw ValidationError(fmt::format("scenario: unknown mobility kind '{}'", kind));
    }

    if (j.contains("radio")) {
      const auto& r = j.at("radio");
      s.radio.range_m = r.value("range_m", s.radio.range_m);
      s.radio.beacon_period_s = r.value("beacon_period_s", s.radio.beacon_period_s);
      s.radio.hop_delay_s = r.value("hop_delay_s", s.radio.hop_delay_s);
      s.radio.packet_size_bytes = r.value("packet_size_bytes", s.radio.packet_size_bytes);
      s.radio.transfer_budget = r.value("transfer_budget", s.radio.transfer_budget);
      s.radio.ideal = r.value("ideal", s.radio.ideal);
    }
    if (j.contains("generation")) {
      const auto& g = j.at("generation");
      s.generation.distance_m = g.value("distance_m", s.generation.distance_m);
      s.generation.interval_s = g.value("interval_s", s.generation.interval_s);
    }
    if (j.contains("metrics")) {
      const auto& m = j.at("metrics");
      s.metrics.square_m = m.value("square_m", s.metrics.square_m);
      s.metrics.distance_bin_m = m.value("distance_bin_m", s.metrics.distance_bin_m);
      s.metrics.far_threshold_m = m.value("far_threshold_m", s.metrics.far_threshold_m);
      s.metrics.coverage_share = m.value("coverage_share", s.metrics.coverage_share);
    }
    s.deadline_s = j.value("deadline_s", s.deadline_s);
    s.sim_duration_s = j.value("sim_duration_s", s.sim_duration_s);
    s.intersection_radius_m = j.value("intersection_radius_m", s.intersection_radius_m);
    s.buffer_capacity = j.value("buffer_capacity", s.buffer_capacity);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed scenario {}: {}", path.string(), e.what()));
  }
  check_scenario(s);
  check_coverage(s.stats, s.graph, true);
  if (j.contains("hash") && j.at("hash").get<std::string>() != s.hash()) {
    throw ValidationError(fmt::format("scenario {}: embedded hash {} does not match its graph/stats ({})",
                                      path.string(), j.at("hash").get<std::string>(), s.hash()));
  }
  return s;
}

nlohmann::json scenario_json(const Scenario& s, const std::string& graph_file, const std::string& stats_file) {
  nlohmann::json j = parameters_json(s);
  j["name"] = s.name;
  j["graph"] = graph_file;
  j["stats"] = stats_file;
  j["seed"] = s.seed;
  j["hash"] = s.hash();
  return j;
}

} // namespace vsn::sim
