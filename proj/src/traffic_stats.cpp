#include "vsn/traffic_stats.hpp"

#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace vsn {

double IntersectionStats::q_total() const {
  double sum = 0.0;
  for (const auto& [_, q] : q0) sum += q;
  for (const auto& [_, q] : qv) sum += q;
  return sum;
}

const IntersectionStats* TrafficStats::intersection(IntersectionId id) const {
  auto it = per_intersection.find(id);
  return it == per_intersection.end() ? nullptr : &it->second;
}

const SegmentStats* TrafficStats::segment(IntersectionId from, IntersectionId to) const {
  auto it = per_segment.find({from, to});
  return it == per_segment.end() ? nullptr : &it->second;
}

namespace {

bool is_probability(double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; }

template <typename Map>
void check_probabilities(const Map& m, IntersectionId id, const char* name) {
  for (const auto& [key, p] : m) {
    if (!is_probability(p)) {
      throw ValidationError(fmt::format("intersection {}: {}[{}] = {} is not a probability", id, name, key, p));
    }
  }
}

template <typename Key>
nlohmann::json keyed_object(const std::map<Key, double>& m) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : m) j[std::to_string(k)] = v;
  return j;
}

template <typename Key>
std::map<Key, double> parse_keyed(const nlohmann::json& j, const char* field, IntersectionId owner) {
  std::map<Key, double> out;
  if (!j.contains(field)) return out;
  for (const auto& [k, v] : j.at(field).items()) {
    try {
      std::size_t used = 0;
      const long long key = std::stoll(k, &used);
      if (used != k.size()) throw std::invalid_argument(k);
      out[static_cast<Key>(key)] = v.template get<double>();
    } catch (const std::exception&) {
      throw ValidationError(fmt::format("stats for {}: bad {} entry '{}'", owner, field, k));
    }
  }
  return out;
}

} // namespace

void check_normalization(const TrafficStats& stats) {
  if (!(stats.radio_range_m > 0.0)) throw ValidationError("radio_range_m must be positive");
  if (!(stats.hop_delay_s > 0.0)) throw ValidationError("hop_delay_s must be positive");
  for (const auto& [id, s] : stats.per_intersection) {
    check_probabilities(s.q0, id, "q0");
    check_probabilities(s.p0, id, "p0");
    check_probabilities(s.qv, id, "qv");
    check_probabilities(s.pv, id, "pv");
    for (const auto& [v, _] : s.qv) {
      if (v <= 0) throw ValidationError(fmt::format("intersection {}: bus type {} must be positive", id, v));
    }
    const double total = s.q_total();
    if (std::abs(total - 1.0) > kNormalizationTolerance) {
      throw ValidationError(fmt::format("intersection {}: turning fractions sum to {:.12g}, expected 1", id, total));
    }
  }
  for (const auto& [key, s] : stats.per_segment) {
    if (!std::isfinite(s.density_per_m) || s.density_per_m < 0.0) {
      throw ValidationError(fmt::format("segment {}->{}: density {} must be finite and >= 0", key.first, key.second,
                                        s.density_per_m));
    }
    if (!(s.speed_mps > 0.0) || !std::isfinite(s.speed_mps)) {
      throw ValidationError(fmt::format("segment {}->{}: speed {} must be positive", key.first, key.second,
                                        s.speed_mps));
    }
    for (const auto& [v, speed] : s.bus_speed_mps) {
      if (!(speed > 0.0) || !std::isfinite(speed)) {
        throw ValidationError(fmt::format("segment {}->{}: bus {} speed {} must be positive", key.first,
                                          key.second, v, speed));
      }
    }
  }
}

void check_coverage(const TrafficStats& stats, const RoadGraph& graph, bool allow_missing) {
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (graph.is_ap(i)) continue;
    const IntersectionId id = graph.id_of(i);
    if (stats.missing.contains(id)) {
      if (allow_missing) continue;
      throw ValidationError(fmt::format("intersection {} has no observed arrivals (defaults not allowed)", id));
    }
    const IntersectionStats* s = stats.intersection(id);
    if (s == nullptr) throw ValidationError(fmt::format("stats do not cover intersection {}", id));
    for (const auto& [to, _] : s->q0) {
      auto j = graph.find(to);
      if (!j || !graph.find_segment(i, *j)) {
        throw ValidationError(fmt::format("intersection {}: q0 names {} which is not a road neighbor", id, to));
      }
    }
    for (const auto& [to, _] : s->p0) {
      auto j = graph.find(to);
      if (!j || !graph.find_segment(i, *j)) {
        throw ValidationError(fmt::format("intersection {}: p0 names {} which is not a road neighbor", id, to));
      }
    }
    for (const auto& [v, q] : s->qv) {
      if (q == 0.0) continue;
      bool has_edge = false;
      for (EdgeIndex e : graph.out_edges(i)) has_edge = has_edge || graph.edge(e).vtype == v;
      if (!has_edge) {
        throw ValidationError(
            fmt::format("intersection {}: bus type {} has arrival share {} but no outgoing bus edge", id, v, q));
      }
    }
  }
  for (const auto& seg : graph.segments()) {
    if (!stats.segment(graph.id_of(seg.from), graph.id_of(seg.to))) {
      throw ValidationError(
          fmt::format("stats do not cover segment {}->{}", graph.id_of(seg.from), graph.id_of(seg.to)));
    }
  }
}

TrafficStats with_defaults(TrafficStats stats, const RoadGraph& graph, double default_speed_mps) {
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    const IntersectionId id = graph.id_of(i);
    if (graph.is_ap(i)) {
      stats.missing.erase(id);
      continue;
    }
    if (!stats.missing.contains(id) && stats.intersection(id)) continue;
    IntersectionStats s;
    std::vector<IntersectionId> neighbors;
    for (EdgeIndex e : graph.out_edges(i)) {
      if (graph.edge(e).vtype == kUnpredictable) neighbors.push_back(graph.id_of(graph.edge(e).to));
    }
    for (IntersectionId n : neighbors) {
      s.q0[n] = 1.0 / static_cast<double>(neighbors.size());
      s.p0[n] = 0.0;
    }
    stats.per_intersection[id] = std::move(s);
    stats.missing.erase(id);
  }
  for (const auto& seg : graph.segments()) {
    const SegmentKey key{graph.id_of(seg.from), graph.id_of(seg.to)};
    SegmentStats& s = stats.per_segment[key];
    if (!(s.speed_mps > 0.0)) s.speed_mps = default_speed_mps;
  }
  for (const auto& e : graph.edges()) {
    if (e.vtype == kUnpredictable) continue;
    for (SegmentIndex si : e.segments) {
      const auto& seg = graph.segment(si);
      SegmentStats& s = stats.per_segment[{graph.id_of(seg.from), graph.id_of(seg.to)}];
      if (!s.bus_speed_mps.contains(e.vtype)) s.bus_speed_mps[e.vtype] = s.speed_mps;
    }
  }
  return stats;
}

TrafficStats parse_stats(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("stats file must hold a JSON object");
  TrafficStats stats;
  stats.radio_range_m = j.value("radio_range_m", 150.0);
  stats.hop_delay_s = j.value("hop_delay_s", 0.004);
  try {
    for (const auto& n : j.value("intersections", nlohmann::json::array())) {
      const auto id = n.at("id").get<IntersectionId>();
      IntersectionStats s;
      s.q0 = parse_keyed<IntersectionId>(n, "q0", id);
      s.p0 = parse_keyed<IntersectionId>(n, "p0", id);
      s.qv = parse_keyed<VehicleType>(n, "qv", id);
      s.pv = parse_keyed<VehicleType>(n, "pv", id);
      if (!stats.per_intersection.emplace(id, std::move(s)).second) {
        throw ValidationError(fmt::format("duplicate stats for intersection {}", id));
      }
    }
    for (const auto& seg : j.value("segments", nlohmann::json::array())) {
      const SegmentKey key{seg.at("from").get<IntersectionId>(), seg.at("to").get<IntersectionId>()};
      SegmentStats s;
      s.density_per_m = seg.value("density_per_m", 0.0);
      s.speed_mps = seg.at("speed_mps").get<double>();
      s.bus_speed_mps = parse_keyed<VehicleType>(seg, "bus_speed_mps", key.first);
      if (!stats.per_segment.emplace(key, std::move(s)).second) {
        throw ValidationError(fmt::format("duplicate stats for segment {}->{}", key.first, key.second));
      }
    }
    for (const auto& m : j.value("missing", nlohmann::json::array())) stats.missing.insert(m.get<IntersectionId>());
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("malformed stats: {}", e.what()));
  }
  return stats;
}

nlohmann::json to_json(const TrafficStats& stats) {
  nlohmann::json j;
  j["radio_range_m"] = stats.radio_range_m;
  j["hop_delay_s"] = stats.hop_delay_s;
  j["intersections"] = nlohmann::json::array();
  for (const auto& [id, s] : stats.per_intersection) {
    j["intersections"].push_back({{"id", id},
                                  {"q0", keyed_object(s.q0)},
                                  {"p0", keyed_object(s.p0)},
                                  {"qv", keyed_object(s.qv)},
                                  {"pv", keyed_object(s.pv)}});
  }
  j["segments"] = nlohmann::json::array();
  for (const auto& [key, s] : stats.per_segment) {
    j["segments"].push_back({{"from", key.first},
                             {"to", key.second},
                             {"density_per_m", s.density_per_m},
                             {"speed_mps", s.speed_mps},
                             {"bus_speed_mps", keyed_object(s.bus_speed_mps)}});
  }
  j["missing"] = stats.missing;
  return j;
}

TrafficStats load_stats(const std::filesystem::path& path) {
  TrafficStats stats = parse_stats(read_json_file(path));
  check_normalization(stats);
  return stats;
}

void save_stats(const std::filesystem::path& path, const TrafficStats& stats) { write_json_file(path, to_json(stats)); }

// ---------------------------------------------------------------------------

std::optional<SnapResult> snap(Point p, const RoadGraph& graph, double threshold_m) {
  constexpr double kTieTolerance = 1e-9;
  std::optional<SnapResult> best;
  for (SegmentIndex s = 0; s < graph.segments().size(); ++s) {
    const auto& seg = graph.segment(s);
    const Projection proj = project_onto(p, graph.intersection(seg.from).position, graph.intersection(seg.to).position);
    if (proj.distance > threshold_m) continue;
    // Segments are stored in (from, to) id order, so the first within tolerance wins ties.
    if (!best || proj.distance < best->distance_m - kTieTolerance) {
      const double geometric = distance(graph.intersection(seg.from).position, graph.intersection(seg.to).position);
      const double scale = geometric > 0.0 ? seg.length_m / geometric : 1.0;
      best = SnapResult{s, proj.along * scale, proj.distance};
    }
  }
  return best;
}

double contact_probability(double rate_per_s, double window_s) {
  if (rate_per_s < 0.0 || window_s < 0.0) throw UsageError("contact rate and window must be non-negative");
  return -std::expm1(-rate_per_s * window_s);
}

void TrafficCounts::merge(const TrafficCounts& other) {
  for (const auto& [k, n] : other.type0_heading) type0_heading[k] += n;
  for (const auto& [k, n] : other.bus_arrivals) bus_arrivals[k] += n;
  for (const auto& [k, t] : other.occupancy_s) occupancy_s[k] += t;
  for (const auto& [k, v] : other.speed_sum) {
    speed_sum[k].first += v.first;
    speed_sum[k].second += v.second;
  }
  for (const auto& [k, v] : other.bus_speed_sum) {
    bus_speed_sum[k].first += v.first;
    bus_speed_sum[k].second += v.second;
  }
}

namespace {

std::optional<NodeIndex> nearest_intersection(Point p, const RoadGraph& graph, double radius) {
  std::optional<NodeIndex> best;
  double best_d = radius;
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    const double d = distance(p, graph.intersection(i).position);
    if (d < best_d || (d == best_d && !best)) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

bool has_bus_edge(const RoadGraph& graph, NodeIndex i, VehicleType v) {
  for (EdgeIndex e : graph.out_edges(i)) {
    if (graph.edge(e).vtype == v) return true;
  }
  return false;
}

} // namespace

TrafficCounts count_vehicle(std::span<const TraceRecord> records, const RoadGraph& graph,
                            const EstimationOptions& options) {
  struct Visit {
    NodeIndex node;
    double time;
  };
  TrafficCounts counts;
  if (records.empty()) return counts;
  const VehicleType vtype = options.unpredictable_only ? kUnpredictable : records.front().vtype;

  // Visits are grouped into runs of continuous on-road presence; a sample that
  // does not snap to the road breaks the run.
  std::vector<std::vector<Visit>> runs(1);
  std::optional<NodeIndex> current;
  for (const auto& rec : records) {
    if (!snap(rec.position, graph, options.snap_threshold_m)) {
      if (!runs.back().empty()) runs.emplace_back();
      current.reset();
      continue;
    }
    auto near = nearest_intersection(rec.position, graph, options.arrival_radius_m);
    if (near && near != current) runs.back().push_back({*near, rec.timestamp});
    current = near;
  }

  for (const auto& visits : runs) {
    for (std::size_t k = 0; k < visits.size(); ++k) {
      const NodeIndex i = visits[k].node;
      if (k + 1 == visits.size()) break; // continuation unobserved
      const NodeIndex j = visits[k + 1].node;
      auto seg = graph.find_segment(i, j);
      if (vtype == kUnpredictable) {
        if (seg) ++counts.type0_heading[{i, j}];
      } else if (has_bus_edge(graph, i, vtype)) {
        ++counts.bus_arrivals[{i, vtype}];
      }
      const double dt = visits[k + 1].time - visits[k].time;
      if (seg && dt > 0.0) {
        const double speed = graph.segment(*seg).length_m / dt;
        counts.occupancy_s[*seg] += dt;
        auto& sum = counts.speed_sum[*seg];
        sum.first += speed;
        sum.second += 1;
        if (vtype != kUnpredictable) {
          auto& bus = counts.bus_speed_sum[{*seg, vtype}];
          bus.first += speed;
          bus.second += 1;
        }
      }
    }
  }
  return counts;
}

TrafficStats finalize_stats(const TrafficCounts& counts, const RoadGraph& graph, double observation_s,
                            const EstimationOptions& options) {
  if (!(observation_s > 0.0)) throw ValidationError("trace must span a positive observation time");
  if (!(options.dwell_window_s > 0.0)) throw UsageError("dwell window must be positive");
  TrafficStats stats;
  stats.radio_range_m = options.radio_range_m;
  stats.hop_delay_s = options.hop_delay_s;

  std::vector<double> arrivals(graph.intersection_count(), 0.0);
  for (const auto& [key, n] : counts.type0_heading) arrivals[key.first] += static_cast<double>(n);
  for (const auto& [key, n] : counts.bus_arrivals) arrivals[key.first] += static_cast<double>(n);

  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    const IntersectionId id = graph.id_of(i);
    if (arrivals[i] == 0.0) {
      if (!graph.is_ap(i)) stats.missing.insert(id);
      continue;
    }
    IntersectionStats s;
    for (EdgeIndex e : graph.out_edges(i)) {
      const auto& edge = graph.edge(e);
      if (edge.vtype != kUnpredictable) continue;
      auto it = counts.type0_heading.find({i, edge.to});
      const double n = it == counts.type0_heading.end() ? 0.0 : static_cast<double>(it->second);
      s.q0[graph.id_of(edge.to)] = n / arrivals[i];
      s.p0[graph.id_of(edge.to)] = contact_probability(n / observation_s, options.dwell_window_s);
    }
    for (const auto& [key, n] : counts.bus_arrivals) {
      if (key.first != i) continue;
      s.qv[key.second] = static_cast<double>(n) / arrivals[i];
      s.pv[key.second] = contact_probability(static_cast<double>(n) / observation_s, options.dwell_window_s);
    }
    stats.per_intersection[id] = std::move(s);
  }

  for (SegmentIndex si = 0; si < graph.segments().size(); ++si) {
    const auto& seg = graph.segment(si);
    SegmentStats s;
    auto occ = counts.occupancy_s.find(si);
    s.density_per_m = occ == counts.occupancy_s.end() ? 0.0 : occ->second / observation_s / seg.length_m;
    auto sp = counts.speed_sum.find(si);
    s.speed_mps = sp == counts.speed_sum.end() ? options.default_speed_mps
                                               : sp->second.first / static_cast<double>(sp->second.second);
    stats.per_segment[{graph.id_of(seg.from), graph.id_of(seg.to)}] = std::move(s);
  }
  if (!options.unpredictable_only) {
    for (const auto& e : graph.edges()) {
      if (e.vtype == kUnpredictable) continue;
      for (SegmentIndex si : e.segments) {
        const auto& seg = graph.segment(si);
        SegmentStats& s = stats.per_segment[{graph.id_of(seg.from), graph.id_of(seg.to)}];
        if (s.bus_speed_mps.contains(e.vtype)) continue;
        auto it = counts.bus_speed_sum.find({si, e.vtype});
        s.bus_speed_mps[e.vtype] = it == counts.bus_speed_sum.end()
                                       ? s.speed_mps
                                       : it->second.first / static_cast<double>(it->second.second);
      }
    }
  }
  return stats;
}

TrafficStats estimate_from_traces(std::span<const TraceRecord> records, const RoadGraph& graph,
                                  const EstimationOptions& options) {
  if (records.empty()) throw ValidationError("trace holds no records");
  // Group by vehicle in first-appearance order; records keep file order within a vehicle.
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<TraceRecord>> per_vehicle;
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (const auto& rec : records) {
    auto [it, inserted] = slot.try_emplace(rec.vehicle_id, per_vehicle.size());
    if (inserted) per_vehicle.emplace_back();
    auto& list = per_vehicle[it->second];
    if (!list.empty() && rec.timestamp < list.back().timestamp) {
      throw ValidationError(fmt::format("line {}: timestamp {} decreases for vehicle {}", rec.line, rec.timestamp,
                                        rec.vehicle_id));
    }
    if (!list.empty() && rec.vtype != list.front().vtype) {
      throw ValidationError(fmt::format("line {}: vehicle {} changes type", rec.line, rec.vehicle_id));
    }
    list.push_back(rec);
    t_min = std::min(t_min, rec.timestamp);
    t_max = std::max(t_max, rec.timestamp);
  }
  TrafficCounts total;
  for (const auto& list : per_vehicle) total.merge(count_vehicle(list, graph, options));
  return finalize_stats(total, graph, t_max - t_min, options);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ValidationError(fmt::format("line {}: bad {} '{}'", line, what, s));
  }
}

} // namespace

std::vector<TraceRecord> read_trace_csv(const std::filesystem::path& path, const TraceReadOptions& options) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot open trace {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(fmt::format("trace {} is empty", path.string()));
  const auto header = split_csv_line(line);
  const std::vector<std::string> geo{"vehicle_id", "vtype", "timestamp", "lat", "lon"};
  const std::vector<std::string> xy{"vehicle_id", "vtype", "timestamp", "x", "y"};
  const bool planar = header == xy;
  if (!planar && header != geo) {
    throw ValidationError("trace header must be vehicle_id,vtype,timestamp,lat,lon or vehicle_id,vtype,timestamp,x,y");
  }
  if (planar != options.planar) {
    throw ValidationError(planar ? "trace has x,y columns; pass the planar flag" : "trace has lat,lon columns");
  }
  std::optional<GeoProjection> projection;
  if (!planar) {
    if (!options.geo_origin) throw ValidationError("lat/lon traces need a graph geo_origin");
    projection.emplace(options.geo_origin->first, options.geo_origin->second);
  }

  std::vector<TraceRecord> records;
  std::unordered_map<std::string, double> last_time;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ValidationError(fmt::format("line {}: expected 5 fields, got {}", line_no, f.size()));
    TraceRecord rec;
    rec.vehicle_id = f[0];
    rec.line = line_no;
    const double vt = parse_double(f[1], line_no, "vtype");
    if (vt != std::floor(vt) || vt < 0) throw ValidationError(fmt::format("line {}: bad vtype '{}'", line_no, f[1]));
    rec.vtype = static_cast<VehicleType>(vt);
    rec.timestamp = parse_double(f[2], line_no, "timestamp");
    const double a = parse_double(f[3], line_no, planar ? "x" : "lat");
    const double b = parse_double(f[4], line_no, planar ? "y" : "lon");
    rec.position = planar ? Point{a, b} : projection->to_plane(a, b);
    auto [it, inserted] = last_time.try_emplace(rec.vehicle_id, rec.timestamp);
    if (!inserted) {
      if (rec.timestamp < it->second) {
        throw ValidationError(fmt::format("line {}: timestamp decreases for vehicle {}", line_no, rec.vehicle_id));
      }
      it->second = rec.timestamp;
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void write_trace_csv(const std::filesystem::path& path, std::span<const TraceRecord> records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << "vehicle_id,vtype,timestamp,x,y\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{:.3f},{:.3f},{:.3f}\n", r.vehicle_id, r.vtype, r.timestamp, r.position.x, r.position.y);
  }
}

void check_trace_types(std::span<const TraceRecord> records, const RoadGraph& graph) {
  for (const auto& r : records) {
    if (r.vtype != kUnpredictable && graph.bus_line(r.vtype) == nullptr) {
      throw ValidationError(fmt::format("line {}: unknown vehicle type {}", r.line, r.vtype));
    }
  }
}

} // namespace vsn
