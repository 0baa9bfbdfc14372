#include "vsn/sim/demo.hpp"

#include "vsn/graph_io.hpp"

#include <array>
#include <random>

namespace vsn::sim {

namespace {

void two_way(std::vector<SegmentSpec>& segs, IntersectionId a, IntersectionId b) {
  segs.push_back({a, b, std::nullopt});
  segs.push_back({b, a, std::nullopt});
}

// Mobility statistics that only fix turning and speeds; contact and density
// fields are left for estimation.
TrafficStats ground_truth(const RoadGraph& graph, std::mt19937_64& rng, double car_lo, double car_hi, double bus_speed,
                          const std::function<double(NodeIndex, NodeIndex)>& preference) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  TrafficStats stats;
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (graph.is_ap(i)) continue;
    IntersectionStats is;
    double total = 0.0;
    for (EdgeIndex e : graph.out_edges(i)) {
      const auto& edge = graph.edge(e);
      if (edge.vtype != kUnpredictable) continue;
      const double w = (0.3 + u01(rng)) * preference(i, edge.to);
      is.q0[graph.id_of(edge.to)] = w;
      is.p0[graph.id_of(edge.to)] = 0.0;
      total += w;
    }
    for (auto& [to, q] : is.q0) q /= total;
    stats.per_intersection[graph.id_of(i)] = is;
  }
  std::uniform_real_distribution<double> speed(car_lo, car_hi);
  for (const auto& s : graph.segments()) {
    SegmentStats ss;
    ss.speed_mps = speed(rng);
    stats.per_segment[{graph.id_of(s.from), graph.id_of(s.to)}] = ss;
  }
  for (const auto& line : graph.bus_lines()) {
    const std::size_t n = line.route.size();
    const std::size_t steps = line.cyclic ? n : n - 1;
    for (std::size_t k = 0; k < steps; ++k) {
      stats.per_segment[{line.route[k], line.route[(k + 1) % n]}].bus_speed_mps[line.type] = bus_speed;
    }
  }
  return stats;
}

constexpr int kCols = 12;
constexpr int kRows = 7;
constexpr double kDx = 400.0;
constexpr double kDy = 650.0;

IntersectionId grid_id(int col, int row) { return static_cast<IntersectionId>(row * kCols + col + 1); }

std::vector<IntersectionId> loop(int c0, int c1, int r0, int r1) {
  std::vector<IntersectionId> route;
  for (int c = c0; c < c1; ++c) route.push_back(grid_id(c, r0));
  for (int r = r0; r < r1; ++r) route.push_back(grid_id(c1, r));
  for (int c = c1; c > c0; --c) route.push_back(grid_id(c, r1));
  for (int r = r1; r > r0; --r) route.push_back(grid_id(c0, r));
  return route;
}

} // namespace

Scenario toy_scenario() {
  std::vector<Intersection> nodes;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      const auto id = static_cast<IntersectionId>(row * 3 + col + 1);
      nodes.push_back({id, {500.0 * col, 1000.0 - 500.0 * row}, false});
    }
  }
  std::vector<SegmentSpec> segs;
  for (int row = 0; row < 3; ++row) {
    for (int col = 0; col < 3; ++col) {
      const auto id = static_cast<IntersectionId>(row * 3 + col + 1);
      if (col + 1 < 3) two_way(segs, id, id + 1);
      if (row + 1 < 3) two_way(segs, id, id + 3);
    }
  }
  const std::array<IntersectionId, 2> aps{7, 9};
  const std::array<BusLine, 1> lines{BusLine{1, {1, 2, 5, 8, 9}, false}};
  Scenario s;
  s.name = "toy";
  s.graph = augment(build_graph(nodes, segs, aps), lines);
  std::mt19937_64 rng(7);
  s.stats = ground_truth(s.graph, rng, 8.0, 12.0, 7.0, [](NodeIndex, NodeIndex) { return 1.0; });
  s.mobility = {MobilityKind::Synthetic, 20, 2, {}, true};
  s.sim_duration_s = 1800.0;
  return s;
}

std::span<const DensityLevel> downtown_densities() {
  static constexpr std::array<DensityLevel, 5> levels{
      DensityLevel{95, 30}, DensityLevel{80, 27}, DensityLevel{65, 22}, DensityLevel{55, 18}, DensityLevel{45, 14}};
  return levels;
}

Scenario downtown_scenario(DensityLevel level) {
  std::vector<Intersection> nodes;
  for (int row = 0; row < kRows; ++row) {
    for (int col = 0; col < kCols; ++col) nodes.push_back({grid_id(col, row), {kDx * col, kDy * row}, false});
  }
  // A river runs between columns 5 and 6 and is bridged on rows 1 and 5.
  auto bridged = [](int row) { return row == 1 || row == 5; };
  std::vector<SegmentSpec> segs;
  for (int row = 0; row < kRows; ++row) {
    for (int col = 0; col + 1 < kCols; ++col) {
      if (col == 5 && !bridged(row)) continue;
      two_way(segs, grid_id(col, row), grid_id(col + 1, row));
    }
  }
  // Cross streets on even columns and along both river banks; column 2 has
  // two closed blocks.
  for (int col : {0, 2, 4, 5, 6, 8, 10}) {
    for (int row = 0; row + 1 < kRows; ++row) {
      if (col == 2 && (row == 2 || row == 4)) continue;
      two_way(segs, grid_id(col, row), grid_id(col, row + 1));
    }
  }
  const std::array<IntersectionId, 5> aps{grid_id(2, 1), grid_id(2, 5), grid_id(6, 3), grid_id(10, 1),
                                          grid_id(10, 5)};
  const std::vector<BusLine> lines{
      {1, loop(0, 4, 0, 3), true}, {2, loop(6, 10, 0, 3), true}, {3, loop(0, 4, 3, 6), true},
      {4, loop(6, 10, 3, 6), true}, {5, loop(4, 8, 1, 5), true}, {6, loop(0, 10, 1, 5), true},
  };
  Scenario s;
  s.name = "downtown";
  s.graph = augment(build_graph(nodes, segs, aps), lines);
  std::mt19937_64 rng(2024);
  const RoadGraph& g = s.graph;
  // Bridge rows and columns 4 and 8 are arterials drawing most turning traffic.
  auto preference = [&g](NodeIndex, NodeIndex to) {
    const auto id = g.id_of(to) - 1;
    const auto row = static_cast<int>(id) / kCols;
    const auto col = static_cast<int>(id) % kCols;
    return (row == 1 || row == 5 || col == 4 || col == 8) ? 3.0 : 1.0;
  };
  s.stats = ground_truth(g, rng, 8.0, 14.0, 7.0, preference);
  s.mobility = {MobilityKind::Synthetic, level.vehicles, level.buses, {}, true};
  return s;
}

std::filesystem::path write_scenario(const Scenario& scenario, const std::filesystem::path& dir,
                                     const std::string& name) {
  std::filesystem::create_directories(dir);
  std::optional<GeoOrigin> geo;
  if (scenario.geo_origin) geo = GeoOrigin{scenario.geo_origin->first, scenario.geo_origin->second};
  write_json_file(dir / "graph.json", to_json(document_of(scenario.graph, geo)));
  save_stats(dir / "stats.json", scenario.stats);
  const auto path = dir / (name + ".json");
  write_json_file(path, scenario_json(scenario, "graph.json", "stats.json"));
  return path;
}

} // namespace vsn::sim
