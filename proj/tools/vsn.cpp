// Command-line front end: statistics estimation, policy solving, simulation,
// comparison of result sets and the bundled demo scenarios.

#include "vsn/delay_model.hpp"
#include "vsn/error.hpp"
#include "vsn/graph_io.hpp"
#include "vsn/policy_solver.hpp"
#include "vsn/routing_table.hpp"
#include "vsn/sim/demo.hpp"
#include "vsn/sim/metrics.hpp"
#include "vsn/sim/pipeline.hpp"
#include "vsn/sim/scenario.hpp"
#include "vsn/sim/simulator.hpp"
#include "vsn/traffic_stats.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace vsn;
using namespace vsn::sim;

namespace {

enum Exit { kOk = 0, kUsage = 2, kValidation = 3, kNoConvergence = 4 };

fs::path default_out_dir() {
  const char* env = std::getenv("VSN_OUT_DIR");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path(".");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << text;
}

std::string number(double v) { return fmt::format("{}", v); }

// -- stats --------------------------------------------------------------------

struct StatsArgs {
  fs::path trace;
  fs::path graph;
  fs::path out;
  bool planar = false;
  double window_s = EstimationOptions{}.dwell_window_s;
  bool unpredictable_only = false;
};

int cmd_stats(const StatsArgs& a) {
  const auto doc = load_graph_document(a.graph);
  RoadGraph graph = make_graph(doc);
  if (a.unpredictable_only) graph = graph.without_buses();
  TraceReadOptions read;
  read.planar = a.planar;
  if (doc.geo_origin) read.geo_origin = std::pair{doc.geo_origin->lat, doc.geo_origin->lon};
  const auto records = read_trace_csv(a.trace, read);
  check_trace_types(records, make_graph(doc));
  EstimationOptions est;
  est.dwell_window_s = a.window_s;
  est.unpredictable_only = a.unpredictable_only;
  const TrafficStats stats = estimate_from_traces(records, graph, est);
  save_stats(a.out, stats);
  std::size_t non_ap = 0;
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) non_ap += graph.is_ap(i) ? 0 : 1;
  fmt::print("stats: {} records; intersections covered {}/{} ({} without arrivals); segments covered {}/{}\n",
             records.size(), stats.per_intersection.size(), non_ap, stats.missing.size(), stats.per_segment.size(),
             graph.segments().size());
  return kOk;
}

// -- solve --------------------------------------------------------------------

struct SolveArgs {
  fs::path graph;
  fs::path stats;
  fs::path out_dir;
  std::string protocol = "OVDF-P";
  double epsilon = SolverOptions{}.epsilon;
  std::size_t max_iter = SolverOptions{}.max_iter;
  std::size_t brute_force_cap = SolverOptions{}.brute_force_cap;
  bool gauss_seidel = false;
  bool dump_delays = false;
  bool fill_defaults = false;
};

int cmd_solve(const SolveArgs& a) {
  if (!(a.epsilon > 0.0)) throw UsageError("--epsilon must be positive");
  if (a.max_iter == 0) throw UsageError("--max-iter must be positive");
  const Protocol protocol = parse_protocol(a.protocol);
  if (!uses_routing_table(protocol)) throw UsageError("solve builds OVDF-P or OVDF-U tables");
  RoadGraph graph = load_graph(a.graph);
  if (protocol == Protocol::OvdfU) graph = graph.without_buses();
  TrafficStats stats = load_stats(a.stats);
  if (a.fill_defaults) stats = with_defaults(stats, graph);
  check_coverage(stats, graph);

  SolverOptions opt;
  opt.epsilon = a.epsilon;
  opt.max_iter = a.max_iter;
  opt.brute_force_cap = a.brute_force_cap;
  opt.gauss_seidel = a.gauss_seidel;
  const auto delays = edge_delays(graph, stats);
  const ForwardingModel model(graph, stats, delays);
  const Solution sol = value_iteration(model, opt);
  const RoutingTable table = routing_table_from_policy(sol.policy, graph, std::string(protocol_name(protocol)));

  fs::create_directories(a.out_dir);
  write_json_file(a.out_dir / "routing_table.json", to_json(table, graph));
  std::string csv = "intersection,delay_s\n";
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    csv += fmt::format("{},{}\n", graph.id_of(i), number(sol.delays[i]));
  }
  write_text(a.out_dir / "delays.csv", csv);
  if (a.dump_delays) {
    std::string edges = "from,to,vtype,delay_s\n";
    for (EdgeIndex e = 0; e < graph.edges().size(); ++e) {
      const auto& edge = graph.edge(e);
      edges += fmt::format("{},{},{},{}\n", graph.id_of(edge.from), graph.id_of(edge.to), edge.vtype, number(delays[e]));
    }
    write_text(a.out_dir / "edge_delays.csv", edges);
  }
  nlohmann::json report{{"protocol", protocol_name(protocol)},
                        {"iterations", sol.report.iterations},
                        {"final_residual", sol.report.final_residual},
                        {"epsilon", sol.report.epsilon},
                        {"converged", sol.report.converged},
                        {"unreachable", sol.report.unreachable}};
  write_json_file(a.out_dir / "report.json", report);
  fmt::print("solve: {} {} after {} sweeps, residual {:.3g} s (epsilon {:.3g} s)\n", protocol_name(protocol),
             sol.report.converged ? "converged" : "did not converge", sol.report.iterations,
             sol.report.final_residual, sol.report.epsilon);
  if (!sol.report.unreachable.empty()) {
    fmt::print("solve: {} intersections cannot reach an AP\n", sol.report.unreachable.size());
  }
  return sol.report.converged ? kOk : kNoConvergence;
}

// -- simulate -----------------------------------------------------------------

struct SimulateArgs {
  fs::path scenario;
  std::string protocol;
  std::optional<std::uint64_t> seed;
  std::size_t seeds = 1;
  std::optional<fs::path> routing_table;
  std::optional<fs::path> out_dir;
  unsigned jobs = 1;
};

struct SeedOutput {
  SummaryRow row;
  std::string coverage;
  std::string distance;
};

int cmd_simulate(const SimulateArgs& a) {
  if (a.seeds == 0) throw UsageError("--seeds must be at least 1");
  if (a.jobs == 0) throw UsageError("--jobs must be at least 1");
  const Protocol protocol = parse_protocol(a.protocol);
  const Scenario scenario = load_scenario(a.scenario);
  check_scenario(scenario);

  std::optional<ForwardingTable> forwarding;
  if (uses_routing_table(protocol)) {
    if (!a.routing_table) throw UsageError(fmt::format("{} needs --routing-table", protocol_name(protocol)));
    const RoutingTable table = load_routing_table(*a.routing_table, scenario.graph);
    if (!table.protocol.empty() && parse_protocol(table.protocol) != protocol) {
      throw UsageError(fmt::format("routing table was built for {}, not {}", table.protocol, protocol_name(protocol)));
    }
    forwarding = resolve_table(table, scenario.graph, scenario.graph);
  } else if (a.routing_table) {
    throw UsageError(fmt::format("{} does not take a routing table", protocol_name(protocol)));
  }

  const std::uint64_t first = a.seed.value_or(scenario.seed);
  std::vector<std::optional<SeedOutput>> outputs(a.seeds);
  std::vector<std::exception_ptr> errors(a.seeds);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < a.seeds; k = next++) {
      try {
        RunOptions opt;
        opt.seed = first + k;
        opt.table = forwarding ? &*forwarding : nullptr;
        const RunResult r = run(scenario, protocol, opt);
        const Summary s = summarize(r, scenario.graph, scenario.radio, scenario.metrics);
        const auto grid = coverage_grid(r, scenario.graph, scenario.metrics);
        const auto bins = ratio_by_distance(r, scenario.graph, scenario.metrics.distance_bin_m);
        outputs[k] = SeedOutput{summary_row(r, s), coverage_csv_rows(r, grid), distance_csv_rows(r, bins)};
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(a.jobs, a.seeds));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<SummaryRow> rows;
  std::string coverage = coverage_csv_header();
  std::string distance = distance_csv_header();
  for (const auto& o : outputs) {
    rows.push_back(o->row);
    coverage += o->coverage;
    distance += o->distance;
  }
  if (a.seeds > 1) {
    const auto [mean, sd] = aggregate(rows);
    rows.push_back(mean);
    rows.push_back(sd);
  }
  const fs::path dir = a.out_dir.value_or(default_out_dir());
  fs::create_directories(dir);
  write_summary_csv(dir / "summary.csv", rows);
  write_text(dir / "coverage.csv", coverage);
  write_text(dir / "distance.csv", distance);

  for (const auto& r : rows) {
    auto get = [&](const char* k) {
      auto it = r.values.find(k);
      return it == r.values.end() ? std::string("-") : fmt::format("{:.4f}", it->second);
    };
    fmt::print("{} seed {}: delivery {} near-AP {} far {} mean delay {} s\n", r.protocol, r.seed,
               get("delivery_ratio"), get("near_ratio"), get("far_ratio"), get("delay_mean_s"));
  }
  fmt::print("simulate: wrote {}\n", (dir / "summary.csv").string());
  return kOk;
}

// -- compare ------------------------------------------------------------------

struct CompareArgs {
  fs::path a;
  fs::path b;
  std::optional<fs::path> out;
};

int cmd_compare(const CompareArgs& args) {
  const auto a = read_summary_csv(args.a);
  const auto b = read_summary_csv(args.b);
  const auto gains = compare(a, b);
  auto opt = [](const std::optional<double>& v) { return v ? number(*v) : std::string(); };
  std::string csv = "column,a_mean,a_sd,b_mean,b_sd,gain,seed_gain_mean,seed_gain_sd\n";
  fmt::print("{:<18} {:>12} {:>12} {:>10}\n", "column", "a", "b", "gain");
  for (const auto& g : gains) {
    csv += fmt::format("{},{},{},{},{},{},{},{}\n", g.column, number(g.a_mean), number(g.a_sd), number(g.b_mean),
                       number(g.b_sd), opt(g.gain), opt(g.seed_gain_mean), opt(g.seed_gain_sd));
    fmt::print("{:<18} {:>12.4f} {:>12.4f} {:>10}\n", g.column, g.a_mean, g.b_mean,
               g.gain ? fmt::format("{:+.1f}%", 100.0 * *g.gain) : std::string("-"));
  }
  if (args.out) write_text(*args.out, csv);
  return kOk;
}

// -- demo ---------------------------------------------------------------------

struct DemoArgs {
  std::optional<fs::path> out_dir;
  std::string which = "all";
};

void write_tables(const Scenario& s, const fs::path& dir) {
  const auto records = training_records(s);
  for (Protocol p : {Protocol::OvdfP, Protocol::OvdfU}) {
    const PolicyBuild build = build_policy(s, p, observed_stats(s, p, records));
    if (!build.solution.report.converged) {
      throw SolverError(fmt::format("{} policy for {} did not converge", protocol_name(p), s.name));
    }
    const std::string name = p == Protocol::OvdfP ? "table_ovdf_p.json" : "table_ovdf_u.json";
    write_json_file(dir / name, to_json(build.table, build.graph));
  }
}

int cmd_demo(const DemoArgs& a) {
  const fs::path root = a.out_dir.value_or(default_out_dir());
  if (a.which != "downtown") {
    const Scenario toy = toy_scenario();
    const auto toy_dir = root / "toy";
    write_scenario(toy, toy_dir, "scenario");
    write_tables(toy, toy_dir);
    fmt::print("demo: {} ({} intersections) in {}\n", toy.name, toy.graph.intersection_count(), toy_dir.string());
  }
  if (a.which == "toy") return kOk;
  for (const auto& level : downtown_densities()) {
    const Scenario s = downtown_scenario(level);
    const auto dir = root / fmt::format("downtown_{}", level.vehicles);
    write_scenario(s, dir, "scenario");
    write_tables(s, dir);
    fmt::print("demo: {} ({} vehicles, {} buses) in {}\n", s.name, level.vehicles, level.buses, dir.string());
  }
  return kOk;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vehicular sensor network routing: statistics, policy solving and simulation"};
  app.require_subcommand(1);

  StatsArgs stats;
  auto* s = app.add_subcommand("stats", "Estimate traffic statistics from a GPS trace");
  s->add_option("--trace", stats.trace, "Trace CSV (vehicle_id,vtype,timestamp,lat,lon or x,y)")->required();
  s->add_option("--graph", stats.graph, "Road graph JSON")->required();
  s->add_option("--out", stats.out, "Statistics JSON to write")->required();
  s->add_flag("--planar", stats.planar, "Trace columns are x,y in meters");
  s->add_option("--window", stats.window_s, "Contact window in seconds for meeting probabilities")
      ->check(CLI::PositiveNumber);
  s->add_flag("--unpredictable-only", stats.unpredictable_only, "Treat buses as ordinary vehicles on the road graph");

  SolveArgs solve;
  auto* v = app.add_subcommand("solve", "Compute the optimal forwarding policy and routing table");
  v->add_option("--graph", solve.graph, "Road graph JSON")->required();
  v->add_option("--stats", solve.stats, "Statistics JSON")->required();
  v->add_option("--out", solve.out_dir, "Output directory (default $VSN_OUT_DIR or .)");
  v->add_option("--protocol", solve.protocol, "OVDF-P (with bus lines) or OVDF-U (road graph only)");
  v->add_option("--epsilon", solve.epsilon, "Convergence threshold in seconds");
  v->add_option("--max-iter", solve.max_iter, "Maximum value-iteration sweeps");
  v->add_option("--brute-force-cap", solve.brute_force_cap, "Largest candidate set searched exhaustively");
  v->add_flag("--gauss-seidel", solve.gauss_seidel, "In-place sweeps");
  v->add_flag("--dump-delays", solve.dump_delays, "Also write per-edge delays to edge_delays.csv");
  v->add_flag("--fill-defaults", solve.fill_defaults, "Fill uncovered intersections and segments with defaults");

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Run the simulator and write metrics");
  m->add_option("--scenario", sim.scenario, "Scenario JSON")->required();
  m->add_option("--protocol", sim.protocol, "OVDF-P, OVDF-U, GPSR or EPIDEMIC")->required();
  m->add_option("--seed", sim.seed, "First seed (default: the scenario's)");
  m->add_option("--seeds", sim.seeds, "Number of consecutive seeds to run");
  m->add_option("--routing-table", sim.routing_table, "Routing table JSON (OVDF protocols)");
  m->add_option("--out", sim.out_dir, "Output directory (default $VSN_OUT_DIR or .)");
  m->add_option("--jobs", sim.jobs, "Parallel runs");

  CompareArgs cmp;
  auto* c = app.add_subcommand("compare", "Relative gains of one summary over another");
  c->add_option("a", cmp.a, "summary.csv of the protocol under test")->required();
  c->add_option("b", cmp.b, "summary.csv of the baseline")->required();
  c->add_option("--out", cmp.out, "Write the comparison as CSV");

  DemoArgs demo;
  auto* d = app.add_subcommand("demo", "Write the bundled toy and downtown scenarios with routing tables");
  d->add_option("--out", demo.out_dir, "Output directory (default $VSN_OUT_DIR or .)");
  d->add_option("--which", demo.which, "toy, downtown or all")->check(CLI::IsMember({"toy", "downtown", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*s) return cmd_stats(stats);
    if (*v) {
      if (solve.out_dir.empty()) solve.out_dir = default_out_dir();
      return cmd_solve(solve);
    }
    if (*m) return cmd_simulate(sim);
    if (*c) return cmd_compare(cmp);
    if (*d) return cmd_demo(demo);
  } catch (const UsageError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const SolverError& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kNoConvergence;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kValidation;
  }
  return kUsage;
}
