#include "vsn/sim/metrics.hpp"

#include "vsn/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace vsn::sim {

bool counted(const PacketRecord& p, const RunResult& run) {
  return p.created <= run.sim_duration_s - run.deadline_s;
}

bool delivered_within(const PacketRecord& p, double deadline_s) {
  return p.delivered && *p.delivered - p.created <= deadline_s;
}

std::optional<double> Tally::ratio() const {
  if (generated == 0) return std::nullopt;
  return static_cast<double>(delivered) / static_cast<double>(generated);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw UsageError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (values[hi] - values[lo]) * (pos - static_cast<double>(lo));
}

namespace {

std::vector<Point> ap_points(const RoadGraph& graph) {
  std::vector<Point> out;
  for (NodeIndex a : graph.ap_indices()) out.push_back(graph.intersection(a).position);
  return out;
}

double nearest(Point p, std::span<const Point> aps) {
  double best = std::numeric_limits<double>::infinity();
  for (Point a : aps) best = std::min(best, distance(p, a));
  return best;
}

void add(Tally& t, bool delivered) {
  ++t.generated;
  if (delivered) ++t.delivered;
}

} // namespace

Summary summarize(const RunResult& run, const RoadGraph& graph, const RadioOptions& radio,
                  const MetricsOptions& options) {
  const auto aps = ap_points(graph);
  Summary s;
  std::vector<double> delays;
  double hops = 0.0;
  for (const auto& p : run.packets) {
    if (!counted(p, run)) {
      ++s.censored;
      continue;
    }
    const bool ok = delivered_within(p, run.deadline_s);
    add(s.all, ok);
    const double d = nearest(p.origin, aps);
    if (d <= radio.range_m) add(s.near_ap, ok);
    if (d >= options.far_threshold_m) add(s.far, ok);
    if (ok) {
      delays.push_back(*p.delivered - p.created);
      hops += p.hops;
    }
  }
  if (!delays.empty()) {
    s.delay_mean_s = std::accumulate(delays.begin(), delays.end(), 0.0) / static_cast<double>(delays.size());
    s.hops_mean = hops / static_cast<double>(delays.size());
    s.delay_p50_s = quantile(delays, 0.5);
    s.delay_p90_s = quantile(delays, 0.9);
  }
  return s;
}

CoverageGrid coverage_grid(const RunResult& run, Point origin, Point extent_max, double side_m, double share) {
  if (!(side_m > 0.0)) throw UsageError("square side must be positive");
  CoverageGrid grid;
  grid.origin = origin;
  grid.side_m = side_m;
  grid.nx = std::max(1, static_cast<int>(std::floor((extent_max.x - origin.x) / side_m)) + 1);
  grid.ny = std::max(1, static_cast<int>(std::floor((extent_max.y - origin.y) / side_m)) + 1);
  grid.squares.resize(static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.ny));
  for (int iy = 0; iy < grid.ny; ++iy) {
    for (int ix = 0; ix < grid.nx; ++ix) {
      auto& sq = grid.squares[static_cast<std::size_t>(iy) * static_cast<std::size_t>(grid.nx) + static_cast<std::size_t>(ix)];
      sq.ix = ix;
      sq.iy = iy;
    }
  }
  std::size_t total = 0;
  for (const auto& p : run.packets) {
    if (!counted(p, run)) continue;
    const int ix = std::clamp(static_cast<int>(std::floor((p.origin.x - origin.x) / side_m)), 0, grid.nx - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((p.origin.y - origin.y) / side_m)), 0, grid.ny - 1);
    add(grid.squares[static_cast<std::size_t>(iy) * static_cast<std::size_t>(grid.nx) + static_cast<std::size_t>(ix)].tally,
        delivered_within(p, run.deadline_s));
    ++total;
  }
  std::vector<std::size_t> counts;
  for (const auto& sq : grid.squares) {
    if (sq.tally.generated > 0) counts.push_back(sq.tally.generated);
  }
  std::sort(counts.rbegin(), counts.rend());
  std::size_t covered = 0;
  for (std::size_t c : counts) {
    covered += c;
    grid.threshold = c;
    if (static_cast<double>(covered) >= share * static_cast<double>(total)) break;
  }
  for (auto& sq : grid.squares) sq.valid = sq.tally.generated > 0 && sq.tally.generated >= grid.threshold;
  return grid;
}

CoverageGrid coverage_grid(const RunResult& run, const RoadGraph& graph, const MetricsOptions& options) {
  Point lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point hi{-lo.x, -lo.y};
  for (const auto& i : graph.intersections()) {
    lo = {std::min(lo.x, i.position.x), std::min(lo.y, i.position.y)};
    hi = {std::max(hi.x, i.position.x), std::max(hi.y, i.position.y)};
  }
  return coverage_grid(run, lo, hi, options.square_m, options.coverage_share);
}

std::vector<DistanceBin> ratio_by_distance(const RunResult& run, std::span<const Point> aps, double bin_m) {
  if (!(bin_m > 0.0)) throw UsageError("distance bin width must be positive");
  if (aps.empty()) throw UsageError("no APs to measure distance from");
  std::map<std::size_t, Tally> bins;
  for (const auto& p : run.packets) {
    if (!counted(p, run)) continue;
    const auto k = static_cast<std::size_t>(std::floor(nearest(p.origin, aps) / bin_m));
    add(bins[k], delivered_within(p, run.deadline_s));
  }
  std::vector<DistanceBin> out;
  for (const auto& [k, t] : bins) {
    out.push_back({static_cast<double>(k) * bin_m, static_cast<double>(k + 1) * bin_m, t});
  }
  return out;
}

std::vector<DistanceBin> ratio_by_distance(const RunResult& run, const RoadGraph& graph, double bin_m) {
  const auto aps = ap_points(graph);
  return ratio_by_distance(run, aps, bin_m);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const std::array<std::string, 15> kColumns{
    "generated",    "delivered",   "delivery_ratio", "near_generated", "near_ratio",
    "far_generated", "far_ratio",  "censored",       "delay_mean_s",   "delay_p50_s",
    "delay_p90_s",  "hops_mean",   "transfers",      "generation_drops", "evictions"};

std::string number(double v) { return fmt::format("{}", v); }

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string cell(const std::optional<double>& v) { return v ? number(*v) : std::string(); }

} // namespace

std::span<const std::string> summary_columns() { return kColumns; }

SummaryRow summary_row(const RunResult& run, const Summary& s) {
  SummaryRow row{run.scenario_hash, std::string(protocol_name(run.protocol)), std::to_string(run.seed), {}};
  auto put = [&](const std::string& k, std::optional<double> v) {
    if (v) row.values[k] = *v;
  };
  put("generated", static_cast<double>(s.all.generated));
  put("delivered", static_cast<double>(s.all.delivered));
  put("delivery_ratio", s.all.ratio());
  put("near_generated", static_cast<double>(s.near_ap.generated));
  put("near_ratio", s.near_ap.ratio());
  put("far_generated", static_cast<double>(s.far.generated));
  put("far_ratio", s.far.ratio());
  put("censored", static_cast<double>(s.censored));
  put("delay_mean_s", s.delay_mean_s);
  put("delay_p50_s", s.delay_p50_s);
  put("delay_p90_s", s.delay_p90_s);
  put("hops_mean", s.hops_mean);
  put("transfers", static_cast<double>(run.counters.transfers));
  put("generation_drops", static_cast<double>(run.counters.generation_drops));
  put("evictions", static_cast<double>(run.counters.evictions));
  return row;
}

std::pair<SummaryRow, SummaryRow> aggregate(std::span<const SummaryRow> rows) {
  if (rows.empty()) throw UsageError("nothing to aggregate");
  SummaryRow mean{rows.front().scenario_hash, rows.front().protocol, "mean", {}};
  SummaryRow sd{rows.front().scenario_hash, rows.front().protocol, "sd", {}};
  for (const auto& col : kColumns) {
    std::vector<double> xs;
    for (const auto& r : rows) {
      auto it = r.values.find(col);
      if (it != r.values.end()) xs.push_back(it->second);
    }
    if (xs.empty()) continue;
    const double m = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - m) * (x - m);
    mean.values[col] = m;
    sd.values[col] = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  }
  return {mean, sd};
}

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(fmt::format("cannot write {}", path.string()));
  out << "scenario_hash,protocol,seed";
  for (const auto& c : kColumns) out << ',' << c;
  out << '\n';
  for (const auto& r : rows) {
    out << r.scenario_hash << ',' << r.protocol << ',' << r.seed;
    for (const auto& c : kColumns) {
      auto it = r.values.find(c);
      out << ',' << (it == r.values.end() ? std::string() : number(it->second));
    }
    out << '\n';
  }
}

std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(fmt::format("cannot read {}", path.string()));
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(fmt::format("{}: empty file", path.string()));
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "scenario_hash" || header[1] != "protocol" || header[2] != "seed") {
    throw ValidationError(fmt::format("{}: not a summary file", path.string()));
  }
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line);
    if (cells.size() != header.size()) {
      throw ValidationError(fmt::format("{} line {}: expected {} fields", path.string(), lineno, header.size()));
    }
    SummaryRow row{cells[0], cells[1], cells[2], {}};
    for (std::size_t k = 3; k < cells.size(); ++k) {
      if (cells[k].empty()) continue;
      try {
        row.values[header[k]] = std::stod(cells[k]);
      } catch (const std::exception&) {
        throw ValidationError(fmt::format("{} line {}: bad number '{}'", path.string(), lineno, cells[k]));
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string coverage_csv_header() { return "protocol,seed,square_x,square_y,generated,delivered,ratio,valid\n"; }

std::string coverage_csv_rows(const RunResult& run, const CoverageGrid& grid) {
  std::string out;
  for (const auto& sq : grid.squares) {
    out += fmt::format("{},{},{},{},{},{},{},{}\n", protocol_name(run.protocol), run.seed, sq.ix, sq.iy,
                       sq.tally.generated, sq.tally.delivered, cell(sq.tally.ratio()), sq.valid ? 1 : 0);
  }
  return out;
}

std::string distance_csv_header() { return "protocol,seed,bin_lo_m,bin_hi_m,generated,delivered,ratio\n"; }

std::string distance_csv_rows(const RunResult& run, std::span<const DistanceBin> bins) {
  std::string out;
  for (const auto& b : bins) {
    out += fmt::format("{},{},{},{},{},{},{}\n", protocol_name(run.protocol), run.seed, number(b.lo_m), number(b.hi_m),
                       b.tally.generated, b.tally.delivered, cell(b.tally.ratio()));
  }
  return out;
}

std::vector<Gain> compare(std::span<const SummaryRow> a, std::span<const SummaryRow> b) {
  auto seeds_of = [](std::span<const SummaryRow> rows) {
    std::vector<SummaryRow> out;
    for (const auto& r : rows) {
      if (r.seed != "mean" && r.seed != "sd") out.push_back(r);
    }
    if (out.empty()) throw ValidationError("summary holds no per-seed rows");
    return out;
  };
  const auto ra = seeds_of(a);
  const auto rb = seeds_of(b);
  for (const auto& r : ra) {
    for (const auto& q : rb) {
      if (r.scenario_hash != q.scenario_hash) {
        throw ValidationError(fmt::format("scenario hashes differ ({} vs {}); results are not comparable",
                                          r.scenario_hash, q.scenario_hash));
      }
    }
  }
  const auto [am, asd] = aggregate(ra);
  const auto [bm, bsd] = aggregate(rb);
  std::vector<Gain> out;
  for (const auto& col : kColumns) {
    if (!am.values.count(col) || !bm.values.count(col)) continue;
    Gain g;
    g.column = col;
    g.a_mean = am.values.at(col);
    g.a_sd = asd.values.at(col);
    g.b_mean = bm.values.at(col);
    g.b_sd = bsd.values.at(col);
    if (g.b_mean != 0.0) g.gain = (g.a_mean - g.b_mean) / g.b_mean;
    std::vector<double> per_seed;
    for (const auto& r : ra) {
      for (const auto& q : rb) {
        if (r.seed != q.seed) continue;
        auto x = r.values.find(col);
        auto y = q.values.find(col);
        if (x != r.values.end() && y != q.values.end() && y->second != 0.0) {
          per_seed.push_back((x->second - y->second) / y->second);
        }
      }
    }
    if (!per_seed.empty()) {
      const double m = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / static_cast<double>(per_seed.size());
      double ss = 0.0;
      for (double x : per_seed) ss += (x - m) * (x - m);
      g.seed_gain_mean = m;
      g.seed_gain_sd = per_seed.size() > 1 ? std::sqrt(ss / static_cast<double>(per_seed.size() - 1)) : 0.0;
    }
    out.push_back(g);
  }
  return out;
}

} // namespace vsn::sim
