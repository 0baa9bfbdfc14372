#pragma once

#include "vsn/geometry.hpp"
#include "vsn/road_graph.hpp"
#include "vsn/sim/scenario.hpp"
#include "vsn/sim/simulator.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vsn::sim {

// Packets created later than sim_duration - deadline cannot show a full
// deadline window and are left out of every ratio.
bool counted(const PacketRecord& p, const RunResult& run);
bool delivered_within(const PacketRecord& p, double deadline_s);

struct Tally {
  std::size_t generated = 0;
  std::size_t delivered = 0;
  std::optional<double> ratio() const;
};

struct Summary {
  Tally all;
  Tally near_ap; // origin within radio range of an AP
  Tally far;     // origin at least far_threshold_m from every AP
  std::size_t censored = 0;
  std::optional<double> delay_mean_s;
  std::optional<double> delay_p50_s;
  std::optional<double> delay_p90_s;
  std::optional<double> hops_mean;
};

Summary summarize(const RunResult& run, const RoadGraph& graph, const RadioOptions& radio,
                  const MetricsOptions& options);

// Linear-interpolated quantile of unsorted values, q in [0, 1].
double quantile(std::vector<double> values, double q);

struct Square {
  int ix = 0;
  int iy = 0;
  Tally tally;
  bool valid = false;
};

struct CoverageGrid {
  Point origin;
  double side_m = 0.0;
  int nx = 0;
  int ny = 0;
  std::size_t threshold = 0; // minimum generated count of a valid square
  std::vector<Square> squares; // row-major over (iy, ix)
};

// Squares of `side_m` anchored at `origin` covering `extent_max`. The
// threshold is the smallest count among the busiest squares that together
// hold at least `share` of all counted packets.
CoverageGrid coverage_grid(const RunResult& run, Point origin, Point extent_max, double side_m, double share);
CoverageGrid coverage_grid(const RunResult& run, const RoadGraph& graph, const MetricsOptions& options);

struct DistanceBin {
  double lo_m = 0.0;
  double hi_m = 0.0;
  Tally tally;
};

// Packets binned by distance from their origin to the nearest AP; empty bins omitted.
std::vector<DistanceBin> ratio_by_distance(const RunResult& run, std::span<const Point> aps, double bin_m);
std::vector<DistanceBin> ratio_by_distance(const RunResult& run, const RoadGraph& graph, double bin_m);

// One row of summary.csv.
struct SummaryRow {
  std::string scenario_hash;
  std::string protocol;
  std::string seed; // a number, or "mean" / "sd" for aggregate rows
  std::map<std::string, double> values; // missing values are absent
};

// Column order of the numeric summary fields.
std::span<const std::string> summary_columns();
SummaryRow summary_row(const RunResult& run, const Summary& summary);
// Mean and sample standard deviation over per-seed rows, per column.
std::pair<SummaryRow, SummaryRow> aggregate(std::span<const SummaryRow> rows);

void write_summary_csv(const std::filesystem::path& path, std::span<const SummaryRow> rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);

// Appends one run's squares / bins, tagged with protocol and seed.
std::string coverage_csv_header();
std::string coverage_csv_rows(const RunResult& run, const CoverageGrid& grid);
std::string distance_csv_header();
std::string distance_csv_rows(const RunResult& run, std::span<const DistanceBin> bins);

struct Gain {
  std::string column;
  double a_mean = 0.0;
  double a_sd = 0.0;
  double b_mean = 0.0;
  double b_sd = 0.0;
  std::optional<double> gain; // (a - b) / b on the means; absent when b is zero
  std::optional<double> seed_gain_mean; // per-seed gains over shared seeds
  std::optional<double> seed_gain_sd;
};

// Relative gains of `a` over `b`. Throws ValidationError when the two sets
// were produced on different scenarios.
std::vector<Gain> compare(std::span<const SummaryRow> a, std::span<const SummaryRow> b);

} // namespace vsn::sim
