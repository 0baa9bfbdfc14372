#pragma once

#include "vsn/sim/scenario.hpp"

#include <filesystem>
#include <span>
#include <string>

namespace vsn::sim {

// The 3x3 toy network: 500 m blocks, APs at 7 and 9, one bus line 1-2-5-8-9.
Scenario toy_scenario();

struct DensityLevel {
  int vehicles = 0;
  int buses = 0;
};

// Fleet sizes of the downtown density sweep, densest first.
std::span<const DensityLevel> downtown_densities();

// Synthetic downtown: a 12 x 7 street grid (84 intersections, 112 two-way
// roads) split by a river with two bridges, 5 APs and 6 circular bus loops,
// with traffic concentrated on arterials.
Scenario downtown_scenario(DensityLevel level);

// Writes <dir>/graph.json, <dir>/stats.json and <dir>/<name>.json; returns the
// scenario file path.
std::filesystem::path write_scenario(const Scenario& scenario, const std::filesystem::path& dir,
                                     const std::string& name);

} // namespace vsn::sim
