#pragma once

#include "vsn/road_graph.hpp"
#include "vsn/routing_table.hpp"
#include "vsn/sim/mobility.hpp"
#include "vsn/sim/scenario.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace vsn::sim {

using PacketId = std::uint32_t;
using VehicleId = std::uint32_t;

struct PacketRecord {
  PacketId id = 0; // ids follow creation order
  VehicleId vehicle = 0;
  GenerationReason reason = GenerationReason::Interval;
  std::optional<NodeIndex> node; // intersection of an intersection-rule packet
  double created = 0.0;
  Point origin;
  std::optional<double> delivered;
  std::optional<NodeIndex> ap;
  int hops = 0;
  bool dropped = false; // refused at generation by a full buffer
};

struct RunCounters {
  std::size_t transfers = 0;        // packet transmissions, AP uploads included
  std::size_t generation_drops = 0; // single-copy protocols only
  std::size_t evictions = 0;        // Epidemic only
  std::size_t rejections = 0;       // Epidemic copies refused by a full buffer
  std::size_t budget_limited = 0;   // batches cut short by the transfer budget
};

struct RunResult {
  std::string scenario_hash;
  Protocol protocol = Protocol::OvdfP;
  std::uint64_t seed = 0;
  double sim_duration_s = 0.0;
  double deadline_s = 0.0;
  std::size_t vehicles = 0;
  std::vector<PacketRecord> packets;
  RunCounters counters;
  // Filled on request: packet ids held per vehicle, and those still on the
  // air, when the run ends.
  std::vector<std::vector<PacketId>> buffers;
  std::vector<PacketId> in_flight;
};

enum class Admission { Admit, EvictOldest, Refuse };

// Epidemic buffer policy for an incoming copy: a full buffer evicts its oldest
// copy to admit a newer one and refuses copies older than all it holds.
Admission epidemic_admission(std::size_t occupied, std::size_t capacity, std::optional<PacketId> oldest,
                             PacketId incoming);

// A routing-table entry resolved against the simulated graph.
struct TableEntry {
  NodeIndex to = 0;
  VehicleType vtype = kUnpredictable;
  EdgeIndex edge = 0;
};
using ForwardingTable = std::vector<std::vector<TableEntry>>;

// Maps a table built on `built_on` (the scenario graph or its bus-free road
// graph) onto `graph`. Entries whose edge does not exist in `graph` are an error.
ForwardingTable resolve_table(const RoutingTable& table, const RoadGraph& built_on, const RoadGraph& graph);

// Trajectories for one run: synthetic from `seed`, or the scenario's trace.
std::vector<Trajectory> build_fleet(const Scenario& scenario, std::uint64_t seed);

struct RunOptions {
  std::uint64_t seed = 1;
  const ForwardingTable* table = nullptr;         // required by OVDF-P and OVDF-U
  const std::vector<Trajectory>* fleet = nullptr; // built from the seed when absent
  bool keep_buffers = false;
};

RunResult run(const Scenario& scenario, Protocol protocol, const RunOptions& options);

} // namespace vsn::sim
