#include "vsn/sim/simulator.hpp"

#include "vsn/error.hpp"
#include "vsn/traffic_stats.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <queue>
#include <random>
#include <set>

namespace vsn::sim {

ForwardingTable resolve_table(const RoutingTable& table, const RoadGraph& built_on, const RoadGraph& graph) {
  if (built_on.intersection_count() != graph.intersection_count()) {
    throw ValidationError("routing table was built for a graph with different intersections");
  }
  if (table.order.size() != graph.intersection_count()) {
    throw ValidationError("routing table does not cover the scenario graph");
  }
  ForwardingTable out(graph.intersection_count());
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (built_on.id_of(i) != graph.id_of(i)) throw ValidationError("routing table intersections do not match");
    for (EdgeIndex e : table.at(i)) {
      const auto& src = built_on.edge(e);
      auto mine = graph.find_edge(src.from, src.to, src.vtype);
      if (!mine) {
        throw ValidationError(fmt::format("routing table edge {}->{} (type {}) is not in the scenario graph",
                                          graph.id_of(src.from), graph.id_of(src.to), src.vtype));
      }
      out[i].push_back({src.to, src.vtype, *mine});
    }
  }
  return out;
}

std::vector<Trajectory> build_fleet(const Scenario& scenario, std::uint64_t seed) {
  if (scenario.mobility.kind == MobilityKind::Synthetic) {
    std::mt19937_64 rng(seed);
    return synthetic_fleet(scenario.graph, scenario.stats, scenario.mobility.vehicles, scenario.mobility.buses,
                           scenario.sim_duration_s, rng);
  }
  TraceReadOptions read;
  read.planar = scenario.mobility.planar;
  read.geo_origin = scenario.geo_origin;
  const auto records = read_trace_csv(scenario.mobility.trace_file, read);
  check_trace_types(records, scenario.graph);
  auto fleet = trace_fleet(records, scenario.graph);
  double span = 0.0;
  for (const auto& t : fleet) span = std::max(span, t.t_end);
  if (span < scenario.sim_duration_s) {
    throw ValidationError(fmt::format("trace covers {:.0f} s but the run needs {:.0f} s", span,
                                      scenario.sim_duration_s));
  }
  return fleet;
}

Admission epidemic_admission(std::size_t occupied, std::size_t capacity, std::optional<PacketId> oldest,
                             PacketId incoming) {
  if (occupied < capacity) return Admission::Admit;
  if (!oldest || incoming < *oldest) return Admission::Refuse;
  return Admission::EvictOldest;
}

namespace {

constexpr VehicleId kNone = std::numeric_limits<VehicleId>::max();
constexpr NodeIndex kNoNode = std::numeric_limits<NodeIndex>::max();

struct Snap {
  double time = -1.0;
  Location loc;
  Passage pass;
  bool upcoming_ready = false;
  std::vector<NodeIndex> upcoming;
};

struct Transfer {
  double time = 0.0;
  std::uint64_t seq = 0;
  VehicleId from = 0;
  VehicleId to = 0; // kNone for an AP
  NodeIndex ap = 0;
  NodeIndex carry = kNoNode; // carry-mode target applied on receipt
  std::vector<PacketId> packets;
};

struct LaterTransfer {
  bool operator()(const Transfer& a, const Transfer& b) const {
    return a.time != b.time ? a.time > b.time : a.seq > b.seq;
  }
};

struct Action {
  VehicleId to = kNone; // kNone keeps the packets
  NodeIndex carry = kNoNode;
};

class Bits {
public:
  void resize(std::size_t n) { words_.assign((n + 63) / 64, 0); }
  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1U; }
  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  std::size_t words() const { return words_.size(); }
  std::uint64_t word(std::size_t w) const { return words_[w]; }
  std::uint64_t& word(std::size_t w) { return words_[w]; }
  std::optional<std::size_t> first() const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      if (words_[w] != 0) return w * 64 + static_cast<std::size_t>(std::countr_zero(words_[w]));
    }
    return std::nullopt;
  }

private:
  std::vector<std::uint64_t> words_;
};

class Engine {
public:
  Engine(const Scenario& s, Protocol protocol, const RunOptions& options, const std::vector<Trajectory>& fleet)
      : s_(s), g_(s.graph), protocol_(protocol), table_(options.table), fleet_(fleet),
        rng_(options.seed * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL), keep_buffers_(options.keep_buffers) {
    result_.scenario_hash = s.hash();
    result_.protocol = protocol;
    result_.seed = options.seed;
    result_.sim_duration_s = s.sim_duration_s;
    result_.deadline_s = s.deadline_s;
    result_.vehicles = fleet.size();
    for (const auto& t : fleet_) cursors_.emplace_back(t);
    snaps_.resize(fleet_.size());
    aps_ = g_.ap_indices();
    // Radio slots: vehicles first, then APs.
    ap_slot_.assign(g_.intersection_count(), 0);
    for (std::size_t k = 0; k < aps_.size(); ++k) ap_slot_[aps_[k]] = fleet_.size() + k;
    const std::size_t radios = fleet_.size() + aps_.size();
    used_.assign(radios, 0);
    budget_tick_.assign(radios, -1);
    busy_.assign(radios, 0.0);
    schedule_packets();
    if (protocol_ == Protocol::Epidemic) {
      have_.resize(fleet_.size());
      incoming_.resize(fleet_.size());
      for (auto& b : have_) b.resize(result_.packets.size());
      for (auto& b : incoming_) b.resize(result_.packets.size());
      held_count_.assign(fleet_.size(), 0);
      incoming_total_.assign(fleet_.size(), 0);
      copy_hops_.assign(fleet_.size(), std::vector<std::uint16_t>(result_.packets.size(), 0));
      delivered_.resize(result_.packets.size());
      ap_pending_.resize(result_.packets.size());
    } else {
      buffers_.resize(fleet_.size());
      inbound_.assign(fleet_.size(), 0);
      carry_.assign(result_.packets.size(), kNoNode);
    }
    ap_distance_.resize(g_.intersection_count());
    for (NodeIndex i = 0; i < g_.intersection_count(); ++i) ap_distance_[i] = nearest_ap(g_.intersection(i).position).second;
  }

  RunResult run() {
    const double end = s_.sim_duration_s;
    std::size_t next_gen = 0;
    std::int64_t tick = 0;
    for (;;) {
      const double beacon = static_cast<double>(tick) * s_.radio.beacon_period_s;
      const double gen_t = next_gen < result_.packets.size() ? result_.packets[next_gen].created
                                                            : std::numeric_limits<double>::infinity();
      const double xfer_t = transfers_.empty() ? std::numeric_limits<double>::infinity() : transfers_.top().time;
      const double t = std::min({beacon, gen_t, xfer_t});
      if (t > end) break;
      if (xfer_t == t) {
        Transfer tr = transfers_.top();
        transfers_.pop();
        complete(tr);
      } else if (gen_t == t) {
        generate(next_gen++);
      } else {
        on_beacon(beacon, tick);
        ++tick;
      }
    }
    if (keep_buffers_) snapshot_buffers();
    return std::move(result_);
  }

private:
  void snapshot_buffers() {
    result_.buffers.resize(fleet_.size());
    for (VehicleId v = 0; v < fleet_.size(); ++v) {
      auto& out = result_.buffers[v];
      if (protocol_ == Protocol::Epidemic) {
        for (PacketId p = 0; p < result_.packets.size(); ++p) {
          if (have_[v].test(p)) out.push_back(p);
        }
      } else {
        out.assign(buffers_[v].begin(), buffers_[v].end());
      }
    }
    auto pending = transfers_;
    while (!pending.empty()) {
      for (PacketId p : pending.top().packets) result_.in_flight.push_back(p);
      pending.pop();
    }
    std::sort(result_.in_flight.begin(), result_.in_flight.end());
  }

  // -- packets -------------------------------------------------------------

  void schedule_packets() {
    struct Pending {
      double time;
      VehicleId vehicle;
      Generation gen;
    };
    std::vector<Pending> all;
    for (VehicleId v = 0; v < fleet_.size(); ++v) {
      for (const auto& gen : generation_schedule(fleet_[v], g_, s_.generation, s_.sim_duration_s)) {
        all.push_back({gen.time, v, gen});
      }
    }
    std::stable_sort(all.begin(), all.end(), [](const Pending& a, const Pending& b) {
      return a.time != b.time ? a.time < b.time : a.vehicle < b.vehicle;
    });
    result_.packets.reserve(all.size());
    for (const auto& p : all) {
      PacketRecord rec;
      rec.id = static_cast<PacketId>(result_.packets.size());
      rec.vehicle = p.vehicle;
      rec.reason = p.gen.reason;
      rec.node = p.gen.node;
      rec.created = p.time;
      rec.origin = p.gen.origin;
      result_.packets.push_back(rec);
    }
  }

  void generate(std::size_t index) {
    PacketRecord& rec = result_.packets[index];
    const auto id = static_cast<PacketId>(index);
    if (auto ap = ap_in_range(rec.origin)) {
      rec.delivered = rec.created;
      rec.ap = *ap;
      if (protocol_ == Protocol::Epidemic) delivered_.set(id);
      return;
    }
    const VehicleId v = rec.vehicle;
    if (protocol_ == Protocol::Epidemic) {
      admit(v, id, 0);
      return;
    }
    if (buffers_[v].size() + inbound_[v] >= s_.buffer_capacity) {
      rec.dropped = true;
      ++result_.counters.generation_drops;
      return;
    }
    buffers_[v].insert(id);
  }

  // -- geometry and contacts -----------------------------------------------

  Snap& snap(VehicleId v, double t) {
    Snap& sn = snaps_[v];
    if (sn.time != t) {
      sn.time = t;
      sn.loc = cursors_[v].at(t, g_);
      sn.upcoming_ready = false;
      sn.upcoming.clear();
      if (sn.loc.present) sn.pass = passage(fleet_[v], sn.loc, g_, s_.intersection_radius_m);
    }
    return sn;
  }

  const std::vector<NodeIndex>& upcoming(VehicleId v, double t) {
    Snap& sn = snap(v, t);
    if (!sn.upcoming_ready) {
      sn.upcoming_ready = true;
      const BusLine* line = g_.bus_line(fleet_[v].vtype);
      if (line != nullptr && sn.pass.heading) {
        sn.upcoming = upcoming_nodes(fleet_[v], sn.pass.heading_piece, g_, line->route.size());
      }
    }
    return sn.upcoming;
  }

  // Nearest AP by (distance, id).
  std::pair<NodeIndex, double> nearest_ap(Point p) const {
    NodeIndex best = aps_.front();
    double best_d = std::numeric_limits<double>::infinity();
    for (NodeIndex a : aps_) {
      const double d = distance(p, g_.intersection(a).position);
      if (d < best_d) {
        best_d = d;
        best = a;
      }
    }
    return {best, best_d};
  }

  std::optional<NodeIndex> ap_in_range(Point p) const {
    auto [ap, d] = nearest_ap(p);
    if (d <= s_.radio.range_m) return ap;
    return std::nullopt;
  }

  // Present vehicles within range of `v`, ascending id.
  std::vector<VehicleId> contacts(VehicleId v, double t) {
    std::vector<VehicleId> out;
    const Point p = snap(v, t).loc.position;
    for (VehicleId u = 0; u < fleet_.size(); ++u) {
      if (u == v) continue;
      const Snap& su = snap(u, t);
      if (su.loc.present && distance(p, su.loc.position) <= s_.radio.range_m) out.push_back(u);
    }
    return out;
  }

  // -- radio ---------------------------------------------------------------

  std::int64_t tick_of(double t) const {
    return static_cast<std::int64_t>(std::floor(t / s_.radio.beacon_period_s + 1e-9));
  }

  std::size_t radio_of(VehicleId v, NodeIndex ap) const { return v != kNone ? v : ap_slot_[ap]; }

  // Transfers radio `v` may still make in the beacon period holding `t`.
  std::size_t remaining(std::size_t v, double t) {
    if (s_.radio.ideal) return std::numeric_limits<std::size_t>::max();
    const std::int64_t k = tick_of(t);
    if (budget_tick_[v] != k) {
      budget_tick_[v] = k;
      used_[v] = 0;
    }
    const auto budget = static_cast<std::size_t>(s_.radio.transfer_budget);
    return used_[v] >= budget ? 0 : budget - used_[v];
  }

  void send(double t, VehicleId from, VehicleId to, NodeIndex ap, NodeIndex carry, std::vector<PacketId> packets) {
    if (packets.empty()) return;
    Transfer tr;
    tr.seq = seq_++;
    tr.from = from;
    tr.to = to;
    tr.ap = ap;
    tr.carry = carry;
    const double c = s_.radio.hop_delay_s;
    if (s_.radio.ideal) {
      tr.time = t + c;
    } else {
      const std::size_t rx = radio_of(to, ap);
      tr.time = std::max({t, busy_[from], busy_[rx]}) + c * static_cast<double>(packets.size());
      busy_[from] = busy_[rx] = tr.time;
      used_[from] += packets.size();
      used_[rx] += packets.size();
    }
    result_.counters.transfers += packets.size();
    tr.packets = std::move(packets);
    transfers_.push(std::move(tr));
  }

  void complete(const Transfer& tr) {
    if (protocol_ == Protocol::Epidemic) {
      complete_epidemic(tr);
      return;
    }
    for (PacketId p : tr.packets) {
      PacketRecord& rec = result_.packets[p];
      ++rec.hops;
      if (tr.to == kNone) {
        rec.delivered = tr.time;
        rec.ap = tr.ap;
      } else {
        buffers_[tr.to].insert(p);
        carry_[p] = tr.carry;
      }
    }
    if (tr.to != kNone) {
      inbound_[tr.to] -= tr.packets.size();
      decide(tr.to, tr.time);
    }
  }

  // -- single-copy protocols -------------------------------------------------

  void on_beacon(double t, std::int64_t) {
    if (protocol_ == Protocol::Epidemic) {
      epidemic_round(t);
      return;
    }
    for (VehicleId v = 0; v < fleet_.size(); ++v) {
      if (!buffers_[v].empty()) decide(v, t);
    }
  }

  void decide(VehicleId v, double t) {
    if (buffers_[v].empty()) return;
    const Snap& me = snap(v, t);
    if (!me.loc.present) return;

    if (auto ap = ap_in_range(me.loc.position)) {
      std::vector<PacketId> batch = take(v, t, radio_of(kNone, *ap), buffers_[v].size(), [](PacketId) { return true; });
      send(t, v, kNone, *ap, kNoNode, std::move(batch));
      return;
    }

    // Packets riding a bus shortcut stay aboard until its head intersection.
    const Passage pass = me.pass;
    const bool bus = g_.bus_line(fleet_[v].vtype) != nullptr;
    bool any_free = false;
    for (PacketId p : buffers_[v]) {
      if (carry_[p] == kNoNode) {
        any_free = true;
        continue;
      }
      bool release = pass.in_disc && pass.node == carry_[p];
      if (!release) {
        const auto& up = bus ? upcoming(v, t) : std::vector<NodeIndex>{};
        release = pass.node != carry_[p] && std::find(up.begin(), up.end(), carry_[p]) == up.end();
      }
      if (release) {
        carry_[p] = kNoNode;
        any_free = true;
      }
    }
    if (!any_free) return;

    const Action act = protocol_ == Protocol::Gpsr ? gpsr(v, t) : ovdf(v, t);
    if (act.to == kNone) {
      if (act.carry != kNoNode) {
        for (PacketId p : buffers_[v]) {
          if (carry_[p] == kNoNode) carry_[p] = act.carry;
        }
      }
      return;
    }
    const std::size_t room = s_.buffer_capacity - std::min(s_.buffer_capacity, buffers_[act.to].size() + inbound_[act.to]);
    std::vector<PacketId> batch = take(v, t, act.to, room, [&](PacketId p) { return carry_[p] == kNoNode; });
    inbound_[act.to] += batch.size();
    send(t, v, act.to, 0, act.carry, std::move(batch));
  }

  // Removes up to the budget-limited number of eligible packets from v's
  // buffer, oldest first.
  template <class Pred>
  std::vector<PacketId> take(VehicleId v, double t, std::size_t rx, std::size_t room, Pred eligible) {
    const std::size_t n = std::min({room, remaining(v, t), remaining(rx, t)});
    std::vector<PacketId> out;
    std::size_t wanted = 0;
    for (auto it = buffers_[v].begin(); it != buffers_[v].end();) {
      if (!eligible(*it)) {
        ++it;
        continue;
      }
      ++wanted;
      if (out.size() < n) {
        out.push_back(*it);
        it = buffers_[v].erase(it);
      } else {
        ++it;
      }
    }
    if (wanted > out.size() && out.size() == n && n < room) ++result_.counters.budget_limited;
    return out;
  }

  bool heading_onto(VehicleId w, double t, NodeIndex i, SegmentIndex seg) {
    const Snap& sw = snap(w, t);
    return sw.loc.present && sw.pass.node == i && sw.pass.heading && *sw.pass.heading == seg;
  }

  bool bus_serves(VehicleId w, double t, NodeIndex i, VehicleType vtype, NodeIndex j) {
    if (fleet_[w].vtype != vtype) return false;
    const Snap& sw = snap(w, t);
    if (!sw.loc.present || sw.pass.node != i || !sw.pass.heading) return false;
    const auto& up = upcoming(w, t);
    return std::find(up.begin(), up.end(), j) != up.end();
  }

  bool available(VehicleId w, double t, NodeIndex i, const TableEntry& e) {
    if (e.vtype == kUnpredictable) return heading_onto(w, t, i, g_.edge(e.edge).segments.front());
    return bus_serves(w, t, i, e.vtype, e.to);
  }

  // First available entry of `entries`: keep when the holder itself takes it,
  // otherwise hand over to the lowest-id contact that does.
  std::optional<Action> scan(VehicleId v, double t, NodeIndex i, const std::vector<TableEntry>& entries,
                             const std::vector<VehicleId>& near) {
    for (const auto& e : entries) {
      const NodeIndex carry = g_.edge(e.edge).single_segment() ? kNoNode : e.to;
      if (available(v, t, i, e)) return Action{kNone, carry};
      for (VehicleId u : near) {
        if (available(u, t, i, e)) return Action{u, carry};
      }
    }
    return std::nullopt;
  }

  // Contact on the same directed segment, strictly ahead, farthest along.
  Action along_edge(VehicleId v, double t, const std::vector<VehicleId>& near) {
    const Snap& me = snap(v, t);
    Action best;
    double best_off = me.loc.offset;
    for (VehicleId u : near) {
      const Snap& su = snap(u, t);
      if (su.loc.segment == me.loc.segment && su.loc.offset > best_off) {
        best_off = su.loc.offset;
        best.to = u;
      }
    }
    return best;
  }

  Action ovdf(VehicleId v, double t) {
    const Snap& me = snap(v, t);
    const Passage pass = me.pass;
    const auto near = contacts(v, t);
    if (pass.in_disc) {
      if (auto act = scan(v, t, pass.node, (*table_)[pass.node], near)) return *act;
      return {};
    }
    return along_edge(v, t, near);
  }

  Action gpsr(VehicleId v, double t) {
    const Snap& me = snap(v, t);
    const Passage pass = me.pass;
    const auto near = contacts(v, t);
    if (pass.in_disc) {
      const NodeIndex i = pass.node;
      std::vector<TableEntry> closer;
      for (EdgeIndex e : g_.out_edges(i)) {
        const auto& edge = g_.edge(e);
        if (edge.vtype == kUnpredictable && ap_distance_[edge.to] < ap_distance_[i]) {
          closer.push_back({edge.to, kUnpredictable, e});
        }
      }
      std::stable_sort(closer.begin(), closer.end(), [&](const TableEntry& a, const TableEntry& b) {
        return ap_distance_[a.to] < ap_distance_[b.to];
      });
      if (auto act = scan(v, t, i, closer, near)) return *act;
    }
    // Greedy: the contact nearest to its own nearest AP, if closer than us.
    double best_d = nearest_ap(me.loc.position).second;
    Action best;
    for (VehicleId u : near) {
      const double d = nearest_ap(snap(u, t).loc.position).second;
      if (d < best_d) {
        best_d = d;
        best.to = u;
      }
    }
    return best;
  }

  // -- Epidemic --------------------------------------------------------------

  // Frees a slot for copy `p` at `v` if the buffer is full; false when refused.
  bool make_room(VehicleId v, PacketId p) {
    switch (epidemic_admission(held_count_[v] + incoming_total_[v], s_.buffer_capacity, have_[v].first(), p)) {
    case Admission::Admit: return true;
    case Admission::Refuse: ++result_.counters.rejections; return false;
    case Admission::EvictOldest: break;
    }
    have_[v].reset(*have_[v].first());
    --held_count_[v];
    ++result_.counters.evictions;
    return true;
  }

  void admit(VehicleId v, PacketId p, std::uint16_t hops) {
    if (!make_room(v, p)) return;
    have_[v].set(p);
    copy_hops_[v][p] = hops;
    ++held_count_[v];
  }

  void epidemic_round(double t) {
    const std::size_t n = fleet_.size();
    std::vector<Point> pos(n);
    std::vector<bool> present(n, false);
    for (VehicleId v = 0; v < n; ++v) {
      const Snap& sv = snap(v, t);
      present[v] = sv.loc.present;
      pos[v] = sv.loc.position;
    }

    // Uploads and acks at APs.
    for (VehicleId v = 0; v < n; ++v) {
      if (!present[v]) continue;
      auto ap = ap_in_range(pos[v]);
      if (!ap) continue;
      Bits& h = have_[v];
      for (std::size_t w = 0; w < h.words(); ++w) {
        const std::uint64_t acked = h.word(w) & delivered_.word(w);
        held_count_[v] -= static_cast<std::size_t>(std::popcount(acked));
        h.word(w) &= ~acked;
      }
      const std::size_t budget = std::min(remaining(v, t), remaining(radio_of(kNone, *ap), t));
      std::vector<PacketId> batch;
      for (std::size_t w = 0; w < h.words() && batch.size() < budget; ++w) {
        std::uint64_t bits = h.word(w) & ~ap_pending_.word(w);
        while (bits != 0 && batch.size() < budget) {
          const auto p = static_cast<PacketId>(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
          bits &= bits - 1;
          batch.push_back(p);
          ap_pending_.set(p);
        }
      }
      send(t, v, kNone, *ap, kNoNode, std::move(batch));
    }

    std::vector<std::pair<VehicleId, VehicleId>> pairs;
    for (VehicleId a = 0; a < n; ++a) {
      if (!present[a]) continue;
      for (VehicleId b = a + 1; b < n; ++b) {
        if (present[b] && distance(pos[a], pos[b]) <= s_.radio.range_m) pairs.emplace_back(a, b);
      }
    }
    std::shuffle(pairs.begin(), pairs.end(), rng_);
    std::bernoulli_distribution coin(0.5);
    for (auto [a, b] : pairs) {
      if (coin(rng_)) std::swap(a, b);
      copy_across(t, a, b);
      copy_across(t, b, a);
    }
  }

  void copy_across(double t, VehicleId from, VehicleId to) {
    const std::size_t budget = std::min(remaining(from, t), remaining(to, t));
    if (budget == 0) return;
    std::vector<PacketId> batch;
    const Bits& src = have_[from];
    bool cut = false;
    for (std::size_t w = 0; w < src.words() && !cut; ++w) {
      std::uint64_t bits = src.word(w) & ~have_[to].word(w) & ~incoming_[to].word(w);
      while (bits != 0) {
        if (batch.size() >= budget) {
          cut = true;
          break;
        }
        const auto p = static_cast<PacketId>(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
        bits &= bits - 1;
        // Make room now so the receiver's occupancy never exceeds capacity.
        if (!make_room(to, p)) continue;
        incoming_[to].set(p);
        ++incoming_total_[to];
        batch.push_back(p);
      }
    }
    if (cut) ++result_.counters.budget_limited;
    if (batch.empty()) return;
    for (PacketId p : batch) pending_hops_[{to, p}] = static_cast<std::uint16_t>(copy_hops_[from][p] + 1);
    send(t, from, to, 0, kNoNode, std::move(batch));
  }

  void complete_epidemic(const Transfer& tr) {
    if (tr.to == kNone) {
      for (PacketId p : tr.packets) {
        ap_pending_.reset(p);
        PacketRecord& rec = result_.packets[p];
        if (!rec.delivered) {
          rec.delivered = tr.time;
          rec.ap = tr.ap;
          rec.hops = copy_hops_[tr.from][p] + 1;
          delivered_.set(p);
        }
      }
      return;
    }
    for (PacketId p : tr.packets) {
      incoming_[tr.to].reset(p);
      --incoming_total_[tr.to];
      const auto it = pending_hops_.find({tr.to, p});
      const std::uint16_t hops = it->second;
      pending_hops_.erase(it);
      have_[tr.to].set(p);
      copy_hops_[tr.to][p] = hops;
      ++held_count_[tr.to];
    }
  }

  const Scenario& s_;
  const RoadGraph& g_;
  Protocol protocol_;
  const ForwardingTable* table_;
  const std::vector<Trajectory>& fleet_;
  std::mt19937_64 rng_;
  bool keep_buffers_;
  RunResult result_;

  std::vector<Cursor> cursors_;
  std::vector<Snap> snaps_;
  std::vector<NodeIndex> aps_;
  std::vector<double> ap_distance_;

  std::vector<std::size_t> ap_slot_;
  std::vector<std::size_t> used_;
  std::vector<std::int64_t> budget_tick_;
  std::vector<double> busy_;
  std::priority_queue<Transfer, std::vector<Transfer>, LaterTransfer> transfers_;
  std::uint64_t seq_ = 0;

  // Single-copy state.
  std::vector<std::set<PacketId>> buffers_;
  std::vector<std::size_t> inbound_;
  std::vector<NodeIndex> carry_;

  // Epidemic state.
  std::vector<Bits> have_;
  std::vector<Bits> incoming_;
  std::vector<std::size_t> held_count_;
  std::vector<std::size_t> incoming_total_;
  std::vector<std::vector<std::uint16_t>> copy_hops_;
  std::map<std::pair<VehicleId, PacketId>, std::uint16_t> pending_hops_;
  Bits delivered_;
  Bits ap_pending_;
};

} // namespace

RunResult run(const Scenario& scenario, Protocol protocol, const RunOptions& options) {
  check_scenario(scenario);
  if (uses_routing_table(protocol) && options.table == nullptr) {
    throw UsageError(fmt::format("{} needs a routing table", protocol_name(protocol)));
  }
  if (options.table != nullptr && options.table->size() != scenario.graph.intersection_count()) {
    throw ValidationError("routing table does not match the scenario graph");
  }
  std::vector<Trajectory> own;
  const std::vector<Trajectory>* fleet = options.fleet;
  if (fleet == nullptr) {
    own = build_fleet(scenario, options.seed);
    fleet = &own;
  }
  Engine engine(scenario, protocol, options, *fleet);
  return engine.run();
}

} // namespace vsn::sim
