#include "vsn/sim/mobility.hpp"

#include "vsn/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <unordered_map>

namespace vsn::sim {

namespace {

constexpr double kOffsetEps = 1e-6;
constexpr double kFallbackSpeed = 8.0;

bool at_head(const RoadGraph& g, const Piece& p) { return p.off1 >= g.segment(p.segment).length_m - kOffsetEps; }

// Index of the first piece after `p` that leaves the head of p's segment, if
// the trajectory continues there without a jump.
std::optional<std::size_t> continuation(const Trajectory& traj, std::size_t p, const RoadGraph& g) {
  const SegmentIndex seg = traj.pieces[p].segment;
  std::size_t m = p;
  while (m + 1 < traj.pieces.size() && traj.pieces[m + 1].segment == seg &&
         traj.pieces[m + 1].off0 >= traj.pieces[m].off1 - kOffsetEps) {
    ++m;
  }
  if (!at_head(g, traj.pieces[m]) || m + 1 >= traj.pieces.size()) return std::nullopt;
  const Piece& next = traj.pieces[m + 1];
  if (g.segment(next.segment).from != g.segment(seg).to || next.off0 > kOffsetEps) return std::nullopt;
  return m + 1;
}

double segment_speed(const TrafficStats& stats, const RoadGraph& g, SegmentIndex s, VehicleType vtype) {
  const auto& seg = g.segment(s);
  const SegmentStats* st = stats.segment(g.id_of(seg.from), g.id_of(seg.to));
  if (st == nullptr) return kFallbackSpeed;
  if (vtype != kUnpredictable) {
    auto it = st->bus_speed_mps.find(vtype);
    if (it != st->bus_speed_mps.end() && it->second > 0.0) return it->second;
  }
  return st->speed_mps > 0.0 ? st->speed_mps : kFallbackSpeed;
}

// Picks a start point uniformly by length over the given segments.
std::pair<std::size_t, double> random_start(const std::vector<double>& lengths, std::mt19937_64& rng) {
  double total = 0.0;
  for (double l : lengths) total += l;
  std::uniform_real_distribution<double> pick(0.0, total);
  double u = pick(rng);
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    if (u < lengths[k] || k + 1 == lengths.size()) return {k, std::min(u, lengths[k])};
    u -= lengths[k];
  }
  return {0, 0.0};
}

Trajectory car_trajectory(const RoadGraph& g, const TrafficStats& stats, double duration, std::mt19937_64& rng) {
  Trajectory traj;
  traj.vtype = kUnpredictable;
  traj.t_end = duration;
  std::vector<double> lengths;
  for (const auto& s : g.segments()) lengths.push_back(s.length_m);
  auto [seg, off] = random_start(lengths, rng);
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double t = 0.0;
  auto s = static_cast<SegmentIndex>(seg);
  while (t < duration) {
    const double len = g.segment(s).length_m;
    const double speed = segment_speed(stats, g, s, kUnpredictable) * jitter(rng);
    const double t1 = t + (len - off) / speed;
    traj.pieces.push_back({t, t1, s, off, len});
    t = t1;
    off = 0.0;

    const NodeIndex at = g.segment(s).to;
    std::vector<std::pair<SegmentIndex, double>> choices;
    const IntersectionStats* is = stats.intersection(g.id_of(at));
    double total = 0.0;
    for (EdgeIndex e : g.out_edges(at)) {
      const auto& edge = g.edge(e);
      if (edge.vtype != kUnpredictable) continue;
      double w = 0.0;
      if (is != nullptr) {
        auto it = is->q0.find(g.id_of(edge.to));
        if (it != is->q0.end()) w = it->second;
      }
      choices.push_back({edge.segments.front(), w});
      total += w;
    }
    if (choices.empty()) break; // dead end: park
    if (total <= 0.0) {
      for (auto& c : choices) c.second = 1.0;
      total = static_cast<double>(choices.size());
    }
    double u = unit(rng) * total;
    s = choices.back().first;
    for (const auto& [cand, w] : choices) {
      if (u < w) {
        s = cand;
        break;
      }
      u -= w;
    }
  }
  return traj;
}

Trajectory bus_trajectory(const RoadGraph& g, const TrafficStats& stats, const BusLine& line, double duration,
                          std::mt19937_64& rng) {
  Trajectory traj;
  traj.vtype = line.type;
  traj.t_end = duration;
  const std::size_t n = line.route.size();
  std::vector<SegmentIndex> steps;
  const std::size_t count = line.cyclic ? n : n - 1;
  for (std::size_t k = 0; k < count; ++k) {
    const NodeIndex a = g.index_of(line.route[k]);
    const NodeIndex b = g.index_of(line.route[(k + 1) % n]);
    steps.push_back(*g.find_segment(a, b));
  }
  std::vector<double> lengths;
  for (SegmentIndex s : steps) lengths.push_back(g.segment(s).length_m);
  auto [k, off] = random_start(lengths, rng);
  double t = 0.0;
  while (t < duration) {
    const SegmentIndex s = steps[k];
    const double len = g.segment(s).length_m;
    const double t1 = t + (len - off) / segment_speed(stats, g, s, line.type);
    traj.pieces.push_back({t, t1, s, off, len});
    t = t1;
    off = 0.0;
    k = (k + 1) % steps.size(); // a non-cyclic line restarts from its first stop
  }
  return traj;
}

// Shortest road path by length; returns the segment sequence from `from` to `to`.
std::optional<std::vector<SegmentIndex>> shortest_path(const RoadGraph& g, NodeIndex from, NodeIndex to) {
  if (from == to) return std::vector<SegmentIndex>{};
  const std::size_t n = g.intersection_count();
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::optional<SegmentIndex>> via(n);
  using Item = std::pair<double, NodeIndex>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[from] = 0.0;
  queue.push({0.0, from});
  while (!queue.empty()) {
    auto [d, u] = queue.top();
    queue.pop();
    if (d > dist[u]) continue;
    if (u == to) break;
    for (EdgeIndex e : g.out_edges(u)) {
      const auto& edge = g.edge(e);
      if (edge.vtype != kUnpredictable) continue;
      const SegmentIndex s = edge.segments.front();
      const double nd = d + g.segment(s).length_m;
      if (nd < dist[edge.to]) {
        dist[edge.to] = nd;
        via[edge.to] = s;
        queue.push({nd, edge.to});
      }
    }
  }
  if (!via[to]) return std::nullopt;
  std::vector<SegmentIndex> path;
  for (NodeIndex at = to; at != from; at = g.segment(*via[at]).from) path.push_back(*via[at]);
  std::reverse(path.begin(), path.end());
  return path;
}

} // namespace

Point point_on(const RoadGraph& graph, SegmentIndex segment, double offset) {
  const auto& s = graph.segment(segment);
  return lerp(graph.intersection(s.from).position, graph.intersection(s.to).position, offset / s.length_m);
}

Location Cursor::at(double t, const RoadGraph& graph) {
  const auto& pieces = traj_->pieces;
  Location loc;
  if (pieces.empty() || t < traj_->t_begin || t > traj_->t_end) return loc;
  while (next_ < pieces.size() && pieces[next_].t0 <= t) ++next_;
  loc.present = true;
  if (next_ == 0) {
    const Piece& p = pieces.front();
    loc.piece = 0;
    loc.segment = p.segment;
    loc.offset = p.off0;
  } else {
    const Piece& p = pieces[next_ - 1];
    loc.piece = next_ - 1;
    loc.segment = p.segment;
    if (t >= p.t1 || p.t1 <= p.t0) {
      loc.offset = p.off1;
    } else {
      loc.offset = p.off0 + (p.off1 - p.off0) * (t - p.t0) / (p.t1 - p.t0);
    }
  }
  loc.position = point_on(graph, loc.segment, loc.offset);
  return loc;
}

Passage passage(const Trajectory& traj, const Location& loc, const RoadGraph& graph, double radius_m) {
  const auto& seg = graph.segment(loc.segment);
  const double to_head = seg.length_m - loc.offset;
  const double from_tail = loc.offset;
  Passage out;
  const bool near_head = to_head <= radius_m;
  const bool near_tail = from_tail <= radius_m;
  if (near_tail && (!near_head || from_tail < to_head)) {
    // Just left (or about to leave) the tail intersection along this segment.
    const Piece& p = traj.pieces[loc.piece];
    const bool waiting_at_end = loc.offset >= p.off1 - kOffsetEps && at_head(graph, p);
    if (!waiting_at_end) {
      out.node = seg.from;
      out.in_disc = true;
      out.heading = loc.segment;
      out.heading_piece = loc.piece;
      return out;
    }
  }
  out.node = seg.to;
  out.in_disc = near_head;
  if (auto next = continuation(traj, loc.piece, graph)) {
    out.heading = traj.pieces[*next].segment;
    out.heading_piece = *next;
  }
  return out;
}

std::vector<NodeIndex> upcoming_nodes(const Trajectory& traj, std::size_t heading_piece, const RoadGraph& graph,
                                      std::size_t horizon) {
  std::vector<NodeIndex> out;
  std::optional<std::size_t> p = heading_piece;
  while (p && out.size() < horizon) {
    out.push_back(graph.segment(traj.pieces[*p].segment).to);
    p = continuation(traj, *p, graph);
  }
  return out;
}

std::vector<Trajectory> synthetic_fleet(const RoadGraph& graph, const TrafficStats& stats, int vehicles, int buses,
                                        double duration_s, std::mt19937_64& rng) {
  if (vehicles < 0 || buses < 0 || buses > vehicles) throw UsageError("fleet sizes must satisfy 0 <= buses <= vehicles");
  if (buses > 0 && graph.bus_lines().empty()) throw ValidationError("buses requested on a graph without bus lines");
  if (graph.segments().empty()) throw ValidationError("cannot place vehicles on a graph without segments");
  std::vector<Trajectory> fleet;
  fleet.reserve(static_cast<std::size_t>(vehicles));
  const int cars = vehicles - buses;
  for (int k = 0; k < cars; ++k) {
    fleet.push_back(car_trajectory(graph, stats, duration_s, rng));
    fleet.back().name = fmt::format("car{}", k);
  }
  const auto lines = graph.bus_lines();
  for (int k = 0; k < buses; ++k) {
    const BusLine& line = lines[static_cast<std::size_t>(k) % lines.size()];
    fleet.push_back(bus_trajectory(graph, stats, line, duration_s, rng));
    fleet.back().name = fmt::format("bus{}_{}", line.type, k);
  }
  return fleet;
}

std::vector<Trajectory> trace_fleet(std::span<const TraceRecord> records, const RoadGraph& graph,
                                    double snap_threshold_m) {
  if (records.empty()) throw ValidationError("trace holds no records");
  double t_min = std::numeric_limits<double>::infinity();
  for (const auto& r : records) t_min = std::min(t_min, r.timestamp);

  struct Fix {
    double t;
    SegmentIndex seg;
    double off;
  };
  std::vector<Trajectory> fleet;
  std::vector<std::vector<Fix>> fixes;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& r : records) {
    auto [it, inserted] = slot.try_emplace(r.vehicle_id, fleet.size());
    if (inserted) {
      fleet.push_back({r.vehicle_id, r.vtype, r.timestamp - t_min, r.timestamp - t_min, {}});
      fixes.emplace_back();
    }
    Trajectory& traj = fleet[it->second];
    traj.t_end = std::max(traj.t_end, r.timestamp - t_min);
    if (auto s = snap(r.position, graph, snap_threshold_m)) fixes[it->second].push_back({r.timestamp - t_min, s->segment, s->offset_m});
  }

  for (std::size_t v = 0; v < fleet.size(); ++v) {
    auto& traj = fleet[v];
    const auto& fx = fixes[v];
    for (std::size_t k = 0; k + 1 < fx.size(); ++k) {
      const Fix& a = fx[k];
      const Fix& b = fx[k + 1];
      const double dt = b.t - a.t;
      if (a.seg == b.seg && b.off >= a.off) {
        if (b.off > a.off && dt > 0.0) traj.pieces.push_back({a.t, b.t, a.seg, a.off, b.off});
        continue;
      }
      const auto& sa = graph.segment(a.seg);
      const auto& sb = graph.segment(b.seg);
      auto path = shortest_path(graph, sa.to, sb.from);
      if (!path || dt <= 0.0) continue; // jump
      std::vector<std::tuple<SegmentIndex, double, double>> legs;
      legs.emplace_back(a.seg, a.off, sa.length_m);
      for (SegmentIndex s : *path) legs.emplace_back(s, 0.0, graph.segment(s).length_m);
      legs.emplace_back(b.seg, 0.0, b.off);
      double total = 0.0;
      for (const auto& [s, o0, o1] : legs) total += o1 - o0;
      if (total <= 0.0) continue;
      double t = a.t;
      for (const auto& [s, o0, o1] : legs) {
        if (o1 <= o0) continue;
        const double t1 = t + dt * (o1 - o0) / total;
        traj.pieces.push_back({t, t1, s, o0, o1});
        t = t1;
      }
    }
    if (traj.pieces.empty() && !fx.empty()) {
      // A parked vehicle: a zero-length piece pins its position.
      traj.pieces.push_back({fx.front().t, fx.front().t, fx.front().seg, fx.front().off, fx.front().off});
    }
  }
  return fleet;
}

std::vector<TraceRecord> sample_fleet(std::span<const Trajectory> fleet, const RoadGraph& graph, double period_s,
                                      double duration_s) {
  if (!(period_s > 0.0)) throw UsageError("sampling period must be positive");
  std::vector<TraceRecord> out;
  for (const auto& traj : fleet) {
    Cursor cursor(traj);
    const double end = std::min(traj.t_end, duration_s);
    for (double t = std::ceil(traj.t_begin / period_s) * period_s; t <= end + 1e-9; t += period_s) {
      const Location loc = cursor.at(t, graph);
      if (loc.present) out.push_back({traj.name, traj.vtype, t, loc.position, 0});
    }
  }
  return out;
}

std::vector<Generation> generation_schedule(const Trajectory& traj, const RoadGraph& graph, const GenerationRule& rule,
                                            double until_s) {
  std::vector<Generation> out;
  if (traj.pieces.empty()) return out;
  const double end = std::min(until_s, traj.t_end);
  double last_t = traj.t_begin;
  double last_odo = 0.0;
  double odo = 0.0;
  auto emit = [&](double t, GenerationReason reason, Point where, std::optional<NodeIndex> node, double odo_now) {
    out.push_back({t, reason, where, node});
    last_t = t;
    last_odo = odo_now;
  };
  Point rest = point_on(graph, traj.pieces.front().segment, traj.pieces.front().off0);
  auto idle_until = [&](double until) {
    while (last_t + rule.interval_s <= until) emit(last_t + rule.interval_s, GenerationReason::Interval, rest, {}, odo);
  };

  for (const Piece& p : traj.pieces) {
    if (p.t0 > end) break;
    idle_until(p.t0);
    const double length = p.off1 - p.off0;
    const double span = p.t1 - p.t0;
    const double speed = span > 0.0 ? length / span : 0.0;
    const double odo_start = odo;
    const double stop = std::min(p.t1, end);
    for (;;) {
      const double t_interval = last_t + rule.interval_s;
      const double t_distance = speed > 0.0 ? p.t0 + (last_odo + rule.distance_m - odo_start) / speed
                                            : std::numeric_limits<double>::infinity();
      const double t_next = std::min(t_interval, t_distance);
      if (t_next >= p.t1 || t_next > stop) break;
      const double off = p.off0 + speed * (t_next - p.t0);
      emit(t_next, t_distance <= t_interval ? GenerationReason::Distance : GenerationReason::Interval,
           point_on(graph, p.segment, off), {}, odo_start + speed * (t_next - p.t0));
    }
    if (p.t1 > end) return out;
    odo = odo_start + length;
    rest = point_on(graph, p.segment, p.off1);
    if (length > 0.0 && at_head(graph, p)) {
      const NodeIndex node = graph.segment(p.segment).to;
      emit(p.t1, GenerationReason::Intersection, graph.intersection(node).position, node, odo);
    }
  }
  idle_until(end);
  return out;
}

} // namespace vsn::sim
