#include "vsn/policy_solver.hpp"

#include "vsn/error.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

namespace vsn {

namespace {

constexpr double kPrefixTolerance = 1e-9;

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

} // namespace

std::vector<double> forwarding_probabilities(std::span<const ForwardingOption> ordered) {
  std::vector<double> out(ordered.size());
  double no_contact = 1.0; // probability no higher-priority contact happened
  double q_prefix = 0.0;   // probability the holder moves onto a higher-priority edge
  for (std::size_t k = 0; k < ordered.size(); ++k) {
    if (q_prefix > 1.0 + kPrefixTolerance) {
      throw ValidationError(fmt::format("higher-priority Q values sum to {} > 1", q_prefix));
    }
    const auto [q, c] = ordered[k];
    out[k] = clamp01(no_contact * (c * (1.0 - q_prefix) + q - c * q));
    no_contact *= 1.0 - c;
    q_prefix += q;
  }
  return out;
}

double forwarding_prob(std::span<const ForwardingOption> ordered, std::size_t k) {
  if (k >= ordered.size()) throw UsageError(fmt::format("priority {} out of range 0..{}", k, ordered.size()));
  return forwarding_probabilities(ordered.first(k + 1))[k];
}

double order_value(std::span<const CandidateOption> candidates, std::span<const std::size_t> order) {
  std::vector<ForwardingOption> opts;
  opts.reserve(order.size());
  for (std::size_t idx : order) opts.push_back({candidates[idx].q, candidates[idx].c});
  const auto probs = forwarding_probabilities(opts);
  double value = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) value += probs[k] * candidates[order[k]].cost;
  return value;
}

namespace {

struct PermutationSearch {
  std::span<const CandidateOption> candidates;
  std::vector<std::size_t> current;
  std::vector<bool> used;
  OrderChoice best{{}, std::numeric_limits<double>::infinity()};

  // Prefix state carried down the recursion so each node costs O(1).
  void descend(double no_contact, double q_prefix, double value) {
    if (current.size() == candidates.size()) {
      if (value < best.value) best = {current, value};
      return;
    }
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      if (used[i]) continue;
      const auto& cand = candidates[i];
      const double p = clamp01(no_contact * (cand.c * (1.0 - q_prefix) + cand.q - cand.c * cand.q));
      used[i] = true;
      current.push_back(i);
      descend(no_contact * (1.0 - cand.c), q_prefix + cand.q, value + p * cand.cost);
      current.pop_back();
      used[i] = false;
    }
  }
};

} // namespace

OrderChoice brute_force_order(std::span<const CandidateOption> candidates) {
  double q_total = 0.0;
  for (const auto& c : candidates) q_total += c.q;
  if (q_total > 1.0 + kPrefixTolerance) throw ValidationError(fmt::format("candidate Q values sum to {} > 1", q_total));
  if (candidates.empty()) return {};
  PermutationSearch search{candidates, {}, std::vector<bool>(candidates.size(), false)};
  search.current.reserve(candidates.size());
  search.descend(1.0, 0.0, 0.0);
  return search.best;
}

OrderChoice greedy_order(std::span<const CandidateOption> candidates) {
  OrderChoice choice;
  choice.order.resize(candidates.size());
  std::iota(choice.order.begin(), choice.order.end(), std::size_t{0});
  std::stable_sort(choice.order.begin(), choice.order.end(),
                   [&](std::size_t a, std::size_t b) { return candidates[a].cost < candidates[b].cost; });
  choice.value = order_value(candidates, choice.order);
  return choice;
}

const RoutingDecision& Policy::at(NodeIndex i) const {
  if (i >= decisions.size() || !decisions[i]) throw UsageError(fmt::format("policy has no decision at index {}", i));
  return *decisions[i];
}

ForwardingModel::ForwardingModel(const RoadGraph& graph, const TrafficStats& stats, std::vector<double> edge_delays)
    : graph_(&graph), delays_(std::move(edge_delays)), base_(graph.edges().size()) {
  if (delays_.size() != graph.edges().size()) throw UsageError("edge delay vector does not match the graph");
  for (EdgeIndex e = 0; e < graph.edges().size(); ++e) {
    const auto& edge = graph.edge(e);
    if (graph.is_ap(edge.from)) continue;
    const IntersectionId from = graph.id_of(edge.from);
    const IntersectionStats* s = stats.intersection(from);
    if (s == nullptr || stats.missing.contains(from)) {
      throw ValidationError(fmt::format("missing traffic statistics for intersection {}", from));
    }
    if (edge.vtype == kUnpredictable) {
      const IntersectionId to = graph.id_of(edge.to);
      auto q = s->q0.find(to);
      auto p = s->p0.find(to);
      base_[e] = {q == s->q0.end() ? 0.0 : q->second, p == s->p0.end() ? 0.0 : p->second};
    } else {
      auto q = s->qv.find(edge.vtype);
      auto p = s->pv.find(edge.vtype);
      base_[e] = {q == s->qv.end() ? 0.0 : q->second, p == s->pv.end() ? 0.0 : p->second};
    }
  }
}

ForwardingOption ForwardingModel::qc(EdgeIndex edge, const RoutingDecision& decision) const {
  const auto& e = graph_->edge(edge);
  if (e.vtype == kUnpredictable) return base_[edge];
  for (EdgeIndex other : decision.order) {
    if (graph_->edge(other).vtype == e.vtype) return other == edge ? base_[edge] : ForwardingOption{};
  }
  return {};
}

std::vector<EdgeIndex> ForwardingModel::candidates(NodeIndex i, const DelayVector& delays) const {
  std::vector<EdgeIndex> out;
  std::optional<EdgeIndex> best_bus;
  double best_cost = 0.0;
  auto flush = [&] {
    if (best_bus) out.push_back(*best_bus);
    best_bus.reset();
  };
  // Out-edges come sorted by (vtype, destination id), so the first minimum is the id tie-break.
  for (EdgeIndex e : graph_->out_edges(i)) {
    const auto& edge = graph_->edge(e);
    if (edge.vtype == kUnpredictable) {
      out.push_back(e);
      continue;
    }
    if (best_bus && graph_->edge(*best_bus).vtype != edge.vtype) flush();
    const double cost = delays_[e] + delays[edge.to];
    if (!best_bus || cost < best_cost) {
      best_bus = e;
      best_cost = cost;
    }
  }
  flush();
  return out;
}

std::vector<double> ForwardingModel::forwarding_probabilities(const RoutingDecision& decision) const {
  std::vector<ForwardingOption> opts;
  opts.reserve(decision.order.size());
  for (EdgeIndex e : decision.order) opts.push_back(qc(e, decision));
  return vsn::forwarding_probabilities(opts);
}

double ForwardingModel::expected_delay_at(const RoutingDecision& decision, const DelayVector& delays) const {
  const auto probs = forwarding_probabilities(decision);
  double value = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const EdgeIndex e = decision.order[k];
    value += probs[k] * (delays_[e] + delays[graph_->edge(e).to]);
  }
  return value;
}

std::pair<RoutingDecision, double> ForwardingModel::best_decision(NodeIndex i, const DelayVector& delays,
                                                                  const SolverOptions& options) const {
  if (graph_->is_ap(i)) throw UsageError(fmt::format("intersection {} hosts an AP", graph_->id_of(i)));
  const auto cands = candidates(i, delays);
  if (cands.size() > options.candidate_limit) {
    throw UsageError(fmt::format("intersection {} has {} candidates, above the limit {}", graph_->id_of(i),
                                 cands.size(), options.candidate_limit));
  }
  // Candidates with Q = C = 0 never carry probability and do not affect the
  // others, so only the rest is ordered; the inert tail keeps canonical order.
  std::vector<EdgeIndex> active;
  std::vector<EdgeIndex> inert;
  std::vector<CandidateOption> opts;
  for (EdgeIndex e : cands) {
    const auto b = base_[e];
    if (b.q > 0.0 || b.c > 0.0) {
      active.push_back(e);
      opts.push_back({b.q, b.c, delays_[e] + delays[graph_->edge(e).to]});
    } else {
      inert.push_back(e);
    }
  }
  const OrderChoice choice = opts.size() <= options.brute_force_cap ? brute_force_order(opts) : greedy_order(opts);
  RoutingDecision decision{i, {}};
  decision.order.reserve(cands.size());
  for (std::size_t idx : choice.order) decision.order.push_back(active[idx]);
  decision.order.insert(decision.order.end(), inert.begin(), inert.end());
  return {std::move(decision), choice.value};
}

DelayVector ForwardingModel::bellman_update(const DelayVector& delays, const SolverOptions& options) const {
  DelayVector next = delays;
  const DelayVector& source = options.gauss_seidel ? next : delays;
  for (NodeIndex i = 0; i < graph_->intersection_count(); ++i) {
    if (graph_->is_ap(i)) {
      next[i] = 0.0;
      continue;
    }
    next[i] = std::min(best_decision(i, source, options).second, options.ceiling);
  }
  return next;
}

std::vector<bool> ForwardingModel::can_reach_ap() const {
  const std::size_t n = graph_->intersection_count();
  std::vector<std::vector<NodeIndex>> reverse(n);
  for (EdgeIndex e = 0; e < graph_->edges().size(); ++e) {
    const auto& edge = graph_->edge(e);
    if (base_[e].q > 0.0 || base_[e].c > 0.0) reverse[edge.to].push_back(edge.from);
  }
  std::vector<bool> reach(n, false);
  std::deque<NodeIndex> queue;
  for (NodeIndex a : graph_->ap_indices()) {
    reach[a] = true;
    queue.push_back(a);
  }
  while (!queue.empty()) {
    const NodeIndex j = queue.front();
    queue.pop_front();
    for (NodeIndex i : reverse[j]) {
      if (!reach[i]) {
        reach[i] = true;
        queue.push_back(i);
      }
    }
  }
  return reach;
}

std::vector<std::vector<Transition>> ForwardingModel::transitions(const Policy& policy) const {
  std::vector<std::vector<Transition>> out(graph_->intersection_count());
  for (NodeIndex i = 0; i < graph_->intersection_count(); ++i) {
    if (graph_->is_ap(i)) continue;
    const auto& decision = policy.at(i);
    const auto probs = forwarding_probabilities(decision);
    for (std::size_t k = 0; k < probs.size(); ++k) {
      if (probs[k] <= 0.0) continue;
      const EdgeIndex e = decision.order[k];
      out[i].push_back({e, graph_->edge(e).to, probs[k], delays_[e]});
    }
  }
  return out;
}

Policy extract_policy(const ForwardingModel& model, const DelayVector& delays, const SolverOptions& options) {
  const auto& graph = model.graph();
  Policy policy;
  policy.decisions.resize(graph.intersection_count());
  for (NodeIndex i = 0; i < graph.intersection_count(); ++i) {
    if (!graph.is_ap(i)) policy.decisions[i] = model.best_decision(i, delays, options).first;
  }
  return policy;
}

Solution value_iteration(const ForwardingModel& model, const SolverOptions& options) {
  if (!(options.epsilon > 0.0)) throw UsageError("epsilon must be positive");
  const auto& graph = model.graph();
  const std::size_t n = graph.intersection_count();
  const auto reach = model.can_reach_ap();

  Solution sol;
  sol.report.epsilon = options.epsilon;
  DelayVector delays(n, 0.0);
  for (NodeIndex i = 0; i < n; ++i) {
    if (!reach[i]) delays[i] = options.ceiling;
  }

  // Stop once both the last step and the geometric tail it implies are below
  // epsilon: a small step alone says little when the sweep contracts slowly.
  double residual = std::numeric_limits<double>::infinity();
  double tail = residual;
  std::size_t k = 0;
  while (k < options.max_iter) {
    DelayVector next = delays;
    const DelayVector& source = options.gauss_seidel ? next : delays;
    for (NodeIndex i = 0; i < n; ++i) {
      if (graph.is_ap(i) || !reach[i]) continue;
      next[i] = std::min(model.best_decision(i, source, options).second, options.ceiling);
    }
    const double prev = residual;
    residual = 0.0;
    for (NodeIndex i = 0; i < n; ++i) residual = std::max(residual, std::abs(next[i] - delays[i]));
    const double rate = residual / prev;
    tail = residual == 0.0 ? 0.0 : rate < 1.0 ? residual * rate / (1.0 - rate) : std::numeric_limits<double>::infinity();
    delays = std::move(next);
    ++k;
    if (options.observer) options.observer(k, delays);
    if (residual < options.epsilon && tail < options.epsilon) break;
  }

  sol.report.iterations = k;
  sol.report.final_residual = residual;
  sol.report.converged = residual < options.epsilon && tail < options.epsilon;
  for (NodeIndex i = 0; i < n; ++i) {
    if (!graph.is_ap(i) && delays[i] >= options.ceiling) sol.report.unreachable.push_back(graph.id_of(i));
  }
  sol.policy = extract_policy(model, delays, options);
  sol.delays = std::move(delays);
  return sol;
}

DelayVector policy_evaluation(const Policy& policy, const ForwardingModel& model) {
  const auto& graph = model.graph();
  const std::size_t n = graph.intersection_count();
  const auto trans = model.transitions(policy);

  // Intersections whose induced chain can still reach an AP.
  std::vector<std::vector<NodeIndex>> reverse(n);
  for (NodeIndex i = 0; i < n; ++i) {
    for (const auto& t : trans[i]) reverse[t.to].push_back(i);
  }
  std::vector<bool> reach(n, false);
  std::deque<NodeIndex> queue;
  for (NodeIndex a : graph.ap_indices()) {
    reach[a] = true;
    queue.push_back(a);
  }
  while (!queue.empty()) {
    const NodeIndex j = queue.front();
    queue.pop_front();
    for (NodeIndex i : reverse[j]) {
      if (!reach[i]) {
        reach[i] = true;
        queue.push_back(i);
      }
    }
  }
  std::vector<IntersectionId> trapped;
  for (NodeIndex i = 0; i < n; ++i) {
    if (!reach[i]) trapped.push_back(graph.id_of(i));
  }
  if (!trapped.empty()) {
    throw SolverError(fmt::format("policy traps intersections {} with no path to an AP", fmt::join(trapped, ",")));
  }

  std::vector<int> row(n, -1);
  int unknowns = 0;
  for (NodeIndex i = 0; i < n; ++i) {
    if (!graph.is_ap(i)) row[i] = unknowns++;
  }
  DelayVector out(n, 0.0);
  if (unknowns == 0) return out;

  std::vector<Eigen::Triplet<double>> entries;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(unknowns);
  for (NodeIndex i = 0; i < n; ++i) {
    if (row[i] < 0) continue;
    entries.emplace_back(row[i], row[i], 1.0);
    for (const auto& t : trans[i]) {
      rhs[row[i]] += t.probability * t.delay;
      if (row[t.to] >= 0) entries.emplace_back(row[i], row[t.to], -t.probability);
    }
  }
  Eigen::SparseMatrix<double> a(unknowns, unknowns);
  a.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw SolverError("policy evaluation system is singular");
  const Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw SolverError("policy evaluation solve failed");
  for (NodeIndex i = 0; i < n; ++i) {
    if (row[i] >= 0) {
      out[i] = x[row[i]];
      if (!std::isfinite(out[i])) throw SolverError(fmt::format("non-finite delay at {}", graph.id_of(i)));
    }
  }
  return out;
}

} // namespace vsn
