#pragma once

#include "vsn/road_graph.hpp"
#include "vsn/traffic_stats.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace vsn {

// Expected delay to the nearest AP per intersection, indexed by NodeIndex.
using DelayVector = std::vector<double>;

// Q: probability the holder itself moves onto an edge.
// C: probability of contacting a vehicle that moves onto it.
struct ForwardingOption {
  double q = 0.0;
  double c = 0.0;
};

// Probability that a packet leaves along each position of a priority order:
//   P_k = prod_{h<k}(1 - C_h) * [C_k (1 - sum_{h<k} Q_h) + Q_k - C_k Q_k]
// Throws ValidationError when a prefix of Q values sums past one.
std::vector<double> forwarding_probabilities(std::span<const ForwardingOption> ordered);
// Single position `k` (0-based) of the above.
double forwarding_prob(std::span<const ForwardingOption> ordered, std::size_t k);

// One forwarding candidate of an abstract decision problem: its (Q, C) and the
// cost d + D of leaving through it.
struct CandidateOption {
  double q = 0.0;
  double c = 0.0;
  double cost = 0.0;
};

struct OrderChoice {
  std::vector<std::size_t> order; // indices into the candidate span, highest priority first
  double value = 0.0;
};

// Expected cost of a fixed priority order.
double order_value(std::span<const CandidateOption> candidates, std::span<const std::size_t> order);
// Exact minimum over all permutations; the lexicographically first optimum wins ties.
OrderChoice brute_force_order(std::span<const CandidateOption> candidates);
// Ascending cost, ties kept in input order.
OrderChoice greedy_order(std::span<const CandidateOption> candidates);

struct RoutingDecision {
  NodeIndex intersection = 0;
  std::vector<EdgeIndex> order; // highest priority first
};

// One decision per non-AP intersection; AP slots stay empty.
struct Policy {
  std::vector<std::optional<RoutingDecision>> decisions;

  const RoutingDecision& at(NodeIndex i) const;
};

struct SolverOptions {
  double epsilon = 1e-3; // bound on the last step and on its extrapolated tail
  std::size_t max_iter = 10000;
  std::size_t brute_force_cap = 8;
  std::size_t candidate_limit = 64;
  bool gauss_seidel = false;
  double ceiling = 1e6;
  // Called with (iteration, delays) after every sweep.
  std::function<void(std::size_t, const DelayVector&)> observer;
};

struct SolveReport {
  std::size_t iterations = 0;
  double final_residual = 0.0;
  double epsilon = 0.0;
  bool converged = false;
  std::vector<IntersectionId> unreachable;
};

struct Solution {
  DelayVector delays;
  Policy policy;
  SolveReport report;
};

struct Transition {
  EdgeIndex edge = 0;
  NodeIndex to = 0;
  double probability = 0.0;
  double delay = 0.0;
};

// The forwarding MDP over the augmented graph for one (graph, stats, edge
// delays) triple. Holds references; the inputs must outlive the model.
class ForwardingModel {
public:
  ForwardingModel(const RoadGraph& graph, const TrafficStats& stats, std::vector<double> edge_delays);

  const RoadGraph& graph() const { return *graph_; }
  double edge_delay(EdgeIndex e) const { return delays_[e]; }

  // (Q, C) of `edge` under `decision`: a bus edge only counts when it is the
  // highest-priority edge of its type in the decision.
  ForwardingOption qc(EdgeIndex edge, const RoutingDecision& decision) const;
  // (Q, C) the edge would get if retained.
  ForwardingOption base_qc(EdgeIndex edge) const { return base_[edge]; }

  // Every vtype-0 out-edge plus, per bus type, the edge minimizing d + D.
  std::vector<EdgeIndex> candidates(NodeIndex i, const DelayVector& delays) const;

  std::vector<double> forwarding_probabilities(const RoutingDecision& decision) const;
  double expected_delay_at(const RoutingDecision& decision, const DelayVector& delays) const;

  // Returns the optimal decision at `i` and its expected delay. Exhaustive up
  // to `brute_force_cap` candidates with nonzero (Q, C), greedy above.
  std::pair<RoutingDecision, double> best_decision(NodeIndex i, const DelayVector& delays,
                                                   const SolverOptions& options = {}) const;

  // One Jacobi sweep (or Gauss-Seidel when requested); APs stay at zero.
  DelayVector bellman_update(const DelayVector& delays, const SolverOptions& options = {}) const;

  // Intersections that reach an AP with positive probability under some decision.
  std::vector<bool> can_reach_ap() const;

  std::vector<std::vector<Transition>> transitions(const Policy& policy) const;

private:
  const RoadGraph* graph_;
  std::vector<double> delays_;
  std::vector<ForwardingOption> base_;
};

Solution value_iteration(const ForwardingModel& model, const SolverOptions& options = {});

// Exact expected delays under a fixed policy by solving D = P(u)(d + D).
// Throws SolverError when the policy traps intersections away from every AP.
DelayVector policy_evaluation(const Policy& policy, const ForwardingModel& model);

Policy extract_policy(const ForwardingModel& model, const DelayVector& delays, const SolverOptions& options = {});

} // namespace vsn
