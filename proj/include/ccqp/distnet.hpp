#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "ccqp/graph.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

namespace ccqp {

// Exponent rule for the contraction-factor bound.
//   Conservative: ceil_plus(omega / (2 B_k) - 1)   (default)
//   Aggressive:   ceil_plus((omega + 1) / B_k - 1) (faster decay, kept for
//                                                   sensitivity checks)
enum class RateExponent { Conservative, Aggressive };

struct RateBound {
  double alpha = 0.0;
  std::vector<double> node_terms;
  std::vector<double> boundary_mass;  // sum |dC_out| per node
  std::vector<double> sigma_max, sigma_min;
  std::vector<int> bandwidth;
};

struct RoundLog {
  int round = 0;
  double step_delta = 0.0;          // inf-norm change of the shared estimate
  double error = 0.0;               // vs reference (NaN when none given)
  double aggregation_spread = 0.0;  // max disagreement before averaging
  long messages = 0;
  long scalars = 0;
  std::vector<double> node_seconds;  // local-solve wall time per node
};

// Per-node working state. Nodes only ever read their own members and the
// value envelopes delivered by the scheduler; there is no shared estimate
// other than what the broadcast phase distributes.
struct NodeState {
  int node = 0;
  ProjectionSet proj;
  Eigen::PartialPivLU<Matrix> factor;  // of the interior block
  Matrix dC_out;                       // interior x exterior
  Matrix q_in;                         // interior x t
  Matrix y;                            // node's copy of the shared estimate, L x t
};

struct MessageStats {
  long setup_messages = 0, setup_scalars = 0;
  long round_messages = 0, round_scalars = 0;  // one round, summed over nodes
};

struct Network {
  int omega = 0;
  int lh = 0, lf = 0, t = 0;
  std::uint64_t seed = 0;
  Problem problem;
  ConstraintGraph graph;
  std::vector<LocalJacobian> local_jacobians;
  std::vector<NodeState> nodes;
  std::vector<std::vector<int>> peers;  // two-hop neighbors per node, sorted
  std::vector<int> constraint_degree;
  Matrix y;   // scheduler view of the shared estimate
  Matrix dC;  // assembled coupling system, for diagnostics and references
  Matrix q;
  std::vector<RoundLog> log;
};

// Builds node states (radius-omega projections, factorizations), gathers the
// setup payloads, and draws the shared initial estimate from a seeded
// standard normal. Throws SingularProjectedSystem(k) when a node's interior
// block is singular.
Network setup_network(const Problem& p, const Solution& sol, int omega, std::uint64_t seed);

// One synchronous round: (1) every node solves its interior system against
// its current estimate, (2) nodes exchange owned rows with two-hop peers and
// average per constraint, (3) the averaged rows are broadcast so all nodes
// hold the same estimate again. Logs the round.
void run_round(Network& net, const Matrix* reference = nullptr);

struct RunResult {
  Matrix y;
  int rounds = 0;
  bool converged = false;
};

// Rounds until the successive-iterate change is at most tol or max_rounds is
// reached. max_rounds = 0 returns the initial estimate with an empty log.
RunResult run(Network& net, int max_rounds, double tol, const Matrix* reference = nullptr);

// Contraction-factor bound alpha = max_k R_k (sigma_max / sigma_min^2) r_k^e_k
// over nodes with a nonempty exterior; r_k from the interior block's extreme
// singular values, e_k from `formula` with the interior block's
// graph-induced bandwidth (clamped to >= 1).
RateBound rate_bound(const Network& net, RateExponent formula = RateExponent::Conservative);

// Protocol arithmetic for the cost model: setup delivers |sources| payloads
// of size |interior|^2 + |interior| * t to each node; each round moves owned
// blocks (|owned| * t) to every two-hop peer plus a broadcast of L * t per
// node.
MessageStats message_accounting(const Network& net);

// Row-averaging operator Gamma (L x sum_k |owned_k|): entry 1/delta_c links
// constraint c to each owning node's estimate. Rows sum to one.
Matrix aggregation_matrix(const Network& net);

// Stacked per-node iteration blocks for the matrix form
//   y_next = Gamma (S y + U q); rows ordered by node, then owned constraint.
Matrix stacked_iteration_matrix(const Network& net);  // S
Matrix stacked_input_matrix(const Network& net);      // U

}  // namespace ccqp
