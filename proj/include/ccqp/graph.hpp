#pragma once

#include <vector>

#include "ccqp/coupling.hpp"
#include "ccqp/local_diff.hpp"
#include "ccqp/model.hpp"
#include "ccqp/types.hpp"

namespace ccqp {

// Bipartite structure of the coupling: subproblem nodes on one side,
// coupling-constraint nodes on the other (equality rows first, then
// inequality rows), an edge when the block row is nonzero. Unified node ids:
// subproblem i is node i, constraint c is node num_subproblems + c.
struct ConstraintGraph {
  int num_subproblems = 0;
  int num_constraints = 0;
  std::vector<std::vector<int>> constraints_of;  // per subproblem, sorted
  std::vector<std::vector<int>> subproblems_of;  // per constraint, sorted

  int subproblem_node(int i) const { return i; }
  int constraint_node(int c) const { return num_subproblems + c; }
  int num_nodes() const { return num_subproblems + num_constraints; }
};

ConstraintGraph build_graph(const Problem& p);

// BFS hop counts from `start` (unified id) to every node; -1 when unreachable.
// Subproblem-to-constraint distances are odd, like-to-like distances even.
std::vector<int> bfs_distances(const ConstraintGraph& g, int start);

// Radius-omega working set of node k. `owned` are the constraints k
// participates in; `interior` collects constraints within bipartite distance
// 2*omega + 1 of k; `exterior` is its complement among all constraints;
// `sources` are the subproblems directly involved in an interior constraint.
// All lists sorted. An uncoupled node yields four empty lists.
struct ProjectionSet {
  int node = 0;
  int omega = 0;
  std::vector<int> owned;
  std::vector<int> interior;
  std::vector<int> exterior;
  std::vector<int> sources;
};

ProjectionSet neighborhood(const ConstraintGraph& g, int k, int omega);

// Row/column slices of the coupling system seen from one node:
//   dC_in = interior rows x interior cols, dC_out = interior rows x exterior
//   cols, q_in = interior rows of q.
// Built by summing only the contributions of proj.sources; contributions of
// other subproblems vanish on interior rows, so the slices are exact without
// ever forming the full system.
struct ProjectedSystem {
  Matrix dC_in;
  Matrix dC_out;
  Matrix q_in;
};

ProjectedSystem project_system(const Problem& p, const Solution& sol,
                               const std::vector<LocalJacobian>& ljs,
                               const ProjectionSet& proj);

// Stacked coupling rows [H; F] as one dense matrix (L x n_total).
Matrix build_coupling_rows(const Problem& p);

// Reassembles the coupling sensitivity matrix from the primal blocks of the
// inverted local systems:
//   dC = [I 0; 0 diag(lambda)] M Gbar M' - [0 0; 0 diag(F x - f)]
// with M = build_coupling_rows and Gbar = blockdiag of primal_block_inv.
Matrix coupling_decomposition(const Problem& p, const Solution& sol,
                              const std::vector<LocalJacobian>& ljs);

// Largest bipartite-graph distance between the nodes of a nonzero entry
// (|entry| > 1e-14). row_nodes/col_nodes give the unified node id of each row
// and column. Zero matrices have bandwidth 0. Throws NumericalError when a
// nonzero entry links disconnected nodes.
int graph_induced_bandwidth(const Matrix& M, const ConstraintGraph& g,
                            const std::vector<int>& row_nodes,
                            const std::vector<int>& col_nodes);

// Bandwidth of the coupling sensitivity matrix (constraint nodes on both
// sides) and of the stacked coupling rows (constraint rows, subproblem cols).
int coupling_bandwidth(const Matrix& dC, const ConstraintGraph& g);
int coupling_rows_bandwidth(const Problem& p, const ConstraintGraph& g);

// Off-diagonal decay bound for the inverse of a symmetric positive definite
// banded matrix with extreme singular values sigma_max >= sigma_min > 0 and
// graph-induced bandwidth at most `bandwidth` (>= 1): entries at graph
// distance `distance` are bounded by
//   (sigma_max / sigma_min^2) * r^ceil_plus((distance - bandwidth)/(2*bandwidth)),
// r = (sigma_max^2 - sigma_min^2)/(sigma_max^2 + sigma_min^2), with 0^0 = 1.
// Throws ValidationError on invalid inputs.
double decay_bound(double sigma_max, double sigma_min, int bandwidth, int distance);

// max(0, ceil(x)) with an exact-integer-friendly evaluation.
int ceil_plus(double x);

}  // namespace ccqp
