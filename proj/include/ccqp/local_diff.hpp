#pragma once

#include <vector>

#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

namespace ccqp {

// First-order system of one subproblem's argmin map. The local unknown is
// z_i = (x_i, lambda_i, mu_i); the local parameter vector is
// thetabar_i = [theta_i, theta_c, nu, lambda] (own parameters, shared offset
// parameters, coupling equality duals, coupling inequality duals).
//
// Only the coupling rows the subproblem touches carry nonzero dual columns,
// so dtheta stores those columns compactly; eq_rows/ineq_rows list which
// global coupling rows they correspond to. Sensitivities to untouched rows
// vanish identically.
struct LocalKkt {
  Matrix dz;      // (n+l+k) square: Jacobian of the local KKT residual in z_i
  Matrix dtheta;  // (n+l+k) x (t_i + t_c + |eq_rows| + |ineq_rows|)
  std::vector<int> eq_rows;    // touched coupling equality rows
  std::vector<int> ineq_rows;  // touched coupling inequality rows
  int n = 0, l = 0, k = 0;
  int t_local = 0, t_shared = 0;
};

// Rows: stationarity, then complementarity (scaled by the local duals), then
// local equalities. The shared-offset columns are structurally zero: the d, f
// offsets enter the local stationarity conditions only through constants.
LocalKkt build_local_kkt(const Problem& p, const Solution& sol, int i);

// Sensitivities of subproblem i's optimizer, split by parameter block. The
// dual blocks hold one column per touched coupling row, in eq_rows/ineq_rows
// order.
struct LocalJacobian {
  Matrix d_theta_local;    // n x t_i
  Matrix d_theta_shared;   // n x t_c (zero, see build_local_kkt)
  Matrix d_nu;             // n x |eq_rows|
  Matrix d_lambda;         // n x |ineq_rows|
  Matrix primal_block_inv; // n x n: primal-primal block of inv(dz); symmetric PSD
  std::vector<int> eq_rows;
  std::vector<int> ineq_rows;
};

// Implicit differentiation of the local KKT system:
//   d x_i* / d thetabar_i = -[I 0] inv(dz) dtheta.
// Throws SingularLocalSystem when dz is numerically singular.
// with_primal_block=false skips the n-column solve for primal_block_inv
// (leaving it empty); the block only feeds the decomposition diagnostics, and
// skipping it keeps the hot path of the timed pipelines lean.
LocalJacobian local_jacobian(const LocalKkt& kkt, int subproblem_index,
                             bool with_primal_block = true);
LocalJacobian local_jacobian(const Problem& p, const Solution& sol, int i,
                             bool with_primal_block = true);

// Central-difference probe of the same map: re-solves subproblem i's
// partial-Lagrangian QP at thetabar_i +/- h e_j for every component.
// Column layout matches LocalJacobian ([theta_i, theta_c, touched nu rows,
// touched lambda rows]); the theta_c columns are exact zeros. Throws
// ValidationError for h <= 0.
Matrix finite_diff_local(const Problem& p, const Solution& sol, int i, double h = 1e-5,
                         const SolverOptions& opts = {});

}  // namespace ccqp
