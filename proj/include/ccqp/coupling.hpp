#pragma once

#include <vector>

#include "ccqp/local_diff.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

namespace ccqp {

// Subproblem i's additive contribution to the coupling sensitivity system
// dC y = q, where y = [D_theta nu; D_theta lambda] stacks the coupling-dual
// sensitivities. Stored compactly: `rows` lists the global coupling-row
// indices the contribution lives on (equality rows keep their index,
// inequality row r appears as lh + r), ordered [touched eq, touched ineq].
// Columns of dC use the same index list. Summing the scattered contributions
// over all subproblems yields the full L x L system.
struct LocalCouplingTerms {
  std::vector<int> rows;
  Matrix dC;  // |rows| x |rows|
  Matrix q;   // |rows| x t
};

// owner[r] = lowest-index subproblem with a nonzero block in coupling row r
// (equality rows first, then inequality rows). The constant offsets d, f and
// the inequality slack are attributed to the owner so each shared quantity is
// counted exactly once across contributions. Rows touching no subproblem get
// owner -1 (cannot happen for validated problems).
std::vector<int> offset_owners(const Problem& p);

LocalCouplingTerms assemble_local_terms(const Problem& p, const Solution& sol,
                                        const LocalJacobian& lj, int i,
                                        const std::vector<int>& owners);

// Full coupling sensitivity system, rows/cols ordered [equality; inequality].
struct CouplingSystem {
  Matrix dC;  // L x L
  Matrix q;   // L x t
};

// Scatter-sum of all local contributions.
CouplingSystem assemble_coupling_system(const Problem& p, const Solution& sol,
                                        const std::vector<LocalJacobian>& ljs);

struct CouplingSolve {
  Matrix d_nu;      // Lh x t
  Matrix d_lambda;  // Lf x t
  double residual = 0.0;  // relative residual of the linear solve
};

// Dense solve of dC y = q. Throws SingularCouplingSystem when dC is
// numerically singular. Degenerate shapes (L = 0 or t = 0) yield empty
// matrices of the right dimensions.
CouplingSolve solve_coupling_central(const Matrix& dC, const Matrix& q, int lh);

// Chain rule combining local and coupling sensitivities:
//   D_theta x_i = d_theta x_i + d_nu x_i D_theta nu + d_lambda x_i D_theta lambda,
// with the local block scattered into subproblem i's columns of theta and the
// dual sensitivities gathered on the rows subproblem i touches.
Matrix total_jacobian_block(const Problem& p, const LocalJacobian& lj, int i,
                            const Matrix& d_nu, const Matrix& d_lambda);

struct JacobianResult {
  Matrix dx;        // n_total x t: D_theta x*
  Matrix d_nu;      // Lh x t
  Matrix d_lambda;  // Lf x t
};

// Local Jacobians + central coupling solve + chain rule. The second form
// consumes local Jacobians computed elsewhere (possibly in parallel).
JacobianResult decentralized_jacobian(const Problem& p, const Solution& sol);
JacobianResult decentralized_jacobian(const Problem& p, const Solution& sol,
                                      const std::vector<LocalJacobian>& ljs);

// Reference path: implicit differentiation of the full stacked KKT system in
// one dense solve. Throws NumericalError when the global system is singular.
JacobianResult centralized_jacobian(const Problem& p, const Solution& sol);

// Schur complement of the block-diagonal local-Jacobian block inside the
// global KKT Jacobian, oriented to match the sign convention of the
// assembled dC (the coupling residual rows are negated before elimination;
// row scaling does not change the implicit derivative).
Matrix coupling_schur_complement(const Problem& p, const Solution& sol);

// Re-solve probe of the full map theta -> x*(theta): central differences at
// theta +/- h e_j. Guards against activity changes: if the active set at a
// probe point differs from the base point, the step is shrunk once by 10x;
// a second flip throws ActiveSetFlip with the parameter index.
Matrix finite_difference_jacobian(const Problem& p, double h = 1e-5,
                                  const SolverOptions& opts = {}, double tol_act = 1e-7);

// Cost-model ratio eta = (rho^3 + 1/N^2) / (1 + rho)^3 for coupling ratio rho
// and N subproblems.
double complexity_eta(double rho, int N);

// rho = L / (N * mean(n_i + l_i)).
double coupling_ratio(const Problem& p);

}  // namespace ccqp
