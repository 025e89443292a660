#pragma once

#include <limits>
#include <vector>

#include "ccqp/model.hpp"
#include "ccqp/types.hpp"

namespace ccqp {

struct SolverOptions {
  double tol = 1e-10;       // target for the scaled KKT residual
  int max_iter = 100;
  double reg = 1e-10;       // diagonal regularization of the Newton systems
  bool polish = true;       // active-set refinement after convergence
};

// Primal-dual point for the coupled QP. Duals follow the sign convention of
// the Lagrangian L = f(x) + mu'(Ex - e) + lambda_loc'(Ax - b) + nu'(Hx - d)
// + lambda'(Fx - f); inequality duals are nonnegative.
struct Solution {
  Vector x;                          // stacked primal, length n_total
  std::vector<Vector> lambda_local;  // per-subproblem inequality duals
  std::vector<Vector> mu_local;      // per-subproblem equality duals
  Vector nu;                         // coupling equality duals
  Vector lambda;                     // coupling inequality duals
  int iterations = 0;
  bool converged = false;
  double kkt_residual = std::numeric_limits<double>::infinity();

  Vector x_block(const Problem& p, int i) const {
    return x.segment(p.x_offset(i), p.subproblems[static_cast<size_t>(i)].n());
  }
};

// Row-stacked data of the coupled QP:
//   min 1/2 x'Px + c'x  s.t.  Gx <= g,  Cx = ceq
// with inequality rows ordered [local A blocks..., coupling F] and equality
// rows ordered [local E blocks..., coupling H].
struct StackedData {
  Matrix P;
  Vector c;
  Matrix G;
  Vector g;
  Matrix C;
  Vector ceq;
};

StackedData build_stacked(const Problem& p);

double objective_value(const Problem& p, const Vector& x);

// Max-norm KKT residual of a candidate point: stationarity, primal
// feasibility (both kinds), dual nonnegativity, and complementarity.
double kkt_residual(const Problem& p, const Solution& sol);

// Mehrotra predictor-corrector interior-point method on the stacked QP,
// followed by an active-set polish that is kept only when it improves the
// residual. Deterministic for fixed inputs. Throws NumericalError when the
// Newton system stays singular through regularization retries; returns the
// best iterate with converged=false when the iteration cap is hit.
Solution solve(const Problem& p, const SolverOptions& opts = {});

struct ActiveSet {
  std::vector<std::vector<bool>> local;  // per subproblem, one flag per A row
  std::vector<bool> coupling;            // one flag per F row
};

// A row is active when its slack is at most tol_act (equalities are always
// active and not listed).
ActiveSet active_set(const Problem& p, const Solution& sol, double tol_act = 1e-7);

struct VerifyOptions {
  double tol_act = 1e-7;   // slack threshold for activity
  double tol_sc = 1e-7;    // strict-complementarity margin
  double tol_licq = 1e-8;  // min singular value of active gradients
  double tol_eig = 1e-9;   // reduced-Hessian eigenvalue floor
};

// Regularity report for a solved instance. Each flag is true iff its
// quantitative witness clears the corresponding tolerance.
struct AssumptionReport {
  bool licq_ok = false;
  double licq_min_sv = 0.0;

  bool strict_complementarity_ok = false;
  double min_active_dual = std::numeric_limits<double>::infinity();
  double min_inactive_slack = std::numeric_limits<double>::infinity();

  bool second_order_global_ok = false;
  double global_reduced_min_eig = std::numeric_limits<double>::infinity();

  // Per-subproblem reduced curvature of the partial Lagrangian on the null
  // space of the active local constraint gradients.
  std::vector<bool> local_second_order_ok;
  std::vector<double> local_reduced_min_eig;
  bool second_order_local_ok = false;

  ActiveSet active;

  bool all_ok() const {
    return licq_ok && strict_complementarity_ok && second_order_global_ok &&
           second_order_local_ok;
  }
};

AssumptionReport verify_assumptions(const Problem& p, const Solution& sol,
                                    const VerifyOptions& opts = {});

struct VerifiedInstance {
  Problem problem;
  Solution solution;
  AssumptionReport report;
  std::uint64_t seed_used = 0;
  int attempts = 0;
};

// Draws random instances from `cfg`, solving and verifying each, until one
// satisfies every regularity assumption. Rejected draws are resampled with
// the seed incremented by one, up to max_attempts; throws NumericalError when
// the budget is exhausted.
VerifiedInstance sample_verified_problem(const RandomConfig& cfg, std::uint64_t seed,
                                         const SolverOptions& sopts = {},
                                         const VerifyOptions& vopts = {},
                                         int max_attempts = 20);

}  // namespace ccqp
