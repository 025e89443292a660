#include "ccqp/local_diff.hpp"

#include <Eigen/Dense>
#include <algorithm>

namespace ccqp {

LocalKkt build_local_kkt(const Problem& p, const Solution& sol, int i) {
  const auto& s = p.subproblems[static_cast<size_t>(i)];
  const int n = s.n(), l = s.num_ineq(), k = s.num_eq();
  const auto& sel = p.params.local[static_cast<size_t>(i)];
  const Vector xi = sol.x_block(p, i);
  const Vector& li = sol.lambda_local[static_cast<size_t>(i)];

  LocalKkt kkt;
  kkt.n = n;
  kkt.l = l;
  kkt.k = k;
  kkt.t_local = sel.count();
  kkt.t_shared = p.params.shared_count();
  if (p.coupling.num_eq() > 0)
    kkt.eq_rows = nonzero_rows(p.coupling.H[static_cast<size_t>(i)]);
  if (p.coupling.num_ineq() > 0)
    kkt.ineq_rows = nonzero_rows(p.coupling.F[static_cast<size_t>(i)]);

  const int dim = n + l + k;
  kkt.dz = Matrix::Zero(dim, dim);
  kkt.dz.block(0, 0, n, n) = s.P;
  if (l > 0) {
    kkt.dz.block(0, n, n, l) = s.A.transpose();
    kkt.dz.block(n, 0, l, n) = li.asDiagonal() * s.A;
    kkt.dz.block(n, n, l, l) = Matrix((s.A * xi - s.b).asDiagonal());
  }
  if (k > 0) {
    kkt.dz.block(0, n + l, n, k) = s.E.transpose();
    kkt.dz.block(n + l, 0, k, n) = s.E;
  }

  const int ne = static_cast<int>(kkt.eq_rows.size());
  const int nf = static_cast<int>(kkt.ineq_rows.size());
  const int cols = kkt.t_local + kkt.t_shared + ne + nf;
  kkt.dtheta = Matrix::Zero(dim, cols);
  int col = 0;
  for (int j : sel.c) kkt.dtheta(j, col++) = 1.0;           // stationarity rows
  for (int j : sel.b) kkt.dtheta(n + j, col++) = -li[j];    // complementarity rows
  for (int j : sel.e) kkt.dtheta(n + l + j, col++) = -1.0;  // equality rows
  col += kkt.t_shared;  // offsets are constants in the local system
  for (int r : kkt.eq_rows)
    kkt.dtheta.block(0, col++, n, 1) =
        p.coupling.H[static_cast<size_t>(i)].row(r).transpose();
  for (int r : kkt.ineq_rows)
    kkt.dtheta.block(0, col++, n, 1) =
        p.coupling.F[static_cast<size_t>(i)].row(r).transpose();
  return kkt;
}

namespace {

LocalJacobian split_sensitivities(const LocalKkt& kkt, const Matrix& sens) {
  LocalJacobian lj;
  lj.eq_rows = kkt.eq_rows;
  lj.ineq_rows = kkt.ineq_rows;
  int col = 0;
  lj.d_theta_local = sens.middleCols(col, kkt.t_local);
  col += kkt.t_local;
  lj.d_theta_shared = sens.middleCols(col, kkt.t_shared);
  col += kkt.t_shared;
  lj.d_nu = sens.middleCols(col, static_cast<int>(kkt.eq_rows.size()));
  col += static_cast<int>(kkt.eq_rows.size());
  lj.d_lambda = sens.middleCols(col, static_cast<int>(kkt.ineq_rows.size()));
  return lj;
}

}  // namespace

LocalJacobian local_jacobian(const LocalKkt& kkt, int subproblem_index,
                             bool with_primal_block) {
  const int n = kkt.n;
  const int dim = n + kkt.l + kkt.k;

  // With no local constraints the system is just the SPD Hessian; a Cholesky
  // solve halves the cost of the hot path.
  if (kkt.l == 0 && kkt.k == 0) {
    const Eigen::LLT<Matrix> llt(kkt.dz);
    if (llt.info() != Eigen::Success) throw SingularLocalSystem(subproblem_index);
    LocalJacobian lj = split_sensitivities(kkt, -llt.solve(kkt.dtheta));
    if (with_primal_block) lj.primal_block_inv = llt.solve(Matrix::Identity(n, n));
    return lj;
  }

  const Eigen::PartialPivLU<Matrix> lu(kkt.dz);
  // Cheap singularity proxy: the diagonal of U collapses when dz does.
  const Vector u_diag = lu.matrixLU().diagonal().cwiseAbs();
  if (dim > 0 && u_diag.minCoeff() < 1e-14 * std::max(u_diag.maxCoeff(), 1.0))
    throw SingularLocalSystem(subproblem_index);

  LocalJacobian lj = split_sensitivities(kkt, -lu.solve(kkt.dtheta).topRows(n));
  if (with_primal_block) {
    Matrix id_cols = Matrix::Zero(dim, n);
    id_cols.topRows(n) = Matrix::Identity(n, n);
    lj.primal_block_inv = lu.solve(id_cols).topRows(n);
  }
  return lj;
}

LocalJacobian local_jacobian(const Problem& p, const Solution& sol, int i,
                             bool with_primal_block) {
  return local_jacobian(build_local_kkt(p, sol, i), i, with_primal_block);
}

Matrix finite_diff_local(const Problem& p, const Solution& sol, int i, double h,
                         const SolverOptions& opts) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  const auto& s = p.subproblems[static_cast<size_t>(i)];
  const int n = s.n();
  const auto& sel = p.params.local[static_cast<size_t>(i)];
  const std::vector<int> eq_rows =
      p.coupling.num_eq() > 0 ? nonzero_rows(p.coupling.H[static_cast<size_t>(i)])
                              : std::vector<int>{};
  const std::vector<int> ineq_rows =
      p.coupling.num_ineq() > 0 ? nonzero_rows(p.coupling.F[static_cast<size_t>(i)])
                                : std::vector<int>{};

  // Partial-Lagrangian subproblem: the coupling terms tilt the linear cost.
  Subproblem base = s;
  if (p.coupling.num_eq() > 0)
    base.c += p.coupling.H[static_cast<size_t>(i)].transpose() * sol.nu;
  if (p.coupling.num_ineq() > 0)
    base.c += p.coupling.F[static_cast<size_t>(i)].transpose() * sol.lambda;

  auto solve_local = [&](const Subproblem& sub) {
    Problem single;
    single.subproblems = {sub};
    single.coupling.H = {Matrix::Zero(0, sub.n())};
    single.coupling.F = {Matrix::Zero(0, sub.n())};
    single.coupling.d = Vector(0);
    single.coupling.f = Vector(0);
    single.params = default_parameter_map(single);
    return solve(single, opts).x;
  };

  const int cols = sel.count() + p.params.shared_count() +
                   static_cast<int>(eq_rows.size() + ineq_rows.size());
  Matrix fd = Matrix::Zero(n, cols);
  int col = 0;

  auto probe = [&](auto&& apply) {
    Subproblem plus = base, minus = base;
    apply(plus, +h);
    apply(minus, -h);
    fd.col(col++) = (solve_local(plus) - solve_local(minus)) / (2.0 * h);
  };

  for (int j : sel.c)
    probe([&](Subproblem& sub, double step) { sub.c[j] += step; });
  for (int j : sel.b)
    probe([&](Subproblem& sub, double step) { sub.b[j] += step; });
  for (int j : sel.e)
    probe([&](Subproblem& sub, double step) { sub.e[j] += step; });
  col += p.params.shared_count();  // offsets do not reach the local problem
  for (int r : eq_rows)
    probe([&](Subproblem& sub, double step) {
      sub.c += step * p.coupling.H[static_cast<size_t>(i)].row(r).transpose();
    });
  for (int r : ineq_rows)
    probe([&](Subproblem& sub, double step) {
      sub.c += step * p.coupling.F[static_cast<size_t>(i)].row(r).transpose();
    });
  return fd;
}

}  // namespace ccqp
