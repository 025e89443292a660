#include "ccqp/coupling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ccqp {

std::vector<int> offset_owners(const Problem& p) {
  const int N = p.num_subproblems();
  const int lh = p.coupling.num_eq(), lf = p.coupling.num_ineq();
  std::vector<int> owners(static_cast<size_t>(lh + lf), -1);
  auto scan = [&](const std::vector<Matrix>& blocks, int rows, int base) {
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < N; ++i) {
        if (blocks[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14) {
          owners[static_cast<size_t>(base + r)] = i;
          break;
        }
      }
    }
  };
  if (lh > 0) scan(p.coupling.H, lh, 0);
  if (lf > 0) scan(p.coupling.F, lf, lh);
  return owners;
}

namespace {

// Rows of `block` gathered at the given indices.
Matrix gather_rows(const Matrix& block, const std::vector<int>& rows) {
  Matrix out(static_cast<int>(rows.size()), block.cols());
  for (size_t r = 0; r < rows.size(); ++r) out.row(static_cast<int>(r)) = block.row(rows[r]);
  return out;
}

// Position of `value` in a sorted index list.
int position_of(const std::vector<int>& sorted, int value) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), value);
  return static_cast<int>(it - sorted.begin());
}

}  // namespace

LocalCouplingTerms assemble_local_terms(const Problem& p, const Solution& sol,
                                        const LocalJacobian& lj, int i,
                                        const std::vector<int>& owners) {
  const int lh = p.coupling.num_eq();
  const int t = p.params.total();
  const auto& sel = p.params.local[static_cast<size_t>(i)];
  const int t_i = sel.count();
  const int off_i = p.params.local_offset(i);
  const int ne = static_cast<int>(lj.eq_rows.size());
  const int nf = static_cast<int>(lj.ineq_rows.size());

  LocalCouplingTerms terms;
  terms.rows.reserve(static_cast<size_t>(ne + nf));
  for (int r : lj.eq_rows) terms.rows.push_back(r);
  for (int r : lj.ineq_rows) terms.rows.push_back(lh + r);
  terms.dC = Matrix::Zero(ne + nf, ne + nf);
  terms.q = Matrix::Zero(ne + nf, t);

  if (ne > 0) {
    const Matrix Hc = gather_rows(p.coupling.H[static_cast<size_t>(i)], lj.eq_rows);
    terms.dC.topLeftCorner(ne, ne) = -Hc * lj.d_nu;
    if (nf > 0) terms.dC.topRightCorner(ne, nf) = -Hc * lj.d_lambda;
    if (t_i > 0) terms.q.block(0, off_i, ne, t_i) = Hc * lj.d_theta_local;
  }
  if (nf > 0) {
    const Matrix Fc = gather_rows(p.coupling.F[static_cast<size_t>(i)], lj.ineq_rows);
    Vector lam_c(nf);
    for (int r = 0; r < nf; ++r) lam_c[r] = sol.lambda[lj.ineq_rows[static_cast<size_t>(r)]];
    const Vector xi = sol.x_block(p, i);
    if (ne > 0)
      terms.dC.bottomLeftCorner(nf, ne) = -(lam_c.asDiagonal() * (Fc * lj.d_nu));
    terms.dC.bottomRightCorner(nf, nf) = -(lam_c.asDiagonal() * (Fc * lj.d_lambda));
    // Inequality slack share: F_i x_i, minus the offset f on the owner only,
    // so the shares sum to the true slack across subproblems.
    Vector share = Fc * xi;
    for (int r = 0; r < nf; ++r) {
      const int row = lj.ineq_rows[static_cast<size_t>(r)];
      if (owners[static_cast<size_t>(lh + row)] == i) share[r] -= p.coupling.f[row];
    }
    terms.dC.bottomRightCorner(nf, nf) -= Matrix(share.asDiagonal());
    if (t_i > 0)
      terms.q.block(ne, off_i, nf, t_i) = lam_c.asDiagonal() * (Fc * lj.d_theta_local);
  }

  // Offset parameters live in the coupling residual, attributed to the owner.
  // The owner touches the row, so the row is present in the compact list.
  int col = p.params.shared_offset();
  for (int j : p.params.d) {
    if (owners[static_cast<size_t>(j)] == i) terms.q(position_of(lj.eq_rows, j), col) -= 1.0;
    ++col;
  }
  for (int j : p.params.f) {
    if (owners[static_cast<size_t>(lh + j)] == i)
      terms.q(ne + position_of(lj.ineq_rows, j), col) -= sol.lambda[j];
    ++col;
  }
  return terms;
}

CouplingSystem assemble_coupling_system(const Problem& p, const Solution& sol,
                                        const std::vector<LocalJacobian>& ljs) {
  const int L = p.coupling.total();
  const int t = p.params.total();
  CouplingSystem sum;
  sum.dC = Matrix::Zero(L, L);
  sum.q = Matrix::Zero(L, t);
  // Owner attribution only matters for inequality slack shares and shared
  // offset parameters; skip the block scan when neither is present.
  const bool needs_owners = p.coupling.num_ineq() > 0 || p.params.shared_count() > 0;
  const std::vector<int> owners =
      needs_owners ? offset_owners(p) : std::vector<int>(static_cast<size_t>(L), -1);
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const LocalCouplingTerms ti =
        assemble_local_terms(p, sol, ljs[static_cast<size_t>(i)], i, owners);
    const int m = static_cast<int>(ti.rows.size());
    for (int r = 0; r < m; ++r) {
      const int gr = ti.rows[static_cast<size_t>(r)];
      for (int c = 0; c < m; ++c) sum.dC(gr, ti.rows[static_cast<size_t>(c)]) += ti.dC(r, c);
      sum.q.row(gr) += ti.q.row(r);
    }
  }
  return sum;
}

CouplingSolve solve_coupling_central(const Matrix& dC, const Matrix& q, int lh) {
  const int L = static_cast<int>(dC.rows());
  const int t = static_cast<int>(q.cols());
  CouplingSolve out;
  if (L == 0) {
    out.d_nu = Matrix(0, t);
    out.d_lambda = Matrix(0, t);
    return out;
  }
  if (t == 0) {
    out.d_nu = Matrix(lh, 0);
    out.d_lambda = Matrix(L - lh, 0);
    return out;
  }
  Eigen::PartialPivLU<Matrix> lu(dC);
  // Zero pivots defeat Eigen's rcond estimate, so gate on the U diagonal.
  const Vector u_diag = lu.matrixLU().diagonal().cwiseAbs();
  if (u_diag.minCoeff() < 1e-14 * std::max(u_diag.maxCoeff(), 1.0))
    throw SingularCouplingSystem();
  Matrix y = lu.solve(q);
  // One refinement step; the reported residual is the pre-correction one, an
  // upper bound on what the corrected solution leaves behind.
  const Matrix r = q - dC * y;
  y += lu.solve(r);
  const double qs = std::max(1.0, q.cwiseAbs().maxCoeff());
  out.residual = r.cwiseAbs().maxCoeff() / qs;
  out.d_nu = y.topRows(lh);
  out.d_lambda = y.bottomRows(L - lh);
  return out;
}

Matrix total_jacobian_block(const Problem& p, const LocalJacobian& lj, int i,
                            const Matrix& d_nu, const Matrix& d_lambda) {
  const int n = p.subproblems[static_cast<size_t>(i)].n();
  const int t = p.params.total();
  Matrix dx = Matrix::Zero(n, t);
  const int t_i = p.params.local_count(i);
  if (t_i > 0) dx.middleCols(p.params.local_offset(i), t_i) = lj.d_theta_local;
  if (!lj.eq_rows.empty()) dx += lj.d_nu * gather_rows(d_nu, lj.eq_rows);
  if (!lj.ineq_rows.empty()) dx += lj.d_lambda * gather_rows(d_lambda, lj.ineq_rows);
  return dx;
}

JacobianResult decentralized_jacobian(const Problem& p, const Solution& sol) {
  const int N = p.num_subproblems();
  std::vector<LocalJacobian> ljs;
  ljs.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i)
    ljs.push_back(local_jacobian(p, sol, i, /*with_primal_block=*/false));
  return decentralized_jacobian(p, sol, ljs);
}

JacobianResult decentralized_jacobian(const Problem& p, const Solution& sol,
                                      const std::vector<LocalJacobian>& ljs) {
  const int N = p.num_subproblems();
  const CouplingSystem sys = assemble_coupling_system(p, sol, ljs);
  const CouplingSolve cs = solve_coupling_central(sys.dC, sys.q, p.coupling.num_eq());

  JacobianResult out;
  out.d_nu = cs.d_nu;
  out.d_lambda = cs.d_lambda;
  out.dx = Matrix::Zero(p.n_total(), p.params.total());
  for (int i = 0; i < N; ++i) {
    out.dx.middleRows(p.x_offset(i), p.subproblems[static_cast<size_t>(i)].n()) =
        total_jacobian_block(p, ljs[static_cast<size_t>(i)], i, cs.d_nu, cs.d_lambda);
  }
  return out;
}

namespace {

// Layout of the stacked first-order global system: one block of
// (x_i, lambda_i, mu_i) per subproblem, then the coupling duals (nu, lambda).
struct GlobalKkt {
  Matrix J;       // (Z + L) square
  Matrix dtheta;  // (Z + L) x t, derivative of the KKT residual in theta
  std::vector<int> z_offset;  // start of subproblem i's block
  int Z = 0;                  // total local-block size
  int lh = 0, lf = 0;
};

GlobalKkt build_global_kkt(const Problem& p, const Solution& sol) {
  const int N = p.num_subproblems();
  GlobalKkt g;
  g.lh = p.coupling.num_eq();
  g.lf = p.coupling.num_ineq();
  g.z_offset.resize(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    g.z_offset[static_cast<size_t>(i)] = g.Z;
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    g.Z += s.n() + s.num_ineq() + s.num_eq();
  }
  const int L = g.lh + g.lf;
  const int dim = g.Z + L;
  const int t = p.params.total();
  g.J = Matrix::Zero(dim, dim);
  g.dtheta = Matrix::Zero(dim, t);

  Vector fslack = p.coupling.f;
  for (int i = 0; i < N && g.lf > 0; ++i)
    fslack -= p.coupling.F[static_cast<size_t>(i)] * sol.x_block(p, i);

  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const int off = g.z_offset[static_cast<size_t>(i)];
    const int n = s.n();
    const LocalKkt kkt = build_local_kkt(p, sol, i);
    g.J.block(off, off, kkt.dz.rows(), kkt.dz.cols()) = kkt.dz;
    // Coupling-dual columns enter each block's stationarity rows.
    if (g.lh > 0)
      g.J.block(off, g.Z, n, g.lh) = p.coupling.H[static_cast<size_t>(i)].transpose();
    if (g.lf > 0)
      g.J.block(off, g.Z + g.lh, n, g.lf) = p.coupling.F[static_cast<size_t>(i)].transpose();
    // Coupling rows: equality feasibility and scaled inequality complementarity.
    if (g.lh > 0) g.J.block(g.Z, off, g.lh, n) = p.coupling.H[static_cast<size_t>(i)];
    if (g.lf > 0)
      g.J.block(g.Z + g.lh, off, g.lf, n) =
          sol.lambda.asDiagonal() * p.coupling.F[static_cast<size_t>(i)];

    // Local parameter columns, in the same layout as the local systems.
    const auto& sel = p.params.local[static_cast<size_t>(i)];
    int col = p.params.local_offset(i);
    for (int j : sel.c) g.dtheta(off + j, col++) = 1.0;
    for (int j : sel.b)
      g.dtheta(off + n + j, col++) = -sol.lambda_local[static_cast<size_t>(i)][j];
    for (int j : sel.e) g.dtheta(off + n + s.num_ineq() + j, col++) = -1.0;
  }
  // Derivative of the scaled complementarity rows diag(lambda)(Fx - f) in
  // lambda, matching the orientation of the local complementarity rows.
  if (g.lf > 0)
    g.J.block(g.Z + g.lh, g.Z + g.lh, g.lf, g.lf) = Matrix((-fslack).asDiagonal());

  int col = p.params.shared_offset();
  for (int j : p.params.d) g.dtheta(g.Z + j, col++) = -1.0;
  for (int j : p.params.f) g.dtheta(g.Z + g.lh + j, col++) = -sol.lambda[j];
  return g;
}

}  // namespace

JacobianResult centralized_jacobian(const Problem& p, const Solution& sol) {
  const GlobalKkt g = build_global_kkt(p, sol);
  Eigen::PartialPivLU<Matrix> lu(g.J);
  const Vector u_diag = lu.matrixLU().diagonal().cwiseAbs();
  if (g.J.rows() > 0 && u_diag.minCoeff() < 1e-14 * std::max(u_diag.maxCoeff(), 1.0))
    throw NumericalError("global sensitivity system is singular");
  Matrix X = lu.solve(-g.dtheta);
  X += lu.solve(-g.dtheta - g.J * X);

  JacobianResult out;
  out.dx = Matrix::Zero(p.n_total(), p.params.total());
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const int n = p.subproblems[static_cast<size_t>(i)].n();
    out.dx.middleRows(p.x_offset(i), n) =
        X.middleRows(g.z_offset[static_cast<size_t>(i)], n);
  }
  out.d_nu = X.middleRows(g.Z, g.lh);
  out.d_lambda = X.middleRows(g.Z + g.lh, g.lf);
  return out;
}

Matrix coupling_schur_complement(const Problem& p, const Solution& sol) {
  const GlobalKkt g = build_global_kkt(p, sol);
  const int L = g.lh + g.lf;
  const Matrix B = g.J.topRightCorner(g.Z, L);
  const Matrix C = g.J.bottomLeftCorner(L, g.Z);
  const Matrix D = g.J.bottomRightCorner(L, L);
  Matrix CAinvB = Matrix::Zero(L, L);
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const int off = g.z_offset[static_cast<size_t>(i)];
    const int dim = s.n() + s.num_ineq() + s.num_eq();
    Eigen::PartialPivLU<Matrix> lu(g.J.block(off, off, dim, dim));
    const Vector u_diag = lu.matrixLU().diagonal().cwiseAbs();
    if (u_diag.minCoeff() < 1e-14 * std::max(u_diag.maxCoeff(), 1.0))
      throw SingularLocalSystem(i);
    CAinvB += C.middleCols(off, dim) * lu.solve(B.middleRows(off, dim));
  }
  // The assembled coupling system uses the orientation in which the coupling
  // residual rows are negated before elimination, hence the leading minus.
  return -(D - CAinvB);
}

Matrix finite_difference_jacobian(const Problem& p, double h, const SolverOptions& opts,
                                  double tol_act) {
  if (!(h > 0.0)) throw ValidationError("finite-difference step must be positive");
  const Vector theta = theta_read(p);
  const int t = static_cast<int>(theta.size());

  const Solution base = solve(p, opts);
  const ActiveSet base_as = active_set(p, base, tol_act);

  Matrix fd(p.n_total(), t);
  for (int j = 0; j < t; ++j) {
    double step = h;
    for (int attempt = 0;; ++attempt) {
      Vector tp = theta, tm = theta;
      tp[j] += step;
      tm[j] -= step;
      const Problem pp = theta_write(p, tp);
      const Problem pm = theta_write(p, tm);
      const Solution sp = solve(pp, opts);
      const Solution sm = solve(pm, opts);
      // Slacks must be measured against the perturbed coefficients, or a
      // probed bound reads as its own activity change.
      const ActiveSet asp = active_set(pp, sp, tol_act);
      const ActiveSet asm_ = active_set(pm, sm, tol_act);
      const bool same = asp.local == base_as.local && asp.coupling == base_as.coupling &&
                        asm_.local == base_as.local && asm_.coupling == base_as.coupling;
      if (same) {
        fd.col(j) = (sp.x - sm.x) / (2.0 * step);
        break;
      }
      if (attempt >= 1) throw ActiveSetFlip(j);
      step /= 10.0;  // one retry with a smaller step
    }
  }
  return fd;
}

double complexity_eta(double rho, int N) {
  if (!(rho >= 0.0) || N < 1) throw ValidationError("eta needs rho >= 0 and N >= 1");
  const double n2 = static_cast<double>(N) * static_cast<double>(N);
  return (rho * rho * rho + 1.0 / n2) / std::pow(1.0 + rho, 3);
}

double coupling_ratio(const Problem& p) {
  int denom = 0;
  for (const auto& s : p.subproblems) denom += s.n() + s.num_ineq();
  if (denom == 0) throw ValidationError("coupling ratio undefined for empty problem");
  return static_cast<double>(p.coupling.total()) / static_cast<double>(denom);
}

}  // namespace ccqp
