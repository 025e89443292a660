#include "ccqp/solver.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

namespace ccqp {

StackedData build_stacked(const Problem& p) {
  const int N = p.num_subproblems();
  const int n = p.n_total();
  int m_in = p.coupling.num_ineq();
  int m_eq = p.coupling.num_eq();
  for (const auto& s : p.subproblems) {
    m_in += s.num_ineq();
    m_eq += s.num_eq();
  }

  StackedData d;
  d.P = Matrix::Zero(n, n);
  d.c = Vector::Zero(n);
  d.G = Matrix::Zero(m_in, n);
  d.g = Vector::Zero(m_in);
  d.C = Matrix::Zero(m_eq, n);
  d.ceq = Vector::Zero(m_eq);

  int rin = 0, req = 0;
  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const int off = p.x_offset(i);
    d.P.block(off, off, s.n(), s.n()) = s.P;
    d.c.segment(off, s.n()) = s.c;
    if (s.num_ineq() > 0) {
      d.G.block(rin, off, s.num_ineq(), s.n()) = s.A;
      d.g.segment(rin, s.num_ineq()) = s.b;
    }
    rin += s.num_ineq();
    if (s.num_eq() > 0) {
      d.C.block(req, off, s.num_eq(), s.n()) = s.E;
      d.ceq.segment(req, s.num_eq()) = s.e;
    }
    req += s.num_eq();
  }
  const int lf = p.coupling.num_ineq();
  const int lh = p.coupling.num_eq();
  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const int off = p.x_offset(i);
    if (lf > 0) d.G.block(rin, off, lf, s.n()) = p.coupling.F[static_cast<size_t>(i)];
    if (lh > 0) d.C.block(req, off, lh, s.n()) = p.coupling.H[static_cast<size_t>(i)];
  }
  if (lf > 0) d.g.segment(rin, lf) = p.coupling.f;
  if (lh > 0) d.ceq.segment(req, lh) = p.coupling.d;
  return d;
}

double objective_value(const Problem& p, const Vector& x) {
  double v = 0.0;
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const auto xi = x.segment(p.x_offset(i), s.n());
    v += 0.5 * xi.dot(s.P * xi) + s.c.dot(xi);
  }
  return v;
}

namespace {

// Splits stacked inequality duals back into per-subproblem vectors + coupling
// tail; same for equality duals.
void scatter_duals(const Problem& p, const Vector& z, const Vector& y, Solution& sol) {
  const int N = p.num_subproblems();
  sol.lambda_local.resize(static_cast<size_t>(N));
  sol.mu_local.resize(static_cast<size_t>(N));
  int rin = 0, req = 0;
  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    sol.lambda_local[static_cast<size_t>(i)] = z.segment(rin, s.num_ineq());
    rin += s.num_ineq();
    sol.mu_local[static_cast<size_t>(i)] = y.segment(req, s.num_eq());
    req += s.num_eq();
  }
  sol.lambda = z.segment(rin, p.coupling.num_ineq());
  sol.nu = y.segment(req, p.coupling.num_eq());
}

Vector gather_ineq_duals(const Problem& p, const Solution& sol) {
  int m = p.coupling.num_ineq();
  for (const auto& s : p.subproblems) m += s.num_ineq();
  Vector z(m);
  int r = 0;
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& zi = sol.lambda_local[static_cast<size_t>(i)];
    z.segment(r, zi.size()) = zi;
    r += static_cast<int>(zi.size());
  }
  z.segment(r, sol.lambda.size()) = sol.lambda;
  return z;
}

Vector gather_eq_duals(const Problem& p, const Solution& sol) {
  int m = p.coupling.num_eq();
  for (const auto& s : p.subproblems) m += s.num_eq();
  Vector y(m);
  int r = 0;
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& yi = sol.mu_local[static_cast<size_t>(i)];
    y.segment(r, yi.size()) = yi;
    r += static_cast<int>(yi.size());
  }
  y.segment(r, sol.nu.size()) = sol.nu;
  return y;
}

double data_scale(const StackedData& d) {
  double s = 1.0;
  if (d.c.size() > 0) s = std::max(s, d.c.cwiseAbs().maxCoeff());
  if (d.g.size() > 0) s = std::max(s, d.g.cwiseAbs().maxCoeff());
  if (d.ceq.size() > 0) s = std::max(s, d.ceq.cwiseAbs().maxCoeff());
  if (d.P.size() > 0) s = std::max(s, d.P.cwiseAbs().maxCoeff());
  return s;
}

double residual_of(const StackedData& d, const Vector& x, const Vector& z, const Vector& y) {
  Vector rd = d.P * x + d.c;
  if (z.size() > 0) rd += d.G.transpose() * z;
  if (y.size() > 0) rd += d.C.transpose() * y;
  double r = rd.cwiseAbs().maxCoeff();
  if (y.size() > 0) r = std::max(r, (d.C * x - d.ceq).cwiseAbs().maxCoeff());
  if (z.size() > 0) {
    Vector slack = d.g - d.G * x;
    r = std::max(r, std::max(0.0, -slack.minCoeff()));
    r = std::max(r, std::max(0.0, -z.minCoeff()));
    r = std::max(r, (z.array() * slack.array()).abs().maxCoeff());
  }
  return r;
}

// Factorization of the regularized augmented system
//   [ P + G'WG + delta I   C' ; C   -delta I ].
// Retries with delta * 100 when the factorization reports trouble.
struct AugmentedSolver {
  Eigen::LDLT<Matrix> ldlt;
  Matrix K;
  int n, me;

  void factor(const Matrix& H, const Matrix& C, double delta) {
    n = static_cast<int>(H.rows());
    me = static_cast<int>(C.rows());
    K = Matrix::Zero(n + me, n + me);
    for (int attempt = 0; attempt < 4; ++attempt) {
      const double dl = delta * std::pow(100.0, attempt);
      K.topLeftCorner(n, n) = H + dl * Matrix::Identity(n, n);
      if (me > 0) {
        K.topRightCorner(n, me) = C.transpose();
        K.bottomLeftCorner(me, n) = C;
        K.bottomRightCorner(me, me) = -dl * Matrix::Identity(me, me);
      }
      ldlt.compute(K);
      const bool pivots_ok = ldlt.info() == Eigen::Success &&
                             ldlt.vectorD().array().isFinite().all() &&
                             ldlt.vectorD().cwiseAbs().minCoeff() > 0.0;
      if (pivots_ok) return;
    }
    throw NumericalError("Newton system singular after regularization retries");
  }

  Vector solve(const Vector& rhs) const { return ldlt.solve(rhs); }

  // Back-substitution plus one refinement step against the unregularized
  // operator [H C'; C 0], which removes most of the delta-shift error.
  Vector solve_refined(const Matrix& H, const Matrix& C, const Vector& rhs) const {
    Vector sol = ldlt.solve(rhs);
    Vector r = rhs;
    r.head(n) -= H * sol.head(n);
    if (me > 0) {
      r.head(n) -= C.transpose() * sol.tail(me);
      r.tail(me) -= C * sol.head(n);
    }
    sol += ldlt.solve(r);
    return sol;
  }
};

}  // namespace

double kkt_residual(const Problem& p, const Solution& sol) {
  const StackedData d = build_stacked(p);
  return residual_of(d, sol.x, gather_ineq_duals(p, sol), gather_eq_duals(p, sol));
}

namespace {

// Active-set refinement: re-solves the equality KKT system implied by the
// current activity pattern and keeps the result only when the residual
// strictly improves and the duals stay essentially nonnegative.
void polish(const StackedData& d, Vector& x, Vector& z, Vector& y, double& resid) {
  const int n = static_cast<int>(d.P.rows());
  const int mi = static_cast<int>(d.G.rows());
  const int me = static_cast<int>(d.C.rows());

  std::vector<int> act;
  if (mi > 0) {
    Vector slack = d.g - d.G * x;
    for (int j = 0; j < mi; ++j)
      if (slack[j] < z[j]) act.push_back(j);
  }
  const int ma = static_cast<int>(act.size());
  const int dim = n + ma + me;
  Matrix M = Matrix::Zero(dim, dim);
  Vector rhs(dim);
  M.topLeftCorner(n, n) = d.P;
  rhs.head(n) = -d.c;
  for (int r = 0; r < ma; ++r) {
    M.block(n + r, 0, 1, n) = d.G.row(act[static_cast<size_t>(r)]);
    M.block(0, n + r, n, 1) = d.G.row(act[static_cast<size_t>(r)]).transpose();
    rhs[n + r] = d.g[act[static_cast<size_t>(r)]];
  }
  if (me > 0) {
    M.block(n + ma, 0, me, n) = d.C;
    M.block(0, n + ma, n, me) = d.C.transpose();
    rhs.segment(n + ma, me) = d.ceq;
  }

  Eigen::PartialPivLU<Matrix> lu(M);
  if (lu.rcond() < 1e-13) return;
  Vector sol = lu.solve(rhs);
  sol += lu.solve(rhs - M * sol);  // one refinement step

  Vector xn = sol.head(n);
  Vector zn = Vector::Zero(mi);
  for (int r = 0; r < ma; ++r) zn[act[static_cast<size_t>(r)]] = sol[n + r];
  Vector yn = sol.segment(n + ma, me);
  if (mi > 0 && zn.size() > 0 && zn.minCoeff() < -1e-9) return;
  zn = zn.cwiseMax(0.0);

  const double rn = residual_of(d, xn, zn, yn);
  if (rn < resid) {
    x = xn;
    z = zn;
    y = yn;
    resid = rn;
  }
}

}  // namespace

Solution solve(const Problem& p, const SolverOptions& opts) {
  p.validate();
  const StackedData d = build_stacked(p);
  const int n = static_cast<int>(d.P.rows());
  const int mi = static_cast<int>(d.G.rows());
  const int me = static_cast<int>(d.C.rows());
  const double scale = data_scale(d);
  const double target = opts.tol * scale;

  Solution out;

  // Equality-constrained start: minimize the quadratic subject to Cx = ceq.
  AugmentedSolver aug;
  aug.factor(d.P, d.C, std::max(opts.reg, 1e-12));
  Vector rhs0(n + me);
  rhs0.head(n) = -d.c;
  if (me > 0) rhs0.tail(me) = d.ceq;
  Vector xy = aug.solve_refined(d.P, d.C, rhs0);
  Vector x = xy.head(n);
  Vector y = me > 0 ? Vector(xy.tail(me)) : Vector(0);

  if (mi == 0) {
    // No inequalities: the start is already the KKT point.
    out.x = x;
    scatter_duals(p, Vector(0), y, out);
    out.iterations = 1;
    out.kkt_residual = residual_of(d, x, Vector(0), y);
    out.converged = out.kkt_residual <= target;
    return out;
  }

  Vector slack0 = d.g - d.G * x;
  Vector s(mi), z(mi);
  for (int j = 0; j < mi; ++j) {
    s[j] = std::max(slack0[j], 1.0);
    z[j] = 1.0;
  }
  if (me == 0) y = Vector(0);

  double resid = std::numeric_limits<double>::infinity();
  int iter = 0;
  bool converged = false;

  for (; iter < opts.max_iter; ++iter) {
    Vector rd = d.P * x + d.c + d.G.transpose() * z;
    if (me > 0) rd += d.C.transpose() * y;
    Vector rp = me > 0 ? Vector(d.C * x - d.ceq) : Vector(0);
    Vector rg = d.G * x + s - d.g;
    const double mu = s.dot(z) / mi;

    resid = rd.cwiseAbs().maxCoeff();
    if (me > 0) resid = std::max(resid, rp.cwiseAbs().maxCoeff());
    resid = std::max(resid, rg.cwiseAbs().maxCoeff());
    resid = std::max(resid, (s.array() * z.array()).abs().maxCoeff());
    if (resid <= target) {
      converged = true;
      break;
    }

    Vector w = z.cwiseQuotient(s);  // diag of W
    Matrix H = d.P + d.G.transpose() * w.asDiagonal() * d.G;
    aug.factor(H, d.C, opts.reg);

    auto newton = [&](const Vector& szmod, Vector& dx, Vector& dy, Vector& ds, Vector& dz) {
      Vector rx = -rd - d.G.transpose() * (w.asDiagonal() * rg - szmod.cwiseQuotient(s));
      Vector rhs(n + me);
      rhs.head(n) = rx;
      if (me > 0) rhs.tail(me) = -rp;
      Vector sol = aug.solve_refined(H, d.C, rhs);
      dx = sol.head(n);
      dy = me > 0 ? Vector(sol.tail(me)) : Vector(0);
      ds = -rg - d.G * dx;
      dz = -(szmod + z.cwiseProduct(ds)).cwiseQuotient(s);
    };

    auto max_step = [](const Vector& v, const Vector& dv) {
      double a = 1.0;
      for (int j = 0; j < v.size(); ++j)
        if (dv[j] < 0.0) a = std::min(a, -v[j] / dv[j]);
      return a;
    };

    Vector dx, dy, ds, dz;
    newton(s.cwiseProduct(z), dx, dy, ds, dz);
    const double a_aff = std::min(max_step(s, ds), max_step(z, dz));
    const double mu_aff = (s + a_aff * ds).dot(z + a_aff * dz) / mi;
    const double sigma = std::pow(mu_aff / mu, 3);

    Vector szmod = s.cwiseProduct(z) + ds.cwiseProduct(dz) -
                   sigma * mu * Vector::Ones(mi);
    newton(szmod, dx, dy, ds, dz);

    const double tau = 0.995;
    const double alpha = std::min(1.0, tau * std::min(max_step(s, ds), max_step(z, dz)));
    x += alpha * dx;
    s += alpha * ds;
    z += alpha * dz;
    if (me > 0) y += alpha * dy;
  }

  resid = residual_of(d, x, z, y);
  if (opts.polish) polish(d, x, z, y, resid);

  out.x = x;
  scatter_duals(p, z, y, out);
  out.iterations = iter;
  out.kkt_residual = resid;
  out.converged = converged || resid <= target;
  return out;
}

ActiveSet active_set(const Problem& p, const Solution& sol, double tol_act) {
  ActiveSet as;
  const int N = p.num_subproblems();
  as.local.resize(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    Vector slack = s.b - s.A * sol.x_block(p, i);
    auto& flags = as.local[static_cast<size_t>(i)];
    flags.resize(static_cast<size_t>(s.num_ineq()));
    for (int j = 0; j < s.num_ineq(); ++j) flags[static_cast<size_t>(j)] = slack[j] <= tol_act;
  }
  const int lf = p.coupling.num_ineq();
  Vector fslack = p.coupling.f;
  for (int i = 0; i < N; ++i)
    if (lf > 0) fslack -= p.coupling.F[static_cast<size_t>(i)] * sol.x_block(p, i);
  as.coupling.resize(static_cast<size_t>(lf));
  for (int j = 0; j < lf; ++j) as.coupling[static_cast<size_t>(j)] = fslack[j] <= tol_act;
  return as;
}

namespace {

// Orthonormal basis of the null space of M (rows = constraint gradients).
// Empty (n x 0) when M has full column rank.
Matrix null_space(const Matrix& M, int n) {
  if (M.rows() == 0) return Matrix::Identity(n, n);
  Eigen::FullPivLU<Matrix> lu(M);
  lu.setThreshold(1e-10);
  Matrix K = lu.kernel();
  if (lu.dimensionOfKernel() == 0) return Matrix(n, 0);
  Eigen::HouseholderQR<Matrix> qr(K);
  Matrix Q = qr.householderQ() * Matrix::Identity(n, K.cols());
  return Q;
}

double reduced_min_eig(const Matrix& hess, const Matrix& Z) {
  if (Z.cols() == 0) return std::numeric_limits<double>::infinity();
  Matrix R = Z.transpose() * hess * Z;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (R + R.transpose()));
  return eig.eigenvalues().minCoeff();
}

}  // namespace

AssumptionReport verify_assumptions(const Problem& p, const Solution& sol,
                                    const VerifyOptions& opts) {
  AssumptionReport rep;
  const int N = p.num_subproblems();
  const int n = p.n_total();
  rep.active = active_set(p, sol, opts.tol_act);

  // Active-gradient matrix: all equality rows plus active inequality rows.
  std::vector<int> act_rows;  // indices into the stacked G
  const StackedData d = build_stacked(p);
  {
    int r = 0;
    for (int i = 0; i < N; ++i) {
      const auto& flags = rep.active.local[static_cast<size_t>(i)];
      for (size_t j = 0; j < flags.size(); ++j)
        if (flags[j]) act_rows.push_back(r + static_cast<int>(j));
      r += static_cast<int>(flags.size());
    }
    for (size_t j = 0; j < rep.active.coupling.size(); ++j)
      if (rep.active.coupling[j]) act_rows.push_back(r + static_cast<int>(j));
  }
  const int ma = static_cast<int>(act_rows.size());
  const int me = static_cast<int>(d.C.rows());
  Matrix Gact(me + ma, n);
  if (me > 0) Gact.topRows(me) = d.C;
  for (int r = 0; r < ma; ++r) Gact.row(me + r) = d.G.row(act_rows[static_cast<size_t>(r)]);

  if (Gact.rows() == 0) {
    rep.licq_ok = true;
    rep.licq_min_sv = std::numeric_limits<double>::infinity();
  } else if (Gact.rows() > n) {
    rep.licq_ok = false;
    rep.licq_min_sv = 0.0;
  } else {
    Eigen::JacobiSVD<Matrix> svd(Gact);
    rep.licq_min_sv = svd.singularValues().minCoeff();
    rep.licq_ok = rep.licq_min_sv > opts.tol_licq;
  }

  // Strict complementarity: active rows need bounded-away duals, inactive
  // rows bounded-away slacks.
  {
    Vector z = gather_ineq_duals(p, sol);
    Vector slack = d.g - d.G * sol.x;
    int r = 0;
    auto visit = [&](const std::vector<bool>& flags) {
      for (size_t j = 0; j < flags.size(); ++j, ++r) {
        if (flags[j])
          rep.min_active_dual = std::min(rep.min_active_dual, z[r]);
        else
          rep.min_inactive_slack = std::min(rep.min_inactive_slack, slack[r]);
      }
    };
    for (int i = 0; i < N; ++i) visit(rep.active.local[static_cast<size_t>(i)]);
    visit(rep.active.coupling);
    rep.strict_complementarity_ok =
        rep.min_active_dual > opts.tol_sc && rep.min_inactive_slack > opts.tol_sc;
  }

  rep.global_reduced_min_eig = reduced_min_eig(d.P, null_space(Gact, n));
  rep.second_order_global_ok = rep.global_reduced_min_eig >= opts.tol_eig;

  rep.local_second_order_ok.resize(static_cast<size_t>(N));
  rep.local_reduced_min_eig.resize(static_cast<size_t>(N));
  bool all_local = true;
  for (int i = 0; i < N; ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const auto& flags = rep.active.local[static_cast<size_t>(i)];
    int na = 0;
    for (bool f : flags) na += f ? 1 : 0;
    Matrix M(s.num_eq() + na, s.n());
    if (s.num_eq() > 0) M.topRows(s.num_eq()) = s.E;
    int r = s.num_eq();
    for (size_t j = 0; j < flags.size(); ++j)
      if (flags[j]) M.row(r++) = s.A.row(static_cast<int>(j));
    const double ev = reduced_min_eig(s.P, null_space(M, s.n()));
    rep.local_reduced_min_eig[static_cast<size_t>(i)] = ev;
    const bool ok = ev >= opts.tol_eig;
    rep.local_second_order_ok[static_cast<size_t>(i)] = ok;
    all_local = all_local && ok;
  }
  rep.second_order_local_ok = all_local;
  return rep;
}

VerifiedInstance sample_verified_problem(const RandomConfig& cfg, std::uint64_t seed,
                                         const SolverOptions& sopts, const VerifyOptions& vopts,
                                         int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const std::uint64_t s = seed + static_cast<std::uint64_t>(attempt);
    VerifiedInstance inst;
    inst.problem = generate_random(cfg, s);
    inst.solution = solve(inst.problem, sopts);
    if (!inst.solution.converged) continue;
    inst.report = verify_assumptions(inst.problem, inst.solution, vopts);
    if (!inst.report.all_ok()) continue;
    inst.seed_used = s;
    inst.attempts = attempt + 1;
    return inst;
  }
  throw NumericalError("no regular instance found within the resampling budget");
}

}  // namespace ccqp
