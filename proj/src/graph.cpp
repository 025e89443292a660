#include "ccqp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace ccqp {

ConstraintGraph build_graph(const Problem& p) {
  const int N = p.num_subproblems();
  const int lh = p.coupling.num_eq(), lf = p.coupling.num_ineq();
  ConstraintGraph g;
  g.num_subproblems = N;
  g.num_constraints = lh + lf;
  g.constraints_of.resize(static_cast<size_t>(N));
  g.subproblems_of.resize(static_cast<size_t>(g.num_constraints));
  for (int i = 0; i < N; ++i) {
    for (int r = 0; r < lh; ++r) {
      if (p.coupling.H[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14) {
        g.constraints_of[static_cast<size_t>(i)].push_back(r);
        g.subproblems_of[static_cast<size_t>(r)].push_back(i);
      }
    }
    for (int r = 0; r < lf; ++r) {
      if (p.coupling.F[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14) {
        g.constraints_of[static_cast<size_t>(i)].push_back(lh + r);
        g.subproblems_of[static_cast<size_t>(lh + r)].push_back(i);
      }
    }
  }
  return g;
}

std::vector<int> bfs_distances(const ConstraintGraph& g, int start) {
  std::vector<int> dist(static_cast<size_t>(g.num_nodes()), -1);
  std::deque<int> queue;
  dist[static_cast<size_t>(start)] = 0;
  queue.push_back(start);
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop_front();
    const int du = dist[static_cast<size_t>(u)];
    auto visit = [&](int v) {
      if (dist[static_cast<size_t>(v)] < 0) {
        dist[static_cast<size_t>(v)] = du + 1;
        queue.push_back(v);
      }
    };
    if (u < g.num_subproblems) {
      for (int c : g.constraints_of[static_cast<size_t>(u)]) visit(g.constraint_node(c));
    } else {
      for (int i : g.subproblems_of[static_cast<size_t>(u - g.num_subproblems)]) visit(i);
    }
  }
  return dist;
}

ProjectionSet neighborhood(const ConstraintGraph& g, int k, int omega) {
  if (k < 0 || k >= g.num_subproblems) throw ValidationError("node index out of range");
  if (omega < 0) throw ValidationError("neighborhood radius must be nonnegative");
  ProjectionSet ps;
  ps.node = k;
  ps.omega = omega;
  ps.owned = g.constraints_of[static_cast<size_t>(k)];
  if (ps.owned.empty()) return ps;  // uncoupled node: everything stays empty

  const std::vector<int> dist = bfs_distances(g, g.subproblem_node(k));
  const int radius = 2 * omega + 1;
  std::vector<bool> interior(static_cast<size_t>(g.num_constraints), false);
  for (int c = 0; c < g.num_constraints; ++c) {
    const int d = dist[static_cast<size_t>(g.constraint_node(c))];
    if (d >= 0 && d <= radius) {
      interior[static_cast<size_t>(c)] = true;
      ps.interior.push_back(c);
    }
  }
  for (int c = 0; c < g.num_constraints; ++c)
    if (!interior[static_cast<size_t>(c)]) ps.exterior.push_back(c);

  std::vector<bool> src(static_cast<size_t>(g.num_subproblems), false);
  for (int c : ps.interior)
    for (int i : g.subproblems_of[static_cast<size_t>(c)]) src[static_cast<size_t>(i)] = true;
  for (int i = 0; i < g.num_subproblems; ++i)
    if (src[static_cast<size_t>(i)]) ps.sources.push_back(i);
  return ps;
}

ProjectedSystem project_system(const Problem& p, const Solution& sol,
                               const std::vector<LocalJacobian>& ljs,
                               const ProjectionSet& proj) {
  const int ni = static_cast<int>(proj.interior.size());
  const int ne = static_cast<int>(proj.exterior.size());
  const int t = p.params.total();
  ProjectedSystem sys;
  sys.dC_in = Matrix::Zero(ni, ni);
  sys.dC_out = Matrix::Zero(ni, ne);
  sys.q_in = Matrix::Zero(ni, t);

  // Interior/exterior position of each global coupling row (-1 when absent;
  // every constraint is in exactly one of the two lists).
  std::vector<int> pos_in(static_cast<size_t>(p.coupling.total()), -1);
  std::vector<int> pos_ext(static_cast<size_t>(p.coupling.total()), -1);
  for (int r = 0; r < ni; ++r) pos_in[static_cast<size_t>(proj.interior[static_cast<size_t>(r)])] = r;
  for (int c = 0; c < ne; ++c) pos_ext[static_cast<size_t>(proj.exterior[static_cast<size_t>(c)])] = c;

  const auto owners = offset_owners(p);
  for (int i : proj.sources) {
    const LocalCouplingTerms terms =
        assemble_local_terms(p, sol, ljs[static_cast<size_t>(i)], i, owners);
    const int m = static_cast<int>(terms.rows.size());
    for (int r = 0; r < m; ++r) {
      const int pr = pos_in[static_cast<size_t>(terms.rows[static_cast<size_t>(r)])];
      if (pr < 0) continue;  // source also touches rows beyond the projection
      for (int c = 0; c < m; ++c) {
        const int gc = terms.rows[static_cast<size_t>(c)];
        if (pos_in[static_cast<size_t>(gc)] >= 0)
          sys.dC_in(pr, pos_in[static_cast<size_t>(gc)]) += terms.dC(r, c);
        else
          sys.dC_out(pr, pos_ext[static_cast<size_t>(gc)]) += terms.dC(r, c);
      }
      sys.q_in.row(pr) += terms.q.row(r);
    }
  }
  return sys;
}

Matrix build_coupling_rows(const Problem& p) {
  const int lh = p.coupling.num_eq(), lf = p.coupling.num_ineq();
  Matrix M = Matrix::Zero(lh + lf, p.n_total());
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const int off = p.x_offset(i);
    const int n = p.subproblems[static_cast<size_t>(i)].n();
    if (lh > 0) M.block(0, off, lh, n) = p.coupling.H[static_cast<size_t>(i)];
    if (lf > 0) M.block(lh, off, lf, n) = p.coupling.F[static_cast<size_t>(i)];
  }
  return M;
}

Matrix coupling_decomposition(const Problem& p, const Solution& sol,
                              const std::vector<LocalJacobian>& ljs) {
  const int lh = p.coupling.num_eq(), lf = p.coupling.num_ineq();
  const Matrix M = build_coupling_rows(p);
  Matrix Gbar = Matrix::Zero(p.n_total(), p.n_total());
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const int off = p.x_offset(i);
    const int n = p.subproblems[static_cast<size_t>(i)].n();
    Gbar.block(off, off, n, n) = ljs[static_cast<size_t>(i)].primal_block_inv;
  }
  Matrix dC = M * Gbar * M.transpose();
  if (lf > 0) {
    dC.bottomRows(lf) = sol.lambda.asDiagonal() * dC.bottomRows(lf);
    Vector share = -p.coupling.f;
    for (int i = 0; i < p.num_subproblems(); ++i)
      share += p.coupling.F[static_cast<size_t>(i)] * sol.x_block(p, i);
    dC.block(lh, lh, lf, lf) -= Matrix(share.asDiagonal());
  }
  return dC;
}

int graph_induced_bandwidth(const Matrix& M, const ConstraintGraph& g,
                            const std::vector<int>& row_nodes,
                            const std::vector<int>& col_nodes) {
  if (static_cast<int>(row_nodes.size()) != M.rows() ||
      static_cast<int>(col_nodes.size()) != M.cols())
    throw ValidationError("bandwidth node maps must match matrix shape");

  // One BFS per distinct row node.
  std::vector<std::vector<int>> dist_cache(static_cast<size_t>(g.num_nodes()));
  int bw = 0;
  for (int r = 0; r < M.rows(); ++r) {
    const int rn = row_nodes[static_cast<size_t>(r)];
    auto& dist = dist_cache[static_cast<size_t>(rn)];
    if (dist.empty()) dist = bfs_distances(g, rn);
    for (int c = 0; c < M.cols(); ++c) {
      if (std::abs(M(r, c)) <= 1e-14) continue;
      const int d = dist[static_cast<size_t>(col_nodes[static_cast<size_t>(c)])];
      if (d < 0)
        throw NumericalError("nonzero entry links disconnected graph nodes");
      bw = std::max(bw, d);
    }
  }
  return bw;
}

int coupling_bandwidth(const Matrix& dC, const ConstraintGraph& g) {
  std::vector<int> nodes(static_cast<size_t>(dC.rows()));
  for (int c = 0; c < dC.rows(); ++c) nodes[static_cast<size_t>(c)] = g.constraint_node(c);
  return graph_induced_bandwidth(dC, g, nodes, nodes);
}

int coupling_rows_bandwidth(const Problem& p, const ConstraintGraph& g) {
  const Matrix M = build_coupling_rows(p);
  std::vector<int> rows(static_cast<size_t>(M.rows()));
  for (int c = 0; c < M.rows(); ++c) rows[static_cast<size_t>(c)] = g.constraint_node(c);
  std::vector<int> cols(static_cast<size_t>(M.cols()));
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const int off = p.x_offset(i);
    const int n = p.subproblems[static_cast<size_t>(i)].n();
    for (int c = 0; c < n; ++c) cols[static_cast<size_t>(off + c)] = g.subproblem_node(i);
  }
  return graph_induced_bandwidth(M, g, rows, cols);
}

int ceil_plus(double x) {
  const double c = std::ceil(x - 1e-12);
  return c <= 0.0 ? 0 : static_cast<int>(c);
}

double decay_bound(double sigma_max, double sigma_min, int bandwidth, int distance) {
  if (!(sigma_min > 0.0) || sigma_max < sigma_min)
    throw ValidationError("decay bound needs 0 < sigma_min <= sigma_max");
  if (bandwidth < 1 || distance < 0)
    throw ValidationError("decay bound needs bandwidth >= 1 and distance >= 0");
  const double s2 = sigma_max * sigma_max, u2 = sigma_min * sigma_min;
  const double r = (s2 - u2) / (s2 + u2);
  const int e = ceil_plus(static_cast<double>(distance - bandwidth) / (2.0 * bandwidth));
  const double lead = sigma_max / u2;
  if (e == 0) return lead;  // covers r == 0 with the 0^0 = 1 convention
  return lead * std::pow(r, e);
}

}  // namespace ccqp
