#include "ccqp/distnet.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "ccqp/coupling.hpp"

namespace ccqp {

namespace {

// Position of each owned constraint inside the node's interior list.
std::vector<int> owned_positions(const ProjectionSet& proj) {
  std::vector<int> pos;
  pos.reserve(proj.owned.size());
  for (int c : proj.owned) {
    const auto it = std::lower_bound(proj.interior.begin(), proj.interior.end(), c);
    pos.push_back(static_cast<int>(it - proj.interior.begin()));
  }
  return pos;
}

}  // namespace

Network setup_network(const Problem& p, const Solution& sol, int omega, std::uint64_t seed) {
  Network net;
  net.omega = omega;
  net.lh = p.coupling.num_eq();
  net.lf = p.coupling.num_ineq();
  net.t = p.params.total();
  net.seed = seed;
  net.problem = p;
  net.graph = build_graph(p);

  const int N = p.num_subproblems();
  net.local_jacobians.reserve(static_cast<size_t>(N));
  for (int i = 0; i < N; ++i) net.local_jacobians.push_back(local_jacobian(p, sol, i));

  const CouplingSystem sys = assemble_coupling_system(p, sol, net.local_jacobians);
  net.dC = sys.dC;
  net.q = sys.q;

  net.constraint_degree.resize(static_cast<size_t>(net.graph.num_constraints));
  for (int c = 0; c < net.graph.num_constraints; ++c)
    net.constraint_degree[static_cast<size_t>(c)] =
        static_cast<int>(net.graph.subproblems_of[static_cast<size_t>(c)].size());

  net.peers.resize(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    std::set<int> ps;
    for (int c : net.graph.constraints_of[static_cast<size_t>(k)])
      for (int j : net.graph.subproblems_of[static_cast<size_t>(c)])
        if (j != k) ps.insert(j);
    net.peers[static_cast<size_t>(k)].assign(ps.begin(), ps.end());
  }

  // Shared random start, one draw distributed to every node.
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int L = net.lh + net.lf;
  net.y = Matrix(L, net.t);
  for (int r = 0; r < L; ++r)
    for (int c = 0; c < net.t; ++c) net.y(r, c) = gauss(rng);

  net.nodes.resize(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    NodeState& node = net.nodes[static_cast<size_t>(k)];
    node.node = k;
    node.proj = neighborhood(net.graph, k, omega);
    const ProjectedSystem proj = project_system(p, sol, net.local_jacobians, node.proj);
    if (!node.proj.interior.empty()) {
      node.factor.compute(proj.dC_in);
      // Zero pivots defeat Eigen's rcond estimate, so gate on the U diagonal.
      const Vector u_diag = node.factor.matrixLU().diagonal().cwiseAbs();
      if (u_diag.minCoeff() < 1e-14 * std::max(u_diag.maxCoeff(), 1.0))
        throw SingularProjectedSystem(k);
    }
    node.dC_out = proj.dC_out;
    node.q_in = proj.q_in;
    node.y = net.y;
  }
  return net;
}

void run_round(Network& net, const Matrix* reference) {
  const int N = static_cast<int>(net.nodes.size());
  const int L = net.lh + net.lf;
  RoundLog entry;
  entry.round = static_cast<int>(net.log.size());
  entry.node_seconds.resize(static_cast<size_t>(N), 0.0);

  // Phase 1: interior solves. est[k] holds node k's new owned-row estimates.
  std::vector<Matrix> est(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    NodeState& node = net.nodes[static_cast<size_t>(k)];
    const int no = static_cast<int>(node.proj.owned.size());
    if (no == 0) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Matrix rhs = node.q_in;
    if (!node.proj.exterior.empty()) {
      Matrix y_ext(static_cast<int>(node.proj.exterior.size()), net.t);
      for (size_t r = 0; r < node.proj.exterior.size(); ++r)
        y_ext.row(static_cast<int>(r)) = node.y.row(node.proj.exterior[r]);
      rhs -= node.dC_out * y_ext;
    }
    const Matrix y_in = node.factor.solve(rhs);
    const auto t1 = std::chrono::steady_clock::now();
    entry.node_seconds[static_cast<size_t>(k)] =
        std::chrono::duration<double>(t1 - t0).count();
    est[static_cast<size_t>(k)] = Matrix(no, net.t);
    const std::vector<int> pos = owned_positions(node.proj);
    for (int r = 0; r < no; ++r) est[static_cast<size_t>(k)].row(r) = y_in.row(pos[static_cast<size_t>(r)]);
  }

  // Phase 2: owned-row envelopes to two-hop peers, then per-constraint
  // averaging. Every sharer of a constraint averages the same set of values.
  for (int k = 0; k < N; ++k) {
    entry.messages += static_cast<long>(net.peers[static_cast<size_t>(k)].size());
    entry.scalars += static_cast<long>(net.peers[static_cast<size_t>(k)].size()) *
                     static_cast<long>(net.nodes[static_cast<size_t>(k)].proj.owned.size()) *
                     net.t;
  }
  Matrix y_next = net.y;
  double spread = 0.0;
  for (int c = 0; c < L; ++c) {
    const auto& sharers = net.graph.subproblems_of[static_cast<size_t>(c)];
    if (sharers.empty()) continue;
    Eigen::RowVectorXd avg = Eigen::RowVectorXd::Zero(net.t);
    Eigen::RowVectorXd lo = Eigen::RowVectorXd::Constant(net.t, std::numeric_limits<double>::infinity());
    Eigen::RowVectorXd hi = Eigen::RowVectorXd::Constant(net.t, -std::numeric_limits<double>::infinity());
    for (int k : sharers) {
      const auto& owned = net.nodes[static_cast<size_t>(k)].proj.owned;
      const auto it = std::lower_bound(owned.begin(), owned.end(), c);
      const int row = static_cast<int>(it - owned.begin());
      const Eigen::RowVectorXd v = est[static_cast<size_t>(k)].row(row);
      avg += v;
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    avg /= static_cast<double>(sharers.size());
    if (net.t > 0) spread = std::max(spread, (hi - lo).maxCoeff());
    y_next.row(c) = avg;
  }
  entry.aggregation_spread = spread;

  // Phase 3: broadcast the averaged estimate to every node.
  entry.messages += N;
  entry.scalars += static_cast<long>(N) * static_cast<long>(L) * net.t;
  entry.step_delta = (L > 0 && net.t > 0) ? (y_next - net.y).cwiseAbs().maxCoeff() : 0.0;
  net.y = y_next;
  for (auto& node : net.nodes) node.y = y_next;

  entry.error = reference ? (net.y - *reference).cwiseAbs().maxCoeff()
                          : std::numeric_limits<double>::quiet_NaN();
  net.log.push_back(std::move(entry));
}

RunResult run(Network& net, int max_rounds, double tol, const Matrix* reference) {
  RunResult out;
  for (int r = 0; r < max_rounds; ++r) {
    run_round(net, reference);
    if (net.log.back().step_delta <= tol) {
      out.converged = true;
      break;
    }
  }
  out.rounds = static_cast<int>(net.log.size());
  out.y = net.y;
  return out;
}

RateBound rate_bound(const Network& net, RateExponent formula) {
  RateBound rb;
  const int N = static_cast<int>(net.nodes.size());
  rb.node_terms.assign(static_cast<size_t>(N), 0.0);
  rb.boundary_mass.assign(static_cast<size_t>(N), 0.0);
  rb.sigma_max.assign(static_cast<size_t>(N), 0.0);
  rb.sigma_min.assign(static_cast<size_t>(N), 0.0);
  rb.bandwidth.assign(static_cast<size_t>(N), 0);

  for (int k = 0; k < N; ++k) {
    const NodeState& node = net.nodes[static_cast<size_t>(k)];
    const int ni = static_cast<int>(node.proj.interior.size());
    if (ni == 0) continue;

    // Re-slice the interior block from the assembled system (diagnostic copy;
    // identical to what the node factored).
    Matrix dC_in(ni, ni);
    for (int r = 0; r < ni; ++r)
      for (int c = 0; c < ni; ++c)
        dC_in(r, c) = net.dC(node.proj.interior[static_cast<size_t>(r)],
                             node.proj.interior[static_cast<size_t>(c)]);

    Eigen::JacobiSVD<Matrix> svd(dC_in);
    const double smax = svd.singularValues().maxCoeff();
    const double smin = svd.singularValues().minCoeff();
    rb.sigma_max[static_cast<size_t>(k)] = smax;
    rb.sigma_min[static_cast<size_t>(k)] = smin;

    const double R = node.dC_out.size() > 0 ? node.dC_out.cwiseAbs().sum() : 0.0;
    rb.boundary_mass[static_cast<size_t>(k)] = R;

    std::vector<int> nodes_of(static_cast<size_t>(ni));
    for (int r = 0; r < ni; ++r)
      nodes_of[static_cast<size_t>(r)] =
          net.graph.constraint_node(node.proj.interior[static_cast<size_t>(r)]);
    const int bw = std::max(1, graph_induced_bandwidth(dC_in, net.graph, nodes_of, nodes_of));
    rb.bandwidth[static_cast<size_t>(k)] = bw;

    double term = 0.0;
    if (R > 0.0 && smin > 0.0) {
      const double s2 = smax * smax, u2 = smin * smin;
      const double r = (s2 - u2) / (s2 + u2);
      const int e = formula == RateExponent::Conservative
                        ? ceil_plus(static_cast<double>(net.omega) / (2.0 * bw) - 1.0)
                        : ceil_plus(static_cast<double>(net.omega + 1) / bw - 1.0);
      term = R * smax / u2 * (e == 0 ? 1.0 : std::pow(r, e));
    }
    rb.node_terms[static_cast<size_t>(k)] = term;
    rb.alpha = std::max(rb.alpha, term);
  }
  return rb;
}

MessageStats message_accounting(const Network& net) {
  MessageStats ms;
  const int L = net.lh + net.lf;
  for (const auto& node : net.nodes) {
    const long ni = static_cast<long>(node.proj.interior.size());
    const long srcs = static_cast<long>(node.proj.sources.size());
    ms.setup_messages += srcs;
    ms.setup_scalars += srcs * (ni * ni + ni * net.t);
    const long nh = static_cast<long>(net.peers[static_cast<size_t>(node.node)].size());
    ms.round_messages += nh + 1;  // peer envelopes plus one broadcast delivery
    ms.round_scalars += nh * static_cast<long>(node.proj.owned.size()) * net.t +
                        static_cast<long>(L) * net.t;
  }
  return ms;
}

Matrix aggregation_matrix(const Network& net) {
  const int L = net.lh + net.lf;
  int cols = 0;
  for (const auto& node : net.nodes) cols += static_cast<int>(node.proj.owned.size());
  Matrix gamma = Matrix::Zero(L, cols);
  int col = 0;
  for (const auto& node : net.nodes)
    for (int c : node.proj.owned)
      gamma(c, col++) = 1.0 / static_cast<double>(net.constraint_degree[static_cast<size_t>(c)]);
  return gamma;
}

namespace {

Matrix stacked_blocks(const Network& net, bool input_form) {
  const int L = net.lh + net.lf;
  int rows = 0;
  for (const auto& node : net.nodes) rows += static_cast<int>(node.proj.owned.size());
  Matrix out = Matrix::Zero(rows, L);
  int row0 = 0;
  for (const auto& node : net.nodes) {
    const int no = static_cast<int>(node.proj.owned.size());
    if (no == 0) continue;
    const int ni = static_cast<int>(node.proj.interior.size());
    const std::vector<int> pos = owned_positions(node.proj);
    if (input_form) {
      const Matrix X = node.factor.solve(Matrix::Identity(ni, ni));
      for (int r = 0; r < no; ++r)
        for (int c = 0; c < ni; ++c)
          out(row0 + r, node.proj.interior[static_cast<size_t>(c)]) =
              X(pos[static_cast<size_t>(r)], c);
    } else if (!node.proj.exterior.empty()) {
      const Matrix X = node.factor.solve(node.dC_out);
      for (int r = 0; r < no; ++r)
        for (int c = 0; c < static_cast<int>(node.proj.exterior.size()); ++c)
          out(row0 + r, node.proj.exterior[static_cast<size_t>(c)]) =
              -X(pos[static_cast<size_t>(r)], c);
    }
    row0 += no;
  }
  return out;
}

}  // namespace

Matrix stacked_iteration_matrix(const Network& net) { return stacked_blocks(net, false); }
Matrix stacked_input_matrix(const Network& net) { return stacked_blocks(net, true); }

}  // namespace ccqp
