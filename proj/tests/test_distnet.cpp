#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "ccqp/coupling.hpp"
#include "ccqp/distnet.hpp"
#include "ccqp/graph.hpp"
#include "ccqp/local_diff.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

using namespace ccqp;

namespace {

Problem consensus_problem() {
  Problem p;
  p.subproblems.resize(2);
  for (auto& s : p.subproblems) {
    s.P = Matrix::Identity(1, 1);
    s.A = Matrix(0, 1);
    s.b = Vector(0);
    s.E = Matrix(0, 1);
    s.e = Vector(0);
  }
  p.subproblems[0].c = Vector::Constant(1, -1.0);
  p.subproblems[1].c = Vector::Constant(1, -3.0);
  p.coupling.H = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  p.coupling.d = Vector::Constant(1, 2.0);
  p.params.local = {ParameterSelector{{0}, {}, {}}, ParameterSelector{{0}, {}, {}}};
  p.params.d = {0};
  return p;
}

RandomConfig banded_config() {
  RandomConfig cfg;
  cfg.num_subproblems = 7;
  cfg.n = 3;
  cfg.num_ineq = 1;
  cfg.coupling_eq = 5;
  cfg.coupling_ineq = 2;
  cfg.structure = CouplingStructure::Banded;
  cfg.coupling_scale = 0.5;
  return cfg;
}

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

// Central reference for the stacked shared estimate [D nu; D lambda].
Matrix central_reference(const Network& net) {
  const CouplingSolve cs = solve_coupling_central(net.dC, net.q, net.lh);
  Matrix y(net.lh + net.lf, net.t);
  if (net.lh > 0) y.topRows(net.lh) = cs.d_nu;
  if (net.lf > 0) y.bottomRows(net.lf) = cs.d_lambda;
  return y;
}

void set_estimate(Network& net, const Matrix& y) {
  net.y = y;
  for (auto& node : net.nodes) node.y = y;
}

}  // namespace

TEST_CASE("consensus network agrees with the central solve after one round") {
  const Problem p = consensus_problem();
  const Solution sol = solve(p);
  REQUIRE(sol.converged);

  Network net = setup_network(p, sol, 0, 7);
  REQUIRE(net.nodes.size() == 2);
  for (const auto& node : net.nodes) {
    CHECK(node.proj.owned == std::vector<int>{0});
    CHECK(node.proj.interior == std::vector<int>{0});
    CHECK(node.proj.exterior.empty());
  }
  CHECK(net.t == 3);

  // The single coupling row lies inside every radius-0 neighborhood, so each
  // node solves the full system and one exchange settles the estimate.
  const Matrix ystar = central_reference(net);
  run_round(net, &ystar);
  CHECK(max_abs(net.y - ystar) <= 1e-12);
  CHECK(net.y(0, 0) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(net.y(0, 1) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(net.y(0, 2) == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(net.log.size() == 1);
  CHECK(net.log[0].round == 0);
  CHECK(net.log[0].error <= 1e-12);
  CHECK(net.log[0].aggregation_spread <= 1e-12);
  for (const auto& node : net.nodes) CHECK(max_abs(node.y - net.y) == 0.0);

  // A second round cannot move an already-exact estimate.
  run_round(net, &ystar);
  CHECK(net.log[1].step_delta <= 1e-14);

  const RateBound rb = rate_bound(net);
  CHECK(rb.alpha == 0.0);
  CHECK(rb.node_terms == std::vector<double>{0.0, 0.0});
  CHECK(rb.boundary_mass == std::vector<double>{0.0, 0.0});
}

TEST_CASE("consensus stacked operators match their closed forms") {
  const Problem p = consensus_problem();
  const Solution sol = solve(p);
  REQUIRE(sol.converged);
  Network net = setup_network(p, sol, 0, 3);

  const Matrix gamma = aggregation_matrix(net);
  const Matrix S = stacked_iteration_matrix(net);
  const Matrix U = stacked_input_matrix(net);
  REQUIRE(gamma.rows() == 1);
  REQUIRE(gamma.cols() == 2);
  CHECK(gamma(0, 0) == 0.5);
  CHECK(gamma(0, 1) == 0.5);
  // Interior blocks are the full 1x1 system [2], so U holds its inverse and
  // the exterior pass-through S is empty of mass.
  CHECK(U(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(U(1, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(max_abs(S) == 0.0);

  const Matrix y0 = net.y;
  const Matrix pred = gamma * (S * y0 + U * net.q);
  run_round(net);
  CHECK(max_abs(net.y - pred) <= 1e-12);
}

TEST_CASE("message passing equals the averaged stacked iteration") {
  const VerifiedInstance inst = sample_verified_problem(banded_config(), 5);
  for (int omega = 0; omega <= 2; ++omega) {
    Network net = setup_network(inst.problem, inst.solution, omega, 11);
    const Matrix gamma = aggregation_matrix(net);
    const Matrix S = stacked_iteration_matrix(net);
    const Matrix U = stacked_input_matrix(net);
    CAPTURE(omega);

    // Row-stochastic averaging: rows sum to one, and with all entries
    // nonnegative that sum is also the operator inf-norm.
    const Vector row_sums = gamma.rowwise().sum();
    CHECK(max_abs(row_sums - Vector::Ones(gamma.rows())) <= 1e-12);
    CHECK(gamma.minCoeff() >= 0.0);
    CHECK(std::abs(gamma.cwiseAbs().rowwise().sum().maxCoeff() - 1.0) <= 1e-12);

    for (int r = 0; r < 3; ++r) {
      const Matrix pred = gamma * (S * net.y + U * net.q);
      run_round(net);
      CAPTURE(r);
      CHECK(max_abs(net.y - pred) <= 1e-12);
    }
  }
}

TEST_CASE("the central solution is a fixed point of the iteration") {
  const VerifiedInstance inst = sample_verified_problem(banded_config(), 5);
  Network net = setup_network(inst.problem, inst.solution, 1, 11);
  const Matrix ystar = central_reference(net);
  set_estimate(net, ystar);
  run_round(net, &ystar);
  CHECK(net.log[0].step_delta <= 1e-10);
  CHECK(max_abs(net.y - ystar) <= 1e-10);
}

TEST_CASE("runs are deterministic apart from wall times") {
  const VerifiedInstance inst = sample_verified_problem(banded_config(), 9);
  Network a = setup_network(inst.problem, inst.solution, 1, 42);
  Network b = setup_network(inst.problem, inst.solution, 1, 42);
  CHECK(max_abs(a.y - b.y) == 0.0);

  const Matrix ystar = central_reference(a);
  for (int r = 0; r < 3; ++r) {
    run_round(a, &ystar);
    run_round(b, &ystar);
  }
  CHECK(max_abs(a.y - b.y) == 0.0);
  for (size_t r = 0; r < 3; ++r) {
    CHECK(a.log[r].round == b.log[r].round);
    CHECK(a.log[r].step_delta == b.log[r].step_delta);
    CHECK(a.log[r].error == b.log[r].error);
    CHECK(a.log[r].aggregation_spread == b.log[r].aggregation_spread);
    CHECK(a.log[r].messages == b.log[r].messages);
    CHECK(a.log[r].scalars == b.log[r].scalars);
  }

  // A different start seed moves the initial estimate.
  Network c = setup_network(inst.problem, inst.solution, 1, 43);
  CHECK(max_abs(a.y - c.y) > 0.0);
}

TEST_CASE("run stops on the step tolerance and reports rounds") {
  const Problem p = consensus_problem();
  const Solution sol = solve(p);
  REQUIRE(sol.converged);

  Network idle = setup_network(p, sol, 0, 1);
  const Matrix y0 = idle.y;
  const RunResult none = run(idle, 0, 1e-12);
  CHECK(none.rounds == 0);
  CHECK_FALSE(none.converged);
  CHECK(idle.log.empty());
  CHECK(max_abs(none.y - y0) == 0.0);

  // Round one jumps to the exact answer, round two certifies a zero step.
  Network net = setup_network(p, sol, 0, 1);
  const RunResult res = run(net, 50, 1e-12);
  CHECK(res.converged);
  CHECK(res.rounds == 2);
  CHECK(max_abs(res.y - central_reference(net)) <= 1e-12);
}

TEST_CASE("errors contract at least as fast as the rate bound") {
  int qualified = 0;
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const Problem p = generate_chain(12, 2, 0.05 + 0.04 * static_cast<double>(seed), seed);
    const Solution sol = solve(p);
    REQUIRE(sol.converged);
    Network net = setup_network(p, sol, 2, seed);
    const RateBound rb = rate_bound(net);
    if (!(rb.alpha > 0.0 && rb.alpha < 1.0)) continue;
    ++qualified;

    const Matrix ystar = central_reference(net);
    const double err0 = max_abs(net.y - ystar);
    REQUIRE(err0 > 0.0);
    double envelope = err0;
    for (int r = 0; r < 8; ++r) {
      run_round(net, &ystar);
      envelope *= rb.alpha;
      CAPTURE(seed);
      CAPTURE(r);
      // Stop comparing once the envelope sinks into roundoff.
      if (envelope < 1e-12) break;
      CHECK(net.log.back().error <= envelope * (1.0 + 1e-10));
    }
  }
  // The sweep must actually exercise contractive networks.
  CHECK(qualified >= 2);
}

TEST_CASE("a radius covering the whole graph converges in one round") {
  RandomConfig cfg = banded_config();
  cfg.num_subproblems = 6;
  const VerifiedInstance inst = sample_verified_problem(cfg, 21);
  Network net = setup_network(inst.problem, inst.solution, 10, 5);
  for (const auto& node : net.nodes) CHECK(node.proj.exterior.empty());
  CHECK(rate_bound(net).alpha == 0.0);

  const Matrix ystar = central_reference(net);
  run_round(net, &ystar);
  CHECK(net.log[0].error <= 1e-10);
  CHECK(net.log[0].aggregation_spread <= 1e-9);
}

TEST_CASE("the aggressive exponent rule never loosens the bound") {
  const VerifiedInstance inst = sample_verified_problem(banded_config(), 5);
  for (int omega = 0; omega <= 3; ++omega) {
    Network net = setup_network(inst.problem, inst.solution, omega, 2);
    const RateBound cons = rate_bound(net, RateExponent::Conservative);
    const RateBound aggr = rate_bound(net, RateExponent::Aggressive);
    CAPTURE(omega);
    CHECK(aggr.alpha <= cons.alpha * (1.0 + 1e-15));
    for (size_t k = 0; k < cons.node_terms.size(); ++k)
      CHECK(aggr.node_terms[k] <= cons.node_terms[k] * (1.0 + 1e-15));
  }
}

TEST_CASE("message accounting matches the protocol arithmetic") {
  const Problem p = consensus_problem();
  const Solution sol = solve(p);
  REQUIRE(sol.converged);
  Network net = setup_network(p, sol, 0, 1);

  // Two nodes, one shared row, three parameters: each node receives the two
  // setup payloads of its radius-0 sources (1x1 block plus a 1x3 stripe).
  const MessageStats ms = message_accounting(net);
  CHECK(ms.setup_messages == 4);
  CHECK(ms.setup_scalars == 16);
  CHECK(ms.round_messages == 4);
  CHECK(ms.round_scalars == 12);

  run_round(net);
  CHECK(net.log[0].messages == ms.round_messages);
  CHECK(net.log[0].scalars == ms.round_scalars);

  // The per-round log agrees with the accounting on a nontrivial graph too.
  const VerifiedInstance inst = sample_verified_problem(banded_config(), 13);
  Network wide = setup_network(inst.problem, inst.solution, 1, 3);
  const MessageStats wms = message_accounting(wide);
  run_round(wide);
  CHECK(wide.log[0].messages == wms.round_messages);
  CHECK(wide.log[0].scalars == wms.round_scalars);
  CHECK(wms.setup_messages > 0);
  CHECK(wms.setup_scalars > 0);
}

TEST_CASE("a singular interior block is rejected by name") {
  // Both blocks are pinned by local equalities, so the primal response to the
  // shared row vanishes and the projected 1x1 system is exactly zero.
  Problem p;
  p.subproblems.resize(2);
  for (auto& s : p.subproblems) {
    s.P = Matrix::Identity(1, 1);
    s.c = Vector::Zero(1);
    s.A = Matrix(0, 1);
    s.b = Vector(0);
    s.E = Matrix::Ones(1, 1);
    s.e = Vector::Zero(1);
  }
  p.coupling.H = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  p.coupling.d = Vector::Zero(1);
  p.params.local = {ParameterSelector{{0}, {}, {}}, ParameterSelector{{0}, {}, {}}};
  p.validate();

  Solution sol;
  sol.x = Vector::Zero(2);
  sol.lambda_local = {Vector(0), Vector(0)};
  sol.mu_local = {Vector::Zero(1), Vector::Zero(1)};
  sol.nu = Vector::Zero(1);
  sol.lambda = Vector(0);
  sol.converged = true;
  sol.kkt_residual = 0.0;

  try {
    setup_network(p, sol, 0, 1);
    FAIL("expected SingularProjectedSystem");
  } catch (const SingularProjectedSystem& e) {
    CHECK(e.node == 0);
  }
}
