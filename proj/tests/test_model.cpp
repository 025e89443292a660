#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <set>

#include "ccqp/model.hpp"
#include "ccqp/types.hpp"

using namespace ccqp;

namespace {

// Two scalar subproblems tied by x_1 + x_2 = d; parameters are both cost
// gradients plus the offset d.
Problem consensus_problem(double c1 = -1.0, double c2 = -3.0, double d = 2.0) {
  Problem p;
  p.subproblems.resize(2);
  for (auto& s : p.subproblems) {
    s.P = Matrix::Identity(1, 1);
    s.A = Matrix(0, 1);
    s.b = Vector(0);
    s.E = Matrix(0, 1);
    s.e = Vector(0);
  }
  p.subproblems[0].c = Vector::Constant(1, c1);
  p.subproblems[1].c = Vector::Constant(1, c2);
  p.coupling.H = {Matrix::Ones(1, 1), Matrix::Ones(1, 1)};
  p.coupling.d = Vector::Constant(1, d);
  p.params.local = {ParameterSelector{{0}, {}, {}}, ParameterSelector{{0}, {}, {}}};
  p.params.d = {0};
  return p;
}

}  // namespace

TEST_CASE("hand-built consensus problem validates and indexes correctly") {
  const Problem p = consensus_problem();
  CHECK_NOTHROW(p.validate());
  CHECK(p.num_subproblems() == 2);
  CHECK(p.n_total() == 2);
  CHECK(p.x_offset(0) == 0);
  CHECK(p.x_offset(1) == 1);
  CHECK(p.coupling.total() == 1);
  CHECK(p.params.total() == 3);
  CHECK(p.params.local_offset(1) == 1);
  CHECK(p.params.shared_offset() == 2);
  CHECK(p.params.shared_count() == 1);
}

TEST_CASE("validate rejects malformed problems") {
  SUBCASE("P shape mismatch") {
    Problem p = consensus_problem();
    p.subproblems[0].P = Matrix::Identity(2, 2);
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("P symmetry is actually checked, not just shape") {
    Problem p = generate_random(RandomConfig{}, 3);
    p.subproblems[0].P(0, 1) += 0.5;
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("A rows disagree with b length") {
    Problem p = consensus_problem();
    p.subproblems[0].A = Matrix::Ones(1, 1);  // b stays empty
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("coupling row touching a single subproblem") {
    Problem p = consensus_problem();
    p.coupling.H[1].setZero();
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("unsorted parameter selector") {
    Problem p = generate_random(RandomConfig{.n = 3}, 7);
    p.params.local[0].c = {2, 0, 1};
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("duplicate parameter selector entry") {
    Problem p = generate_random(RandomConfig{.n = 3}, 7);
    p.params.local[0].c = {1, 1};
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
  SUBCASE("selector index out of range") {
    Problem p = consensus_problem();
    p.params.d = {1};
    CHECK_THROWS_AS(p.validate(), ValidationError);
  }
}

TEST_CASE("generate_random produces validated SPD instances") {
  RandomConfig cfg;
  cfg.num_subproblems = 5;
  cfg.n = 3;
  cfg.num_ineq = 2;
  cfg.num_eq = 1;
  cfg.coupling_eq = 3;
  cfg.coupling_ineq = 2;

  for (std::uint64_t seed : {1ull, 2ull, 3ull, 17ull, 400ull}) {
    const Problem p = generate_random(cfg, seed);
    CHECK_NOTHROW(p.validate());
    CHECK(p.num_subproblems() == 5);
    CHECK(p.coupling.num_eq() == 3);
    CHECK(p.coupling.num_ineq() == 2);
    for (const auto& s : p.subproblems) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(s.P);
      CHECK(es.eigenvalues().minCoeff() >= cfg.curvature_floor * 0.99);
    }
    // The construction point has positive slack on every inequality, so the
    // instance is strictly feasible.
    for (const auto& s : p.subproblems) CHECK(s.num_ineq() == 2);
  }
}

TEST_CASE("generate_random is deterministic in the seed") {
  RandomConfig cfg;
  cfg.num_subproblems = 4;
  cfg.n = 3;
  cfg.coupling_eq = 2;
  const Problem a = generate_random(cfg, 42);
  const Problem b = generate_random(cfg, 42);
  const Problem c = generate_random(cfg, 43);
  CHECK((a.subproblems[2].P - b.subproblems[2].P).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.coupling.H[1] - b.coupling.H[1]).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.subproblems[0].c - c.subproblems[0].c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("generate_random rejects degenerate shapes") {
  RandomConfig cfg;
  cfg.num_subproblems = 1;
  cfg.coupling_eq = 1;
  CHECK_THROWS_AS(generate_random(cfg, 1), ValidationError);  // coupling needs two blocks

  cfg = RandomConfig{};
  cfg.num_eq = 3;
  cfg.n = 2;
  CHECK_THROWS_AS(generate_random(cfg, 1), ValidationError);  // more equalities than variables

  cfg = RandomConfig{};
  cfg.num_subproblems = 2;
  cfg.n = 1;
  cfg.coupling_eq = 2;  // lh + N*k == N*n, equality manifold would be a point
  CHECK_THROWS_AS(generate_random(cfg, 1), ValidationError);
}

TEST_CASE("coupling structures have the advertised sparsity") {
  SUBCASE("chain rows tie adjacent subproblems") {
    RandomConfig cfg;
    cfg.num_subproblems = 6;
    cfg.n = 2;
    cfg.coupling_eq = 5;
    cfg.structure = CouplingStructure::Chain;
    const Problem p = generate_random(cfg, 9);
    for (int r = 0; r < 5; ++r) {
      std::set<int> touched;
      for (int i = 0; i < 6; ++i)
        if (p.coupling.H[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14)
          touched.insert(i);
      const int j = r % 5;
      CHECK(touched == std::set<int>{j, j + 1});
    }
  }
  SUBCASE("ring with one row per subproblem puts each in exactly two rows") {
    RandomConfig cfg;
    cfg.num_subproblems = 7;
    cfg.n = 2;
    cfg.coupling_eq = 7;
    cfg.structure = CouplingStructure::Ring;
    const Problem p = generate_random(cfg, 11);
    for (int i = 0; i < 7; ++i)
      CHECK(nonzero_rows(p.coupling.H[static_cast<size_t>(i)]).size() == 2);
  }
  SUBCASE("banded window respects the half-width") {
    RandomConfig cfg;
    cfg.num_subproblems = 10;
    cfg.n = 2;
    cfg.coupling_eq = 8;
    cfg.structure = CouplingStructure::Banded;
    cfg.band_width = 1;
    const Problem p = generate_random(cfg, 13);
    for (int r = 0; r < 8; ++r) {
      std::vector<int> touched;
      for (int i = 0; i < 10; ++i)
        if (p.coupling.H[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14)
          touched.push_back(i);
      CHECK(touched.size() >= 2);
      CHECK(touched.back() - touched.front() <= 2);  // window of half-width 1
    }
  }
}

TEST_CASE("generate_chain builds a path of two-subproblem rows") {
  const Problem p = generate_chain(8, 2, 0.5, 21);
  CHECK_NOTHROW(p.validate());
  CHECK(p.num_subproblems() == 8);
  CHECK(p.coupling.num_eq() == 7);
  CHECK(p.coupling.num_ineq() == 0);
  for (int r = 0; r < 7; ++r) {
    std::set<int> touched;
    for (int i = 0; i < 8; ++i)
      if (p.coupling.H[static_cast<size_t>(i)].row(r).cwiseAbs().maxCoeff() > 1e-14)
        touched.insert(i);
    CHECK(touched == std::set<int>{r, r + 1});
  }
  // The inter-step coefficient sits on coordinate 0 of the earlier step.
  CHECK(p.coupling.H[0](0, 0) == doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(p.coupling.H[1](0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  CHECK_THROWS_AS(generate_chain(8, 2, 0.0, 21), ValidationError);
  CHECK_THROWS_AS(generate_chain(8, 2, 1.5, 21), ValidationError);
  CHECK_THROWS_AS(generate_chain(1, 2, 0.5, 21), ValidationError);
}

TEST_CASE("nonzero_rows applies the magnitude threshold") {
  Matrix B = Matrix::Zero(4, 2);
  B(1, 0) = 1e-16;  // below threshold, structurally zero
  B(2, 1) = 0.3;
  B(3, 0) = -2.0;
  CHECK(nonzero_rows(B) == std::vector<int>{2, 3});
  CHECK(nonzero_rows(B, 1e-17) == std::vector<int>{1, 2, 3});
  CHECK(nonzero_rows(Matrix(0, 3)).empty());
}

TEST_CASE("default_parameter_map exposes costs, bounds, and offsets") {
  RandomConfig cfg;
  cfg.num_subproblems = 3;
  cfg.n = 2;
  cfg.num_ineq = 1;
  cfg.coupling_eq = 2;
  cfg.coupling_ineq = 1;
  const Problem p = generate_random(cfg, 5);
  const ParameterMap& map = p.params;  // generator installs the default map
  CHECK(map.total() == 3 * (2 + 1) + 2 + 1);
  CHECK(map.local_count(0) == 3);
  CHECK(map.shared_count() == 3);
  CHECK(map.local[0].e.empty());  // local equality offsets are not parameters by default
}

TEST_CASE("theta_read and theta_write are inverse on the selected entries") {
  RandomConfig cfg;
  cfg.num_subproblems = 3;
  cfg.n = 2;
  cfg.num_ineq = 2;
  cfg.coupling_eq = 2;
  cfg.coupling_ineq = 1;
  Problem p = generate_random(cfg, 31);
  // Narrow the map to a strict subset so untouched entries are observable.
  p.params.local[0] = ParameterSelector{{1}, {0}, {}};
  p.params.local[1] = ParameterSelector{{}, {}, {}};
  p.params.local[2] = ParameterSelector{{0, 1}, {}, {}};
  p.params.d = {1};
  p.params.f = {};
  p.validate();

  const Vector theta = theta_read(p);
  CHECK(theta.size() == 5);
  CHECK(theta[0] == p.subproblems[0].c[1]);
  CHECK(theta[1] == p.subproblems[0].b[0]);
  CHECK(theta[4] == p.coupling.d[1]);

  const Problem same = theta_write(p, theta);
  CHECK((theta_read(same) - theta).cwiseAbs().maxCoeff() == 0.0);

  Vector moved = theta;
  moved[2] += 1.5;  // subproblem 2, c entry 0
  const Problem shifted = theta_write(p, moved);
  CHECK(shifted.subproblems[2].c[0] == p.subproblems[2].c[0] + 1.5);
  CHECK(shifted.subproblems[2].c[1] == p.subproblems[2].c[1]);
  CHECK(shifted.subproblems[1].c == p.subproblems[1].c);

  CHECK_THROWS_AS(theta_write(p, Vector::Zero(4)), ValidationError);
}
