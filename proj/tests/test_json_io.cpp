#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <string>

#include "ccqp/json_io.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

using namespace ccqp;
using nlohmann::json;

namespace {

double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Problem mixed_problem() {
  RandomConfig cfg;
  cfg.num_subproblems = 4;
  cfg.n = 3;
  cfg.num_ineq = 2;
  cfg.num_eq = 1;
  cfg.coupling_eq = 3;
  cfg.coupling_ineq = 2;
  Problem p = generate_random(cfg, 17);
  // Narrowed, uneven selectors exercise the map serialization; one block
  // contributes nothing.
  p.params.local = {ParameterSelector{{0, 2}, {1}, {}}, ParameterSelector{{}, {}, {0}},
                    ParameterSelector{{}, {}, {}}, ParameterSelector{{1}, {0, 1}, {}}};
  p.params.d = {0, 2};
  p.params.f = {1};
  p.validate();
  return p;
}

bool same_selectors(const ParameterMap& a, const ParameterMap& b) {
  if (a.local.size() != b.local.size() || a.d != b.d || a.f != b.f) return false;
  for (size_t i = 0; i < a.local.size(); ++i)
    if (a.local[i].c != b.local[i].c || a.local[i].b != b.local[i].b ||
        a.local[i].e != b.local[i].e)
      return false;
  return true;
}

}  // namespace

TEST_CASE("problems survive a JSON round trip bitwise") {
  const Problem p = mixed_problem();
  const Problem q = problem_from_json(to_json(p));

  REQUIRE(q.subproblems.size() == p.subproblems.size());
  for (size_t i = 0; i < p.subproblems.size(); ++i) {
    const auto& a = p.subproblems[i];
    const auto& b = q.subproblems[i];
    CHECK(max_abs(a.P - b.P) == 0.0);
    CHECK(max_abs(a.c - b.c) == 0.0);
    CHECK(max_abs(a.A - b.A) == 0.0);
    CHECK(max_abs(a.b - b.b) == 0.0);
    CHECK(max_abs(a.E - b.E) == 0.0);
    CHECK(max_abs(a.e - b.e) == 0.0);
    CHECK(max_abs(p.coupling.H[i] - q.coupling.H[i]) == 0.0);
    CHECK(max_abs(p.coupling.F[i] - q.coupling.F[i]) == 0.0);
  }
  CHECK(max_abs(p.coupling.d - q.coupling.d) == 0.0);
  CHECK(max_abs(p.coupling.f - q.coupling.f) == 0.0);
  CHECK(same_selectors(p.params, q.params));
  CHECK(q.meta.seed == p.meta.seed);
  CHECK(q.meta.generator == p.meta.generator);

  // Identical coefficients must produce identical solves.
  const Solution sa = solve(p);
  const Solution sb = solve(q);
  REQUIRE(sa.converged);
  CHECK(max_abs(sa.x - sb.x) == 0.0);
  CHECK(max_abs(sa.nu - sb.nu) == 0.0);
}

TEST_CASE("constraint-free blocks serialize as empty arrays and read back") {
  Problem p;
  p.subproblems.resize(2);
  for (auto& s : p.subproblems) {
    s.P = Matrix::Identity(2, 2);
    s.c = Vector::Zero(2);
    s.A = Matrix(0, 2);
    s.b = Vector(0);
    s.E = Matrix(0, 2);
    s.e = Vector(0);
  }
  p.coupling.H = {Matrix::Ones(1, 2), Matrix::Ones(1, 2)};
  p.coupling.d = Vector::Zero(1);
  p.params.local = {ParameterSelector{{0}, {}, {}}, ParameterSelector{{0}, {}, {}}};
  p.validate();

  const json j = to_json(p);
  CHECK(j.at("subproblems").at(0).at("A") == json::array());
  CHECK(j.at("subproblems").at(0).at("E") == json::array());
  CHECK(j.at("coupling").contains("H_blocks"));
  CHECK(j.at("coupling").contains("F_blocks"));
  // Absent inequality coupling keeps its no-blocks form through the trip.
  CHECK(j.at("coupling").at("F_blocks") == json::array());

  const Problem q = problem_from_json(j);
  CHECK(q.subproblems[0].A.rows() == 0);
  CHECK(q.subproblems[0].A.cols() == 2);
  CHECK(q.coupling.F.empty());
  CHECK(q.coupling.H.size() == 2);

  CHECK(matrix_from_json(json::array(), 4).rows() == 0);
  CHECK(matrix_from_json(json::array(), 4).cols() == 4);
}

TEST_CASE("a missing parameter map falls back to the default") {
  const Problem p = mixed_problem();
  json j = to_json(p);
  j.erase("params");
  const Problem q = problem_from_json(j);
  CHECK(same_selectors(q.params, default_parameter_map(q)));
  CHECK_FALSE(same_selectors(q.params, p.params));
}

TEST_CASE("solutions survive a JSON round trip exactly") {
  const Problem p = mixed_problem();
  const Solution s = solve(p);
  REQUIRE(s.converged);
  const Solution t = solution_from_json(to_json(s));
  CHECK(max_abs(s.x - t.x) == 0.0);
  CHECK(max_abs(s.nu - t.nu) == 0.0);
  CHECK(max_abs(s.lambda - t.lambda) == 0.0);
  REQUIRE(t.lambda_local.size() == s.lambda_local.size());
  REQUIRE(t.mu_local.size() == s.mu_local.size());
  for (size_t i = 0; i < s.lambda_local.size(); ++i) {
    CHECK(max_abs(s.lambda_local[i] - t.lambda_local[i]) == 0.0);
    CHECK(max_abs(s.mu_local[i] - t.mu_local[i]) == 0.0);
  }
  CHECK(t.iterations == s.iterations);
  CHECK(t.converged == s.converged);
  CHECK(t.kkt_residual == s.kkt_residual);
}

TEST_CASE("malformed documents raise a single failure type") {
  CHECK_THROWS_AS(problem_from_json(json::object()), ValidationError);

  json no_subs = to_json(mixed_problem());
  no_subs.erase("subproblems");
  CHECK_THROWS_AS(problem_from_json(no_subs), ValidationError);

  json ragged = to_json(mixed_problem());
  ragged["subproblems"][0]["P"][1] = json::array({1.0});
  CHECK_THROWS_AS(problem_from_json(ragged), ValidationError);

  json bad_type = to_json(mixed_problem());
  bad_type["subproblems"][0]["c"] = "oops";
  CHECK_THROWS_AS(problem_from_json(bad_type), ValidationError);

  CHECK_THROWS_AS(solution_from_json(json::object()), ValidationError);
  CHECK_THROWS_AS(matrix_from_json(json{{"a", 1}}, 0), ValidationError);
  CHECK_THROWS_AS(vector_from_json(json::object()), ValidationError);
}

TEST_CASE("file helpers round trip through disk and reject bad paths") {
  const std::string dir = "/tmp/ccqp_json_test";
  std::filesystem::create_directories(dir);
  std::filesystem::remove(dir + "/problem.json");

  const Problem p = mixed_problem();
  save_problem(p, dir + "/problem.json");
  const Problem q = load_problem(dir + "/problem.json");
  CHECK(max_abs(p.subproblems[2].P - q.subproblems[2].P) == 0.0);
  CHECK(max_abs(p.coupling.d - q.coupling.d) == 0.0);

  CHECK_THROWS_AS(load_json(dir + "/does_not_exist.json"), ValidationError);
  CHECK_THROWS_AS(save_json(json::object(), dir + "/no_such_dir/x.json"), ValidationError);

  std::ofstream(dir + "/garbage.json") << "{not json";
  CHECK_THROWS_AS(load_json(dir + "/garbage.json"), ValidationError);
}

TEST_CASE("assumption reports export their verdicts") {
  RandomConfig cfg;
  cfg.num_subproblems = 3;
  cfg.n = 2;
  cfg.num_ineq = 1;
  cfg.coupling_eq = 2;
  const VerifiedInstance inst = sample_verified_problem(cfg, 3);
  const json j = to_json(inst.report);

  CHECK(j.at("all_ok").get<bool>());
  CHECK(j.at("licq").at("ok").get<bool>());
  CHECK(j.at("licq").at("min_singular_value").get<double>() > 0.0);
  CHECK(j.at("strict_complementarity").at("ok").get<bool>());
  CHECK(j.at("second_order").at("global_ok").get<bool>());
  CHECK(j.at("second_order").at("local_ok").size() == 3);
  CHECK(j.at("active").at("local").size() == 3);
  CHECK(j.at("active").at("coupling").size() == 0);
}
