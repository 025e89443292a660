#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "ccqp/experiments.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"
#include "ccqp/types.hpp"

using namespace ccqp;
using nlohmann::json;

namespace {

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> lines;
  std::istringstream in(s);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

std::vector<double> column(const Table& t, const std::string& name) {
  size_t idx = t.columns.size();
  for (size_t i = 0; i < t.columns.size(); ++i)
    if (t.columns[i] == name) idx = i;
  REQUIRE(idx < t.columns.size());
  std::vector<double> out;
  for (const auto& row : t.rows) out.push_back(row[idx]);
  return out;
}

}  // namespace

TEST_CASE("experiment configs survive a JSON round trip") {
  ExperimentConfig cfg;
  cfg.kind = "chain-decay";
  cfg.subproblem_counts = {3, 9};
  cfg.rhos = {0.11, 0.3};
  cfg.omegas = {1, 4};
  cfg.stiffness = {0.25, 1.0};
  cfg.n = 5;
  cfg.num_ineq = 2;
  cfg.num_eq = 1;
  cfg.coupling_eq = 4;
  cfg.chain_length = 17;
  cfg.bench_params = 6;
  cfg.repetitions = 3;
  cfg.rounds = 7;
  cfg.num_seeds = 2;
  cfg.seed = 99;
  cfg.threads = 4;

  const ExperimentConfig back = experiment_config_from_json(to_json(cfg));
  CHECK(back.kind == cfg.kind);
  CHECK(back.subproblem_counts == cfg.subproblem_counts);
  CHECK(back.rhos == cfg.rhos);
  CHECK(back.omegas == cfg.omegas);
  CHECK(back.stiffness == cfg.stiffness);
  CHECK(back.n == cfg.n);
  CHECK(back.num_ineq == cfg.num_ineq);
  CHECK(back.num_eq == cfg.num_eq);
  CHECK(back.coupling_eq == cfg.coupling_eq);
  CHECK(back.chain_length == cfg.chain_length);
  CHECK(back.bench_params == cfg.bench_params);
  CHECK(back.repetitions == cfg.repetitions);
  CHECK(back.rounds == cfg.rounds);
  CHECK(back.num_seeds == cfg.num_seeds);
  CHECK(back.seed == cfg.seed);
  CHECK(back.threads == cfg.threads);

  // Absent keys fall back to defaults; mistyped or invalid ones are rejected.
  const ExperimentConfig defaults = experiment_config_from_json(json::object());
  CHECK(defaults.kind == "scaling-N");
  CHECK(defaults.n == 10);
  CHECK_THROWS_AS(experiment_config_from_json(json{{"n", "ten"}}), ValidationError);
  CHECK_THROWS_AS(experiment_config_from_json(json{{"stiffness", {2.0}}, {"kind", "chain-decay"}}),
                  ValidationError);
}

TEST_CASE("config validation rejects out-of-range knobs") {
  const ExperimentConfig base;
  base.validate();

  auto broken = [&](auto&& mutate) {
    ExperimentConfig c = base;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](auto& c) { c.kind = "unknown"; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.n = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.num_ineq = -1; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.coupling_eq = -1; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.chain_length = 1; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.bench_params = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.repetitions = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.rounds = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.num_seeds = 0; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.threads = -1; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.subproblem_counts = {0}; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.rhos = {-0.1}; c.kind = "scaling-rho"; }).validate(),
                  ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.omegas = {-1}; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.stiffness = {0.0}; }).validate(), ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) { c.stiffness = {1.5}; }).validate(), ValidationError);

  // Each kind insists on its own sweep.
  CHECK_THROWS_AS(broken([](auto& c) { c.subproblem_counts.clear(); }).validate(),
                  ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) {
                    c.kind = "scaling-rho";
                    c.rhos.clear();
                  }).validate(),
                  ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) {
                    c.kind = "convergence";
                    c.omegas.clear();
                  }).validate(),
                  ValidationError);
  CHECK_THROWS_AS(broken([](auto& c) {
                    c.kind = "chain-decay";
                    c.stiffness.clear();
                  }).validate(),
                  ValidationError);
}

TEST_CASE("log-linear fits recover exact exponential data") {
  const std::vector<double> x = {0.0, 1.0, 2.0, 3.0};
  std::vector<double> y;
  for (double xi : x) y.push_back(std::exp(-2.0 * xi));
  CHECK(log_linear_slope(x, y) == doctest::Approx(-2.0).epsilon(1e-12));

  // Points at or below the floor drop out of the fit.
  const std::vector<double> tail = {1.0, 0.1, 1e-20, 1e-30};
  CHECK(log_linear_slope(x, tail) == doctest::Approx(std::log(0.1)).epsilon(1e-12));

  const std::vector<double> starved = {1.0, 1e-20, 1e-20, 1e-20};
  CHECK(std::isnan(log_linear_slope(x, starved)));
  CHECK(std::isnan(log_linear_slope({1.0, 1.0}, {1.0, 2.0})));

  CHECK(fitted_geometric_rate({1.0, 0.5, 0.25, 0.125}) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("CSV output carries provenance, header, and full-precision rows") {
  Table t;
  t.columns = {"a", "b"};
  t.rows = {{0.5, 1.0 / 3.0}, {2.0, -4.0}};
  ExperimentConfig cfg;
  cfg.kind = "convergence";

  std::ostringstream out;
  write_csv(t, cfg, out);
  const auto lines = split_lines(out.str());
  REQUIRE(lines.size() == 4);
  CHECK(lines[0].rfind("# config ", 0) == 0);
  CHECK(lines[0].find("\"kind\":\"convergence\"") != std::string::npos);
  CHECK(lines[1] == "a,b");
  CHECK(lines[2].rfind("0.5,", 0) == 0);
  // Full double precision: 1/3 needs all 17 digits to round-trip.
  CHECK(lines[2].find("0.33333333333333331") != std::string::npos);
  CHECK(lines[3] == "2,-4");

  std::ostringstream again;
  write_csv(t, cfg, again);
  CHECK(again.str() == out.str());
}

TEST_CASE("jacobian timing reports positive wall times") {
  RandomConfig rc;
  rc.num_subproblems = 3;
  rc.n = 3;
  rc.coupling_eq = 2;
  const VerifiedInstance inst = sample_verified_problem(rc, 5);

  const JacobianTiming serial = time_jacobians(inst.problem, inst.solution, 2, 0);
  CHECK(serial.central_seconds > 0.0);
  CHECK(serial.decentralized_seconds > 0.0);
  CHECK(serial.parallel_seconds == 0.0);

  const JacobianTiming threaded = time_jacobians(inst.problem, inst.solution, 2, 2);
  CHECK(threaded.parallel_seconds > 0.0);
}

TEST_CASE("scaling sweep over subproblem count produces one row per size") {
  ExperimentConfig cfg;
  cfg.kind = "scaling-N";
  cfg.subproblem_counts = {2, 3};
  cfg.n = 4;
  cfg.repetitions = 1;
  cfg.bench_params = 2;
  cfg.threads = 2;
  cfg.validate();

  const Table t = experiment_scaling_N(cfg);
  REQUIRE(t.columns.size() == 10);
  REQUIRE(t.rows.size() == 2);
  CHECK(column(t, "N") == std::vector<double>{2.0, 3.0});
  for (double s : column(t, "speedup")) CHECK(s > 0.0);
  for (double s : column(t, "t_parallel_s")) CHECK(s > 0.0);
  for (double e : column(t, "eta_model")) {
    CHECK(e > 0.0);
    CHECK(e <= 1.0);
  }
}

TEST_CASE("scaling sweep over coupling ratio normalizes to its first point") {
  ExperimentConfig cfg;
  cfg.kind = "scaling-rho";
  cfg.subproblem_counts = {4};
  cfg.rhos = {0.3, 0.5};
  cfg.n = 3;
  cfg.repetitions = 1;
  cfg.bench_params = 2;
  cfg.validate();

  const Table t = experiment_scaling_rho(cfg);
  REQUIRE(t.columns.size() == 11);
  REQUIRE(t.rows.size() == 2);
  CHECK(column(t, "speedup_normalized")[0] == 1.0);
  CHECK(column(t, "model_speedup_normalized")[0] == 1.0);
  const auto rho = column(t, "rho");
  CHECK(rho[1] > rho[0]);
  for (double v : column(t, "lambda")) CHECK(v >= 1.0);
}

TEST_CASE("convergence traces log every round for every radius") {
  ExperimentConfig cfg;
  cfg.kind = "convergence";
  cfg.subproblem_counts = {6};
  cfg.n = 3;
  cfg.omegas = {0, 1};
  cfg.rounds = 3;
  cfg.num_seeds = 1;
  cfg.bench_params = 3;
  cfg.validate();

  const Table t = experiment_convergence(cfg);
  REQUIRE(t.columns == std::vector<std::string>{"seed", "omega", "round", "error", "step_delta",
                                                "alpha", "node_error_median", "node_error_p90"});
  REQUIRE(t.rows.size() == 8);

  const auto omega = column(t, "omega");
  const auto round = column(t, "round");
  const auto error = column(t, "error");
  const auto step = column(t, "step_delta");
  const auto alpha = column(t, "alpha");
  for (size_t block = 0; block < 2; ++block) {
    const size_t base = block * 4;
    CHECK(omega[base] == static_cast<double>(block));
    for (size_t r = 0; r < 4; ++r) {
      CHECK(round[base + r] == static_cast<double>(r));
      CHECK(error[base + r] >= 0.0);
      CHECK(std::isfinite(error[base + r]));
      CHECK(alpha[base + r] == alpha[base]);
    }
    // The initial estimate is random, so it starts away from the reference
    // and has no predecessor step.
    CHECK(error[base] > 0.0);
    CHECK(std::isnan(step[base]));
    for (size_t r = 1; r < 4; ++r) CHECK(step[base + r] >= 0.0);
  }
}

TEST_CASE("chain decay error medians fall as the radius grows") {
  ExperimentConfig cfg;
  cfg.kind = "chain-decay";
  cfg.chain_length = 10;
  cfg.stiffness = {0.5};
  cfg.omegas = {0, 1, 2};
  cfg.validate();

  const Table t = experiment_chain_decay(cfg);
  REQUIRE(t.columns == std::vector<std::string>{"stiffness", "omega", "error_median", "error_p10",
                                                "error_p90", "alpha"});
  REQUIRE(t.rows.size() == 3);
  const auto med = column(t, "error_median");
  const auto p10 = column(t, "error_p10");
  const auto p90 = column(t, "error_p90");
  for (size_t i = 0; i < 3; ++i) {
    CHECK(med[i] > 0.0);
    CHECK(p10[i] <= med[i]);
    CHECK(med[i] <= p90[i]);
  }
  CHECK(med[2] < med[0]);
}
