// Command-line front end: instance generation, solving, differentiation,
// graph inspection, a distributed-round driver, and the benchmark sweeps.
// Exit codes: 0 success, 2 validation or assumption failure, 3 numerical
// failure.
#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ccqp/coupling.hpp"
#include "ccqp/distnet.hpp"
#include "ccqp/experiments.hpp"
#include "ccqp/graph.hpp"
#include "ccqp/json_io.hpp"
#include "ccqp/local_diff.hpp"
#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"

namespace {

using nlohmann::json;

void emit_json(const json& j, const std::string& path) {
  if (path.empty()) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  ccqp::save_json(j, path);
}

void emit_table(const ccqp::Table& t, const ccqp::ExperimentConfig& cfg,
                const std::string& path) {
  if (path.empty()) {
    ccqp::write_csv(t, cfg, std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw ccqp::ValidationError("cannot open output file: " + path);
  ccqp::write_csv(t, cfg, out);
}

// Accepts "1,2,4" and sweep syntax like "N=1,2,4".
std::vector<int> parse_ints(std::string s) {
  if (const auto pos = s.find('='); pos != std::string::npos) s = s.substr(pos + 1);
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ccqp::ValidationError("cannot parse integer list entry: " + tok);
    }
  }
  if (out.empty()) throw ccqp::ValidationError("empty integer list: " + s);
  return out;
}

std::vector<double> parse_doubles(std::string s) {
  if (const auto pos = s.find('='); pos != std::string::npos) s = s.substr(pos + 1);
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ccqp::ValidationError("cannot parse number list entry: " + tok);
    }
  }
  if (out.empty()) throw ccqp::ValidationError("empty number list: " + s);
  return out;
}

ccqp::CouplingStructure parse_structure(const std::string& s) {
  if (s == "dense") return ccqp::CouplingStructure::Dense;
  if (s == "chain") return ccqp::CouplingStructure::Chain;
  if (s == "banded") return ccqp::CouplingStructure::Banded;
  if (s == "ring") return ccqp::CouplingStructure::Ring;
  throw ccqp::ValidationError("unknown coupling structure: " + s);
}

int effective_threads(int threads, bool parallel_local) {
  if (threads > 0) return threads;
  if (!parallel_local) return 0;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 1 ? static_cast<int>(hw) : 2;
}

ccqp::Solution load_solution(const std::string& path) {
  return ccqp::solution_from_json(ccqp::load_json(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis for constraint-coupled quadratic programs"};
  app.require_subcommand(1);
  app.fallthrough();

  std::uint64_t seed = 1;
  double tol = 1e-10;
  int threads = 0;
  std::string out;
  app.add_option("--seed", seed, "Base random seed")->capture_default_str();
  app.add_option("--tol", tol, "Solver convergence tolerance")->capture_default_str();
  app.add_option("--threads", threads, "Worker threads for parallel local stages (0 = off)")
      ->capture_default_str();
  app.add_option("-o,--output", out, "Output file (default: stdout)");

  // gen
  auto* gen = app.add_subcommand("gen", "Generate a problem instance as JSON");
  gen->fallthrough();
  std::string gen_kind = "random";
  int gen_N = 2, gen_n = 4, gen_l = 0, gen_k = 0, gen_ceq = 1, gen_cineq = 0;
  int gen_band = 1, gen_length = 10;
  double gen_scale = 1.0, gen_buffer = 0.3;
  std::string gen_structure = "dense";
  gen->add_option("--kind", gen_kind, "Instance family")
      ->check(CLI::IsMember({"random", "chain"}))
      ->capture_default_str();
  gen->add_option("--subproblems,-N", gen_N, "Number of subproblems")->capture_default_str();
  gen->add_option("--n", gen_n, "Variables per subproblem")->capture_default_str();
  gen->add_option("--l", gen_l, "Local inequality rows per subproblem")->capture_default_str();
  gen->add_option("--k", gen_k, "Local equality rows per subproblem")->capture_default_str();
  gen->add_option("--coupling-eq", gen_ceq, "Coupling equality rows")->capture_default_str();
  gen->add_option("--coupling-ineq", gen_cineq, "Coupling inequality rows")
      ->capture_default_str();
  gen->add_option("--structure", gen_structure, "Coupling sparsity pattern")
      ->check(CLI::IsMember({"dense", "chain", "banded", "ring"}))
      ->capture_default_str();
  gen->add_option("--band-width", gen_band, "Half-width for banded coupling")
      ->capture_default_str();
  gen->add_option("--coupling-scale", gen_scale, "Magnitude of coupling rows")
      ->capture_default_str();
  gen->add_option("--length", gen_length, "Horizon length (chain kind)")->capture_default_str();
  gen->add_option("--buffer", gen_buffer, "Carry-over coefficient in (0,1) (chain kind)")
      ->capture_default_str();

  // solve
  auto* solve_cmd = app.add_subcommand("solve", "Solve an instance and verify assumptions");
  solve_cmd->fallthrough();
  std::string solve_problem;
  solve_cmd->add_option("problem", solve_problem, "Problem JSON path")->required();

  // diff
  auto* diff_cmd = app.add_subcommand("diff", "Differentiate the optimal solution");
  diff_cmd->fallthrough();
  std::string diff_problem, diff_solution, diff_mode = "decentralized";
  diff_cmd->add_option("problem", diff_problem, "Problem JSON path")->required();
  diff_cmd->add_option("solution", diff_solution, "Solution JSON path")->required();
  diff_cmd->add_option("--mode", diff_mode, "Jacobian pipeline")
      ->check(CLI::IsMember({"central", "decentralized"}))
      ->capture_default_str();

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "Inspect the bipartite constraint graph");
  graph_cmd->fallthrough();
  std::string graph_problem;
  int graph_omega = 1;
  graph_cmd->add_option("problem", graph_problem, "Problem JSON path")->required();
  graph_cmd->add_option("--omega", graph_omega, "Neighborhood radius")->capture_default_str();

  // dist-diff
  auto* dd = app.add_subcommand("dist-diff", "Distributed coupling solve with round logging");
  dd->fallthrough();
  std::string dd_problem, dd_solution;
  int dd_omega = 1, dd_rounds = 50;
  dd->add_option("problem", dd_problem, "Problem JSON path")->required();
  dd->add_option("solution", dd_solution, "Solution JSON path")->required();
  dd->add_option("--omega", dd_omega, "Neighborhood radius")->capture_default_str();
  dd->add_option("--rounds", dd_rounds, "Number of synchronous rounds")->capture_default_str();

  // bench commands share these
  bool parallel_local = false;
  std::string config_path;
  int reps = 20, bench_params = 4;

  auto* bs = app.add_subcommand("bench-scaling", "Speedup sweep over subproblem count");
  bs->fallthrough();
  std::string bs_sweep = "1,2,4,8,16,32,64,128";
  int bs_lambda = 2, bs_n = 10, bs_l = 0, bs_k = 0;
  bs->add_option("--sweep", bs_sweep, "Subproblem counts, e.g. N=1,2,4,8")
      ->capture_default_str();
  bs->add_option("--fixed-lambda", bs_lambda, "Coupling rows held fixed")->capture_default_str();
  bs->add_option("--n", bs_n, "Variables per subproblem")->capture_default_str();
  bs->add_option("--l", bs_l, "Local inequality rows")->capture_default_str();
  bs->add_option("--k", bs_k, "Local equality rows")->capture_default_str();
  bs->add_option("--reps", reps, "Timing repetitions (min is reported)")->capture_default_str();
  bs->add_option("--params", bench_params, "Differentiated parameter count")
      ->capture_default_str();
  bs->add_flag("--parallel-local", parallel_local, "Time the parallel local stage too");
  bs->add_option("--config", config_path, "Experiment config JSON (overrides other flags)");

  auto* br = app.add_subcommand("bench-rho", "Speedup sweep over the coupling ratio");
  br->fallthrough();
  std::string br_rhos = "0.07,0.1,0.14,0.2,0.28,0.4";
  std::string br_N = "128";
  int br_n = 10, br_l = 0, br_k = 0;
  br->add_option("--rhos", br_rhos, "Coupling ratio targets")->capture_default_str();
  br->add_option("--subproblems,-N", br_N, "Subproblem counts, one curve each")
      ->capture_default_str();
  br->add_option("--n", br_n, "Variables per subproblem")->capture_default_str();
  br->add_option("--l", br_l, "Local inequality rows")->capture_default_str();
  br->add_option("--k", br_k, "Local equality rows")->capture_default_str();
  br->add_option("--reps", reps, "Timing repetitions (min is reported)")->capture_default_str();
  br->add_option("--params", bench_params, "Differentiated parameter count")
      ->capture_default_str();
  br->add_flag("--parallel-local", parallel_local, "Time the parallel local stage too");
  br->add_option("--config", config_path, "Experiment config JSON (overrides other flags)");

  auto* bc = app.add_subcommand("bench-convergence", "Distributed-round error traces");
  bc->fallthrough();
  int bc_N = 50, bc_n = 4, bc_l = 2, bc_k = 2, bc_rounds = 12, bc_seeds = 20;
  std::string bc_omegas = "0,1,2,3";
  bc->add_option("--subproblems,-N", bc_N, "Subproblem count")->capture_default_str();
  bc->add_option("--n", bc_n, "Variables per subproblem")->capture_default_str();
  bc->add_option("--l", bc_l, "Local inequality rows")->capture_default_str();
  bc->add_option("--k", bc_k, "Local equality rows")->capture_default_str();
  bc->add_option("--omegas", bc_omegas, "Neighborhood radii")->capture_default_str();
  bc->add_option("--rounds", bc_rounds, "Rounds per run")->capture_default_str();
  bc->add_option("--seeds", bc_seeds, "Instances per radius")->capture_default_str();
  bc->add_option("--params", bench_params, "Differentiated parameter count")
      ->capture_default_str();
  bc->add_option("--config", config_path, "Experiment config JSON (overrides other flags)");

  auto* bch = app.add_subcommand("bench-chain", "Single-round error decay on chains");
  bch->fallthrough();
  std::string bch_stiffness = "0.2,0.6,0.9";
  std::string bch_omegas = "0,1,2,3,4,5";
  int bch_length = 40;
  bch->add_option("--stiffness", bch_stiffness, "Chain carry-over levels in (0,1]")
      ->capture_default_str();
  bch->add_option("--omegas", bch_omegas, "Neighborhood radii")->capture_default_str();
  bch->add_option("--length", bch_length, "Chain horizon length")->capture_default_str();
  bch->add_option("--config", config_path, "Experiment config JSON (overrides other flags)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      ccqp::Problem p;
      if (gen_kind == "chain") {
        p = ccqp::generate_chain(gen_length, gen_n, gen_buffer, seed);
      } else {
        ccqp::RandomConfig rc;
        rc.num_subproblems = gen_N;
        rc.n = gen_n;
        rc.num_ineq = gen_l;
        rc.num_eq = gen_k;
        rc.coupling_eq = gen_ceq;
        rc.coupling_ineq = gen_cineq;
        rc.structure = parse_structure(gen_structure);
        rc.band_width = gen_band;
        rc.coupling_scale = gen_scale;
        p = ccqp::generate_random(rc, seed);
      }
      emit_json(ccqp::to_json(p), out);
      return 0;
    }

    if (solve_cmd->parsed()) {
      const ccqp::Problem p = ccqp::load_problem(solve_problem);
      ccqp::SolverOptions sopts;
      sopts.tol = tol;
      const ccqp::Solution sol = ccqp::solve(p, sopts);
      const ccqp::AssumptionReport rep = ccqp::verify_assumptions(p, sol);
      json j = ccqp::to_json(sol);
      j["assumptions"] = ccqp::to_json(rep);
      emit_json(j, out);
      if (!sol.converged) {
        std::cerr << "solver did not converge (residual " << sol.kkt_residual << ")\n";
        return 3;
      }
      if (!rep.all_ok()) {
        std::cerr << "regularity assumptions failed; Jacobians are not certified\n";
        return 2;
      }
      return 0;
    }

    if (diff_cmd->parsed()) {
      const ccqp::Problem p = ccqp::load_problem(diff_problem);
      const ccqp::Solution sol = load_solution(diff_solution);
      const ccqp::JacobianResult r = diff_mode == "central"
                                         ? ccqp::centralized_jacobian(p, sol)
                                         : ccqp::decentralized_jacobian(p, sol);
      json j;
      j["mode"] = diff_mode;
      j["dx"] = ccqp::to_json(r.dx);
      j["d_nu"] = ccqp::to_json(r.d_nu);
      j["d_lambda"] = ccqp::to_json(r.d_lambda);
      emit_json(j, out);
      return 0;
    }

    if (graph_cmd->parsed()) {
      const ccqp::Problem p = ccqp::load_problem(graph_problem);
      const ccqp::ConstraintGraph g = ccqp::build_graph(p);
      json j;
      j["num_subproblems"] = g.num_subproblems;
      j["num_constraints"] = g.num_constraints;
      j["constraints_of"] = g.constraints_of;
      j["subproblems_of"] = g.subproblems_of;
      json sizes = json::array();
      for (int k = 0; k < g.num_subproblems; ++k) {
        const ccqp::ProjectionSet proj = ccqp::neighborhood(g, k, graph_omega);
        sizes.push_back({{"node", k},
                         {"owned", proj.owned.size()},
                         {"interior", proj.interior.size()},
                         {"exterior", proj.exterior.size()},
                         {"sources", proj.sources.size()}});
      }
      j["omega"] = graph_omega;
      j["neighborhoods"] = std::move(sizes);
      const int bmc = ccqp::coupling_rows_bandwidth(p, g);
      j["bandwidth_coupling_rows"] = bmc;
      j["bandwidth_coupling_system_bound"] = 2 * bmc;
      try {
        const ccqp::Solution sol = ccqp::solve(p);
        std::vector<ccqp::LocalJacobian> ljs;
        for (int i = 0; i < p.num_subproblems(); ++i)
          ljs.push_back(ccqp::local_jacobian(p, sol, i));
        const ccqp::CouplingSystem sys = ccqp::assemble_coupling_system(p, sol, ljs);
        j["bandwidth_coupling_system"] = ccqp::coupling_bandwidth(sys.dC, g);
      } catch (const std::exception& e) {
        j["bandwidth_coupling_system"] = nullptr;
        std::cerr << "note: coupling system bandwidth unavailable: " << e.what() << "\n";
      }
      emit_json(j, out);
      return 0;
    }

    if (dd->parsed()) {
      const ccqp::Problem p = ccqp::load_problem(dd_problem);
      const ccqp::Solution sol = load_solution(dd_solution);
      ccqp::Network net = ccqp::setup_network(p, sol, dd_omega, seed);

      const ccqp::CouplingSolve ref =
          ccqp::solve_coupling_central(net.dC, net.q, p.coupling.num_eq());
      ccqp::Matrix y_ref(p.coupling.total(), p.params.total());
      y_ref.topRows(ref.d_nu.rows()) = ref.d_nu;
      y_ref.bottomRows(ref.d_lambda.rows()) = ref.d_lambda;

      const double alpha = ccqp::rate_bound(net).alpha;
      const double err0 = (net.y - y_ref).lpNorm<Eigen::Infinity>();
      std::cout << "t,err_inf,alpha_bound_t,msgs,scalars_moved\n";
      std::cout << 0 << "," << err0 << "," << err0 << "," << 0 << "," << 0 << "\n";
      for (int t = 1; t <= dd_rounds; ++t) {
        ccqp::run_round(net, &y_ref);
        const ccqp::RoundLog& log = net.log.back();
        std::cout << t << "," << log.error << "," << err0 * std::pow(alpha, t) << ","
                  << log.messages << "," << log.scalars << "\n";
      }

      if (!out.empty()) {
        const ccqp::Matrix d_nu = net.y.topRows(net.lh);
        const ccqp::Matrix d_lambda = net.y.bottomRows(net.y.rows() - net.lh);
        ccqp::Matrix dx = ccqp::Matrix::Zero(p.n_total(), p.params.total());
        for (int i = 0; i < p.num_subproblems(); ++i) {
          dx.middleRows(p.x_offset(i), p.subproblems[static_cast<size_t>(i)].n()) =
              ccqp::total_jacobian_block(p, net.local_jacobians[static_cast<size_t>(i)], i,
                                         d_nu, d_lambda);
        }
        json j;
        j["omega"] = dd_omega;
        j["rounds"] = dd_rounds;
        j["seed"] = seed;
        j["alpha_bound"] = alpha;
        j["initial_error"] = err0;
        j["final_error"] = net.log.empty() ? err0 : net.log.back().error;
        j["y"] = ccqp::to_json(net.y);
        j["dx"] = ccqp::to_json(dx);
        ccqp::save_json(j, out);
      }
      return 0;
    }

    const int eff_threads = effective_threads(threads, parallel_local);

    if (bs->parsed()) {
      ccqp::ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = ccqp::experiment_config_from_json(ccqp::load_json(config_path));
      } else {
        cfg.subproblem_counts = parse_ints(bs_sweep);
        cfg.coupling_eq = bs_lambda;
        cfg.n = bs_n;
        cfg.num_ineq = bs_l;
        cfg.num_eq = bs_k;
        cfg.repetitions = reps;
        cfg.bench_params = bench_params;
        cfg.seed = seed;
        cfg.threads = eff_threads;
      }
      cfg.kind = "scaling-N";
      cfg.validate();
      emit_table(ccqp::experiment_scaling_N(cfg), cfg, out);
      return 0;
    }

    if (br->parsed()) {
      ccqp::ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = ccqp::experiment_config_from_json(ccqp::load_json(config_path));
      } else {
        cfg.rhos = parse_doubles(br_rhos);
        cfg.subproblem_counts = parse_ints(br_N);
        cfg.n = br_n;
        cfg.num_ineq = br_l;
        cfg.num_eq = br_k;
        cfg.repetitions = reps;
        cfg.bench_params = bench_params;
        cfg.seed = seed;
        cfg.threads = eff_threads;
      }
      cfg.kind = "scaling-rho";
      cfg.validate();
      emit_table(ccqp::experiment_scaling_rho(cfg), cfg, out);
      return 0;
    }

    if (bc->parsed()) {
      ccqp::ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = ccqp::experiment_config_from_json(ccqp::load_json(config_path));
      } else {
        cfg.subproblem_counts = {bc_N};
        cfg.n = bc_n;
        cfg.num_ineq = bc_l;
        cfg.num_eq = bc_k;
        cfg.omegas = parse_ints(bc_omegas);
        cfg.rounds = bc_rounds;
        cfg.num_seeds = bc_seeds;
        cfg.bench_params = bench_params;
        cfg.seed = seed;
      }
      cfg.kind = "convergence";
      cfg.validate();
      emit_table(ccqp::experiment_convergence(cfg), cfg, out);
      return 0;
    }

    if (bch->parsed()) {
      ccqp::ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = ccqp::experiment_config_from_json(ccqp::load_json(config_path));
      } else {
        cfg.stiffness = parse_doubles(bch_stiffness);
        cfg.omegas = parse_ints(bch_omegas);
        cfg.chain_length = bch_length;
        cfg.seed = seed;
      }
      cfg.kind = "chain-decay";
      cfg.validate();
      emit_table(ccqp::experiment_chain_decay(cfg), cfg, out);
      return 0;
    }
  } catch (const ccqp::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ccqp::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
