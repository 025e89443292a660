#include "ccqp/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <future>
#include <iostream>
#include <limits>
#include <set>
#include <string>

#include "ccqp/coupling.hpp"
#include "ccqp/distnet.hpp"
#include "ccqp/graph.hpp"
#include "ccqp/local_diff.hpp"

namespace ccqp {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// One warm-up call, then the minimum over `reps` timed calls.
double time_min(int reps, const std::function<void()>& fn) {
  fn();
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, reps); ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    best = std::min(best, seconds_since(t0));
  }
  return best;
}

std::vector<LocalJacobian> local_jacobians_parallel(const Problem& p, const Solution& sol,
                                                    int threads) {
  const int N = p.num_subproblems();
  std::vector<LocalJacobian> ljs(static_cast<size_t>(N));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next.fetch_add(1); i < N; i = next.fetch_add(1))
      ljs[static_cast<size_t>(i)] = local_jacobian(p, sol, i, /*with_primal_block=*/false);
  };
  std::vector<std::future<void>> pool;
  for (int w = 0; w < threads - 1; ++w) pool.push_back(std::async(std::launch::async, worker));
  worker();
  for (auto& f : pool) f.get();
  return ljs;
}

// Replaces whatever parameter map the generator attached with a small fixed one
// so timing sweeps differentiate with respect to a constant number of columns.
// Parameter j perturbs the cost gradient of subproblem j % N.
ParameterMap bench_parameter_map(const Problem& p, int count) {
  const int N = p.num_subproblems();
  ParameterMap map;
  map.local.assign(static_cast<size_t>(N), ParameterSelector{});
  int placed = 0;
  for (int j = 0; placed < count && j < count * N; ++j) {
    const int i = j % N;
    const int entry = j / N;
    if (entry >= p.subproblems[static_cast<size_t>(i)].n()) continue;
    map.local[static_cast<size_t>(i)].c.push_back(entry);
    ++placed;
  }
  if (placed == 0) throw ValidationError("bench_parameter_map: no parameter slots available");
  return map;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto idx = static_cast<size_t>(std::llround(pos));
  return v[std::min(idx, v.size() - 1)];
}

// Relative error of each node's derived total sensitivity against the central
// reference, given the current stacked dual-sensitivity iterate.
std::vector<double> node_dx_errors(const Problem& p, const std::vector<LocalJacobian>& ljs,
                                   const Matrix& y, const std::vector<Matrix>& dx_ref, int lh) {
  const int N = p.num_subproblems();
  const Matrix d_nu = y.topRows(lh);
  const Matrix d_lambda = y.bottomRows(y.rows() - lh);
  std::vector<double> errs(static_cast<size_t>(N));
  for (int k = 0; k < N; ++k) {
    const Matrix est = total_jacobian_block(p, ljs[static_cast<size_t>(k)], k, d_nu, d_lambda);
    const double denom = std::max(dx_ref[static_cast<size_t>(k)].lpNorm<Eigen::Infinity>(), 1e-12);
    errs[static_cast<size_t>(k)] =
        (est - dx_ref[static_cast<size_t>(k)]).lpNorm<Eigen::Infinity>() / denom;
  }
  return errs;
}

struct CentralReference {
  Matrix y;                    // stacked [d_nu; d_lambda], L x t
  std::vector<Matrix> dx_ref;  // per-node total sensitivity
};

CentralReference central_reference(const Problem& p, const Solution& sol,
                                   const std::vector<LocalJacobian>& ljs) {
  const CouplingSystem sys = assemble_coupling_system(p, sol, ljs);
  const CouplingSolve cs = solve_coupling_central(sys.dC, sys.q, p.coupling.num_eq());
  CentralReference ref;
  ref.y = Matrix(p.coupling.total(), p.params.total());
  ref.y.topRows(cs.d_nu.rows()) = cs.d_nu;
  ref.y.bottomRows(cs.d_lambda.rows()) = cs.d_lambda;
  ref.dx_ref.reserve(static_cast<size_t>(p.num_subproblems()));
  for (int i = 0; i < p.num_subproblems(); ++i)
    ref.dx_ref.push_back(total_jacobian_block(p, ljs[static_cast<size_t>(i)], i, cs.d_nu,
                                              cs.d_lambda));
  return ref;
}

void log_skip(const std::string& what, const std::exception& e) {
  std::cerr << "experiment: skipping " << what << ": " << e.what() << "\n";
}

}  // namespace

JacobianTiming time_jacobians(const Problem& p, const Solution& sol, int repetitions,
                              int threads) {
  JacobianTiming t;
  t.central_seconds = time_min(repetitions, [&] { centralized_jacobian(p, sol); });
  t.decentralized_seconds = time_min(repetitions, [&] { decentralized_jacobian(p, sol); });
  if (threads > 1) {
    t.parallel_seconds = time_min(repetitions, [&] {
      const auto ljs = local_jacobians_parallel(p, sol, threads);
      decentralized_jacobian(p, sol, ljs);
    });
  }
  return t;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> kinds = {"scaling-N", "scaling-rho", "convergence",
                                              "chain-decay"};
  if (kinds.count(kind) == 0) throw ValidationError("unknown experiment kind: " + kind);
  if (n < 1) throw ValidationError("n must be at least 1");
  if (num_ineq < 0 || num_eq < 0) throw ValidationError("constraint counts must be nonnegative");
  if (coupling_eq < 0) throw ValidationError("coupling_eq must be nonnegative");
  if (chain_length < 2) throw ValidationError("chain_length must be at least 2");
  if (bench_params < 1) throw ValidationError("bench_params must be at least 1");
  if (repetitions < 1) throw ValidationError("repetitions must be at least 1");
  if (rounds < 1) throw ValidationError("rounds must be at least 1");
  if (num_seeds < 1) throw ValidationError("num_seeds must be at least 1");
  if (threads < 0) throw ValidationError("threads must be nonnegative");
  if (kind == "scaling-N" && subproblem_counts.empty())
    throw ValidationError("scaling-N needs a non-empty subproblem_counts sweep");
  if (kind == "scaling-rho" && (rhos.empty() || subproblem_counts.empty()))
    throw ValidationError("scaling-rho needs non-empty rhos and subproblem_counts");
  if (kind == "convergence" && (omegas.empty() || subproblem_counts.empty()))
    throw ValidationError("convergence needs non-empty omegas and subproblem_counts");
  if (kind == "chain-decay" && (omegas.empty() || stiffness.empty()))
    throw ValidationError("chain-decay needs non-empty omegas and stiffness");
  for (int N : subproblem_counts)
    if (N < 1) throw ValidationError("subproblem counts must be positive");
  for (double r : rhos)
    if (!(r > 0)) throw ValidationError("rho values must be positive");
  for (int w : omegas)
    if (w < 0) throw ValidationError("omega values must be nonnegative");
  for (double s : stiffness)
    if (!(s > 0) || s > 1) throw ValidationError("stiffness values must lie in (0, 1]");
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  return nlohmann::json{{"kind", cfg.kind},
                        {"subproblem_counts", cfg.subproblem_counts},
                        {"rhos", cfg.rhos},
                        {"omegas", cfg.omegas},
                        {"stiffness", cfg.stiffness},
                        {"n", cfg.n},
                        {"num_ineq", cfg.num_ineq},
                        {"num_eq", cfg.num_eq},
                        {"coupling_eq", cfg.coupling_eq},
                        {"chain_length", cfg.chain_length},
                        {"bench_params", cfg.bench_params},
                        {"repetitions", cfg.repetitions},
                        {"rounds", cfg.rounds},
                        {"num_seeds", cfg.num_seeds},
                        {"seed", cfg.seed},
                        {"threads", cfg.threads}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  try {
    cfg.kind = j.value("kind", cfg.kind);
    cfg.subproblem_counts = j.value("subproblem_counts", cfg.subproblem_counts);
    cfg.rhos = j.value("rhos", cfg.rhos);
    cfg.omegas = j.value("omegas", cfg.omegas);
    cfg.stiffness = j.value("stiffness", cfg.stiffness);
    cfg.n = j.value("n", cfg.n);
    cfg.num_ineq = j.value("num_ineq", cfg.num_ineq);
    cfg.num_eq = j.value("num_eq", cfg.num_eq);
    cfg.coupling_eq = j.value("coupling_eq", cfg.coupling_eq);
    cfg.chain_length = j.value("chain_length", cfg.chain_length);
    cfg.bench_params = j.value("bench_params", cfg.bench_params);
    cfg.repetitions = j.value("repetitions", cfg.repetitions);
    cfg.rounds = j.value("rounds", cfg.rounds);
    cfg.num_seeds = j.value("num_seeds", cfg.num_seeds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.threads = j.value("threads", cfg.threads);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("experiment config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

void write_csv(const Table& table, const ExperimentConfig& cfg, std::ostream& out) {
  const std::string dump = to_json(cfg).dump();
  char hash[24];
  std::snprintf(hash, sizeof(hash), "%016zx", std::hash<std::string>{}(dump));
  out << "# config " << hash << " " << dump << "\n";
  for (size_t c = 0; c < table.columns.size(); ++c)
    out << table.columns[c] << (c + 1 < table.columns.size() ? "," : "\n");
  char buf[64];
  for (const auto& row : table.rows) {
    for (size_t c = 0; c < row.size(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[c]);
      out << buf << (c + 1 < row.size() ? "," : "\n");
    }
  }
}

double log_linear_slope(const std::vector<double>& x, const std::vector<double>& y,
                        double floor) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (size_t i = 0; i < x.size() && i < y.size(); ++i) {
    if (!(y[i] > floor) || !std::isfinite(x[i])) continue;
    const double ly = std::log(y[i]);
    sx += x[i];
    sy += ly;
    sxx += x[i] * x[i];
    sxy += x[i] * ly;
    ++m;
  }
  if (m < 2) return std::numeric_limits<double>::quiet_NaN();
  const double denom = m * sxx - sx * sx;
  if (std::abs(denom) < 1e-300) return std::numeric_limits<double>::quiet_NaN();
  return (m * sxy - sx * sy) / denom;
}

double fitted_geometric_rate(const std::vector<double>& errors, double floor) {
  std::vector<double> rounds(errors.size());
  for (size_t i = 0; i < errors.size(); ++i) rounds[i] = static_cast<double>(i);
  return std::exp(log_linear_slope(rounds, errors, floor));
}

Table experiment_scaling_N(const ExperimentConfig& cfg) {
  Table t;
  t.columns = {"N",           "n",                 "l",            "lambda",  "rho",
               "t_central_s", "t_decentralized_s", "t_parallel_s", "speedup", "eta_model"};
  for (size_t idx = 0; idx < cfg.subproblem_counts.size(); ++idx) {
    const int N = cfg.subproblem_counts[idx];
    try {
      RandomConfig rc;
      rc.num_subproblems = N;
      rc.n = cfg.n;
      rc.num_ineq = cfg.num_ineq;
      rc.num_eq = cfg.num_eq;
      rc.coupling_eq = N >= 2 ? cfg.coupling_eq : 0;
      rc.coupling_ineq = 0;
      rc.structure = CouplingStructure::Dense;
      Problem p = generate_random(rc, cfg.seed + idx);
      p.params = bench_parameter_map(p, cfg.bench_params);
      p.validate();
      const Solution sol = solve(p);
      if (!sol.converged) throw NumericalError("solver did not converge");
      const JacobianTiming tim = time_jacobians(p, sol, cfg.repetitions, cfg.threads);
      const double rho = coupling_ratio(p);
      const double eta = complexity_eta(rho, N);
      t.rows.push_back({static_cast<double>(N), static_cast<double>(cfg.n),
                        static_cast<double>(cfg.num_ineq),
                        static_cast<double>(p.coupling.total()), rho, tim.central_seconds,
                        tim.decentralized_seconds, tim.parallel_seconds,
                        tim.central_seconds / std::max(tim.decentralized_seconds, 1e-12),
                        eta});
    } catch (const std::exception& e) {
      log_skip("scaling-N point N=" + std::to_string(N), e);
    }
  }
  return t;
}

Table experiment_scaling_rho(const ExperimentConfig& cfg) {
  Table t;
  t.columns = {"N",           "rho_target",        "rho",
               "lambda",      "eta_model",         "t_central_s",
               "t_decentralized_s", "t_parallel_s", "speedup",
               "speedup_normalized", "model_speedup_normalized"};
  for (size_t ci = 0; ci < cfg.subproblem_counts.size(); ++ci) {
    const int N = cfg.subproblem_counts[ci];
    double speedup_ref = std::numeric_limits<double>::quiet_NaN();
    double model_ref = std::numeric_limits<double>::quiet_NaN();
    for (size_t ri = 0; ri < cfg.rhos.size(); ++ri) {
      const double rho_target = cfg.rhos[ri];
      try {
        const int block = cfg.n + cfg.num_ineq;
        int L = std::max<int>(1, std::lround(rho_target * N * block));
        L = std::min(L, N * cfg.n - N * cfg.num_eq - 1);
        if (L < 1) throw ValidationError("coupling row budget exhausted");
        RandomConfig rc;
        rc.num_subproblems = N;
        rc.n = cfg.n;
        rc.num_ineq = cfg.num_ineq;
        rc.num_eq = cfg.num_eq;
        rc.coupling_eq = L;
        rc.coupling_ineq = 0;
        rc.structure = CouplingStructure::Banded;
        rc.band_width = 1;
        Problem p = generate_random(rc, cfg.seed + ci * 1000 + ri);
        p.params = bench_parameter_map(p, cfg.bench_params);
        p.validate();
        const Solution sol = solve(p);
        if (!sol.converged) throw NumericalError("solver did not converge");
        const JacobianTiming tim = time_jacobians(p, sol, cfg.repetitions, cfg.threads);
        const double rho = coupling_ratio(p);
        const double eta = complexity_eta(rho, N);
        const double speedup =
            tim.central_seconds / std::max(tim.decentralized_seconds, 1e-12);
        const double model = 1.0 / eta;
        if (!std::isfinite(speedup_ref)) speedup_ref = speedup;
        if (!std::isfinite(model_ref)) model_ref = model;
        t.rows.push_back({static_cast<double>(N), rho_target, rho,
                          static_cast<double>(p.coupling.total()), eta, tim.central_seconds,
                          tim.decentralized_seconds, tim.parallel_seconds, speedup,
                          speedup / speedup_ref, model / model_ref});
      } catch (const std::exception& e) {
        log_skip("scaling-rho point N=" + std::to_string(N) +
                     " rho=" + std::to_string(rho_target),
                 e);
      }
    }
  }
  return t;
}

Table experiment_convergence(const ExperimentConfig& cfg) {
  Table t;
  t.columns = {"seed",  "omega", "round",             "error",
               "step_delta", "alpha", "node_error_median", "node_error_p90"};
  const int N = cfg.subproblem_counts.front();
  for (int s = 0; s < cfg.num_seeds; ++s) {
    const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
    try {
      RandomConfig rc;
      rc.num_subproblems = N;
      rc.n = cfg.n;
      rc.num_ineq = cfg.num_ineq;
      rc.num_eq = cfg.num_eq;
      rc.coupling_eq = N;
      rc.coupling_ineq = 0;
      rc.structure = CouplingStructure::Ring;
      rc.coupling_scale = 0.3;
      VerifiedInstance inst = sample_verified_problem(rc, seed);
      inst.problem.params = bench_parameter_map(inst.problem, cfg.bench_params);
      inst.problem.validate();
      const Problem& p = inst.problem;
      const Solution& sol = inst.solution;

      std::vector<LocalJacobian> ljs;
      for (int i = 0; i < p.num_subproblems(); ++i) ljs.push_back(local_jacobian(p, sol, i));
      const CentralReference ref = central_reference(p, sol, ljs);

      for (int omega : cfg.omegas) {
        Network net = setup_network(p, sol, omega, seed);
        const double alpha = rate_bound(net).alpha;
        {
          const auto errs = node_dx_errors(p, net.local_jacobians, net.y, ref.dx_ref, net.lh);
          t.rows.push_back({static_cast<double>(s), static_cast<double>(omega), 0.0,
                            (net.y - ref.y).lpNorm<Eigen::Infinity>(),
                            std::numeric_limits<double>::quiet_NaN(), alpha,
                            percentile(errs, 0.5), percentile(errs, 0.9)});
        }
        for (int r = 1; r <= cfg.rounds; ++r) {
          run_round(net, &ref.y);
          const RoundLog& log = net.log.back();
          const auto errs = node_dx_errors(p, net.local_jacobians, net.y, ref.dx_ref, net.lh);
          t.rows.push_back({static_cast<double>(s), static_cast<double>(omega),
                            static_cast<double>(r), log.error, log.step_delta, alpha,
                            percentile(errs, 0.5), percentile(errs, 0.9)});
        }
      }
    } catch (const std::exception& e) {
      log_skip("convergence seed " + std::to_string(seed), e);
    }
  }
  return t;
}

Table experiment_chain_decay(const ExperimentConfig& cfg) {
  Table t;
  t.columns = {"stiffness", "omega", "error_median", "error_p10", "error_p90", "alpha"};
  for (double s : cfg.stiffness) {
    try {
      Problem p;
      Solution sol;
      bool ok = false;
      for (std::uint64_t attempt = 0; attempt < 20 && !ok; ++attempt) {
        p = generate_chain(cfg.chain_length, 2, s, cfg.seed + attempt);
        sol = solve(p);
        if (!sol.converged) continue;
        const AssumptionReport rep = verify_assumptions(p, sol);
        ok = rep.all_ok();
      }
      if (!ok) throw NumericalError("no verified chain instance found");

      std::vector<LocalJacobian> ljs;
      for (int i = 0; i < p.num_subproblems(); ++i) ljs.push_back(local_jacobian(p, sol, i));
      const CentralReference ref = central_reference(p, sol, ljs);

      for (int omega : cfg.omegas) {
        Network net = setup_network(p, sol, omega, cfg.seed);
        const double alpha = rate_bound(net).alpha;
        run_round(net, &ref.y);
        const auto errs = node_dx_errors(p, net.local_jacobians, net.y, ref.dx_ref, net.lh);
        t.rows.push_back({s, static_cast<double>(omega), percentile(errs, 0.5),
                          percentile(errs, 0.1), percentile(errs, 0.9), alpha});
      }
    } catch (const std::exception& e) {
      log_skip("chain-decay stiffness " + std::to_string(s), e);
    }
  }
  return t;
}

}  // namespace ccqp
