#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"

namespace ccqp {

// Wall-clock comparison of the two Jacobian paths on one solved instance.
// Each figure is the minimum over `repetitions` timed runs after one
// discarded warm-up run. `parallel_seconds` repeats the decentralized path
// with the local stage spread over `threads` workers; it is 0 when
// threads <= 1.
struct JacobianTiming {
  double central_seconds = 0.0;
  double decentralized_seconds = 0.0;
  double parallel_seconds = 0.0;
};

JacobianTiming time_jacobians(const Problem& p, const Solution& sol, int repetitions,
                              int threads = 0);

// Shared knob set for all experiment drivers; each driver reads the subset it
// needs. Defaults reproduce the desk-scale study sizes.
struct ExperimentConfig {
  std::string kind = "scaling-N";  // scaling-N | scaling-rho | convergence | chain-decay

  std::vector<int> subproblem_counts = {1, 2, 4, 8, 16, 32, 64};
  std::vector<double> rhos = {0.07, 0.1, 0.14, 0.2, 0.28, 0.4};
  std::vector<int> omegas = {0, 1, 2, 3};
  std::vector<double> stiffness = {0.2, 0.6, 0.9};

  int n = 10;             // variables per subproblem in generated instances
  int num_ineq = 0;       // local inequality rows
  int num_eq = 0;         // local equality rows
  int coupling_eq = 2;    // coupling rows for the fixed-coupling sweep
  int chain_length = 40;  // subproblems in chain-decay instances
  int bench_params = 4;   // parameter columns exposed on timed instances

  int repetitions = 20;
  int rounds = 12;        // distributed rounds per convergence run
  int num_seeds = 1;
  std::uint64_t seed = 1;
  int threads = 0;        // parallel-local workers; 0 disables the column

  // Throws ValidationError when the sweep needed by `kind` is empty, a
  // stiffness value leaves (0, 1], or a count is out of range.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

// Numeric result table; the column list doubles as the CSV header.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
};

// CSV with a `# config <hash> <json>` provenance comment, a header row, and
// one line per data row. Values are printed with full double precision.
void write_csv(const Table& table, const ExperimentConfig& cfg, std::ostream& out);

// Speedup against subproblem count at a fixed number of coupling rows.
// Columns: N, n, l, lambda, rho, t_central_s, t_decentralized_s, t_parallel_s,
// speedup, eta_model. Instances that fail to solve are reported on stderr and
// skipped.
Table experiment_scaling_N(const ExperimentConfig& cfg);

// Speedup against the coupling ratio at fixed block size; one curve per entry
// of subproblem_counts. Columns: N, rho_target, rho, lambda, eta_model,
// t_central_s, t_decentralized_s, t_parallel_s, speedup, speedup_normalized,
// model_speedup_normalized (both normalized to the curve's first sweep point).
Table experiment_scaling_rho(const ExperimentConfig& cfg);

// Distributed-round error traces on a ring-coupled instance for each omega.
// Columns: seed, omega, round, error, step_delta, alpha, node_error_median,
// node_error_p90. Round 0 is the initial estimate; `error` is the absolute
// inf-norm distance of the shared estimate from the central reference, and
// node errors are relative errors of the per-node total sensitivities.
Table experiment_convergence(const ExperimentConfig& cfg);

// Single-round total-sensitivity error against omega on chain instances of
// varying coupling stiffness. Columns: stiffness, omega, error_median,
// error_p10, error_p90, alpha.
Table experiment_chain_decay(const ExperimentConfig& cfg);

// Least-squares slope of ln(y) against x over the points with y > floor.
// Returns NaN when fewer than two points qualify.
double log_linear_slope(const std::vector<double>& x, const std::vector<double>& y,
                        double floor = 1e-14);

// exp(slope) of ln(error) against the round index: the fitted per-round
// geometric contraction factor.
double fitted_geometric_rate(const std::vector<double>& errors, double floor = 1e-14);

}  // namespace ccqp
