#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccqp/types.hpp"

namespace ccqp {

// One block of the separable objective and its private constraints:
//   min 1/2 x'Px + c'x   s.t.  A x <= b,  E x = e.
struct Subproblem {
  Matrix P;  // n x n, symmetric positive definite for generated problems
  Vector c;  // n
  Matrix A;  // l x n
  Vector b;  // l
  Matrix E;  // k x n
  Vector e;  // k

  int n() const { return static_cast<int>(c.size()); }
  int num_ineq() const { return static_cast<int>(b.size()); }
  int num_eq() const { return static_cast<int>(e.size()); }
};

// Constraints tying the blocks together:
//   sum_i H[i] x_i = d   (equality rows)
//   sum_i F[i] x_i <= f  (inequality rows)
// H[i] is lambda_eq x n_i, F[i] is lambda_ineq x n_i; a zero block means
// subproblem i does not participate in that row.
struct CouplingConstraints {
  std::vector<Matrix> H;
  Vector d;
  std::vector<Matrix> F;
  Vector f;

  int num_eq() const { return static_cast<int>(d.size()); }
  int num_ineq() const { return static_cast<int>(f.size()); }
  int total() const { return num_eq() + num_ineq(); }
};

// Which coefficient entries of one subproblem are exposed as parameters.
// Indices are sorted and duplicate-free; each selected entry is one parameter.
struct ParameterSelector {
  std::vector<int> c;
  std::vector<int> b;
  std::vector<int> e;

  int count() const { return static_cast<int>(c.size() + b.size() + e.size()); }
};

// Injective map from the parameter vector theta onto model coefficients.
// Layout: theta = [theta_1, ..., theta_N, theta_c] where theta_i covers the
// selected (c, b, e) entries of subproblem i in that order, and theta_c covers
// the selected (d, f) entries of the coupling offsets.
struct ParameterMap {
  std::vector<ParameterSelector> local;
  std::vector<int> d;
  std::vector<int> f;

  int local_count(int i) const { return local[static_cast<size_t>(i)].count(); }
  int shared_count() const { return static_cast<int>(d.size() + f.size()); }
  int total() const {
    int t = shared_count();
    for (const auto& sel : local) t += sel.count();
    return t;
  }
  // Column offset of subproblem i's block within theta.
  int local_offset(int i) const {
    int off = 0;
    for (int j = 0; j < i; ++j) off += local_count(j);
    return off;
  }
  // Column offset of the shared (d, f) block within theta.
  int shared_offset() const { return total() - shared_count(); }
};

struct ProblemMeta {
  std::uint64_t seed = 0;
  std::string generator = "manual";
  std::string version = "1";
};

struct Problem {
  std::vector<Subproblem> subproblems;
  CouplingConstraints coupling;
  ParameterMap params;
  ProblemMeta meta;

  int num_subproblems() const { return static_cast<int>(subproblems.size()); }
  int n_total() const {
    int n = 0;
    for (const auto& s : subproblems) n += s.n();
    return n;
  }
  // Offset of subproblem i's variables within the stacked primal vector.
  int x_offset(int i) const {
    int off = 0;
    for (int j = 0; j < i; ++j) off += subproblems[static_cast<size_t>(j)].n();
    return off;
  }

  // Throws ValidationError on shape mismatches, unsorted/duplicate/out-of-range
  // selectors, asymmetric P, or a coupling row touching fewer than two
  // subproblems. Returns *this for chaining.
  const Problem& validate() const;
};

// Dense: every row touches all subproblems. Chain: row r ties neighbors
// (r mod (N-1), +1). Banded: sliding window of half-width band_width. Ring:
// row r ties (r mod N, r+1 mod N), so coupling_eq = N puts every subproblem
// in exactly two equality rows.
enum class CouplingStructure { Dense, Chain, Banded, Ring };

struct RandomConfig {
  int num_subproblems = 2;
  int n = 2;             // variables per subproblem
  int num_ineq = 0;      // local inequality rows per subproblem
  int num_eq = 0;        // local equality rows per subproblem
  int coupling_eq = 1;   // shared equality rows
  int coupling_ineq = 0; // shared inequality rows
  CouplingStructure structure = CouplingStructure::Dense;
  int band_width = 1;          // half-width for Banded structure
  double coupling_scale = 1.0; // scales coupling block entries
  double curvature_floor = 1e-2; // epsilon in P = LL' + eps*I
};

// Random feasible-by-construction instance. Every coupling row touches at
// least two subproblems; P blocks are SPD with min eigenvalue >= eps; b, f are
// chosen with positive slack at the construction point. Parameters default to
// all (c, b) entries locally and all (d, f) entries globally.
// Throws ValidationError when the requested shapes are degenerate
// (k > n, equality rows >= variables, coupling with fewer than 2 subproblems).
Problem generate_random(const RandomConfig& cfg, std::uint64_t seed);

// Chain of T subproblems coupled by storage-balance style rows: row t ties
// coordinate 0 of steps t and t+1 with inter-step coefficient `buffer`
// (0 < buffer <= 1). Larger buffer = stiffer coupling. No local constraints.
Problem generate_chain(int T, int n, double buffer, std::uint64_t seed);

// Indices of rows of B with any entry of magnitude above tol, sorted. This is
// the shared definition of "subproblem touches coupling row" used by the
// constraint graph, the owner attribution, and the compact local systems.
std::vector<int> nonzero_rows(const Matrix& B, double tol = 1e-14);

// All (c, b) entries of every subproblem plus all (d, f) coupling offsets.
ParameterMap default_parameter_map(const Problem& p);

// Current parameter values, in map order.
Vector theta_read(const Problem& p);

// Copy of `p` with the selected coefficients replaced by `theta`.
Problem theta_write(Problem p, const Vector& theta);

}  // namespace ccqp
