#include "ccqp/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace ccqp {
namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError(msg);
}

void check_selector(const std::vector<int>& idx, int size, const std::string& what) {
  for (size_t j = 0; j < idx.size(); ++j) {
    check(idx[j] >= 0 && idx[j] < size, what + " selector index out of range");
    if (j > 0) check(idx[j] > idx[j - 1], what + " selector not strictly increasing");
  }
}

constexpr double kZeroBlockTol = 1e-14;

bool block_row_nonzero(const Matrix& block, int row) {
  if (block.rows() == 0) return false;
  return block.row(row).cwiseAbs().maxCoeff() > kZeroBlockTol;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
  return m;
}

std::vector<int> all_indices(int size) {
  std::vector<int> idx(static_cast<size_t>(size));
  for (int j = 0; j < size; ++j) idx[static_cast<size_t>(j)] = j;
  return idx;
}

}  // namespace

const Problem& Problem::validate() const {
  const int N = num_subproblems();
  check(N >= 1, "problem needs at least one subproblem");
  for (int i = 0; i < N; ++i) {
    const auto& s = subproblems[static_cast<size_t>(i)];
    const int n = s.n();
    const std::string tag = "subproblem " + std::to_string(i) + ": ";
    check(n >= 1, tag + "empty variable block");
    check(s.P.rows() == n && s.P.cols() == n, tag + "P shape mismatch");
    check((s.P - s.P.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, s.P.cwiseAbs().maxCoeff()),
          tag + "P not symmetric");
    check(s.A.rows() == s.num_ineq() && (s.num_ineq() == 0 || s.A.cols() == n),
          tag + "A/b shape mismatch");
    check(s.E.rows() == s.num_eq() && (s.num_eq() == 0 || s.E.cols() == n),
          tag + "E/e shape mismatch");
  }

  const int lh = coupling.num_eq();
  const int lf = coupling.num_ineq();
  if (lh > 0) check(static_cast<int>(coupling.H.size()) == N, "coupling H block count mismatch");
  if (lf > 0) check(static_cast<int>(coupling.F.size()) == N, "coupling F block count mismatch");
  for (int i = 0; i < N && lh > 0; ++i) {
    const auto& Hi = coupling.H[static_cast<size_t>(i)];
    check(Hi.rows() == lh && Hi.cols() == subproblems[static_cast<size_t>(i)].n(),
          "coupling H block " + std::to_string(i) + " shape mismatch");
  }
  for (int i = 0; i < N && lf > 0; ++i) {
    const auto& Fi = coupling.F[static_cast<size_t>(i)];
    check(Fi.rows() == lf && Fi.cols() == subproblems[static_cast<size_t>(i)].n(),
          "coupling F block " + std::to_string(i) + " shape mismatch");
  }
  for (int r = 0; r < lh; ++r) {
    int touched = 0;
    for (int i = 0; i < N; ++i)
      if (block_row_nonzero(coupling.H[static_cast<size_t>(i)], r)) ++touched;
    check(touched >= 2, "coupling equality row " + std::to_string(r) +
                            " touches fewer than two subproblems");
  }
  for (int r = 0; r < lf; ++r) {
    int touched = 0;
    for (int i = 0; i < N; ++i)
      if (block_row_nonzero(coupling.F[static_cast<size_t>(i)], r)) ++touched;
    check(touched >= 2, "coupling inequality row " + std::to_string(r) +
                            " touches fewer than two subproblems");
  }

  check(static_cast<int>(params.local.size()) == N, "parameter map block count mismatch");
  for (int i = 0; i < N; ++i) {
    const auto& s = subproblems[static_cast<size_t>(i)];
    const auto& sel = params.local[static_cast<size_t>(i)];
    const std::string tag = "subproblem " + std::to_string(i) + " ";
    check_selector(sel.c, s.n(), tag + "c");
    check_selector(sel.b, s.num_ineq(), tag + "b");
    check_selector(sel.e, s.num_eq(), tag + "e");
  }
  check_selector(params.d, lh, "d");
  check_selector(params.f, lf, "f");
  return *this;
}

std::vector<int> nonzero_rows(const Matrix& B, double tol) {
  std::vector<int> rows;
  for (int r = 0; r < B.rows(); ++r)
    if (B.cols() > 0 && B.row(r).cwiseAbs().maxCoeff() > tol) rows.push_back(r);
  return rows;
}

ParameterMap default_parameter_map(const Problem& p) {
  ParameterMap map;
  map.local.reserve(p.subproblems.size());
  for (const auto& s : p.subproblems) {
    ParameterSelector sel;
    sel.c = all_indices(s.n());
    sel.b = all_indices(s.num_ineq());
    map.local.push_back(std::move(sel));
  }
  map.d = all_indices(p.coupling.num_eq());
  map.f = all_indices(p.coupling.num_ineq());
  return map;
}

Vector theta_read(const Problem& p) {
  Vector theta(p.params.total());
  int t = 0;
  for (int i = 0; i < p.num_subproblems(); ++i) {
    const auto& s = p.subproblems[static_cast<size_t>(i)];
    const auto& sel = p.params.local[static_cast<size_t>(i)];
    for (int j : sel.c) theta[t++] = s.c[j];
    for (int j : sel.b) theta[t++] = s.b[j];
    for (int j : sel.e) theta[t++] = s.e[j];
  }
  for (int j : p.params.d) theta[t++] = p.coupling.d[j];
  for (int j : p.params.f) theta[t++] = p.coupling.f[j];
  return theta;
}

Problem theta_write(Problem p, const Vector& theta) {
  check(theta.size() == p.params.total(), "theta length does not match parameter map");
  int t = 0;
  for (int i = 0; i < p.num_subproblems(); ++i) {
    auto& s = p.subproblems[static_cast<size_t>(i)];
    const auto& sel = p.params.local[static_cast<size_t>(i)];
    for (int j : sel.c) s.c[j] = theta[t++];
    for (int j : sel.b) s.b[j] = theta[t++];
    for (int j : sel.e) s.e[j] = theta[t++];
  }
  for (int j : p.params.d) p.coupling.d[j] = theta[t++];
  for (int j : p.params.f) p.coupling.f[j] = theta[t++];
  return p;
}

namespace {

// Support pattern (subproblem indices) for global coupling row r of rows_total.
std::vector<int> row_support(int r, int rows_total, int N, const RandomConfig& cfg) {
  std::vector<int> support;
  switch (cfg.structure) {
    case CouplingStructure::Dense:
      support = all_indices(N);
      break;
    case CouplingStructure::Chain: {
      const int j = (N > 1) ? r % (N - 1) : 0;
      support = {j, j + 1};
      break;
    }
    case CouplingStructure::Banded: {
      const int hw = std::max(1, cfg.band_width);
      const int center =
          (rows_total > 1) ? static_cast<int>(std::lround(double(r) * (N - 1) / (rows_total - 1)))
                           : (N - 1) / 2;
      for (int i = std::max(0, center - hw); i <= std::min(N - 1, center + hw); ++i)
        support.push_back(i);
      if (support.size() < 2) {
        // Clamped window collapsed to one subproblem; widen toward the interior.
        support = (center == 0) ? std::vector<int>{0, 1} : std::vector<int>{N - 2, N - 1};
      }
      break;
    }
    case CouplingStructure::Ring:
      support = {r % N, (r + 1) % N};
      break;
  }
  return support;
}

}  // namespace

Problem generate_random(const RandomConfig& cfg, std::uint64_t seed) {
  const int N = cfg.num_subproblems;
  const int n = cfg.n;
  const int l = cfg.num_ineq;
  const int k = cfg.num_eq;
  const int lh = cfg.coupling_eq;
  const int lf = cfg.coupling_ineq;
  check(N >= 1 && n >= 1 && l >= 0 && k >= 0 && lh >= 0 && lf >= 0,
        "invalid dimensions in random config");
  check(k <= n, "invalid dimensions: more local equalities than variables");
  check(lh + lf == 0 || N >= 2, "invalid dimensions: coupling needs at least two subproblems");
  // Keep the global equality system strictly underdetermined so the solution
  // is not pinned to a vertex of the equality manifold.
  check(lh + N * k < N * n, "invalid dimensions: equality rows must be fewer than variables");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Problem p;
  p.meta.seed = seed;
  p.meta.generator = "random";
  p.subproblems.resize(static_cast<size_t>(N));
  std::vector<Vector> xhat(static_cast<size_t>(N));

  for (int i = 0; i < N; ++i) {
    auto& s = p.subproblems[static_cast<size_t>(i)];
    Matrix L = random_matrix(n, n, rng);
    s.P = L * L.transpose() + cfg.curvature_floor * Matrix::Identity(n, n);
    s.c = random_matrix(n, 1, rng);
    s.A = random_matrix(l, n, rng);
    s.E = random_matrix(k, n, rng);
    xhat[static_cast<size_t>(i)] = random_matrix(n, 1, rng);
    Vector slack(l);
    for (int r = 0; r < l; ++r) slack[r] = std::abs(gauss(rng)) + 0.1;
    s.b = s.A * xhat[static_cast<size_t>(i)] + slack;
    s.e = s.E * xhat[static_cast<size_t>(i)];
  }

  const int rows_total = lh + lf;
  p.coupling.H.assign(static_cast<size_t>(N), Matrix::Zero(lh, n));
  p.coupling.F.assign(static_cast<size_t>(N), Matrix::Zero(lf, n));
  for (int r = 0; r < rows_total; ++r) {
    const bool eq = r < lh;
    const int row = eq ? r : r - lh;
    for (int i : row_support(r, rows_total, N, cfg)) {
      auto& block = eq ? p.coupling.H[static_cast<size_t>(i)] : p.coupling.F[static_cast<size_t>(i)];
      for (int c = 0; c < n; ++c) block(row, c) = cfg.coupling_scale * gauss(rng);
    }
  }
  p.coupling.d = Vector::Zero(lh);
  p.coupling.f = Vector::Zero(lf);
  for (int i = 0; i < N; ++i) {
    if (lh > 0) p.coupling.d += p.coupling.H[static_cast<size_t>(i)] * xhat[static_cast<size_t>(i)];
    if (lf > 0) p.coupling.f += p.coupling.F[static_cast<size_t>(i)] * xhat[static_cast<size_t>(i)];
  }
  for (int r = 0; r < lf; ++r) p.coupling.f[r] += std::abs(gauss(rng)) * 0.5 + 0.01;

  p.params = default_parameter_map(p);
  p.validate();
  return p;
}

Problem generate_chain(int T, int n, double buffer, std::uint64_t seed) {
  check(T >= 2 && n >= 1, "invalid dimensions in chain config");
  check(buffer > 0.0 && buffer <= 1.0, "chain buffer must lie in (0, 1]");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  Problem p;
  p.meta.seed = seed;
  p.meta.generator = "chain";
  p.subproblems.resize(static_cast<size_t>(T));
  std::vector<Vector> xhat(static_cast<size_t>(T));
  for (int t = 0; t < T; ++t) {
    auto& s = p.subproblems[static_cast<size_t>(t)];
    Matrix L = random_matrix(n, n, rng);
    // Mildly conditioned curvature near identity keeps the inter-step decay
    // rate controlled by `buffer` rather than by curvature outliers.
    s.P = Matrix::Identity(n, n) + (0.2 / n) * (L * L.transpose());
    s.c = random_matrix(n, 1, rng);
    s.A = Matrix(0, n);
    s.b = Vector(0);
    s.E = Matrix(0, n);
    s.e = Vector(0);
    xhat[static_cast<size_t>(t)] = random_matrix(n, 1, rng);
  }

  const int rows = T - 1;
  p.coupling.H.assign(static_cast<size_t>(T), Matrix::Zero(rows, n));
  p.coupling.F.assign(static_cast<size_t>(T), Matrix::Zero(0, n));
  p.coupling.d = Vector::Zero(rows);
  p.coupling.f = Vector(0);
  for (int r = 0; r < rows; ++r) {
    auto& prev = p.coupling.H[static_cast<size_t>(r)];
    auto& next = p.coupling.H[static_cast<size_t>(r + 1)];
    prev(r, 0) = -buffer;
    if (n >= 2) prev(r, 1) = 0.3 * gauss(rng);
    next(r, 0) = 1.0;
    p.coupling.d[r] = prev.row(r).dot(xhat[static_cast<size_t>(r)]) +
                      next.row(r).dot(xhat[static_cast<size_t>(r + 1)]);
  }

  p.params = default_parameter_map(p);
  p.validate();
  return p;
}

}  // namespace ccqp
