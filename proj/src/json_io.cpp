#include "ccqp/json_io.hpp"

#include <fstream>

namespace ccqp {

using nlohmann::json;

json to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json to_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Matrix matrix_from_json(const json& j, int cols_if_empty) {
  if (!j.is_array()) throw ValidationError("matrix JSON must be an array of rows");
  if (j.empty()) return Matrix(0, cols_if_empty);
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    const auto& row = j.at(static_cast<size_t>(r));
    if (static_cast<int>(row.size()) != cols)
      throw ValidationError("matrix JSON has ragged rows");
    for (int c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<size_t>(c)).get<double>();
  }
  return m;
}

Vector vector_from_json(const json& j) {
  if (!j.is_array()) throw ValidationError("vector JSON must be an array");
  Vector v(static_cast<int>(j.size()));
  for (int i = 0; i < v.size(); ++i) v(i) = j.at(static_cast<size_t>(i)).get<double>();
  return v;
}

namespace {

json indices_to_json(const std::vector<int>& idx) {
  json a = json::array();
  for (int i : idx) a.push_back(i);
  return a;
}

std::vector<int> indices_from_json(const json& j) {
  std::vector<int> idx;
  idx.reserve(j.size());
  for (const auto& e : j) idx.push_back(e.get<int>());
  return idx;
}

}  // namespace

json to_json(const Problem& p) {
  json j;
  j["meta"] = {{"seed", p.meta.seed},
               {"generator", p.meta.generator},
               {"version", p.meta.version}};
  json subs = json::array();
  for (const auto& s : p.subproblems) {
    json js;
    js["P"] = to_json(s.P);
    js["c"] = to_json(s.c);
    js["A"] = to_json(s.A);
    js["b"] = to_json(s.b);
    js["E"] = to_json(s.E);
    js["e"] = to_json(s.e);
    subs.push_back(std::move(js));
  }
  j["subproblems"] = std::move(subs);

  json cpl;
  json Hs = json::array();
  for (const auto& H : p.coupling.H) Hs.push_back(to_json(H));
  cpl["H_blocks"] = std::move(Hs);
  cpl["d"] = to_json(p.coupling.d);
  json Fs = json::array();
  for (const auto& F : p.coupling.F) Fs.push_back(to_json(F));
  cpl["F_blocks"] = std::move(Fs);
  cpl["f"] = to_json(p.coupling.f);
  j["coupling"] = std::move(cpl);

  json pj;
  json locals = json::array();
  for (const auto& sel : p.params.local) {
    locals.push_back({{"c", indices_to_json(sel.c)},
                      {"b", indices_to_json(sel.b)},
                      {"e", indices_to_json(sel.e)}});
  }
  pj["local"] = std::move(locals);
  pj["d"] = indices_to_json(p.params.d);
  pj["f"] = indices_to_json(p.params.f);
  j["params"] = std::move(pj);
  return j;
}

// Key access and type errors from the JSON library surface as ValidationError
// so file loading keeps a single failure type.
Problem problem_from_json(const json& j) try {
  Problem p;
  if (j.contains("meta")) {
    const auto& m = j.at("meta");
    p.meta.seed = m.value("seed", std::uint64_t{0});
    p.meta.generator = m.value("generator", std::string("unknown"));
    p.meta.version = m.value("version", std::string("1"));
  }
  for (const auto& js : j.at("subproblems")) {
    Subproblem s;
    s.c = vector_from_json(js.at("c"));
    const int n = static_cast<int>(s.c.size());
    s.P = matrix_from_json(js.at("P"), n);
    s.b = vector_from_json(js.at("b"));
    s.A = matrix_from_json(js.at("A"), n);
    s.e = vector_from_json(js.at("e"));
    s.E = matrix_from_json(js.at("E"), n);
    p.subproblems.push_back(std::move(s));
  }
  const auto& cpl = j.at("coupling");
  p.coupling.d = vector_from_json(cpl.at("d"));
  p.coupling.f = vector_from_json(cpl.at("f"));
  // Either one block per subproblem or, when that constraint kind is absent,
  // no blocks at all; this mirrors the in-memory convention.
  const auto& Hs = cpl.at("H_blocks");
  const auto& Fs = cpl.at("F_blocks");
  if ((!Hs.empty() && Hs.size() != p.subproblems.size()) ||
      (!Fs.empty() && Fs.size() != p.subproblems.size()))
    throw ValidationError("coupling block count does not match subproblem count");
  for (size_t i = 0; i < p.subproblems.size(); ++i) {
    const int n = p.subproblems[i].n();
    if (!Hs.empty()) p.coupling.H.push_back(matrix_from_json(Hs.at(i), n));
    if (!Fs.empty()) p.coupling.F.push_back(matrix_from_json(Fs.at(i), n));
  }
  if (j.contains("params")) {
    const auto& pj = j.at("params");
    for (const auto& sel : pj.at("local")) {
      ParameterSelector ps;
      ps.c = indices_from_json(sel.at("c"));
      ps.b = indices_from_json(sel.at("b"));
      ps.e = indices_from_json(sel.at("e"));
      p.params.local.push_back(std::move(ps));
    }
    p.params.d = indices_from_json(pj.at("d"));
    p.params.f = indices_from_json(pj.at("f"));
  } else {
    p.params = default_parameter_map(p);
  }
  p.validate();
  return p;
} catch (const json::exception& e) {
  throw ValidationError(std::string("problem JSON has missing or mistyped fields: ") + e.what());
}

json to_json(const Solution& s) {
  json j;
  j["x"] = to_json(s.x);
  json ll = json::array();
  for (const auto& v : s.lambda_local) ll.push_back(to_json(v));
  j["lambda_local"] = std::move(ll);
  json ml = json::array();
  for (const auto& v : s.mu_local) ml.push_back(to_json(v));
  j["mu_local"] = std::move(ml);
  j["nu"] = to_json(s.nu);
  j["lambda"] = to_json(s.lambda);
  j["iterations"] = s.iterations;
  j["converged"] = s.converged;
  j["kkt_residual"] = s.kkt_residual;
  return j;
}

Solution solution_from_json(const json& j) try {
  Solution s;
  s.x = vector_from_json(j.at("x"));
  for (const auto& v : j.at("lambda_local")) s.lambda_local.push_back(vector_from_json(v));
  for (const auto& v : j.at("mu_local")) s.mu_local.push_back(vector_from_json(v));
  s.nu = vector_from_json(j.at("nu"));
  s.lambda = vector_from_json(j.at("lambda"));
  s.iterations = j.value("iterations", 0);
  s.converged = j.value("converged", false);
  s.kkt_residual = j.value("kkt_residual", 0.0);
  return s;
} catch (const json::exception& e) {
  throw ValidationError(std::string("solution JSON has missing or mistyped fields: ") + e.what());
}

json to_json(const AssumptionReport& r) {
  json j;
  j["licq"] = {{"ok", r.licq_ok}, {"min_singular_value", r.licq_min_sv}};
  j["strict_complementarity"] = {{"ok", r.strict_complementarity_ok},
                                 {"min_active_dual", r.min_active_dual},
                                 {"min_inactive_slack", r.min_inactive_slack}};
  json second;
  second["global_ok"] = r.second_order_global_ok;
  second["global_reduced_min_eig"] = r.global_reduced_min_eig;
  json lok = json::array();
  for (bool b : r.local_second_order_ok) lok.push_back(b);
  second["all_local_ok"] = r.second_order_local_ok;
  second["local_ok"] = std::move(lok);
  json leig = json::array();
  for (double v : r.local_reduced_min_eig) leig.push_back(v);
  second["local_reduced_min_eig"] = std::move(leig);
  j["second_order"] = std::move(second);
  json act;
  json al = json::array();
  for (const auto& sub : r.active.local) {
    json row = json::array();
    for (bool b : sub) row.push_back(b);
    al.push_back(std::move(row));
  }
  act["local"] = std::move(al);
  json ac = json::array();
  for (bool b : r.active.coupling) ac.push_back(b);
  act["coupling"] = std::move(ac);
  j["active"] = std::move(act);
  j["all_ok"] = r.all_ok();
  return j;
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in " + path + ": " + e.what());
  }
  return j;
}

void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  out << j.dump(2) << '\n';
}

Problem load_problem(const std::string& path) { return problem_from_json(load_json(path)); }

void save_problem(const Problem& p, const std::string& path) { save_json(to_json(p), path); }

}  // namespace ccqp
