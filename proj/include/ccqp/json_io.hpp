#pragma once

#include <string>

#include <json.hpp>

#include "ccqp/model.hpp"
#include "ccqp/solver.hpp"

namespace ccqp {

// Matrices serialize as row-major nested arrays, vectors as flat arrays.
// A matrix with zero rows serializes as []; callers that parse one must
// supply the column count, which is always recoverable from context
// (constraint blocks share their width with the subproblem dimension).
nlohmann::json to_json(const Matrix& m);
nlohmann::json to_json(const Vector& v);
Matrix matrix_from_json(const nlohmann::json& j, int cols_if_empty);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Problem& p);
Problem problem_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Solution& s);
Solution solution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AssumptionReport& r);

// File helpers. Loading throws ValidationError on unreadable or malformed
// input; the parsed problem is validated before it is returned.
nlohmann::json load_json(const std::string& path);
void save_json(const nlohmann::json& j, const std::string& path);
Problem load_problem(const std::string& path);
void save_problem(const Problem& p, const std::string& path);

}  // namespace ccqp
