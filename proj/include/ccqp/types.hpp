#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace ccqp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Thrown when problem data fails shape or value validation.
struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Thrown when a linear system required by the method is singular after
// regularization retries, or an iteration breaks down numerically.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A subproblem's stationarity system is singular; carries the subproblem index.
struct SingularLocalSystem : NumericalError {
  int subproblem;
  explicit SingularLocalSystem(int i)
      : NumericalError("local sensitivity system is singular for subproblem " +
                       std::to_string(i)),
        subproblem(i) {}
};

// The coupling sensitivity system is singular.
struct SingularCouplingSystem : NumericalError {
  SingularCouplingSystem() : NumericalError("coupling sensitivity system is singular") {}
};

// A node's projected coupling block is singular; carries the node index.
struct SingularProjectedSystem : NumericalError {
  int node;
  explicit SingularProjectedSystem(int k)
      : NumericalError("projected coupling block is singular at node " + std::to_string(k)),
        node(k) {}
};

// A finite-difference probe crossed an active-set boundary; carries the
// offending parameter index.
struct ActiveSetFlip : NumericalError {
  int parameter;
  explicit ActiveSetFlip(int p)
      : NumericalError("active set changed under perturbation of parameter " +
                       std::to_string(p)),
        parameter(p) {}
};

}  // namespace ccqp
