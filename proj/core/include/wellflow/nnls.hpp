#pragma once

// Small dense convex QP solver (primal active set) for the constrained
// linear least-squares subproblems of the model fits:
//
//   min 0.5 x'Hx + g'x   s.t.  C_eq x = d_eq,  C_in x <= d_in
//
// Bounds are passed as rows of C_in. Problem sizes here are tiny (a handful
// of wells), so the KKT systems are solved densely per iteration.

#include <Eigen/Dense>
#include <stdexcept>

namespace wellflow {

struct QpProblem {
  Eigen::MatrixXd hessian;  // symmetric PSD
  Eigen::VectorXd gradient;
  Eigen::MatrixXd c_eq;  // may have zero rows
  Eigen::VectorXd d_eq;
  Eigen::MatrixXd c_in;  // may have zero rows
  Eigen::VectorXd d_in;
};

struct QpResult {
  Eigen::VectorXd x;
  bool converged = false;
  int iterations = 0;
};

/// `x0` must be feasible; throws std::invalid_argument otherwise.
QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& x0, int max_iterations = 0);

/// min ||A x - b||^2 subject to lower <= x <= upper (entries may be +-inf),
/// plus optional general rows. Feasible start is built internally.
QpResult bounded_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const Eigen::MatrixXd& c_in = {}, const Eigen::VectorXd& d_in = {},
                               const Eigen::MatrixXd& c_eq = {}, const Eigen::VectorXd& d_eq = {},
                               const Eigen::VectorXd* x0 = nullptr);

}  // namespace wellflow
