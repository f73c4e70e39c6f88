#include "wellflow/nnls.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace wellflow {

namespace {

constexpr double kFeasTol = 1e-9;

// Solves the equality-constrained QP restricted to the working set W:
//   [H  Aw'] [p     ]   [-(H x + g)]
//   [Aw  0 ] [lambda] = [     0    ]
// Returns false when the KKT matrix is numerically singular.
bool kkt_step(const Eigen::MatrixXd& h, const Eigen::VectorXd& g, const Eigen::MatrixXd& c_all,
              const std::vector<int>& working, const Eigen::VectorXd& x, Eigen::VectorXd* p,
              Eigen::VectorXd* lambda) {
  const int n = static_cast<int>(h.rows());
  const int m = static_cast<int>(working.size());
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
  kkt.topLeftCorner(n, n) = h;
  for (int j = 0; j < m; ++j) {
    kkt.block(n + j, 0, 1, n) = c_all.row(working[static_cast<std::size_t>(j)]);
    kkt.block(0, n + j, n, 1) = c_all.row(working[static_cast<std::size_t>(j)]).transpose();
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = -(h * x + g);

  Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
  if (!lu.isInvertible()) return false;
  const Eigen::VectorXd sol = lu.solve(rhs);
  *p = sol.head(n);
  if (m > 0) *lambda = sol.tail(m);
  else *lambda = Eigen::VectorXd();
  return true;
}

}  // namespace

QpResult solve_qp(const QpProblem& qp, const Eigen::VectorXd& x0, int max_iterations) {
  const int n = static_cast<int>(qp.hessian.rows());
  const int n_eq = static_cast<int>(qp.c_eq.rows());
  const int n_in = static_cast<int>(qp.c_in.rows());
  if (max_iterations <= 0) max_iterations = 50 * (n + n_eq + n_in + 2);

  // One stacked constraint matrix; rows [0, n_eq) are equalities.
  Eigen::MatrixXd c_all(n_eq + n_in, n);
  if (n_eq > 0) c_all.topRows(n_eq) = qp.c_eq;
  if (n_in > 0) c_all.bottomRows(n_in) = qp.c_in;

  const double scale = std::max(1.0, x0.cwiseAbs().maxCoeff());
  for (int i = 0; i < n_eq; ++i) {
    if (std::abs(qp.c_eq.row(i).dot(x0) - qp.d_eq(i)) > kFeasTol * scale)
      throw std::invalid_argument("QP start violates an equality constraint");
  }
  for (int i = 0; i < n_in; ++i) {
    if (qp.c_in.row(i).dot(x0) - qp.d_in(i) > kFeasTol * scale)
      throw std::invalid_argument("QP start violates an inequality constraint");
  }

  // A mild ridge keeps the KKT system solvable when H is rank-deficient
  // (e.g. a regressor column is identically zero).
  Eigen::MatrixXd h = qp.hessian;
  const double ridge = 1e-12 * std::max(1.0, h.diagonal().maxCoeff());
  h.diagonal().array() += ridge;

  Eigen::VectorXd x = x0;
  std::vector<int> working;
  for (int i = 0; i < n_eq; ++i) working.push_back(i);
  for (int i = 0; i < n_in; ++i) {
    if (std::abs(qp.c_in.row(i).dot(x) - qp.d_in(i)) <= kFeasTol * scale)
      working.push_back(n_eq + i);
  }

  QpResult res;
  Eigen::VectorXd p, lambda;
  for (int iter = 0; iter < max_iterations; ++iter) {
    res.iterations = iter + 1;
    if (!kkt_step(h, qp.gradient, c_all, working, x, &p, &lambda)) {
      // degenerate working set: drop the most recently added inequality
      bool dropped = false;
      for (auto it = working.rbegin(); it != working.rend(); ++it) {
        if (*it >= n_eq) {
          working.erase(std::next(it).base());
          dropped = true;
          break;
        }
      }
      if (!dropped) break;
      continue;
    }

    const double pscale = std::max(1.0, x.cwiseAbs().maxCoeff());
    if (p.cwiseAbs().maxCoeff() <= 1e-11 * pscale) {
      // stationary on the working set: check multipliers of inequalities
      int worst = -1;
      double worst_lambda = -1e-9;
      for (int j = 0; j < static_cast<int>(working.size()); ++j) {
        if (working[static_cast<std::size_t>(j)] < n_eq) continue;
        if (lambda(j) < worst_lambda) {
          worst_lambda = lambda(j);
          worst = j;
        }
      }
      if (worst < 0) {
        res.x = x;
        res.converged = true;
        return res;
      }
      working.erase(working.begin() + worst);
      continue;
    }

    // step length to the nearest blocking inequality constraint
    double alpha = 1.0;
    int blocker = -1;
    for (int i = 0; i < n_in; ++i) {
      const int row = n_eq + i;
      if (std::find(working.begin(), working.end(), row) != working.end()) continue;
      const double dir = qp.c_in.row(i).dot(p);
      if (dir > 1e-14) {
        const double room = qp.d_in(i) - qp.c_in.row(i).dot(x);
        const double limit = std::max(0.0, room) / dir;
        if (limit < alpha) {
          alpha = limit;
          blocker = row;
        }
      }
    }
    x += alpha * p;
    if (blocker >= 0) working.push_back(blocker);
  }

  res.x = x;
  res.converged = false;
  return res;
}

QpResult bounded_least_squares(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                               const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                               const Eigen::MatrixXd& c_in, const Eigen::VectorXd& d_in,
                               const Eigen::MatrixXd& c_eq, const Eigen::VectorXd& d_eq,
                               const Eigen::VectorXd* x0) {
  const int n = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();

  QpProblem qp;
  qp.hessian = a.transpose() * a;
  qp.gradient = -a.transpose() * b;

  int n_bound = 0;
  for (int i = 0; i < n; ++i) {
    if (lower(i) > -inf) ++n_bound;
    if (upper(i) < inf) ++n_bound;
  }
  qp.c_in.resize(n_bound + c_in.rows(), n);
  qp.d_in.resize(n_bound + c_in.rows());
  qp.c_in.setZero();
  int row = 0;
  for (int i = 0; i < n; ++i) {
    if (lower(i) > -inf) {
      qp.c_in(row, i) = -1.0;
      qp.d_in(row) = -lower(i);
      ++row;
    }
    if (upper(i) < inf) {
      qp.c_in(row, i) = 1.0;
      qp.d_in(row) = upper(i);
      ++row;
    }
  }
  if (c_in.rows() > 0) {
    qp.c_in.bottomRows(c_in.rows()) = c_in;
    qp.d_in.tail(d_in.size()) = d_in;
  }
  qp.c_eq = c_eq;
  qp.d_eq = d_eq;

  Eigen::VectorXd start;
  if (x0) {
    start = *x0;
  } else {
    start = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      if (lower(i) > -inf) v = std::max(v, lower(i));
      if (upper(i) < inf) v = std::min(v, upper(i));
      start(i) = v;
    }
  }
  return solve_qp(qp, start);
}

}  // namespace wellflow
