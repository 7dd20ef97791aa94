#pragma once

#include <Eigen/Dense>
#include <functional>

namespace hiermodel {

struct MinimizeOptions {
  int max_iterations = 500;
  double f_tol = 1e-9;     // |delta F| threshold
  double grad_tol = 1e-6;  // gradient infinity-norm threshold
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd gradient;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// BFGS with backtracking (Armijo) line search.  The objective returns the
// function value and fills the gradient.
using Objective =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

MinimizeResult minimize_bfgs(const Objective& objective,
                             const Eigen::VectorXd& start,
                             const MinimizeOptions& options = {});

} // namespace hiermodel
