#include "hiermodel/optim.hpp"

#include <cmath>
#include <limits>

namespace hiermodel {

MinimizeResult minimize_bfgs(const Objective& objective,
                             const Eigen::VectorXd& start,
                             const MinimizeOptions& options) {
  const int n = static_cast<int>(start.size());
  MinimizeResult res;
  res.x = start;
  res.gradient.resize(n);
  res.f = objective(res.x, res.gradient);

  Eigen::MatrixXd h_inv = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd grad_new(n);

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    res.iterations = iter + 1;
    res.grad_norm = res.gradient.lpNorm<Eigen::Infinity>();
    if (res.grad_norm < options.grad_tol) {
      res.converged = true;
      return res;
    }

    Eigen::VectorXd dir = -h_inv * res.gradient;
    double slope = dir.dot(res.gradient);
    if (slope >= 0.0) {  // reset on loss of descent direction
      h_inv.setIdentity();
      dir = -res.gradient;
      slope = dir.dot(res.gradient);
    }

    // backtracking Armijo search
    double step = 1.0;
    double f_new = std::numeric_limits<double>::infinity();
    Eigen::VectorXd x_new;
    constexpr double c1 = 1e-4;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = res.x + step * dir;
      f_new = objective(x_new, grad_new);
      if (std::isfinite(f_new) && f_new <= res.f + c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      res.grad_norm = res.gradient.lpNorm<Eigen::Infinity>();
      return res;  // line search stalled
    }

    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = grad_new - res.gradient;
    const double sy = s.dot(y);
    const double f_delta = std::fabs(res.f - f_new);
    res.x = x_new;
    res.f = f_new;
    res.gradient = grad_new;

    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd i = Eigen::MatrixXd::Identity(n, n);
      h_inv = (i - rho * s * y.transpose()) * h_inv *
                  (i - rho * y * s.transpose()) +
              rho * s * s.transpose();
    }

    res.grad_norm = res.gradient.lpNorm<Eigen::Infinity>();
    if (f_delta < options.f_tol && res.grad_norm < options.grad_tol) {
      res.converged = true;
      return res;
    }
  }
  res.converged = res.grad_norm < options.grad_tol;
  return res;
}

} // namespace hiermodel
