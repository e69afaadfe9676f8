#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>

namespace socbench {

struct LevMarOptions {
  int max_iter = 200;
  double lambda0 = 1e-3;
  double step_tol = 1e-12;   // on the parameter step norm
  double cost_tol = 1e-14;   // on the relative cost decrease
  double grad_tol = 1e-12;   // on the gradient infinity norm
};

struct LevMarResult {
  Eigen::VectorXd x;
  double cost = std::numeric_limits<double>::infinity();  // 0.5 * ||r||^2
  int iterations = 0;
  bool converged = false;
};

// Levenberg-Marquardt on residual functions with analytic Jacobians.
// F has signature void(const VectorXd& x, VectorXd& r, MatrixXd& J).
// Damping multiplies the diagonal of J^T J; classic accept/reject schedule.
template <typename F>
LevMarResult levmar(F&& fun, Eigen::VectorXd x, const LevMarOptions& opt = {}) {
  LevMarResult res;
  Eigen::VectorXd r;
  Eigen::MatrixXd J;
  fun(x, r, J);
  double cost = 0.5 * r.squaredNorm();
  double lambda = opt.lambda0;
  const Eigen::Index dim = x.size();

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    Eigen::MatrixXd jtj = J.transpose() * J;
    Eigen::VectorXd g = J.transpose() * r;
    if (g.lpNorm<Eigen::Infinity>() < opt.grad_tol) {
      res.converged = true;
      break;
    }

    bool accepted = false;
    for (int tries = 0; tries < 40; ++tries) {
      Eigen::MatrixXd damped = jtj;
      // Floor the damping scale so flat directions stay solvable.
      for (Eigen::Index n = 0; n < dim; ++n)
        damped(n, n) += lambda * std::max(jtj(n, n), 1e-12);
      Eigen::VectorXd step = damped.ldlt().solve(-g);
      if (!step.allFinite()) {
        lambda *= 3.0;
        continue;
      }
      Eigen::VectorXd x_new = x + step;
      Eigen::VectorXd r_new;
      Eigen::MatrixXd J_new;
      fun(x_new, r_new, J_new);
      double cost_new = 0.5 * r_new.squaredNorm();
      if (std::isfinite(cost_new) && cost_new < cost) {
        double decrease = (cost - cost_new) / std::max(cost, 1e-300);
        x = x_new;
        r.swap(r_new);
        J.swap(J_new);
        double step_norm = step.norm();
        cost = cost_new;
        lambda = std::max(lambda / 2.0, 1e-12);
        accepted = true;
        if (step_norm < opt.step_tol * (1.0 + x.norm()) || decrease < opt.cost_tol)
          res.converged = true;
        break;
      }
      lambda *= 3.0;
      if (lambda > 1e14) break;
    }
    if (!accepted || res.converged) {
      // No acceptable step at any damping means a (local) minimum.
      if (!accepted) res.converged = g.lpNorm<Eigen::Infinity>() < 1e-6 * (1.0 + cost);
      break;
    }
  }
  res.x = x;
  res.cost = cost;
  return res;
}

}  // namespace socbench
