#pragma once

#include <Eigen/Dense>

namespace socbench {

// Affine ARX parameter vector gamma = [a_M..a_1, b_M..b_1, c], matching the
// regressor [-v[k-M]..-v[k-1], i[k-M]..i[k-1], 1]:
//   v[k] = -sum_m a_m v[k-m] + sum_m b_m i[k-m] + c
struct ArxParams {
  Eigen::VectorXd gamma;

  int order() const { return static_cast<int>((gamma.size() - 1) / 2); }
  double a(int m) const { return gamma(order() - m); }           // m in [1, M]
  double b(int m) const { return gamma(2 * order() - m); }       // m in [1, M]
  double c() const { return gamma(2 * order()); }

  // Validates an odd length >= 3.
  static ArxParams from_gamma(Eigen::VectorXd g);
};

// Observer-canonical affine realization with output injection gain:
//   x[k+1] = A x[k] + B i[k] + d - L (v_hat[k] - v[k]),  v_hat[k] = C x[k] + e
// A is companion (first column -a_1..-a_M, ones on the superdiagonal),
// B = [b_1..b_M], C = e_1^T, d = c e_1, e = 0; char(A) = z^M + a_1 z^^{M-1}
// + .. + a_M. L is empty until placed (open loop).
struct LocalObserver {
  Eigen::MatrixXd A;
  Eigen::VectorXd B;
  Eigen::RowVectorXd C;
  Eigen::VectorXd d;
  double e = 0.0;
  Eigen::VectorXd L;
  double soc_tag = 0.0;

  int order() const { return static_cast<int>(A.rows()); }
};

struct ArxRealizationInfo {
  bool reduced = false;
  int cancelled = 0;
};

// Canonical realization. Near pole-zero cancellations of the i->v transfer
// (within cancel_tol) are deflated into a reduced-order realization with the
// affine channel rescaled to keep the DC behavior; info reports it.
LocalObserver arx_to_ss(const ArxParams& g, ArxRealizationInfo* info = nullptr,
                        double cancel_tol = 1e-8);

// Deadbeat-style placement of all observer eigenvalues at pole_radius by
// matching companion coefficients against (z - p)^M. Requires |p| < 1 and an
// observable (A, C) pair (always true for the canonical form).
void place_observer_gain(LocalObserver& obs, double pole_radius);

// State reproducing an ARX recursion whose input/output history is all zero;
// equals the affine input vector d. Test construct.
Eigen::VectorXd zero_history_state(const LocalObserver& obs);

// One correction step: returns the signed innovation eps = v_hat - v and
// advances the state. An empty L runs the observer open loop.
double observer_step(const LocalObserver& obs, Eigen::VectorXd& state, double i, double v,
                     double* v_hat_out = nullptr);

}  // namespace socbench
