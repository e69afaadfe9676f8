#pragma once

#include <Eigen/Dense>
#include <vector>

#include "socbench/cell_params.hpp"
#include "socbench/dataset.hpp"
#include "socbench/virtual_sensor.hpp"

namespace socbench {

enum class EkfMode { Baseline, Fusion };

// Process/measurement noise standard deviations. theta_socy is the pseudo-
// measurement channel and is only consulted in fusion mode.
struct EkfNoise {
  double sigma_soc = 1e-4;
  double sigma_ir = 1e-3;
  double sigma_v = 1e-2;
  double sigma_socy = 1e-2;

  Eigen::Vector4d as_vector() const { return {sigma_soc, sigma_ir, sigma_v, sigma_socy}; }
  static EkfNoise from_vector(const Eigen::Vector4d& v) {
    return {v(0), v(1), v(2), v(3)};
  }
  void validate(EkfMode mode) const;
};

struct EkfConfig {
  EkfMode mode = EkfMode::Baseline;
  EkfNoise noise;
  CellParams params;
  double tau_s = 1.0;
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();  // [SOC, i_R1]
  Eigen::Matrix2d sigma0 = (Eigen::Matrix2d() << 0.5, 0.0, 0.0, 0.001).finished();
  // Include d(alpha)/d(SOC) in the state Jacobian. Off by default: the term
  // is tiny and the simpler Jacobian is the documented behavior.
  bool soc_jacobian_cross_term = false;
};

struct EkfState {
  Eigen::Vector2d x;
  Eigen::Matrix2d sigma;
};

struct EkfStepResult {
  EkfState state;          // post-correction
  double v_hat = 0.0;      // pre-correction voltage prediction
  double soc_hat = 0.0;    // post-correction SOC estimate
  double innov_v = 0.0;    // y_v - v_hat
  double innov_soc = 0.0;  // NaN when no pseudo-measurement was applied
  double gain_norm = 0.0;  // Frobenius norm of K
  bool soc_in_range = true;
};

// Joseph-form covariance update (I-KH) S (I-KH)^T + K R K^T, symmetrized.
Eigen::Matrix2d joseph_update(const Eigen::Matrix2d& sigma, const Eigen::MatrixXd& k_gain,
                              const Eigen::MatrixXd& h, const Eigen::MatrixXd& r);

// One predict+correct cycle. The prediction is driven by the previous
// current sample; y is [v] for a voltage-only correction or [v, soc_pseudo]
// for a fused one (joint gain, stacked rows).
EkfStepResult ekf_step(const EkfState& state, const EkfConfig& cfg, double i_prev, double i_now,
                       const Eigen::VectorXd& y);

struct EkfRun {
  Eigen::VectorXd soc_hat;
  Eigen::VectorXd v_hat;
  Eigen::VectorXd innov_v;
  Eigen::VectorXd innov_soc;  // NaN where no pseudo-measurement was applied
  Eigen::VectorXd gain_norm;
};

// Filters a whole log. The dataset's reference column is never read; pass a
// stripped dataset to make that structural. In fusion mode the virtual
// sensor produces the pseudo-measurement before each correction and the
// filter falls back to voltage-only corrections during the sensor's warm-up
// (max of bank order and feature window). step_times_s, when given, receives
// the wall-clock seconds of each full step (including the sensor's share).
EkfRun run_ekf(const EkfConfig& cfg, const TimeSeriesDataset& d, VirtualSensor* vs = nullptr,
               std::vector<double>* step_times_s = nullptr);

}  // namespace socbench
