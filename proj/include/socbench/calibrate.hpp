#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>

#include "socbench/ekf.hpp"

namespace socbench {

// Tracking/smoothness trade-off weights. J1 (voltage RMSE) is normalized by
// the declared voltage span before weighting.
struct CostWeights {
  double w1 = 0.5;
  double w2 = 1.0;
  double w3 = 5.0;
  double v_max = 4.2;
  double v_min = 2.5;
};

struct CostBreakdown {
  double j = 0.0;
  double j1 = 0.0;  // voltage RMSE, volts (raw)
  double j2 = 0.0;  // SOC RMSE
  double j3 = 0.0;  // SOC total variation
  bool failed = false;
  std::string diagnostic;
};

// Scores one noise parameterization by running the filter over the reference
// log (which must carry the reference SOC; the filter itself sees a stripped
// copy). A filter failure returns an infinite-cost breakdown instead of
// throwing, so optimizers can treat it as a bad sample.
CostBreakdown cost_j(const EkfNoise& noise, const EkfConfig& base_cfg,
                     const TimeSeriesDataset& d_ref, const VirtualSensor* vs_proto,
                     const CostWeights& weights);

struct BboOptions {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  int budget = 100;
  std::uint64_t seed = 0;
  bool log_scale = true;    // optimize in log10 coordinates (bounds must be > 0)
  bool pure_random = false; // fallback: plain random search
};

struct BboHistory {
  Eigen::MatrixXd points;      // one evaluated point per row, original scale
  Eigen::VectorXd values;      // raw objective values (may be +inf)
  Eigen::VectorXd incumbent;   // running best value, non-increasing
  Eigen::Index best_index = -1;
};

// Derivative-free box-constrained minimizer: seeded Latin hypercube start,
// cubic RBF surrogate with a linear tail, acquisition = surrogate minus a
// decaying distance-based exploration bonus, minimized by seeded multi-start
// compass search. Infinite objective values enter the surrogate as a
// worst-times-ten sentinel. Deterministic for a fixed seed. The returned
// point lies exactly within [lower, upper].
Eigen::VectorXd bbo_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const BboOptions& opt, BboHistory* hist = nullptr);

struct CalibrationResult {
  EkfNoise noise;
  CostBreakdown best;
  BboHistory history;
};

// Black-box noise calibration over theta_KF = [sigma_soc, sigma_ir, sigma_v,
// sigma_socy] in [1e-6, 1]^4. Baseline mode optimizes the first three
// coordinates (the pseudo-measurement channel is inert) with the fourth held
// at 1e-3 in the log. When log_csv_path is nonempty, every evaluation is
// recorded there (header: eval,theta_soc,theta_ir,theta_v,theta_socy,J,J1,J2,J3).
CalibrationResult calibrate_filter(const EkfConfig& base_cfg, const TimeSeriesDataset& d_tr,
                                   const VirtualSensor* vs_proto, const BboOptions& opt,
                                   const CostWeights& weights,
                                   const std::string& log_csv_path = "");

}  // namespace socbench
