#pragma once

#include <Eigen/Dense>
#include <string>

#include "socbench/config.hpp"

namespace socbench {

// Horner evaluation; coefficients ordered constant-first.
double polyval(const Eigen::VectorXd& coeffs, double x);
// Derivative coefficients, also constant-first.
Eigen::VectorXd polyder(const Eigen::VectorXd& coeffs);

// theta = [t1, t2, t3] parameterizing t1*exp(-t2*s) + t3.
double exp_curve(const Eigen::Vector3d& theta, double s);
double exp_curve_deriv(const Eigen::Vector3d& theta, double s);

// First-order Thevenin cell: OCV polynomial, SOC-scheduled series and
// diffusion resistances, SOC-scheduled diffusion time constant, capacity in
// ampere-seconds and charging efficiency. v_min/v_max are the cell's declared
// cut-off voltages.
struct CellParams {
  double q_total = 17640.0;  // A*s (4.9 Ah)
  double eta_c = 0.99;
  Eigen::VectorXd theta_ocv;   // constant-first polynomial coefficients
  Eigen::Vector3d theta_r0;    // ohm: t1*exp(-t2*s)+t3
  Eigen::Vector3d theta_r1;    // ohm
  Eigen::VectorXd theta_tau1;  // s: constant-first polynomial coefficients
  double v_min = 2.5;
  double v_max = 4.2;

  double ocv(double s) const { return polyval(theta_ocv, s); }
  double ocv_prime(double s) const { return polyval(polyder(theta_ocv), s); }
  double r0(double s) const { return exp_curve(theta_r0, s); }
  double r0_prime(double s) const { return exp_curve_deriv(theta_r0, s); }
  double r1(double s) const { return exp_curve(theta_r1, s); }
  double r1_prime(double s) const { return exp_curve_deriv(theta_r1, s); }
  double tau1(double s) const { return polyval(theta_tau1, s); }

  // Throws std::invalid_argument when a physical constraint is violated:
  // q_total > 0, eta_c in (0,1], v_min < v_max, tau1 > 0 and r0,r1 >= 0
  // over SOC in [0,1].
  void validate() const;
};

// The default ground-truth parameterization used by the synthetic workbench.
// OCV spans [2.52, 4.19] V over SOC [0,1], strictly inside the cut-offs, so
// constant-current protocols terminate at the SOC bounds with near-cut-off
// terminal voltage.
CellParams default_cell_params();

// Round-trip through the key/value config format under the "cell." prefix.
// Identified parameters are written to the same format the simulator reads.
void cell_params_to_config(const CellParams& p, Config& cfg);
CellParams cell_params_from_config(const Config& cfg);
void save_cell_params(const std::string& path, const CellParams& p);
CellParams load_cell_params(const std::string& path);

}  // namespace socbench
