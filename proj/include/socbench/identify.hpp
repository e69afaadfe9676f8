#pragma once

#include <Eigen/Dense>
#include <vector>

#include "socbench/cell_params.hpp"
#include "socbench/dataset.hpp"

namespace socbench {

// Discharged capacity in A*s from a constant-current discharge log.
// Every sample must be discharging (i > 0).
double estimate_capacity(const TimeSeriesDataset& discharge);

// Charge throughput ratio (discharged / charged). The discharge log must be
// all i > 0 and the charge log all i < 0.
double estimate_coulombic_eff(const TimeSeriesDataset& discharge,
                              const TimeSeriesDataset& charge);

// OLS polynomial fit of terminal voltage against the reference SOC column of
// the merged low-current logs. Degree-8 by default. The small IR drop biases
// the two phases in opposite directions, which is why they are merged.
Eigen::VectorXd fit_ocv_poly(const std::vector<const TimeSeriesDataset*>& datasets, int degree);

// Single-equilibrium impedance fit of z(w) = r0 + r1/(1 + j w tau1).
// Points with positive imaginary part are excluded up front (inductive
// artifacts); the count is reported. The solver runs Levenberg-Marquardt in
// log-parameters (positivity by construction) from 8 starts with tau1
// log-spaced in [0.1, 1000] s.
struct EquilibriumFit {
  double soc_bar = 0.0;
  double r0 = 0.0;
  double r1 = 0.0;
  double tau1 = 0.0;
  double residual = 0.0;  // RMS complex misfit, ohm
  int excluded_points = 0;
};
EquilibriumFit fit_impedance(const std::vector<ImpedancePoint>& points);

// SOC-dependence fits across equilibria: exponential curves for r0 and r1
// (grid-plus-linear fallback when the nonlinear fit stalls) and a cubic
// polynomial for tau1. Requires >= 4 equilibria spanning >= 0.5 of SOC range.
struct ParamCurveFit {
  Eigen::Vector3d theta_r0;
  Eigen::Vector3d theta_r1;
  Eigen::VectorXd theta_tau1;
  bool fallback_r0 = false;
  bool fallback_r1 = false;
};
ParamCurveFit fit_param_curves(const std::vector<EquilibriumFit>& fits);

// Full identification round-trip from protocol logs to a CellParams that the
// simulator can consume. v_min/v_max are carried over from the declared cell
// window, not identified.
struct IdentificationResult {
  CellParams params;
  std::vector<EquilibriumFit> equilibria;
  bool curve_fallback = false;
};
IdentificationResult identify_cell(const TimeSeriesDataset& discharge,
                                   const TimeSeriesDataset& charge, const GeisDataset& geis,
                                   double v_min, double v_max, int ocv_degree = 8);

void write_equilibrium_fits_csv(const std::string& path,
                                const std::vector<EquilibriumFit>& fits);
std::vector<EquilibriumFit> read_equilibrium_fits_csv(const std::string& path);

}  // namespace socbench
