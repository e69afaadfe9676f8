#include "socbench/cell_params.hpp"

#include <cmath>
#include <stdexcept>

#include "socbench/common.hpp"

namespace socbench {

double polyval(const Eigen::VectorXd& coeffs, double x) {
  if (coeffs.size() == 0) throw std::invalid_argument("polyval: empty coefficients");
  double acc = 0.0;
  for (Eigen::Index n = coeffs.size() - 1; n >= 0; --n) acc = acc * x + coeffs(n);
  return acc;
}

Eigen::VectorXd polyder(const Eigen::VectorXd& coeffs) {
  if (coeffs.size() <= 1) return Eigen::VectorXd::Zero(1);
  Eigen::VectorXd d(coeffs.size() - 1);
  for (Eigen::Index n = 1; n < coeffs.size(); ++n) d(n - 1) = coeffs(n) * static_cast<double>(n);
  return d;
}

namespace {

// Shifted Legendre polynomial on [0,1], monomial basis, constant term first.
// Coefficients are the exact integers (-1)^(n+k) C(n,k) C(n+k,k); every
// intermediate below is an integer well inside the 2^53 exact range.
Eigen::VectorXd shifted_legendre(int n) {
  auto binom = [](int a, int b) {
    double r = 1.0;
    for (int j = 0; j < b; ++j) r = r * (a - j) / (j + 1);
    return r;
  };
  Eigen::VectorXd c(n + 1);
  for (int k = 0; k <= n; ++k)
    c(k) = (((n + k) % 2 == 0) ? 1.0 : -1.0) * binom(n, k) * binom(n + k, k);
  return c;
}

}  // namespace

double exp_curve(const Eigen::Vector3d& theta, double s) {
  return theta(0) * std::exp(-theta(1) * s) + theta(2);
}

double exp_curve_deriv(const Eigen::Vector3d& theta, double s) {
  return -theta(0) * theta(1) * std::exp(-theta(1) * s);
}

void CellParams::validate() const {
  if (!(q_total > 0.0)) throw std::invalid_argument("cell: q_total must be > 0");
  if (!(eta_c > 0.0) || eta_c > 1.0) throw std::invalid_argument("cell: eta_c must be in (0,1]");
  if (!(v_min < v_max)) throw std::invalid_argument("cell: v_min must be < v_max");
  if (theta_ocv.size() < 2) throw std::invalid_argument("cell: theta_ocv needs degree >= 1");
  if (theta_tau1.size() < 1) throw std::invalid_argument("cell: theta_tau1 is empty");
  for (int n = 0; n <= 100; ++n) {
    double s = n / 100.0;
    if (!(tau1(s) > 0.0))
      throw std::invalid_argument("cell: tau1 must stay positive on [0,1], fails at soc=" +
                                  fmt_double(s));
    if (r0(s) < 0.0 || r1(s) < 0.0)
      throw std::invalid_argument("cell: resistances must stay nonnegative on [0,1]");
  }
}

CellParams default_cell_params() {
  CellParams p;
  p.q_total = 17640.0;
  p.eta_c = 0.99;
  // Backbone: antiderivative of 7*(1-s)^7 + 0.5 + 1.2*s^7, so both ends are
  // steep. Staging: 0.038*L9 - 0.030*L11 with L_n the shifted Legendre
  // polynomials, plus a constant/linear re-anchor to OCV(0) = 2.52 and
  // OCV(1) = 4.19. The Legendre part is orthogonal to every polynomial of
  // degree <= 8 under uniform SOC weight while the re-anchor lies inside
  // that basis, so a degree-8 equilibrium-voltage fit reproduces everything
  // except ~17 mV staging undulations, much like the low-order fits of a
  // real graphite cell. The summed derivative stays above 0.33 V per unit
  // SOC: strictly increasing, with no flat spots for a voltage-based
  // estimator to get lost on.
  Eigen::VectorXd th = Eigen::VectorXd::Zero(12);
  th.head(9) << 2.52, 7.5, -24.5, 49.0, -61.25, 49.0, -24.5, 7.0, -0.725;
  th.head(10) += 0.038 * shifted_legendre(9);
  th += -0.030 * shifted_legendre(11);
  th(0) += 2.52 - polyval(th, 0.0);
  th(1) += 4.19 - polyval(th, 1.0);
  p.theta_ocv = th;
  // The small-signal dynamics vary strongly with SOC; the scheduled local
  // models are only distinguishable because of this spread.
  p.theta_r0 << 0.020, 3.0, 0.010;  // 30 mohm at soc 0 down to 11 mohm
  p.theta_r1 << 0.020, 4.0, 0.009;  // 29 mohm down to ~9.4 mohm
  p.theta_tau1.resize(4);
  p.theta_tau1 << 2.0, 14.0, -10.0, 4.0;  // 2 s at soc 0 up to 10 s at soc 1, monotone
  p.v_min = 2.5;
  p.v_max = 4.2;
  p.validate();
  return p;
}

void cell_params_to_config(const CellParams& p, Config& cfg) {
  cfg.set("cell.q_total_As", p.q_total);
  cfg.set("cell.eta_c", p.eta_c);
  cfg.set("cell.theta_ocv", p.theta_ocv);
  cfg.set("cell.theta_r0", Eigen::VectorXd(p.theta_r0));
  cfg.set("cell.theta_r1", Eigen::VectorXd(p.theta_r1));
  cfg.set("cell.theta_tau1", p.theta_tau1);
  cfg.set("cell.v_min", p.v_min);
  cfg.set("cell.v_max", p.v_max);
}

CellParams cell_params_from_config(const Config& cfg) {
  CellParams p;
  p.q_total = cfg.get_double("cell.q_total_As");
  p.eta_c = cfg.get_double("cell.eta_c");
  p.theta_ocv = cfg.get_vector("cell.theta_ocv");
  Eigen::VectorXd r0 = cfg.get_vector("cell.theta_r0");
  Eigen::VectorXd r1 = cfg.get_vector("cell.theta_r1");
  if (r0.size() != 3 || r1.size() != 3)
    throw ConfigError("cell.theta_r0/theta_r1 must have exactly 3 coefficients");
  p.theta_r0 = r0;
  p.theta_r1 = r1;
  p.theta_tau1 = cfg.get_vector("cell.theta_tau1");
  p.v_min = cfg.get_double("cell.v_min", 2.5);
  p.v_max = cfg.get_double("cell.v_max", 4.2);
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return p;
}

void save_cell_params(const std::string& path, const CellParams& p) {
  Config cfg;
  cell_params_to_config(p, cfg);
  cfg.save(path);
}

CellParams load_cell_params(const std::string& path) {
  return cell_params_from_config(Config::from_file(path));
}

}  // namespace socbench
