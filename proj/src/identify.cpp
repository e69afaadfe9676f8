#include "socbench/identify.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>

#include "socbench/common.hpp"
#include "socbench/csv.hpp"
#include "socbench/levmar.hpp"

namespace socbench {

namespace {

Eigen::MatrixXd vandermonde(const Eigen::VectorXd& x, int degree) {
  Eigen::MatrixXd v(x.size(), degree + 1);
  v.col(0).setOnes();
  for (int d = 1; d <= degree; ++d) v.col(d) = v.col(d - 1).cwiseProduct(x);
  return v;
}

// OLS through SVD with an explicit conditioning check.
Eigen::VectorXd solve_ols(const Eigen::MatrixXd& a, const Eigen::VectorXd& y,
                          const char* what) {
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double gap = sv(sv.size() - 1) / sv(0);
  if (!(gap > 1e-12))
    throw NumericalError(std::string(what) + ": rank-deficient design, singular values span " +
                         fmt_double(sv(0)) + " down to " + fmt_double(sv(sv.size() - 1)));
  return svd.solve(y);
}

// Linear subproblem of the exponential curve: for fixed t2, the model is
// linear in (t1, t3).
Eigen::Vector2d exp_linear_sub(const Eigen::VectorXd& s, const Eigen::VectorXd& y, double t2,
                               double* cost = nullptr) {
  Eigen::MatrixXd a(s.size(), 2);
  a.col(0) = (-t2 * s.array()).exp();
  a.col(1).setOnes();
  Eigen::Vector2d t13 = (a.transpose() * a + 1e-14 * Eigen::Matrix2d::Identity())
                            .ldlt()
                            .solve(a.transpose() * y);
  if (cost) *cost = (a * t13 - y).squaredNorm();
  return t13;
}

}  // namespace

double estimate_capacity(const TimeSeriesDataset& discharge) {
  if (discharge.samples.empty()) throw std::invalid_argument("estimate_capacity: empty log");
  double sum = 0.0;
  for (const auto& s : discharge.samples) {
    if (!(s.i > 0.0))
      throw std::invalid_argument("estimate_capacity: non-discharging sample at k=" +
                                  std::to_string(s.k) + " violates the protocol");
    sum += s.i;
  }
  return discharge.tau_s * sum;
}

double estimate_coulombic_eff(const TimeSeriesDataset& discharge,
                              const TimeSeriesDataset& charge) {
  const double discharged = estimate_capacity(discharge);
  if (charge.samples.empty()) throw std::invalid_argument("estimate_coulombic_eff: empty log");
  double charged = 0.0;
  for (const auto& s : charge.samples) {
    if (!(s.i < 0.0))
      throw std::invalid_argument("estimate_coulombic_eff: non-charging sample at k=" +
                                  std::to_string(s.k) + " violates the protocol");
    charged += -s.i;
  }
  charged *= charge.tau_s;
  if (charged <= 0.0)
    throw std::invalid_argument("estimate_coulombic_eff: zero charge throughput");
  return discharged / charged;
}

Eigen::VectorXd fit_ocv_poly(const std::vector<const TimeSeriesDataset*>& datasets, int degree) {
  if (degree < 1) throw std::invalid_argument("fit_ocv_poly: degree must be >= 1");
  Eigen::Index total = 0;
  for (const auto* d : datasets) {
    if (!d) throw std::invalid_argument("fit_ocv_poly: null dataset");
    total += d->size();
  }
  if (total <= degree) throw std::invalid_argument("fit_ocv_poly: not enough samples");
  Eigen::VectorXd soc(total), v(total);
  Eigen::Index pos = 0;
  for (const auto* d : datasets) {
    soc.segment(pos, d->size()) = d->socs();
    v.segment(pos, d->size()) = d->voltages();
    pos += d->size();
  }
  return solve_ols(vandermonde(soc, degree), v, "fit_ocv_poly");
}

EquilibriumFit fit_impedance(const std::vector<ImpedancePoint>& points) {
  std::vector<ImpedancePoint> kept;
  int excluded = 0;
  for (const auto& p : points) {
    if (p.z.imag() > 0.0)
      ++excluded;  // inductive artifact, outside the model class
    else
      kept.push_back(p);
  }
  if (kept.size() < 3)
    throw std::invalid_argument("fit_impedance: need >= 3 usable points, have " +
                                std::to_string(kept.size()));

  const auto n = static_cast<Eigen::Index>(kept.size());
  // Residuals and Jacobian in log-parameters u = log([r0, r1, tau1]).
  auto fun = [&](const Eigen::VectorXd& u, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    const double r0 = std::exp(u(0)), r1 = std::exp(u(1)), tau = std::exp(u(2));
    r.resize(2 * n);
    jac.resize(2 * n, 3);
    for (Eigen::Index m = 0; m < n; ++m) {
      const double w = kept[static_cast<size_t>(m)].omega;
      const std::complex<double> den(1.0, w * tau);
      const std::complex<double> g = r0 + r1 / den;
      const std::complex<double> diff = g - kept[static_cast<size_t>(m)].z;
      const std::complex<double> dg_du1 = r1 / den;
      const std::complex<double> dg_du2 = -r1 * std::complex<double>(0.0, w * tau) / (den * den);
      r(2 * m) = diff.real();
      r(2 * m + 1) = diff.imag();
      jac(2 * m, 0) = r0;
      jac(2 * m + 1, 0) = 0.0;
      jac(2 * m, 1) = dg_du1.real();
      jac(2 * m + 1, 1) = dg_du1.imag();
      jac(2 * m, 2) = dg_du2.real();
      jac(2 * m + 1, 2) = dg_du2.imag();
    }
  };

  // Data-driven r0/r1 guesses: the high-frequency end pins r0, the
  // low-frequency end pins r0 + r1.
  auto by_omega = kept;
  std::sort(by_omega.begin(), by_omega.end(),
            [](const ImpedancePoint& a, const ImpedancePoint& b) { return a.omega < b.omega; });
  const double r0_init = std::max(by_omega.back().z.real(), 1e-6);
  const double r1_init = std::max(by_omega.front().z.real() - r0_init, 1e-6);

  LevMarResult best;
  bool any_converged = false;
  for (int start = 0; start < 8; ++start) {
    const double tau_init = 0.1 * std::pow(10.0, 4.0 * start / 7.0);  // [0.1, 1000] s
    Eigen::Vector3d u0(std::log(r0_init), std::log(r1_init), std::log(tau_init));
    LevMarResult res = levmar(fun, u0);
    if (res.converged) any_converged = true;
    if (res.cost < best.cost) best = res;
  }
  const double rms = std::sqrt(2.0 * best.cost / static_cast<double>(n));
  if (!any_converged)
    throw NumericalError("fit_impedance: no start converged within budget; best residual " +
                         fmt_double(rms) + " ohm");

  EquilibriumFit fit;
  fit.r0 = std::exp(best.x(0));
  fit.r1 = std::exp(best.x(1));
  fit.tau1 = std::exp(best.x(2));
  fit.residual = rms;
  fit.excluded_points = excluded;
  return fit;
}

namespace {

struct ExpFitOutcome {
  Eigen::Vector3d theta;
  bool fallback = false;
};

ExpFitOutcome fit_exp_curve(const Eigen::VectorXd& s, const Eigen::VectorXd& y) {
  auto fun = [&](const Eigen::VectorXd& t, Eigen::VectorXd& r, Eigen::MatrixXd& jac) {
    r.resize(s.size());
    jac.resize(s.size(), 3);
    for (Eigen::Index n = 0; n < s.size(); ++n) {
      const double e = std::exp(-t(1) * s(n));
      r(n) = t(0) * e + t(2) - y(n);
      jac(n, 0) = e;
      jac(n, 1) = -t(0) * s(n) * e;
      jac(n, 2) = 1.0;
    }
  };

  const double t2_starts[] = {0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0};
  LevMarResult best;
  bool any_converged = false;
  for (double t2 : t2_starts) {
    Eigen::Vector2d t13 = exp_linear_sub(s, y, t2);
    Eigen::Vector3d t0(t13(0), t2, t13(1));
    LevMarResult res = levmar(fun, t0);
    if (res.converged) any_converged = true;
    if (res.cost < best.cost) best = res;
  }
  if (any_converged && best.x.allFinite()) return {best.x, false};

  // Fallback: dense grid over the decay rate, linear subproblem for the rest.
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::Vector3d theta(0.0, 1.0, y.mean());
  for (int n = 0; n < 240; ++n) {
    const double t2 = 1e-2 * std::pow(10.0, 3.7 * n / 239.0);  // [0.01, 50]
    double cost = 0.0;
    Eigen::Vector2d t13 = exp_linear_sub(s, y, t2, &cost);
    if (cost < best_cost) {
      best_cost = cost;
      theta = {t13(0), t2, t13(1)};
    }
  }
  return {theta, true};
}

}  // namespace

ParamCurveFit fit_param_curves(const std::vector<EquilibriumFit>& fits) {
  if (fits.size() < 4)
    throw std::invalid_argument("fit_param_curves: need >= 4 equilibria, have " +
                                std::to_string(fits.size()));
  Eigen::VectorXd soc(static_cast<Eigen::Index>(fits.size()));
  Eigen::VectorXd r0(soc.size()), r1(soc.size()), tau(soc.size());
  for (Eigen::Index n = 0; n < soc.size(); ++n) {
    const auto& f = fits[static_cast<size_t>(n)];
    soc(n) = f.soc_bar;
    r0(n) = f.r0;
    r1(n) = f.r1;
    tau(n) = f.tau1;
  }
  if (soc.maxCoeff() - soc.minCoeff() < 0.5)
    throw std::invalid_argument("fit_param_curves: equilibria span " +
                                fmt_double(soc.maxCoeff() - soc.minCoeff()) +
                                " of SOC, need >= 0.5");

  ParamCurveFit out;
  auto fit0 = fit_exp_curve(soc, r0);
  auto fit1 = fit_exp_curve(soc, r1);
  out.theta_r0 = fit0.theta;
  out.fallback_r0 = fit0.fallback;
  out.theta_r1 = fit1.theta;
  out.fallback_r1 = fit1.fallback;
  out.theta_tau1 = solve_ols(vandermonde(soc, 3), tau, "fit_param_curves(tau1)");
  return out;
}

IdentificationResult identify_cell(const TimeSeriesDataset& discharge,
                                   const TimeSeriesDataset& charge, const GeisDataset& geis,
                                   double v_min, double v_max, int ocv_degree) {
  IdentificationResult res;
  res.params.q_total = estimate_capacity(discharge);
  res.params.eta_c = std::min(estimate_coulombic_eff(discharge, charge), 1.0);
  res.params.theta_ocv = fit_ocv_poly({&discharge, &charge}, ocv_degree);
  for (const auto& [soc_bar, points] : geis) {
    EquilibriumFit fit = fit_impedance(points);
    fit.soc_bar = soc_bar;
    res.equilibria.push_back(fit);
  }
  ParamCurveFit curves = fit_param_curves(res.equilibria);
  res.params.theta_r0 = curves.theta_r0;
  res.params.theta_r1 = curves.theta_r1;
  res.params.theta_tau1 = curves.theta_tau1;
  res.curve_fallback = curves.fallback_r0 || curves.fallback_r1;
  res.params.v_min = v_min;
  res.params.v_max = v_max;
  try {
    res.params.validate();
  } catch (const std::invalid_argument& e) {
    throw NumericalError(std::string("identify_cell: identified parameters are unusable: ") +
                         e.what());
  }
  return res;
}

void write_equilibrium_fits_csv(const std::string& path,
                                const std::vector<EquilibriumFit>& fits) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "soc_bar,r0,r1,tau1,residual\n";
  for (const auto& f : fits)
    out << fmt_double(f.soc_bar) << ',' << fmt_double(f.r0) << ',' << fmt_double(f.r1) << ','
        << fmt_double(f.tau1) << ',' << fmt_double(f.residual) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path);
}

std::vector<EquilibriumFit> read_equilibrium_fits_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || (line != "soc_bar,r0,r1,tau1,residual" &&
                                  line != "soc_bar,r0,r1,tau1,residual\r"))
    throw ParseError(path + ": expected header soc_bar,r0,r1,tau1,residual");
  std::vector<EquilibriumFit> fits;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 5)
      throw ParseError(path + ": line " + std::to_string(line_no) + ": expected 5 cells");
    EquilibriumFit f;
    f.soc_bar = parse_csv_double(cells[0], line_no, "soc_bar");
    f.r0 = parse_csv_double(cells[1], line_no, "r0");
    f.r1 = parse_csv_double(cells[2], line_no, "r1");
    f.tau1 = parse_csv_double(cells[3], line_no, "tau1");
    f.residual = parse_csv_double(cells[4], line_no, "residual");
    fits.push_back(f);
  }
  return fits;
}

}  // namespace socbench
