#include "socbench/ekf.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "socbench/common.hpp"

namespace socbench {

void EkfNoise::validate(EkfMode mode) const {
  auto check = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("ekf noise: ") + name + " must be > 0");
  };
  check(sigma_soc, "sigma_soc");
  check(sigma_ir, "sigma_ir");
  check(sigma_v, "sigma_v");
  if (mode == EkfMode::Fusion) check(sigma_socy, "sigma_socy");
}

Eigen::Matrix2d joseph_update(const Eigen::Matrix2d& sigma, const Eigen::MatrixXd& k_gain,
                              const Eigen::MatrixXd& h, const Eigen::MatrixXd& r) {
  const Eigen::Matrix2d i_kh = Eigen::Matrix2d::Identity() - k_gain * h;
  Eigen::Matrix2d out = i_kh * sigma * i_kh.transpose() + k_gain * r * k_gain.transpose();
  return 0.5 * (out + out.transpose());
}

EkfStepResult ekf_step(const EkfState& state, const EkfConfig& cfg, double i_prev, double i_now,
                       const Eigen::VectorXd& y) {
  const bool fused = y.size() == 2;
  if (y.size() != 1 && y.size() != 2)
    throw std::invalid_argument("ekf_step: y must be [v] or [v, soc_pseudo]");
  cfg.noise.validate(fused ? EkfMode::Fusion : EkfMode::Baseline);
  const CellParams& p = cfg.params;

  // Predict, driven by the previous current sample.
  const double soc = state.x(0);
  const double ir = state.x(1);
  const double eta = i_prev >= 0.0 ? 1.0 : p.eta_c;
  const double soc_pred = soc - cfg.tau_s / p.q_total * eta * i_prev;
  const double tau = p.tau1(soc);
  if (!(tau > 0.0))
    throw NumericalError("ekf_step: tau1(" + fmt_double(soc) + ") is not positive");
  const double alpha = std::exp(-cfg.tau_s / tau);
  const double ir_pred = alpha * ir + (1.0 - alpha) * i_prev;

  Eigen::Matrix2d f = Eigen::Matrix2d::Identity();
  f(1, 1) = alpha;
  if (cfg.soc_jacobian_cross_term) {
    const double dtau = polyval(polyder(p.theta_tau1), soc);
    const double dalpha = alpha * cfg.tau_s * dtau / (tau * tau);
    f(1, 0) = dalpha * (ir - i_prev);
  }
  const Eigen::Matrix2d q =
      Eigen::Vector2d(cfg.noise.sigma_soc * cfg.noise.sigma_soc,
                      cfg.noise.sigma_ir * cfg.noise.sigma_ir)
          .asDiagonal();
  Eigen::Matrix2d sigma_pred = f * state.sigma * f.transpose() + q;
  sigma_pred = 0.5 * (sigma_pred + sigma_pred.transpose());

  // Measurement model at the prior.
  const double v_hat = p.ocv(soc_pred) - p.r1(soc_pred) * ir_pred - p.r0(soc_pred) * i_now;
  const Eigen::Index rows = fused ? 2 : 1;
  Eigen::MatrixXd h(rows, 2);
  h(0, 0) = p.ocv_prime(soc_pred) - p.r1_prime(soc_pred) * ir_pred - p.r0_prime(soc_pred) * i_now;
  h(0, 1) = -p.r1(soc_pred);
  Eigen::VectorXd y_hat(rows);
  y_hat(0) = v_hat;
  Eigen::MatrixXd r = Eigen::MatrixXd::Zero(rows, rows);
  r(0, 0) = cfg.noise.sigma_v * cfg.noise.sigma_v;
  if (fused) {
    h(1, 0) = 1.0;
    h(1, 1) = 0.0;
    y_hat(1) = soc_pred;
    r(1, 1) = cfg.noise.sigma_socy * cfg.noise.sigma_socy;
  }

  const Eigen::MatrixXd s = h * sigma_pred * h.transpose() + r;
  // Joint gain across the stacked rows.
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s);
  Eigen::MatrixXd k_gain;
  if (ldlt.info() == Eigen::Success)
    k_gain = ldlt.solve(h * sigma_pred).transpose();
  if (ldlt.info() != Eigen::Success || !k_gain.allFinite()) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    throw NumericalError("ekf_step: singular innovation covariance, eigenvalues span " +
                         fmt_double(es.eigenvalues().minCoeff()) + " to " +
                         fmt_double(es.eigenvalues().maxCoeff()));
  }

  const Eigen::VectorXd innov = y - y_hat;
  EkfStepResult res;
  res.state.x = Eigen::Vector2d(soc_pred, ir_pred) + k_gain * innov;
  res.state.sigma = joseph_update(sigma_pred, k_gain, h, r);
  res.v_hat = v_hat;
  res.soc_hat = res.state.x(0);
  res.innov_v = innov(0);
  res.innov_soc = fused ? innov(1) : std::numeric_limits<double>::quiet_NaN();
  res.gain_norm = k_gain.norm();
  res.soc_in_range = res.soc_hat >= 0.0 && res.soc_hat <= 1.0;
  return res;
}

EkfRun run_ekf(const EkfConfig& cfg, const TimeSeriesDataset& d, VirtualSensor* vs,
               std::vector<double>* step_times_s) {
  cfg.noise.validate(cfg.mode);
  cfg.params.validate();
  if (cfg.mode == EkfMode::Fusion && !vs)
    throw std::invalid_argument("run_ekf: fusion mode needs a virtual sensor");
  const Eigen::Index n = d.size();
  if (n == 0) throw std::invalid_argument("run_ekf: empty dataset");

  Eigen::Index warmup = 0;
  if (cfg.mode == EkfMode::Fusion) {
    vs->reset();
    int max_order = 0;
    for (const auto& obs : vs->bank) max_order = std::max(max_order, obs.order());
    warmup = std::max<Eigen::Index>(max_order, vs->window);
  }

  EkfRun run;
  run.soc_hat.resize(n);
  run.v_hat.resize(n);
  run.innov_v.resize(n);
  run.innov_soc.resize(n);
  run.gain_norm.resize(n);
  if (step_times_s) {
    step_times_s->clear();
    step_times_s->reserve(static_cast<size_t>(n));
  }

  EkfState state{cfg.x0, cfg.sigma0};
  double i_prev = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& smp = d.samples[static_cast<size_t>(k)];
    const auto t0 = std::chrono::steady_clock::now();

    EkfStepResult res;
    if (cfg.mode == EkfMode::Fusion) {
      // The pseudo-measurement is produced before the correction; during the
      // sensor's warm-up the filter stays voltage-only.
      const VsStepResult pseudo = vs->step(smp.i, smp.v);
      if (k < warmup) {
        res = ekf_step(state, cfg, i_prev, smp.i, Eigen::VectorXd::Constant(1, smp.v));
      } else {
        Eigen::VectorXd y(2);
        y << smp.v, pseudo.soc;
        res = ekf_step(state, cfg, i_prev, smp.i, y);
      }
    } else {
      res = ekf_step(state, cfg, i_prev, smp.i, Eigen::VectorXd::Constant(1, smp.v));
    }

    if (step_times_s) {
      const auto t1 = std::chrono::steady_clock::now();
      step_times_s->push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    state = res.state;
    i_prev = smp.i;
    run.soc_hat(k) = res.soc_hat;
    run.v_hat(k) = res.v_hat;
    run.innov_v(k) = res.innov_v;
    run.innov_soc(k) = res.innov_soc;
    run.gain_norm(k) = res.gain_norm;
  }
  return run;
}

}  // namespace socbench
