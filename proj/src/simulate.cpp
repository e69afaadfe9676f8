#include "socbench/simulate.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "socbench/common.hpp"

namespace socbench {

namespace {

// Terminal voltage when a phase halts on the SOC bound may legitimately sit a
// little short of the cut-off; beyond this gap the parameterization cannot
// execute the protocol (its OCV never reaches the cut-off).
constexpr double kCutoffGapTol = 0.05;  // V

struct PulseShape {
  double amp_lo, amp_hi;      // fraction of i_max
  double dur_lo, dur_hi;      // steps
  double rest_lo, rest_hi;    // steps
  double regen_prob;
  double regen_lo, regen_hi;  // fraction of the charge limit i_max/2
  double regen_dur_lo, regen_dur_hi;
};

// Duty cycles are tuned so highway drains roughly 0.066 SOC per 1000 steps
// and urban roughly 0.015. A training log that chains a highway leg onto an
// urban leg then sweeps deeper than any mixed test log and spends its final
// stretch in a narrow band just below the test floor, so estimators trained
// on it never extrapolate and their held-out tail stays near in-support.
// Regen amplitudes stay under 0.7 of the charge limit: a full-limit pulse at
// the top of the sweep would cross the charge cut-off and truncate the log.
constexpr PulseShape kUrban{0.05, 0.28, 8, 24, 8, 20, 0.75, 0.25, 0.70, 5, 12};
// Highway rests stretch to 28 steps and regens start at 8: a mixed test log
// interleaves urban-style quiet stretches at high SOC, and the training
// sweep must visit that corner of (state, input) space too, not just sustained
// cruise pulses.
constexpr PulseShape kHighway{0.12, 0.56, 18, 45, 3, 28, 0.55, 0.30, 0.65, 8, 40};

// Pulse edges slew over a few samples, as a converter-fed load would; without
// this the one-step feedthrough jump R0*di dominates every short-horizon
// predictor and drowns the SOC-dependence of the dynamics.
constexpr double kSlewSteps = 12.0;

void limit_slew(Eigen::VectorXd& c, double i_max) {
  const double max_step = i_max / kSlewSteps;
  for (Eigen::Index k = 1; k < c.size(); ++k) {
    const double d = c(k) - c(k - 1);
    if (d > max_step)
      c(k) = c(k - 1) + max_step;
    else if (d < -max_step)
      c(k) = c(k - 1) - max_step;
  }
}

void append_block(Eigen::VectorXd& out, Eigen::Index& pos, double value, Eigen::Index len) {
  for (Eigen::Index n = 0; n < len && pos < out.size(); ++n) out(pos++) = value;
}

void fill_pulses(Eigen::VectorXd& out, Eigen::Index& pos, Eigen::Index until,
                 const PulseShape& shape, double i_max, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto draw = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };
  while (pos < until) {
    double amp = draw(shape.amp_lo, shape.amp_hi) * i_max;
    auto dur = static_cast<Eigen::Index>(std::lround(draw(shape.dur_lo, shape.dur_hi)));
    append_block(out, pos, amp, std::min(dur, until - pos));
    if (pos >= until) break;
    auto rest = static_cast<Eigen::Index>(std::lround(draw(shape.rest_lo, shape.rest_hi)));
    append_block(out, pos, 0.0, std::min(rest, until - pos));
    if (pos >= until) break;
    if (uni(rng) < shape.regen_prob) {
      double regen = -draw(shape.regen_lo, shape.regen_hi) * (i_max / 2.0);
      auto rdur =
          static_cast<Eigen::Index>(std::lround(draw(shape.regen_dur_lo, shape.regen_dur_hi)));
      append_block(out, pos, regen, std::min(rdur, until - pos));
      auto rrest = static_cast<Eigen::Index>(std::lround(draw(1.0, 4.0)));
      append_block(out, pos, 0.0, std::min(rrest, until - pos));
    }
  }
}

}  // namespace

ProfileKind profile_kind_from_string(const std::string& s) {
  if (s == "pulse_urban") return ProfileKind::PulseUrban;
  if (s == "pulse_highway") return ProfileKind::PulseHighway;
  if (s == "mixed") return ProfileKind::Mixed;
  throw ConfigError("unknown profile kind \"" + s +
                    "\" (expected pulse_urban, pulse_highway or mixed)");
}

std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::PulseUrban: return "pulse_urban";
    case ProfileKind::PulseHighway: return "pulse_highway";
    case ProfileKind::Mixed: return "mixed";
  }
  return "?";
}

CurrentProfile gen_profile(ProfileKind kind, Eigen::Index n_steps, double i_max,
                           std::uint64_t seed) {
  if (n_steps <= 0) throw std::invalid_argument("gen_profile: n_steps must be > 0");
  if (!(i_max > 0.0)) throw std::invalid_argument("gen_profile: i_max must be > 0");
  CurrentProfile prof;
  prof.name = to_string(kind) + "_" + std::to_string(seed);
  prof.currents.resize(n_steps);
  std::mt19937_64 rng(seed);
  Eigen::Index pos = 0;
  // Logs open with an open-circuit sample block; consumers may read the first
  // voltage as a rested OCV.
  append_block(prof.currents, pos, 0.0, kProfileLeadRest);
  switch (kind) {
    case ProfileKind::PulseUrban:
      fill_pulses(prof.currents, pos, n_steps, kUrban, i_max, rng);
      break;
    case ProfileKind::PulseHighway:
      fill_pulses(prof.currents, pos, n_steps, kHighway, i_max, rng);
      break;
    case ProfileKind::Mixed: {
      // Alternating city/highway segments of seeded random length, weighted
      // toward highway so a mixed log still sweeps a useful SOC range.
      std::uniform_int_distribution<Eigen::Index> useg(250, 500);
      std::uniform_int_distribution<Eigen::Index> hseg(600, 1000);
      bool urban = true;
      while (pos < n_steps) {
        Eigen::Index until = std::min<Eigen::Index>(n_steps, pos + (urban ? useg(rng) : hseg(rng)));
        fill_pulses(prof.currents, pos, until, urban ? kUrban : kHighway, i_max, rng);
        urban = !urban;
      }
      break;
    }
  }
  limit_slew(prof.currents, i_max);
  return prof;
}

TimeSeriesDataset simulate_ecm(const CellParams& p, const CurrentProfile& profile, double soc0,
                               double ir0, const NoiseSpec& noise, double tau_s) {
  p.validate();
  if (!(soc0 >= 0.0 && soc0 <= 1.0))
    throw std::invalid_argument("simulate_ecm: soc0 must be in [0,1]");
  if (!std::isfinite(ir0)) throw std::invalid_argument("simulate_ecm: ir0 must be finite");
  if (!(tau_s > 0.0)) throw std::invalid_argument("simulate_ecm: tau_s must be > 0");

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  TimeSeriesDataset d;
  d.tau_s = tau_s;
  d.samples.reserve(static_cast<size_t>(profile.currents.size()));

  double soc = soc0;
  double ir = ir0;
  for (Eigen::Index k = 0; k < profile.currents.size(); ++k) {
    const double i_true = profile.currents(k);
    const double tau = p.tau1(soc);
    if (!(tau > 0.0))
      throw NumericalError("simulate_ecm: tau1(" + fmt_double(soc) + ") is not positive");
    const double v_true = p.ocv(soc) - p.r1(soc) * ir - p.r0(soc) * i_true;
    if (!std::isfinite(v_true))
      throw NumericalError("simulate_ecm: non-finite voltage at k=" + std::to_string(k));

    Sample s;
    s.k = static_cast<long>(k);
    s.i = noise.sigma_i > 0.0 ? i_true + noise.sigma_i * gauss(rng) : i_true;
    s.v = noise.sigma_v > 0.0 ? v_true + noise.sigma_v * gauss(rng) : v_true;
    s.soc = soc;
    d.samples.push_back(s);

    // Cut-off crossings are decided on the noise-free voltage; the crossing
    // sample stays in the log.
    if (v_true <= p.v_min || v_true >= p.v_max) break;

    const double alpha = std::exp(-tau_s / tau);
    ir = alpha * ir + (1.0 - alpha) * i_true;
    const double eta = i_true >= 0.0 ? 1.0 : p.eta_c;
    const double soc_next = soc - tau_s / p.q_total * eta * i_true;
    if (soc_next < 0.0 || soc_next > 1.0) break;
    soc = soc_next;
  }
  return d;
}

CoulombCountResult coulomb_count(const Eigen::VectorXd& currents, double q_total, double eta_c,
                                 double soc0, double tau_s) {
  if (!(q_total > 0.0)) throw std::invalid_argument("coulomb_count: q_total must be > 0");
  if (!(eta_c > 0.0) || eta_c > 1.0)
    throw std::invalid_argument("coulomb_count: eta_c must be in (0,1]");
  if (!(tau_s > 0.0)) throw std::invalid_argument("coulomb_count: tau_s must be > 0");
  CoulombCountResult res;
  res.soc.resize(currents.size() + 1);
  res.soc(0) = soc0;
  double soc = soc0;
  for (Eigen::Index k = 0; k < currents.size(); ++k) {
    const double eta = currents(k) >= 0.0 ? 1.0 : eta_c;
    soc -= tau_s / q_total * eta * currents(k);
    res.soc(k + 1) = soc;
    if (soc < 0.0 || soc > 1.0) res.in_range = false;
  }
  return res;
}

LcOcvResult simulate_lc_ocv(const CellParams& p, double c_rate, double tau_s) {
  p.validate();
  if (!(c_rate > 0.0)) throw std::invalid_argument("simulate_lc_ocv: c_rate must be > 0");
  const double i_mag = c_rate * p.q_total / 3600.0;
  // Enough headroom that every phase terminates on a cut-off or SOC bound.
  const auto n_max =
      static_cast<Eigen::Index>(std::ceil(p.q_total / (tau_s * i_mag) * 1.25)) + 16;

  auto check_phase = [&](const TimeSeriesDataset& d, double cutoff, const char* phase) {
    if (d.samples.empty())
      throw ConfigError(std::string("lc-ocv protocol: ") + phase + " produced no samples");
    const double v_end = d.samples.back().v;
    if (std::abs(v_end - cutoff) > kCutoffGapTol)
      throw ConfigError(std::string("lc-ocv protocol: ") + phase + " ended at " +
                        fmt_double(v_end) + " V, more than " + fmt_double(kCutoffGapTol) +
                        " V away from the " + fmt_double(cutoff) +
                        " V cut-off; the OCV curve never reaches it");
  };

  LcOcvResult res;
  CurrentProfile dis{"lc_discharge", Eigen::VectorXd::Constant(n_max, i_mag)};
  res.discharge = simulate_ecm(p, dis, 1.0, 0.0, NoiseSpec{}, tau_s);
  check_phase(res.discharge, p.v_min, "discharge");

  // The physical protocol rests 3 h here; skipping it, the charge phase
  // starts from the post-discharge SOC with the diffusion branch relaxed.
  const double soc_last = *res.discharge.samples.back().soc;
  double soc_c0 = soc_last - tau_s / p.q_total * i_mag;
  soc_c0 = std::min(1.0, std::max(0.0, soc_c0));

  CurrentProfile chg{"lc_charge", Eigen::VectorXd::Constant(n_max, -i_mag)};
  res.charge = simulate_ecm(p, chg, soc_c0, 0.0, NoiseSpec{}, tau_s);
  check_phase(res.charge, p.v_max, "charge");
  return res;
}

GeisDataset simulate_geis(const CellParams& p, const std::vector<double>& soc_levels,
                          const std::vector<double>& omegas, double noise_rel,
                          std::uint64_t seed) {
  p.validate();
  if (soc_levels.empty()) throw std::invalid_argument("simulate_geis: no equilibria");
  if (omegas.empty()) throw std::invalid_argument("simulate_geis: no frequencies");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  GeisDataset g;
  for (double soc : soc_levels) {
    if (!(soc >= 0.0 && soc <= 1.0))
      throw std::invalid_argument("simulate_geis: equilibrium soc outside [0,1]");
    const double r0 = p.r0(soc), r1 = p.r1(soc), tau = p.tau1(soc);
    auto& points = g[soc];
    points.reserve(omegas.size());
    for (double w : omegas) {
      if (!(w > 0.0)) throw std::invalid_argument("simulate_geis: omega must be > 0");
      std::complex<double> z = r0 + r1 / std::complex<double>(1.0, w * tau);
      if (noise_rel > 0.0) {
        const double scale = noise_rel * std::abs(z) / std::sqrt(2.0);
        z += std::complex<double>(scale * gauss(rng), scale * gauss(rng));
      }
      points.push_back({w, z});
    }
  }
  return g;
}

std::vector<double> geis_default_omegas() {
  std::vector<double> omegas;
  omegas.reserve(60);
  for (int n = 0; n < 60; ++n)
    omegas.push_back(2.0 * M_PI * std::pow(10.0, 4.0 - n / 10.0));
  return omegas;
}

std::vector<double> geis_default_soc_levels() {
  std::vector<double> levels;
  for (int n = 9; n >= 1; --n) levels.push_back(n / 10.0);
  return levels;
}

}  // namespace socbench
