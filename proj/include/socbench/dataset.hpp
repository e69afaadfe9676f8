#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace socbench {

// One logged sample: step index, applied current (A, positive = discharge),
// terminal voltage (V), and an optional reference SOC in [0,1].
// The reference column exists for training and scoring only; estimators must
// never read it.
struct Sample {
  long k = 0;
  double i = 0.0;
  double v = 0.0;
  std::optional<double> soc;
};

struct TimeSeriesDataset {
  std::vector<Sample> samples;
  double tau_s = 1.0;  // uniform sampling period, seconds

  Eigen::Index size() const { return static_cast<Eigen::Index>(samples.size()); }

  Eigen::VectorXd currents() const {
    Eigen::VectorXd out(size());
    for (Eigen::Index n = 0; n < size(); ++n) out(n) = samples[static_cast<size_t>(n)].i;
    return out;
  }

  Eigen::VectorXd voltages() const {
    Eigen::VectorXd out(size());
    for (Eigen::Index n = 0; n < size(); ++n) out(n) = samples[static_cast<size_t>(n)].v;
    return out;
  }

  bool has_full_soc() const {
    for (const auto& s : samples)
      if (!s.soc) return false;
    return !samples.empty();
  }

  // Requires every sample to carry the reference column.
  Eigen::VectorXd socs() const {
    Eigen::VectorXd out(size());
    for (Eigen::Index n = 0; n < size(); ++n) {
      const auto& s = samples[static_cast<size_t>(n)];
      if (!s.soc) throw std::invalid_argument("dataset: reference soc missing at k=" +
                                              std::to_string(s.k));
      out(n) = *s.soc;
    }
    return out;
  }

  // Enforces the dataset invariants: k starts at 0 and increments by 1,
  // tau_s > 0, finite i and v, v >= 0, soc (when present) in [0,1].
  void validate() const {
    if (tau_s <= 0.0 || !std::isfinite(tau_s))
      throw std::invalid_argument("dataset: tau_s must be positive");
    long expect = 0;
    for (const auto& s : samples) {
      if (s.k != expect)
        throw std::invalid_argument("dataset: step index " + std::to_string(s.k) +
                                    " breaks the increment-by-1 invariant");
      if (!std::isfinite(s.i) || !std::isfinite(s.v))
        throw std::invalid_argument("dataset: non-finite signal at k=" + std::to_string(s.k));
      if (s.v < 0.0)
        throw std::invalid_argument("dataset: negative voltage at k=" + std::to_string(s.k));
      if (s.soc && (!std::isfinite(*s.soc) || *s.soc < 0.0 || *s.soc > 1.0))
        throw std::invalid_argument("dataset: soc outside [0,1] at k=" + std::to_string(s.k));
      ++expect;
    }
  }
};

// Copy with the reference SOC column removed. Estimator entry points take the
// stripped form so reference leakage is impossible by construction.
inline TimeSeriesDataset strip_soc(const TimeSeriesDataset& d) {
  TimeSeriesDataset out = d;
  for (auto& s : out.samples) s.soc.reset();
  return out;
}

struct ImpedancePoint {
  double omega = 0.0;           // rad/s
  std::complex<double> z;       // ohm
};

// Small-signal impedance sweeps grouped by the equilibrium SOC they were
// measured at. std::map keeps equilibria in ascending soc_bar order.
using GeisDataset = std::map<double, std::vector<ImpedancePoint>>;

}  // namespace socbench
