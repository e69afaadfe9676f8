#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "socbench/cell_params.hpp"
#include "socbench/dataset.hpp"

namespace socbench {

// Additive white measurement noise on the logged channels. The underlying
// cell state always evolves noise-free; changing the seed changes the logged
// v (and i) columns but never the reference soc column.
struct NoiseSpec {
  double sigma_v = 0.0;  // V
  double sigma_i = 0.0;  // A
  std::uint64_t seed = 0;
};

struct CurrentProfile {
  std::string name;
  Eigen::VectorXd currents;  // A, positive = discharge
};

enum class ProfileKind { PulseUrban, PulseHighway, Mixed };

ProfileKind profile_kind_from_string(const std::string& s);
std::string to_string(ProfileKind k);

// Every generated profile opens with this many rest samples, so the first
// logged voltage of a fresh run is an open-circuit reading.
inline constexpr Eigen::Index kProfileLeadRest = 12;

// Seeded synthetic load profile. Pulse amplitudes stay within
// [-i_max/2, i_max] (charge limit is half the discharge limit) and the duty
// cycle is net-discharging so long runs sweep the SOC range downward.
CurrentProfile gen_profile(ProfileKind kind, Eigen::Index n_steps, double i_max,
                           std::uint64_t seed);

// Fixed-step Thevenin simulation from (soc0, ir0). Halts early when the SOC
// leaves [0,1] or the noise-free terminal voltage crosses a cut-off (the
// crossing sample is kept). The soc column is the exact simulated state.
TimeSeriesDataset simulate_ecm(const CellParams& p, const CurrentProfile& profile, double soc0,
                               double ir0, const NoiseSpec& noise, double tau_s = 1.0);

// Open-loop SOC reconstruction by current integration. Returns N+1 values:
// soc[0] = soc0 and soc[k+1] = soc[k] - tau_s/q_total * eta(i[k]) * i[k].
// Values are not clamped; in_range reports whether all stayed within [0,1].
struct CoulombCountResult {
  Eigen::VectorXd soc;
  bool in_range = true;
};
CoulombCountResult coulomb_count(const Eigen::VectorXd& currents, double q_total, double eta_c,
                                 double soc0, double tau_s = 1.0);

// Low-current constant-current discharge (full to empty) followed by charge
// back to full, used for capacity, efficiency and OCV identification. The
// 3 h rests of the physical protocol are skipped: each phase starts with the
// diffusion branch relaxed (ir0 = 0). Noise-free by construction.
struct LcOcvResult {
  TimeSeriesDataset discharge;
  TimeSeriesDataset charge;
};
LcOcvResult simulate_lc_ocv(const CellParams& p, double c_rate = 1.0 / 20.0, double tau_s = 1.0);

// Small-signal impedance sweeps z(w) = R0 + R1/(1 + j w tau1) at the given
// equilibria. noise_rel adds complex Gaussian noise relative to |z|.
GeisDataset simulate_geis(const CellParams& p, const std::vector<double>& soc_levels,
                          const std::vector<double>& omegas, double noise_rel = 0.0,
                          std::uint64_t seed = 0);

// Default sweep: 60 log-spaced points, 10 per decade, from 10 kHz down to
// 10^(4 - 59/10) Hz, returned as angular frequencies.
std::vector<double> geis_default_omegas();
// Default equilibria: 0.9 down to 0.1 in steps of 0.1.
std::vector<double> geis_default_soc_levels();

}  // namespace socbench
