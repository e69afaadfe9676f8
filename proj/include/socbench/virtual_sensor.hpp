#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "socbench/arx.hpp"
#include "socbench/dataset.hpp"
#include "socbench/mlp.hpp"

namespace socbench {

struct VsHyper {
  int arx_order = 4;        // M
  int n_models = 4;         // observer bank size
  int window = 5;           // innovation lags per observer (l)
  double pole_radius = 0.65;
  bool zero_affine = false; // zero the affine term of representative models
  Eigen::Index cluster_max_points = 4000;  // stride subsample cap for k-medoids
};

// Regressors for the SOC-scheduled ARX predictor, defined for k in [M, N):
// phi[k] = [-v[k-M]..-v[k-1], i[k-M]..i[k-1], 1], target v[k], input SOC[k].
void build_arx_regression(const TimeSeriesDataset& d, int arx_order, Eigen::MatrixXd& x_soc,
                          Eigen::MatrixXd& phi, Eigen::RowVectorXd& v_target);

// Trains the SOC -> gamma scheduling net by backpropagating the one-step
// voltage prediction error through the known regressor (readout form).
// Requires the reference SOC column (training-time only).
struct MlpvResult {
  Mlp net;
  Eigen::MatrixXd gamma_trace;  // one gamma row per regression sample
  Eigen::VectorXd soc_trace;    // matching scheduling input
  TrainLog log;
};
MlpvResult train_mlpv(const TimeSeriesDataset& d_tr, int arx_order, const MlpSpec& spec,
                      const TrainSpec& tspec);

// k-medoids over the gamma trace; medoid parameter vectors become the
// representative local models, tagged with their cluster's mean SOC and
// sorted by that tag. Long traces are stride-subsampled to max_points first.
struct RepresentativeSelection {
  std::vector<ArxParams> models;
  std::vector<double> soc_tags;
  bool reduced = false;  // coincident medoids were merged
};
RepresentativeSelection select_representatives(const Eigen::MatrixXd& gamma_trace,
                                               const Eigen::VectorXd& soc_trace, int n_models,
                                               std::uint64_t seed,
                                               Eigen::Index max_points = 4000);

// Batch innovation pass: one Luenberger observer per representative model,
// states initialized to zero, innovations stored signed (n_models x N).
Eigen::MatrixXd run_observer_bank(const std::vector<LocalObserver>& bank,
                                  const TimeSeriesDataset& d);

// Feature vector at step k: per observer, |eps| at lags 0..window, observers
// stacked in bank order. Length n_models * (window + 1); requires k >= window.
Eigen::VectorXd build_features(const Eigen::MatrixXd& innovations, int window, Eigen::Index k);

// Trains the SOC regressor on [features, i, v] -> reference SOC, using rows
// k >= warmup.
Mlp train_soc_predictor(const TimeSeriesDataset& d_tr, const Eigen::MatrixXd& innovations,
                        int window, Eigen::Index warmup, const MlpSpec& spec,
                        const TrainSpec& tspec, TrainLog* log = nullptr);

// Streaming estimator: observer bank + innovation ring + SOC regressor.
// The first `window` steps run on zero-padded innovation history (warm-up).
// Reported SOC is clamped to [-0.1, 1.1]; the raw value is also returned.
struct VsStepResult {
  double soc = 0.0;
  double soc_raw = 0.0;
  bool clamped = false;
};

struct VirtualSensor {
  std::vector<LocalObserver> bank;
  Mlp predictor;
  int window = 5;

  // Runtime state.
  std::vector<Eigen::VectorXd> states;
  Eigen::MatrixXd eps_hist;  // n_models x (window+1), lag 0 in column 0
  long steps_run = 0;

  int n_models() const { return static_cast<int>(bank.size()); }
  // Zeroes states and innovation history.
  void reset();
  VsStepResult step(double i, double v);

  void save(std::ostream& out) const;
  static VirtualSensor load(std::istream& in);
  void save_file(const std::string& path) const;
  static VirtualSensor load_file(const std::string& path);
};

// Full training pipeline: scheduling net, representatives, placed observer
// bank, innovation pass (recomputed with the placed gains), SOC regressor.
// Input/output widths of both MlpSpecs are overridden to match the data
// (scheduling net: 1 -> 2M+1; regressor: n_features+2 -> 1); only the hidden
// widths of the passed specs matter.
struct VsTrainResult {
  VirtualSensor sensor;
  MlpvResult mlpv;
  TrainLog predictor_log;
  bool representatives_reduced = false;  // medoid merge dropped bank size
  int reduced_order_models = 0;          // pole-zero cancellations deflated
};
VsTrainResult train_virtual_sensor(const TimeSeriesDataset& d_tr, const VsHyper& hyper,
                                   const MlpSpec& mlpv_spec, const TrainSpec& mlpv_tspec,
                                   const MlpSpec& pred_spec, const TrainSpec& pred_tspec,
                                   std::uint64_t seed);

}  // namespace socbench
