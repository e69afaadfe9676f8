#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace socbench {

enum class Loss { Squared, Absolute };

// Feed-forward net shape: input, hidden widths, output. Hidden activations
// are ReLU, the output layer is linear.
struct MlpSpec {
  std::vector<Eigen::Index> layer_sizes;
  std::uint64_t seed = 0;
  // Optional output-layer warm start: zeroed output weights with this bias.
  // The net then starts as exactly this constant and learns input-dependent
  // corrections, which keeps early gradients too small to kill hidden units
  // when the readout scale is large. Empty: He weights, zero bias.
  Eigen::VectorXd out_bias;
};

// Declared training defaults; every field can be overridden via config.
struct TrainSpec {
  int epochs = 100;
  double lr = 1e-3;
  double rho = 0.9;      // RMSprop decay
  double eps = 1e-8;
  Eigen::Index batch_size = 256;
  double validation_fraction = 0.2;
  int patience = 25;     // epochs without validation improvement before stopping
  Loss loss = Loss::Squared;
  // true (default): keep temporal order and hold out the tail, so validation
  // never sees shuffled-in neighbours of training samples. false: seeded
  // shuffle, then split.
  bool chronological_split = true;
  std::uint64_t seed = 0;
};

// Weights plus the z-score input standardization baked into the artifact.
// Members are public: training, serialization and the finite-difference
// checks all need direct access.
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // weights[l] maps layer l to l+1
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_std;

  Eigen::Index input_size() const { return weights.front().cols(); }
  Eigen::Index output_size() const { return weights.back().rows(); }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  // Columns are examples.
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  void save(std::ostream& out) const;
  static Mlp load(std::istream& in);
  void save_file(const std::string& path) const;
  static Mlp load_file(const std::string& path);
};

// Seeded He-initialized net with standardization moments taken from x_all
// (columns are examples). Zero-variance inputs get their std clamped to 1.
Mlp mlp_init(const MlpSpec& spec, const Eigen::MatrixXd& x_all);

struct MlpGradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

// Mean-over-batch loss: sum over output coordinates of l(pred - target).
double mlp_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Loss loss);
MlpGradients mlp_backward(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          Loss loss);

// Readout head: the prediction for example b is dot(phi.col(b), net(x.col(b)))
// and the target is y(b). This trains a net whose output enters a known
// linear form, with gradients flowing through the readout.
double mlp_loss_readout(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& phi,
                        const Eigen::RowVectorXd& y, Loss loss);
MlpGradients mlp_backward_readout(const Mlp& net, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& phi, const Eigen::RowVectorXd& y,
                                  Loss loss);

struct TrainLog {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = -1;
  bool early_stopped = false;
};

// Minibatch RMSprop with a held-out validation split and best-weights
// restoration. Deterministic for a fixed spec. Requires >= 10 examples.
Mlp mlp_train(const MlpSpec& spec, const TrainSpec& tspec, const Eigen::MatrixXd& x,
              const Eigen::MatrixXd& y, TrainLog* log = nullptr);
Mlp mlp_train_readout(const MlpSpec& spec, const TrainSpec& tspec, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& phi, const Eigen::RowVectorXd& y,
                      TrainLog* log = nullptr);

}  // namespace socbench
