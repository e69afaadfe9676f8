#include "socbench/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "socbench/common.hpp"

namespace socbench {

namespace {

double loss_value(Loss loss, double d) { return loss == Loss::Squared ? d * d : std::abs(d); }

double loss_slope(Loss loss, double d) {
  if (loss == Loss::Squared) return 2.0 * d;
  return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
}

struct ForwardStore {
  std::vector<Eigen::MatrixXd> acts;     // acts[0] is the standardized input
  std::vector<Eigen::MatrixXd> preacts;  // preacts[l] feeds layer l+1
};

Eigen::MatrixXd standardize(const Mlp& net, const Eigen::MatrixXd& x) {
  return (x.colwise() - net.input_mean).array().colwise() / net.input_std.array();
}

ForwardStore forward_store(const Mlp& net, const Eigen::MatrixXd& x) {
  if (x.rows() != net.input_size())
    throw std::invalid_argument("mlp: input has " + std::to_string(x.rows()) +
                                " rows, net expects " + std::to_string(net.input_size()));
  ForwardStore fs;
  const size_t layers = net.weights.size();
  fs.acts.resize(layers + 1);
  fs.preacts.resize(layers);
  fs.acts[0] = standardize(net, x);
  for (size_t l = 0; l < layers; ++l) {
    fs.preacts[l] = (net.weights[l] * fs.acts[l]).colwise() + net.biases[l];
    if (l + 1 < layers)
      fs.acts[l + 1] = fs.preacts[l].cwiseMax(0.0);
    else
      fs.acts[l + 1] = fs.preacts[l];
  }
  return fs;
}

// Backpropagates an output-side gradient (d loss / d output, per column) into
// parameter gradients.
MlpGradients backprop(const Mlp& net, const ForwardStore& fs, Eigen::MatrixXd delta) {
  MlpGradients g;
  const size_t layers = net.weights.size();
  g.weights.resize(layers);
  g.biases.resize(layers);
  for (size_t l = layers; l-- > 0;) {
    g.weights[l] = delta * fs.acts[l].transpose();
    g.biases[l] = delta.rowwise().sum();
    if (l > 0)
      delta = (net.weights[l].transpose() * delta).array() *
              (fs.preacts[l - 1].array() > 0.0).cast<double>();
  }
  return g;
}

void check_targets(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const Mlp& net) {
  if (y.cols() != x.cols())
    throw std::invalid_argument("mlp: " + std::to_string(x.cols()) + " inputs vs " +
                                std::to_string(y.cols()) + " targets");
  if (y.rows() != net.output_size())
    throw std::invalid_argument("mlp: target dimension mismatch");
}

void check_readout(const Eigen::MatrixXd& x, const Eigen::MatrixXd& phi,
                   const Eigen::RowVectorXd& y, const Mlp& net) {
  if (phi.cols() != x.cols() || y.cols() != x.cols())
    throw std::invalid_argument("mlp readout: column count mismatch");
  if (phi.rows() != net.output_size())
    throw std::invalid_argument("mlp readout: phi rows must equal the net output size");
}

}  // namespace

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  if (x.size() != input_size())
    throw std::invalid_argument("mlp: input size mismatch");
  Eigen::VectorXd a = (x - input_mean).array() / input_std.array();
  for (size_t l = 0; l < weights.size(); ++l) {
    a = (weights[l] * a + biases[l]).eval();
    if (l + 1 < weights.size()) a = a.cwiseMax(0.0);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  ForwardStore fs = forward_store(*this, x);
  return fs.acts.back();
}

Mlp mlp_init(const MlpSpec& spec, const Eigen::MatrixXd& x_all) {
  if (spec.layer_sizes.size() < 3)
    throw std::invalid_argument("mlp: need at least one hidden layer");
  for (auto s : spec.layer_sizes)
    if (s <= 0) throw std::invalid_argument("mlp: layer sizes must be positive");
  if (x_all.rows() != spec.layer_sizes.front())
    throw std::invalid_argument("mlp: data dimension does not match the input layer");
  if (x_all.cols() == 0) throw std::invalid_argument("mlp: no data for standardization");

  Mlp net;
  net.input_mean = x_all.rowwise().mean();
  net.input_std.resize(x_all.rows());
  for (Eigen::Index r = 0; r < x_all.rows(); ++r) {
    const double var = (x_all.row(r).array() - net.input_mean(r)).square().mean();
    const double sd = std::sqrt(var);
    net.input_std(r) = sd < 1e-12 ? 1.0 : sd;
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const size_t layers = spec.layer_sizes.size() - 1;
  net.weights.resize(layers);
  net.biases.resize(layers);
  for (size_t l = 0; l < layers; ++l) {
    const Eigen::Index fan_in = spec.layer_sizes[l];
    const Eigen::Index fan_out = spec.layer_sizes[l + 1];
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    net.weights[l].resize(fan_out, fan_in);
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) net.weights[l](r, c) = scale * gauss(rng);
    if (l == 0) {
      // First-layer activation boundaries pass through random points of the
      // standardized data cloud. Zero biases stack every boundary at the
      // origin, which lets narrow-range inputs kill whole units early.
      net.biases[l].resize(fan_out);
      for (Eigen::Index r = 0; r < fan_out; ++r) {
        double dot = 0.0;
        for (Eigen::Index c = 0; c < fan_in; ++c) dot += net.weights[l](r, c) * gauss(rng);
        net.biases[l](r) = -dot;
      }
    } else {
      net.biases[l] = Eigen::VectorXd::Zero(fan_out);
    }
  }
  if (spec.out_bias.size() > 0) {
    if (spec.out_bias.size() != spec.layer_sizes.back())
      throw std::invalid_argument("mlp: out_bias does not match the output layer");
    net.weights.back().setZero();
    net.biases.back() = spec.out_bias;
  }
  return net;
}

double mlp_loss(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Loss loss) {
  check_targets(x, y, net);
  if (x.cols() == 0) throw std::invalid_argument("mlp_loss: empty batch");
  const Eigen::MatrixXd out = net.forward_batch(x);
  double acc = 0.0;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r) acc += loss_value(loss, out(r, c) - y(r, c));
  return acc / static_cast<double>(x.cols());
}

MlpGradients mlp_backward(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                          Loss loss) {
  check_targets(x, y, net);
  ForwardStore fs = forward_store(net, x);
  const Eigen::MatrixXd& out = fs.acts.back();
  Eigen::MatrixXd delta(out.rows(), out.cols());
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r)
      delta(r, c) = loss_slope(loss, out(r, c) - y(r, c)) * inv_b;
  return backprop(net, fs, std::move(delta));
}

double mlp_loss_readout(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::MatrixXd& phi,
                        const Eigen::RowVectorXd& y, Loss loss) {
  check_readout(x, phi, y, net);
  if (x.cols() == 0) throw std::invalid_argument("mlp_loss_readout: empty batch");
  const Eigen::MatrixXd out = net.forward_batch(x);
  double acc = 0.0;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    acc += loss_value(loss, out.col(c).dot(phi.col(c)) - y(c));
  return acc / static_cast<double>(x.cols());
}

MlpGradients mlp_backward_readout(const Mlp& net, const Eigen::MatrixXd& x,
                                  const Eigen::MatrixXd& phi, const Eigen::RowVectorXd& y,
                                  Loss loss) {
  check_readout(x, phi, y, net);
  ForwardStore fs = forward_store(net, x);
  const Eigen::MatrixXd& out = fs.acts.back();
  Eigen::MatrixXd delta(out.rows(), out.cols());
  const double inv_b = 1.0 / static_cast<double>(x.cols());
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double slope = loss_slope(loss, out.col(c).dot(phi.col(c)) - y(c)) * inv_b;
    delta.col(c) = slope * phi.col(c);
  }
  return backprop(net, fs, std::move(delta));
}

namespace {

// Shared trainer; the two public entry points differ only in how the batch
// loss and output gradient are formed.
struct Head {
  const Eigen::MatrixXd* y_mat = nullptr;   // plain regression
  const Eigen::MatrixXd* phi = nullptr;     // readout form
  const Eigen::RowVectorXd* y_row = nullptr;

  double loss(const Mlp& net, const Eigen::MatrixXd& x,
              const std::vector<Eigen::Index>& idx, Loss l) const {
    Eigen::MatrixXd xb = gather(x, idx);
    if (y_mat) return mlp_loss(net, xb, gather(*y_mat, idx), l);
    return mlp_loss_readout(net, xb, gather(*phi, idx), gather_row(*y_row, idx), l);
  }

  MlpGradients grad(const Mlp& net, const Eigen::MatrixXd& x,
                    const std::vector<Eigen::Index>& idx, Loss l) const {
    Eigen::MatrixXd xb = gather(x, idx);
    if (y_mat) return mlp_backward(net, xb, gather(*y_mat, idx), l);
    return mlp_backward_readout(net, xb, gather(*phi, idx), gather_row(*y_row, idx), l);
  }

  static Eigen::MatrixXd gather(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
    for (size_t n = 0; n < idx.size(); ++n) out.col(static_cast<Eigen::Index>(n)) = m.col(idx[n]);
    return out;
  }

  static Eigen::RowVectorXd gather_row(const Eigen::RowVectorXd& v,
                                       const std::vector<Eigen::Index>& idx) {
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (size_t n = 0; n < idx.size(); ++n) out(static_cast<Eigen::Index>(n)) = v(idx[n]);
    return out;
  }
};

Mlp train_impl(const MlpSpec& spec, const TrainSpec& tspec, const Eigen::MatrixXd& x,
               const Head& head, TrainLog* log) {
  const Eigen::Index n = x.cols();
  if (n < 10) throw std::invalid_argument("mlp_train: need >= 10 examples, have " +
                                          std::to_string(n));
  if (tspec.epochs < 1) throw std::invalid_argument("mlp_train: epochs must be >= 1");
  if (tspec.batch_size < 1) throw std::invalid_argument("mlp_train: batch_size must be >= 1");
  if (tspec.validation_fraction < 0.0 || tspec.validation_fraction >= 1.0)
    throw std::invalid_argument("mlp_train: validation_fraction must be in [0,1)");

  Mlp net = mlp_init(spec, x);

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  if (!tspec.chronological_split) {
    std::mt19937_64 split_rng(sub_seed(tspec.seed, 0xA11));
    std::shuffle(order.begin(), order.end(), split_rng);
  }
  const auto n_val =
      static_cast<Eigen::Index>(std::llround(tspec.validation_fraction * static_cast<double>(n)));
  const Eigen::Index n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("mlp_train: validation split leaves no data");
  std::vector<Eigen::Index> train_idx(order.begin(), order.begin() + n_train);
  std::vector<Eigen::Index> val_idx(order.begin() + n_train, order.end());

  std::vector<Eigen::MatrixXd> cache_w;
  std::vector<Eigen::VectorXd> cache_b;
  for (const auto& w : net.weights) cache_w.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
  for (const auto& b : net.biases) cache_b.push_back(Eigen::VectorXd::Zero(b.size()));

  std::mt19937_64 epoch_rng(sub_seed(tspec.seed, 0xB22));
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Eigen::MatrixXd> best_w = net.weights;
  std::vector<Eigen::VectorXd> best_b = net.biases;
  int best_epoch = -1;
  bool early_stopped = false;

  for (int epoch = 0; epoch < tspec.epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), epoch_rng);
    for (size_t start = 0; start < train_idx.size();
         start += static_cast<size_t>(tspec.batch_size)) {
      const size_t stop = std::min(train_idx.size(), start + static_cast<size_t>(tspec.batch_size));
      std::vector<Eigen::Index> batch(train_idx.begin() + static_cast<std::ptrdiff_t>(start),
                                      train_idx.begin() + static_cast<std::ptrdiff_t>(stop));
      MlpGradients g = head.grad(net, x, batch, tspec.loss);
      for (size_t l = 0; l < net.weights.size(); ++l) {
        cache_w[l] = tspec.rho * cache_w[l].array() +
                     (1.0 - tspec.rho) * g.weights[l].array().square();
        net.weights[l].array() -=
            tspec.lr * g.weights[l].array() / (cache_w[l].array().sqrt() + tspec.eps);
        cache_b[l] = tspec.rho * cache_b[l].array() +
                     (1.0 - tspec.rho) * g.biases[l].array().square();
        net.biases[l].array() -=
            tspec.lr * g.biases[l].array() / (cache_b[l].array().sqrt() + tspec.eps);
      }
    }

    const double train_loss = head.loss(net, x, train_idx, tspec.loss);
    if (!std::isfinite(train_loss))
      throw NumericalError("mlp_train: training diverged at epoch " + std::to_string(epoch));
    double val_loss = train_loss;
    if (!val_idx.empty()) {
      val_loss = head.loss(net, x, val_idx, tspec.loss);
      if (!std::isfinite(val_loss))
        throw NumericalError("mlp_train: validation loss diverged at epoch " +
                             std::to_string(epoch));
    }
    if (log) {
      log->train_loss.push_back(train_loss);
      log->val_loss.push_back(val_loss);
    }
    if (val_loss < best_val) {
      best_val = val_loss;
      best_w = net.weights;
      best_b = net.biases;
      best_epoch = epoch;
    } else if (epoch - best_epoch > tspec.patience) {
      early_stopped = true;
      break;
    }
  }

  net.weights = std::move(best_w);
  net.biases = std::move(best_b);
  if (log) {
    log->best_epoch = best_epoch;
    log->early_stopped = early_stopped;
  }
  return net;
}

}  // namespace

Mlp mlp_train(const MlpSpec& spec, const TrainSpec& tspec, const Eigen::MatrixXd& x,
              const Eigen::MatrixXd& y, TrainLog* log) {
  if (y.cols() != x.cols()) throw std::invalid_argument("mlp_train: input/target count mismatch");
  if (!spec.layer_sizes.empty() && y.rows() != spec.layer_sizes.back())
    throw std::invalid_argument("mlp_train: target dimension does not match the output layer");
  Head head;
  head.y_mat = &y;
  return train_impl(spec, tspec, x, head, log);
}

Mlp mlp_train_readout(const MlpSpec& spec, const TrainSpec& tspec, const Eigen::MatrixXd& x,
                      const Eigen::MatrixXd& phi, const Eigen::RowVectorXd& y, TrainLog* log) {
  if (phi.cols() != x.cols() || y.cols() != x.cols())
    throw std::invalid_argument("mlp_train_readout: column count mismatch");
  if (!spec.layer_sizes.empty() && phi.rows() != spec.layer_sizes.back())
    throw std::invalid_argument("mlp_train_readout: phi rows must match the output layer");
  Head head;
  head.phi = &phi;
  head.y_row = &y;
  return train_impl(spec, tspec, x, head, log);
}

void Mlp::save(std::ostream& out) const {
  out << "mlp v1\n";
  out << "layers " << weights.size() + 1;
  out << ' ' << weights.front().cols();
  for (const auto& w : weights) out << ' ' << w.rows();
  out << '\n';
  out << "mean";
  for (Eigen::Index n = 0; n < input_mean.size(); ++n) out << ' ' << fmt_double(input_mean(n));
  out << "\nstd";
  for (Eigen::Index n = 0; n < input_std.size(); ++n) out << ' ' << fmt_double(input_std(n));
  out << '\n';
  for (size_t l = 0; l < weights.size(); ++l) {
    out << "layer " << l << '\n';
    for (Eigen::Index r = 0; r < weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[l].cols(); ++c)
        out << (c ? " " : "") << fmt_double(weights[l](r, c));
      out << '\n';
    }
    for (Eigen::Index r = 0; r < biases[l].size(); ++r)
      out << (r ? " " : "") << fmt_double(biases[l](r));
    out << '\n';
  }
  out << "end\n";
}

Mlp Mlp::load(std::istream& in) {
  auto fail = [](const std::string& why) -> Mlp { throw ParseError("mlp: " + why); };
  std::string tag, version;
  in >> tag >> version;
  if (tag != "mlp" || version != "v1") return fail("bad magic, expected \"mlp v1\"");
  std::string word;
  size_t n_sizes = 0;
  in >> word >> n_sizes;
  if (word != "layers" || n_sizes < 3 || !in) return fail("bad layer count");
  std::vector<Eigen::Index> sizes(n_sizes);
  for (auto& s : sizes) {
    in >> s;
    if (!in || s <= 0) return fail("bad layer size");
  }
  Mlp net;
  net.input_mean.resize(sizes[0]);
  net.input_std.resize(sizes[0]);
  in >> word;
  if (word != "mean") return fail("expected mean");
  for (Eigen::Index n = 0; n < sizes[0]; ++n) in >> net.input_mean(n);
  in >> word;
  if (word != "std") return fail("expected std");
  for (Eigen::Index n = 0; n < sizes[0]; ++n) in >> net.input_std(n);
  if (!in) return fail("truncated standardization block");
  for (size_t l = 0; l + 1 < n_sizes; ++l) {
    size_t idx = 0;
    in >> word >> idx;
    if (word != "layer" || idx != l || !in) return fail("expected layer " + std::to_string(l));
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) in >> w(r, c);
    Eigen::VectorXd b(sizes[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) in >> b(r);
    if (!in) return fail("truncated layer " + std::to_string(l));
    net.weights.push_back(std::move(w));
    net.biases.push_back(std::move(b));
  }
  in >> word;
  if (word != "end") return fail("missing end marker");
  return net;
}

void Mlp::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save(out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

Mlp Mlp::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  return load(in);
}

}  // namespace socbench
