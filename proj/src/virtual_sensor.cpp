#include "socbench/virtual_sensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "socbench/common.hpp"
#include "socbench/kmedoids.hpp"

namespace socbench {

void build_arx_regression(const TimeSeriesDataset& d, int arx_order, Eigen::MatrixXd& x_soc,
                          Eigen::MatrixXd& phi, Eigen::RowVectorXd& v_target) {
  const int m = arx_order;
  if (m < 1) throw std::invalid_argument("build_arx_regression: arx_order must be >= 1");
  const Eigen::Index n = d.size();
  if (n <= m)
    throw std::invalid_argument("build_arx_regression: need more than " + std::to_string(m) +
                                " samples");
  const Eigen::VectorXd soc = d.socs();  // throws when the reference is missing
  const Eigen::VectorXd i = d.currents();
  const Eigen::VectorXd v = d.voltages();

  const Eigen::Index cnt = n - m;
  x_soc.resize(1, cnt);
  phi.resize(2 * m + 1, cnt);
  v_target.resize(cnt);
  for (Eigen::Index k = m; k < n; ++k) {
    const Eigen::Index col = k - m;
    for (int lag = m; lag >= 1; --lag) {
      phi(m - lag, col) = -v(k - lag);          // pairs a_lag
      phi(2 * m - lag, col) = i(k - lag);       // pairs b_lag
    }
    phi(2 * m, col) = 1.0;
    v_target(col) = v(k);
    x_soc(0, col) = soc(k);
  }
}

MlpvResult train_mlpv(const TimeSeriesDataset& d_tr, int arx_order, const MlpSpec& spec,
                      const TrainSpec& tspec) {
  Eigen::MatrixXd x_soc, phi;
  Eigen::RowVectorXd v_target;
  build_arx_regression(d_tr, arx_order, x_soc, phi, v_target);

  MlpSpec s = spec;
  if (s.layer_sizes.size() < 3)
    throw std::invalid_argument("train_mlpv: spec needs at least one hidden layer");
  s.layer_sizes.front() = 1;
  s.layer_sizes.back() = 2 * arx_order + 1;

  // The lag regressor mixes volt and ampere scales with strong DC content,
  // and the readout gradient carries the regressor itself, so raw features
  // walk the hidden layers to death long before the scheduler converges.
  // Train against a centred unit-variance copy (constant regressor kept
  // as-is) and fold the transform back into the affine output layer after.
  const Eigen::Index n_feat = phi.rows();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(n_feat);
  Eigen::VectorXd sig = Eigen::VectorXd::Ones(n_feat);
  for (Eigen::Index j = 0; j + 1 < n_feat; ++j) {
    mu(j) = phi.row(j).mean();
    const double var = (phi.row(j).array() - mu(j)).square().mean();
    sig(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  Eigen::MatrixXd phi_c =
      ((phi.colwise() - mu).array().colwise() / sig.array()).matrix();

  // Warm-start the output layer at the global (scheduling-independent) least
  // squares coefficients, so the net starts from the best constant schedule
  // and only has to learn SOC-dependent corrections.
  s.out_bias = (phi_c * phi_c.transpose())
                   .ldlt()
                   .solve(phi_c * v_target.transpose());

  MlpvResult res;
  res.net = mlp_train_readout(s, tspec, x_soc, phi_c, v_target, &res.log);

  // gamma_raw(j) = gamma_c(j)/sig(j); the constant coefficient absorbs the
  // centring. Exact because the output layer is affine.
  Eigen::MatrixXd& w_out = res.net.weights.back();
  Eigen::VectorXd& b_out = res.net.biases.back();
  for (Eigen::Index j = 0; j + 1 < n_feat; ++j) {
    w_out.row(n_feat - 1) -= (mu(j) / sig(j)) * w_out.row(j);
    b_out(n_feat - 1) -= (mu(j) / sig(j)) * b_out(j);
    w_out.row(j) /= sig(j);
    b_out(j) /= sig(j);
  }

  res.soc_trace = x_soc.row(0).transpose();
  res.gamma_trace.resize(x_soc.cols(), 2 * arx_order + 1);
  for (Eigen::Index c = 0; c < x_soc.cols(); ++c)
    res.gamma_trace.row(c) = res.net.forward(x_soc.col(c)).transpose();
  return res;
}

RepresentativeSelection select_representatives(const Eigen::MatrixXd& gamma_trace,
                                               const Eigen::VectorXd& soc_trace, int n_models,
                                               std::uint64_t seed, Eigen::Index max_points) {
  if (gamma_trace.rows() != soc_trace.size())
    throw std::invalid_argument("select_representatives: trace length mismatch");
  if (n_models < 1) throw std::invalid_argument("select_representatives: n_models must be >= 1");
  if (max_points < n_models)
    throw std::invalid_argument("select_representatives: max_points below n_models");

  // Deterministic stride subsample keeps clustering tractable on long runs.
  Eigen::MatrixXd pts;
  Eigen::VectorXd soc;
  if (gamma_trace.rows() > max_points) {
    const auto stride = static_cast<Eigen::Index>(
        std::ceil(static_cast<double>(gamma_trace.rows()) / static_cast<double>(max_points)));
    const Eigen::Index cnt = (gamma_trace.rows() + stride - 1) / stride;
    pts.resize(cnt, gamma_trace.cols());
    soc.resize(cnt);
    for (Eigen::Index n = 0; n < cnt; ++n) {
      pts.row(n) = gamma_trace.row(n * stride);
      soc(n) = soc_trace(n * stride);
    }
  } else {
    pts = gamma_trace;
    soc = soc_trace;
  }

  KMedoidsResult km = kmedoids(pts, n_models, seed);

  struct Tagged {
    ArxParams model;
    double tag;
  };
  std::vector<Tagged> tagged;
  for (int c = 0; c < km.n_clusters; ++c) {
    double sum = 0.0;
    long cnt = 0;
    for (size_t p = 0; p < km.assignment.size(); ++p)
      if (km.assignment[p] == c) {
        sum += soc(static_cast<Eigen::Index>(p));
        ++cnt;
      }
    Tagged t{ArxParams::from_gamma(pts.row(km.medoids[static_cast<size_t>(c)]).transpose()),
             cnt > 0 ? sum / static_cast<double>(cnt) : 0.0};
    tagged.push_back(std::move(t));
  }
  std::sort(tagged.begin(), tagged.end(),
            [](const Tagged& a, const Tagged& b) { return a.tag < b.tag; });

  RepresentativeSelection sel;
  sel.reduced = km.reduced;
  for (auto& t : tagged) {
    sel.models.push_back(std::move(t.model));
    sel.soc_tags.push_back(t.tag);
  }
  return sel;
}

Eigen::MatrixXd run_observer_bank(const std::vector<LocalObserver>& bank,
                                  const TimeSeriesDataset& d) {
  if (bank.empty()) throw std::invalid_argument("run_observer_bank: empty bank");
  const Eigen::Index n = d.size();
  Eigen::MatrixXd innov(static_cast<Eigen::Index>(bank.size()), n);
  std::vector<Eigen::VectorXd> states;
  states.reserve(bank.size());
  for (const auto& obs : bank) states.push_back(Eigen::VectorXd::Zero(obs.order()));
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& s = d.samples[static_cast<size_t>(k)];
    for (size_t j = 0; j < bank.size(); ++j)
      innov(static_cast<Eigen::Index>(j), k) = observer_step(bank[j], states[j], s.i, s.v);
  }
  return innov;
}

Eigen::VectorXd build_features(const Eigen::MatrixXd& innovations, int window, Eigen::Index k) {
  if (window < 0) throw std::invalid_argument("build_features: window must be >= 0");
  if (k < window || k >= innovations.cols())
    throw std::invalid_argument("build_features: k=" + std::to_string(k) +
                                " outside [window, N)");
  const Eigen::Index n_models = innovations.rows();
  Eigen::VectorXd f(n_models * (window + 1));
  for (Eigen::Index j = 0; j < n_models; ++j)
    for (int lag = 0; lag <= window; ++lag)
      f(j * (window + 1) + lag) = std::abs(innovations(j, k - lag));
  return f;
}

Mlp train_soc_predictor(const TimeSeriesDataset& d_tr, const Eigen::MatrixXd& innovations,
                        int window, Eigen::Index warmup, const MlpSpec& spec,
                        const TrainSpec& tspec, TrainLog* log) {
  const Eigen::Index n = d_tr.size();
  if (innovations.cols() != n)
    throw std::invalid_argument("train_soc_predictor: innovation trace length mismatch");
  warmup = std::max<Eigen::Index>(warmup, window);
  if (n <= warmup) throw std::invalid_argument("train_soc_predictor: nothing after warm-up");
  const Eigen::VectorXd soc = d_tr.socs();

  const Eigen::Index n_feat = innovations.rows() * (window + 1);
  Eigen::MatrixXd x(n_feat + 2, n - warmup);
  Eigen::MatrixXd y(1, n - warmup);
  for (Eigen::Index k = warmup; k < n; ++k) {
    const Eigen::Index col = k - warmup;
    x.col(col).head(n_feat) = build_features(innovations, window, k);
    x(n_feat, col) = d_tr.samples[static_cast<size_t>(k)].i;
    x(n_feat + 1, col) = d_tr.samples[static_cast<size_t>(k)].v;
    y(0, col) = soc(k);
  }

  MlpSpec s = spec;
  if (s.layer_sizes.size() < 3)
    throw std::invalid_argument("train_soc_predictor: spec needs at least one hidden layer");
  s.layer_sizes.front() = n_feat + 2;
  s.layer_sizes.back() = 1;
  return mlp_train(s, tspec, x, y, log);
}

void VirtualSensor::reset() {
  states.clear();
  for (const auto& obs : bank) states.push_back(Eigen::VectorXd::Zero(obs.order()));
  eps_hist = Eigen::MatrixXd::Zero(n_models(), window + 1);
  steps_run = 0;
}

VsStepResult VirtualSensor::step(double i, double v) {
  if (bank.empty()) throw std::invalid_argument("virtual sensor: empty bank");
  if (states.size() != bank.size()) reset();

  // Shift the innovation history one lag and store the new magnitudes.
  for (int lag = window; lag >= 1; --lag) eps_hist.col(lag) = eps_hist.col(lag - 1);
  for (size_t j = 0; j < bank.size(); ++j) {
    const double eps = observer_step(bank[j], states[j], i, v);
    eps_hist(static_cast<Eigen::Index>(j), 0) = std::abs(eps);
  }

  const Eigen::Index n_feat = static_cast<Eigen::Index>(bank.size()) * (window + 1);
  Eigen::VectorXd x(n_feat + 2);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(bank.size()); ++j)
    for (int lag = 0; lag <= window; ++lag) x(j * (window + 1) + lag) = eps_hist(j, lag);
  x(n_feat) = i;
  x(n_feat + 1) = v;

  VsStepResult res;
  res.soc_raw = predictor.forward(x)(0);
  res.soc = std::min(1.1, std::max(-0.1, res.soc_raw));
  res.clamped = res.soc != res.soc_raw;
  ++steps_run;
  return res;
}

VsTrainResult train_virtual_sensor(const TimeSeriesDataset& d_tr, const VsHyper& hyper,
                                   const MlpSpec& mlpv_spec, const TrainSpec& mlpv_tspec,
                                   const MlpSpec& pred_spec, const TrainSpec& pred_tspec,
                                   std::uint64_t seed) {
  if (hyper.window < 0) throw std::invalid_argument("train_virtual_sensor: window must be >= 0");

  VsTrainResult out;
  out.mlpv = train_mlpv(d_tr, hyper.arx_order, mlpv_spec, mlpv_tspec);

  RepresentativeSelection sel =
      select_representatives(out.mlpv.gamma_trace, out.mlpv.soc_trace, hyper.n_models,
                             sub_seed(seed, 0xC1), hyper.cluster_max_points);
  out.representatives_reduced = sel.reduced;

  for (size_t m = 0; m < sel.models.size(); ++m) {
    ArxParams g = sel.models[m];
    if (hyper.zero_affine) g.gamma(g.gamma.size() - 1) = 0.0;
    ArxRealizationInfo info;
    LocalObserver obs = arx_to_ss(g, &info);
    if (info.reduced) ++out.reduced_order_models;
    place_observer_gain(obs, hyper.pole_radius);
    obs.soc_tag = sel.soc_tags[m];
    out.sensor.bank.push_back(std::move(obs));
  }
  out.sensor.window = hyper.window;

  // Innovations are recomputed with the placed gains; the regressor must see
  // the same signal statistics it will get at run time.
  Eigen::MatrixXd innovations = run_observer_bank(out.sensor.bank, d_tr);
  const Eigen::Index warmup = std::max<Eigen::Index>(hyper.arx_order, hyper.window);
  out.sensor.predictor = train_soc_predictor(d_tr, innovations, hyper.window, warmup, pred_spec,
                                             pred_tspec, &out.predictor_log);
  out.sensor.reset();
  return out;
}

namespace {

void write_vec(std::ostream& out, const char* name, const Eigen::VectorXd& v) {
  out << name << ' ' << v.size();
  for (Eigen::Index n = 0; n < v.size(); ++n) out << ' ' << fmt_double(v(n));
  out << '\n';
}

Eigen::VectorXd read_vec(std::istream& in, const char* name) {
  std::string word;
  Eigen::Index count = 0;
  in >> word >> count;
  if (word != name || !in || count < 0)
    throw ParseError(std::string("virtual sensor: expected ") + name + " block");
  Eigen::VectorXd v(count);
  for (Eigen::Index n = 0; n < count; ++n) in >> v(n);
  if (!in) throw ParseError(std::string("virtual sensor: truncated ") + name + " block");
  return v;
}

}  // namespace

void VirtualSensor::save(std::ostream& out) const {
  out << "virtual_sensor v1\n";
  out << "window " << window << '\n';
  out << "n_models " << bank.size() << '\n';
  for (size_t j = 0; j < bank.size(); ++j) {
    const auto& obs = bank[j];
    out << "observer " << j << '\n';
    out << "order " << obs.order() << '\n';
    out << "soc_tag " << fmt_double(obs.soc_tag) << '\n';
    out << "A";
    for (Eigen::Index r = 0; r < obs.A.rows(); ++r)
      for (Eigen::Index c = 0; c < obs.A.cols(); ++c) out << ' ' << fmt_double(obs.A(r, c));
    out << '\n';
    write_vec(out, "B", obs.B);
    write_vec(out, "C", obs.C.transpose());
    write_vec(out, "d", obs.d);
    out << "e " << fmt_double(obs.e) << '\n';
    write_vec(out, "L", obs.L);
  }
  out << "predictor\n";
  predictor.save(out);
  out << "end\n";
}

VirtualSensor VirtualSensor::load(std::istream& in) {
  std::string tag, version;
  in >> tag >> version;
  if (tag != "virtual_sensor" || version != "v1")
    throw ParseError("virtual sensor: bad magic, expected \"virtual_sensor v1\"");
  VirtualSensor vs;
  std::string word;
  size_t n_models = 0;
  in >> word >> vs.window;
  if (word != "window" || !in || vs.window < 0)
    throw ParseError("virtual sensor: bad window");
  in >> word >> n_models;
  if (word != "n_models" || !in || n_models == 0)
    throw ParseError("virtual sensor: bad n_models");
  for (size_t j = 0; j < n_models; ++j) {
    size_t idx;
    in >> word >> idx;
    if (word != "observer" || idx != j || !in)
      throw ParseError("virtual sensor: expected observer " + std::to_string(j));
    int order = 0;
    in >> word >> order;
    if (word != "order" || order < 1 || !in)
      throw ParseError("virtual sensor: bad observer order");
    LocalObserver obs;
    in >> word >> obs.soc_tag;
    if (word != "soc_tag" || !in) throw ParseError("virtual sensor: bad soc_tag");
    in >> word;
    if (word != "A") throw ParseError("virtual sensor: expected A block");
    obs.A.resize(order, order);
    for (Eigen::Index r = 0; r < order; ++r)
      for (Eigen::Index c = 0; c < order; ++c) in >> obs.A(r, c);
    obs.B = read_vec(in, "B");
    obs.C = read_vec(in, "C").transpose();
    obs.d = read_vec(in, "d");
    in >> word >> obs.e;
    if (word != "e" || !in) throw ParseError("virtual sensor: bad e");
    obs.L = read_vec(in, "L");
    if (obs.B.size() != order || obs.C.size() != order || obs.d.size() != order ||
        (obs.L.size() != 0 && obs.L.size() != order))
      throw ParseError("virtual sensor: observer block dimensions disagree");
    vs.bank.push_back(std::move(obs));
  }
  in >> word;
  if (word != "predictor") throw ParseError("virtual sensor: expected predictor block");
  vs.predictor = Mlp::load(in);
  in >> word;
  if (word != "end") throw ParseError("virtual sensor: missing end marker");
  vs.reset();
  return vs;
}

void VirtualSensor::save_file(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save(out);
  if (!out) throw std::runtime_error("write failed for " + path);
}

VirtualSensor VirtualSensor::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingArtifactError("cannot open " + path);
  return load(in);
}

}  // namespace socbench
