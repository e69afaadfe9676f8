#include "socbench/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "socbench/common.hpp"
#include "socbench/csv.hpp"
#include "socbench/metrics.hpp"

namespace socbench {

namespace fs = std::filesystem;

namespace {

std::string join_path(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

// Artifact presence is checked before handing the path to a loader so the
// error names the stage that produces the file.
void require_artifact(const std::string& path, const char* producer) {
  if (!fs::exists(path))
    throw MissingArtifactError("missing artifact " + path + "; run the " +
                               std::string(producer) + " stage first");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  return out;
}

Loss loss_from_string(const std::string& s) {
  if (s == "squared") return Loss::Squared;
  if (s == "absolute") return Loss::Absolute;
  throw ConfigError("unknown loss \"" + s + "\" (expected squared or absolute)");
}

std::vector<ProfileKind> kinds_from_string(const std::string& s) {
  std::istringstream in(s);
  std::vector<ProfileKind> out;
  std::string tok;
  while (in >> tok) out.push_back(profile_kind_from_string(tok));
  if (out.empty()) throw ConfigError("profile list is empty");
  return out;
}

std::vector<Eigen::Index> hidden_from_vector(const Eigen::VectorXd& v) {
  std::vector<Eigen::Index> out;
  for (Eigen::Index n = 0; n < v.size(); ++n) {
    if (v(n) < 1.0 || v(n) != std::floor(v(n)))
      throw ConfigError("hidden layer widths must be positive integers");
    out.push_back(static_cast<Eigen::Index>(v(n)));
  }
  return out;
}

Eigen::VectorXd vec_from_hidden(const std::vector<Eigen::Index>& v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (size_t n = 0; n < v.size(); ++n) out(static_cast<Eigen::Index>(n)) = double(v[n]);
  return out;
}

const char* mode_name(EkfMode mode) { return mode == EkfMode::Baseline ? "baseline" : "fusion"; }

// Per-stage seed tags. Values are arbitrary but fixed: changing them changes
// every downstream artifact of a given pipeline seed.
enum SeedStage : std::uint64_t {
  kSeedTrainProfile = 1,   // + profile index
  kSeedTrainNoise = 20,    // + profile index
  kSeedTestProfile = 40,   // + profile index
  kSeedTestNoise = 60,     // + profile index
  kSeedGeis = 80,
  kSeedMlpvTrain = 0x10,
  kSeedPredTrain = 0x11,
  kSeedMlpvInit = 0x20,
  kSeedPredInit = 0x21,
  kSeedCluster = 0x30,
  kSeedCalBaseline = 0x40,
  kSeedCalFusion = 0x41,
};

TimeSeriesDataset merge_runs(const std::vector<TimeSeriesDataset>& parts, Eigen::Index* seam) {
  TimeSeriesDataset out;
  out.tau_s = parts.front().tau_s;
  long k = 0;
  for (size_t pi = 0; pi < parts.size(); ++pi) {
    if (pi == 1 && seam) *seam = static_cast<Eigen::Index>(k);
    for (Sample s : parts[pi].samples) {
      s.k = k++;
      out.samples.push_back(s);
    }
  }
  return out;
}

TrainSpec make_tspec(const PipelineConfig& p, int epochs, double lr, Eigen::Index batch,
                     Loss loss, std::uint64_t stage) {
  TrainSpec t;
  t.epochs = epochs;
  t.lr = lr;
  t.batch_size = batch;
  t.loss = loss;
  t.rho = p.rmsprop_rho;
  t.eps = p.rmsprop_eps;
  t.validation_fraction = p.val_fraction;
  t.patience = p.patience;
  t.chronological_split = p.chronological_split;
  t.seed = sub_seed(p.seed, stage);
  return t;
}

MlpSpec make_mspec(const std::vector<Eigen::Index>& hidden, std::uint64_t seed) {
  MlpSpec s;
  s.layer_sizes.push_back(1);  // in/out widths are overridden by the trainer
  s.layer_sizes.insert(s.layer_sizes.end(), hidden.begin(), hidden.end());
  s.layer_sizes.push_back(1);
  s.seed = seed;
  return s;
}

EkfNoise noise_from_file(const std::string& path) {
  Config cfg = Config::from_file(path);
  EkfNoise n;
  n.sigma_soc = cfg.get_double("noise.sigma_soc");
  n.sigma_ir = cfg.get_double("noise.sigma_ir");
  n.sigma_v = cfg.get_double("noise.sigma_v");
  n.sigma_socy = cfg.get_double("noise.sigma_socy");
  return n;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid), v.end());
  double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + static_cast<long>(mid) - 1, v.end());
  return 0.5 * (v[mid - 1] + hi);
}

pipeline::MethodScore score_method(const std::string& name, const Eigen::VectorXd& est,
                                   const Eigen::VectorXd& ref, const std::vector<double>& times) {
  // Scores leave out the startup rest: every estimator fills its history or
  // converges from its initial guess there, and those transients would
  // otherwise swamp the steady tracking comparison. Traces keep every step.
  const Eigen::Index skip = std::min<Eigen::Index>(kProfileLeadRest, est.size() - 1);
  const Eigen::Index n = est.size() - skip;
  pipeline::MethodScore s;
  s.method = name;
  s.rmse_soc = rmse(est.tail(n), ref.tail(n));
  s.tv_soc = total_variation(est.tail(n));
  s.median_step_time_s = median_of(times);
  return s;
}

// Trace rows mirror the filter trace layout for every method; cells that do
// not apply (no voltage prediction for the standalone sensor, no pseudo-
// measurement on voltage-only steps) stay empty.
void write_trace_csv(const std::string& path, const TimeSeriesDataset& ref,
                     const Eigen::VectorXd& soc_hat, const Eigen::VectorXd* v_hat,
                     const Eigen::VectorXd* innov_v, const Eigen::VectorXd* innov_soc) {
  std::ofstream out = open_out(path);
  out << "k,soc_true,soc_hat,v,v_hat,innov_v,innov_soc\n";
  auto cell = [](const Eigen::VectorXd* col, Eigen::Index k) {
    if (!col || !std::isfinite((*col)(k))) return std::string();
    return fmt_double((*col)(k));
  };
  for (Eigen::Index k = 0; k < ref.size(); ++k) {
    const Sample& s = ref.samples[static_cast<size_t>(k)];
    out << s.k << ',' << (s.soc ? fmt_double(*s.soc) : std::string()) << ','
        << fmt_double(soc_hat(k)) << ',' << fmt_double(s.v) << ',' << cell(v_hat, k) << ','
        << cell(innov_v, k) << ',' << cell(innov_soc, k) << '\n';
  }
}

void write_results_csv(const std::string& path, const pipeline::EvaluateResult& r) {
  std::ofstream out = open_out(path);
  out << "method,rmse_soc,tv_soc,median_step_time_s\n";
  for (const pipeline::MethodScore* s : {&r.bekf, &r.vs, &r.vsf})
    out << s->method << ',' << fmt_double(s->rmse_soc) << ',' << fmt_double(s->tv_soc) << ','
        << fmt_double(s->median_step_time_s) << '\n';
}

std::map<std::string, pipeline::MethodScore> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "method,rmse_soc,tv_soc,median_step_time_s")
    throw ParseError(path + ":1: unexpected header \"" + line + "\"");
  std::map<std::string, pipeline::MethodScore> out;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 4)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 4 cells");
    pipeline::MethodScore s;
    s.method = cells[0];
    s.rmse_soc = parse_csv_double(cells[1], line_no, "rmse_soc");
    s.tv_soc = parse_csv_double(cells[2], line_no, "tv_soc");
    s.median_step_time_s = parse_csv_double(cells[3], line_no, "median_step_time_s");
    out[s.method] = s;
  }
  return out;
}

struct CalLogSummary {
  long evals = 0;
  double best_j = std::numeric_limits<double>::infinity();
};

CalLogSummary read_calibration_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "eval,theta_soc,theta_ir,theta_v,theta_socy,J,J1,J2,J3")
    throw ParseError(path + ":1: unexpected header \"" + line + "\"");
  CalLogSummary s;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 9)
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 9 cells");
    ++s.evals;
    if (cells[5].empty()) continue;  // failed evaluation, logged without a J
    double j = parse_csv_double(cells[5], line_no, "J");
    s.best_j = std::min(s.best_j, j);
  }
  return s;
}

// Filters start uninformed at x0 = [0,0] with a wide SOC prior; how fast
// each method recovers from that is part of what the benchmark measures.
EkfConfig make_ekf_base(const PipelineConfig& cfg, EkfMode mode, const CellParams& params) {
  EkfConfig base;
  base.mode = mode;
  base.params = params;
  base.tau_s = cfg.tau_s;
  base.x0 = cfg.x0;
  base.sigma0 = cfg.sigma0_diag.asDiagonal();
  base.soc_jacobian_cross_term = cfg.cross_term;
  return base;
}

CellParams biased_identified(const PipelineConfig& cfg) {
  const std::string path = join_path(cfg.out_dir, artifacts::kIdentifiedParams);
  require_artifact(path, "identify");
  CellParams p = load_cell_params(path);
  p.q_total *= cfg.q_bias_factor;
  return p;
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& cfg) {
  PipelineConfig p;
  p.seed = static_cast<std::uint64_t>(cfg.get_long("seed", static_cast<long>(p.seed)));
  p.out_dir = cfg.get_string("out_dir", p.out_dir);
  p.tau_s = cfg.get_double("sim.tau_s", p.tau_s);

  CellParams t = default_cell_params();
  t.q_total = cfg.get_double("cell.q_total_As", t.q_total);
  t.eta_c = cfg.get_double("cell.eta_c", t.eta_c);
  t.theta_ocv = cfg.get_vector("cell.theta_ocv", t.theta_ocv);
  Eigen::VectorXd r0 = cfg.get_vector("cell.theta_r0", t.theta_r0);
  Eigen::VectorXd r1 = cfg.get_vector("cell.theta_r1", t.theta_r1);
  if (r0.size() != 3 || r1.size() != 3)
    throw ConfigError("cell.theta_r0/theta_r1 must have exactly 3 coefficients");
  t.theta_r0 = r0;
  t.theta_r1 = r1;
  t.theta_tau1 = cfg.get_vector("cell.theta_tau1", t.theta_tau1);
  t.v_min = cfg.get_double("cell.v_min", t.v_min);
  t.v_max = cfg.get_double("cell.v_max", t.v_max);
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  p.truth = t;
  p.weights.v_min = t.v_min;
  p.weights.v_max = t.v_max;

  p.sigma_v = cfg.get_double("sim.sigma_v", p.sigma_v);
  p.sigma_i = cfg.get_double("sim.sigma_i", p.sigma_i);
  p.train_steps = cfg.get_long("sim.train_steps", p.train_steps);
  p.test_steps = cfg.get_long("sim.test_steps", p.test_steps);
  p.i_max = cfg.get_double("sim.i_max", p.i_max);
  p.soc0 = cfg.get_double("sim.soc0", p.soc0);
  if (cfg.has("sim.train_profiles"))
    p.train_kinds = kinds_from_string(cfg.get_string("sim.train_profiles"));
  if (cfg.has("sim.test_profiles"))
    p.test_kinds = kinds_from_string(cfg.get_string("sim.test_profiles"));
  p.c_rate = cfg.get_double("sim.c_rate", p.c_rate);
  p.geis_noise_rel = cfg.get_double("sim.geis_noise_rel", p.geis_noise_rel);
  if (cfg.has("sim.geis_soc_levels")) {
    Eigen::VectorXd lv = cfg.get_vector("sim.geis_soc_levels");
    p.geis_levels.assign(lv.data(), lv.data() + lv.size());
  }
  p.ocv_degree = static_cast<int>(cfg.get_long("identify.ocv_degree", p.ocv_degree));

  p.vs_hyper.arx_order = static_cast<int>(cfg.get_long("vs.arx_order", p.vs_hyper.arx_order));
  p.vs_hyper.n_models = static_cast<int>(cfg.get_long("vs.n_models", p.vs_hyper.n_models));
  p.vs_hyper.window = static_cast<int>(cfg.get_long("vs.window", p.vs_hyper.window));
  p.vs_hyper.pole_radius = cfg.get_double("vs.pole_radius", p.vs_hyper.pole_radius);
  p.vs_hyper.zero_affine = cfg.get_bool("vs.zero_affine", p.vs_hyper.zero_affine);
  p.vs_hyper.cluster_max_points =
      cfg.get_long("vs.cluster_max_points", p.vs_hyper.cluster_max_points);
  p.mlpv_hidden = hidden_from_vector(cfg.get_vector("vs.mlpv_hidden", vec_from_hidden(p.mlpv_hidden)));
  p.pred_hidden = hidden_from_vector(cfg.get_vector("vs.pred_hidden", vec_from_hidden(p.pred_hidden)));
  p.mlpv_epochs = static_cast<int>(cfg.get_long("vs.mlpv_epochs", p.mlpv_epochs));
  p.mlpv_lr = cfg.get_double("vs.mlpv_lr", p.mlpv_lr);
  p.mlpv_batch = cfg.get_long("vs.mlpv_batch", p.mlpv_batch);
  p.mlpv_loss = loss_from_string(cfg.get_string("vs.mlpv_loss", "absolute"));
  p.pred_epochs = static_cast<int>(cfg.get_long("vs.pred_epochs", p.pred_epochs));
  p.pred_lr = cfg.get_double("vs.pred_lr", p.pred_lr);
  p.pred_batch = cfg.get_long("vs.pred_batch", p.pred_batch);
  p.pred_loss = loss_from_string(cfg.get_string("vs.pred_loss", "squared"));
  p.val_fraction = cfg.get_double("vs.val_fraction", p.val_fraction);
  p.patience = static_cast<int>(cfg.get_long("vs.patience", p.patience));
  p.rmsprop_rho = cfg.get_double("vs.rmsprop_rho", p.rmsprop_rho);
  p.rmsprop_eps = cfg.get_double("vs.rmsprop_eps", p.rmsprop_eps);
  p.chronological_split = cfg.get_bool("vs.chronological_split", p.chronological_split);

  Eigen::VectorXd x0 = cfg.get_vector("ekf.x0", p.x0);
  Eigen::VectorXd s0 = cfg.get_vector("ekf.sigma0_diag", p.sigma0_diag);
  if (x0.size() != 2 || s0.size() != 2)
    throw ConfigError("ekf.x0 and ekf.sigma0_diag must have exactly 2 entries");
  p.x0 = x0;
  p.sigma0_diag = s0;
  p.cross_term = cfg.get_bool("ekf.cross_term", p.cross_term);
  p.q_bias_factor = cfg.get_double("ekf.q_bias_factor", p.q_bias_factor);

  p.budget = static_cast<int>(cfg.get_long("cal.budget", p.budget));
  p.weights.w1 = cfg.get_double("cal.w1", p.weights.w1);
  p.weights.w2 = cfg.get_double("cal.w2", p.weights.w2);
  p.weights.w3 = cfg.get_double("cal.w3", p.weights.w3);
  double lo = cfg.get_double("cal.bounds_lo", 1e-6);
  double hi = cfg.get_double("cal.bounds_hi", 1.0);
  if (!(lo > 0.0) || !(hi > lo)) throw ConfigError("cal bounds must satisfy 0 < lo < hi");
  p.cal_lower = Eigen::VectorXd::Constant(4, lo);
  p.cal_upper = Eigen::VectorXd::Constant(4, hi);
  p.cal_pure_random = cfg.get_bool("cal.pure_random", p.cal_pure_random);

  if (p.train_steps < 10 || p.test_steps < 10)
    throw ConfigError("sim.train_steps and sim.test_steps must be at least 10");
  if (p.q_bias_factor <= 0.0) throw ConfigError("ekf.q_bias_factor must be positive");
  if (p.budget < 4) throw ConfigError("cal.budget must be at least 4");
  return p;
}

namespace pipeline {

SimulateMeta cmd_simulate(const PipelineConfig& cfg) {
  ensure_out_dir(cfg.out_dir);

  LcOcvResult lc = simulate_lc_ocv(cfg.truth, cfg.c_rate, cfg.tau_s);
  TimeSeriesDataset lc_merged = merge_runs({lc.discharge, lc.charge}, nullptr);
  const std::string lc_path = join_path(cfg.out_dir, artifacts::kLcOcv);
  write_timeseries_csv(lc_path, lc_merged);
  std::cout << "wrote " << lc_path << " (" << lc_merged.size() << " rows: "
            << lc.discharge.size() << " discharge + " << lc.charge.size() << " charge)\n";

  GeisDataset geis = simulate_geis(cfg.truth, cfg.geis_levels, geis_default_omegas(),
                                   cfg.geis_noise_rel, sub_seed(cfg.seed, kSeedGeis));
  const std::string geis_path = join_path(cfg.out_dir, artifacts::kGeis);
  write_geis_csv(geis_path, geis);
  std::cout << "wrote " << geis_path << " (" << geis.size() << " equilibria)\n";

  // Consecutive segments continue one experiment: each segment but the last
  // ends with a rest long enough to relax the diffusion branch, so the next
  // one can pick up from (final soc, 0) without a state glitch at the seam.
  constexpr Eigen::Index kSeamRestSteps = 240;
  auto make_merged = [&](const std::vector<ProfileKind>& kinds, Eigen::Index steps,
                         std::uint64_t profile_stage, std::uint64_t noise_stage,
                         Eigen::Index* seam) {
    std::vector<TimeSeriesDataset> parts;
    double soc0 = cfg.soc0;
    for (size_t n = 0; n < kinds.size(); ++n) {
      CurrentProfile prof = gen_profile(kinds[n], steps, cfg.i_max,
                                        sub_seed(cfg.seed, profile_stage + n));
      if (n + 1 < kinds.size()) {
        const Eigen::Index n0 = prof.currents.size();
        prof.currents.conservativeResize(n0 + kSeamRestSteps);
        prof.currents.tail(kSeamRestSteps).setZero();
      }
      NoiseSpec noise{cfg.sigma_v, cfg.sigma_i, sub_seed(cfg.seed, noise_stage + n)};
      TimeSeriesDataset part = simulate_ecm(cfg.truth, prof, soc0, 0.0, noise, cfg.tau_s);
      if (part.size() < prof.currents.size())
        std::cout << "note: " << prof.name << " halted at sample " << part.size()
                  << " (cut-off or soc bound reached)\n";
      soc0 = *part.samples.back().soc;
      parts.push_back(std::move(part));
    }
    return merge_runs(parts, seam);
  };

  SimulateMeta meta;
  TimeSeriesDataset train = make_merged(cfg.train_kinds, cfg.train_steps, kSeedTrainProfile,
                                        kSeedTrainNoise, &meta.train_seam);
  const std::string train_path = join_path(cfg.out_dir, artifacts::kTrain);
  write_timeseries_csv(train_path, train);
  std::cout << "wrote " << train_path << " (" << train.size() << " rows, segment boundary at k="
            << meta.train_seam << ")\n";

  TimeSeriesDataset test = make_merged(cfg.test_kinds, cfg.test_steps, kSeedTestProfile,
                                       kSeedTestNoise, &meta.test_seam);
  const std::string test_path = join_path(cfg.out_dir, artifacts::kTest);
  write_timeseries_csv(test_path, test);
  std::cout << "wrote " << test_path << " (" << test.size() << " rows, segment boundary at k="
            << meta.test_seam << ")\n";
  return meta;
}

IdentificationResult cmd_identify(const PipelineConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const std::string lc_path = join_path(cfg.out_dir, artifacts::kLcOcv);
  const std::string geis_path = join_path(cfg.out_dir, artifacts::kGeis);
  require_artifact(lc_path, "simulate");
  require_artifact(geis_path, "simulate");

  TimeSeriesDataset lc = read_timeseries_csv(lc_path, cfg.tau_s);
  TimeSeriesDataset discharge, charge;
  discharge.tau_s = charge.tau_s = lc.tau_s;
  for (const Sample& s : lc.samples) {
    if (s.i > 0.0)
      discharge.samples.push_back(s);
    else if (s.i < 0.0)
      charge.samples.push_back(s);
  }
  for (TimeSeriesDataset* d : {&discharge, &charge}) {
    long k = 0;
    for (Sample& s : d->samples) s.k = k++;
  }
  if (discharge.samples.empty() || charge.samples.empty())
    throw ParseError(lc_path + ": log must contain a discharge and a charge phase");

  GeisDataset geis = read_geis_csv(geis_path);
  IdentificationResult res =
      identify_cell(discharge, charge, geis, cfg.truth.v_min, cfg.truth.v_max, cfg.ocv_degree);

  const std::string params_path = join_path(cfg.out_dir, artifacts::kIdentifiedParams);
  save_cell_params(params_path, res.params);
  const std::string fits_path = join_path(cfg.out_dir, artifacts::kEquilibriumFits);
  write_equilibrium_fits_csv(fits_path, res.equilibria);

  std::cout << "wrote " << params_path << "\n";
  std::cout << "wrote " << fits_path << " (" << res.equilibria.size() << " equilibria)\n";
  std::cout << "identified capacity " << fmt_double(res.params.q_total) << " A*s, efficiency "
            << fmt_double(res.params.eta_c)
            << (res.curve_fallback ? " (grid fallback used for a resistance curve)" : "") << "\n";
  return res;
}

void cmd_train_vs(const PipelineConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const std::string train_path = join_path(cfg.out_dir, artifacts::kTrain);
  require_artifact(train_path, "simulate");
  TimeSeriesDataset train = read_timeseries_csv(train_path, cfg.tau_s);
  if (!train.has_full_soc())
    throw ParseError(train_path + ": training log must carry the reference soc column");

  MlpSpec mlpv_spec = make_mspec(cfg.mlpv_hidden, sub_seed(cfg.seed, kSeedMlpvInit));
  MlpSpec pred_spec = make_mspec(cfg.pred_hidden, sub_seed(cfg.seed, kSeedPredInit));
  TrainSpec mlpv_tspec = make_tspec(cfg, cfg.mlpv_epochs, cfg.mlpv_lr, cfg.mlpv_batch,
                                    cfg.mlpv_loss, kSeedMlpvTrain);
  TrainSpec pred_tspec = make_tspec(cfg, cfg.pred_epochs, cfg.pred_lr, cfg.pred_batch,
                                    cfg.pred_loss, kSeedPredTrain);

  VsTrainResult r = train_virtual_sensor(train, cfg.vs_hyper, mlpv_spec, mlpv_tspec, pred_spec,
                                         pred_tspec, sub_seed(cfg.seed, kSeedCluster));

  const std::string vs_path = join_path(cfg.out_dir, artifacts::kVirtualSensor);
  r.sensor.save_file(vs_path);
  const std::string mlpv_path = join_path(cfg.out_dir, artifacts::kMlpv);
  r.mlpv.net.save_file(mlpv_path);

  const std::string log_path = join_path(cfg.out_dir, artifacts::kVsTrainingLog);
  {
    std::ofstream out = open_out(log_path);
    out << "stage,epoch,train_loss,val_loss\n";
    auto dump = [&](const char* stage, const TrainLog& log) {
      for (size_t e = 0; e < log.train_loss.size(); ++e)
        out << stage << ',' << e << ',' << fmt_double(log.train_loss[e]) << ','
            << fmt_double(log.val_loss[e]) << '\n';
    };
    dump("scheduler", r.mlpv.log);
    dump("predictor", r.predictor_log);
  }

  std::cout << "wrote " << vs_path << " (bank of " << r.sensor.n_models() << " observers"
            << (r.representatives_reduced ? ", coincident medoids merged" : "")
            << (r.reduced_order_models > 0
                    ? ", " + std::to_string(r.reduced_order_models) + " reduced-order"
                    : "")
            << ")\n";
  std::cout << "wrote " << mlpv_path << " (scheduler best epoch " << r.mlpv.log.best_epoch
            << ")\n";
  std::cout << "wrote " << log_path << " (predictor best epoch " << r.predictor_log.best_epoch
            << ")\n";
}

CalibrationResult cmd_calibrate(const PipelineConfig& cfg, EkfMode mode) {
  ensure_out_dir(cfg.out_dir);
  const std::string train_path = join_path(cfg.out_dir, artifacts::kTrain);
  require_artifact(train_path, "simulate");
  TimeSeriesDataset train = read_timeseries_csv(train_path, cfg.tau_s);
  if (!train.has_full_soc())
    throw ParseError(train_path + ": calibration log must carry the reference soc column");

  EkfConfig base = make_ekf_base(cfg, mode, biased_identified(cfg));

  VirtualSensor vs;
  const VirtualSensor* vs_ptr = nullptr;
  if (mode == EkfMode::Fusion) {
    const std::string vs_path = join_path(cfg.out_dir, artifacts::kVirtualSensor);
    require_artifact(vs_path, "train-vs");
    vs = VirtualSensor::load_file(vs_path);
    vs_ptr = &vs;
  }

  BboOptions opt;
  opt.lower = cfg.cal_lower;
  opt.upper = cfg.cal_upper;
  opt.budget = cfg.budget;
  opt.seed = sub_seed(cfg.seed, mode == EkfMode::Baseline ? kSeedCalBaseline : kSeedCalFusion);
  opt.pure_random = cfg.cal_pure_random;

  const std::string log_path = join_path(
      cfg.out_dir,
      mode == EkfMode::Baseline ? artifacts::kCalibrationBaseline : artifacts::kCalibrationFusion);
  CalibrationResult res = calibrate_filter(base, train, vs_ptr, opt, cfg.weights, log_path);

  Config nc;
  nc.set("noise.mode", std::string(mode_name(mode)));
  nc.set("noise.sigma_soc", res.noise.sigma_soc);
  nc.set("noise.sigma_ir", res.noise.sigma_ir);
  nc.set("noise.sigma_v", res.noise.sigma_v);
  nc.set("noise.sigma_socy", res.noise.sigma_socy);
  nc.set("cal.evals", double(res.history.values.size()));
  nc.set("cal.best_j", res.best.j);
  nc.set("cal.best_j1", res.best.j1);
  nc.set("cal.best_j2", res.best.j2);
  nc.set("cal.best_j3", res.best.j3);
  const std::string noise_path = join_path(
      cfg.out_dir, mode == EkfMode::Baseline ? artifacts::kNoiseBaseline : artifacts::kNoiseFusion);
  nc.save(noise_path);

  std::cout << "wrote " << log_path << " (" << res.history.values.size() << " evaluations)\n";
  std::cout << "wrote " << noise_path << " (J=" << fmt_double(res.best.j) << ")\n";
  return res;
}

EvaluateResult cmd_evaluate(const PipelineConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const std::string test_path = join_path(cfg.out_dir, artifacts::kTest);
  require_artifact(test_path, "simulate");
  TimeSeriesDataset test = read_timeseries_csv(test_path, cfg.tau_s);
  if (!test.has_full_soc())
    throw ParseError(test_path + ": evaluation log must carry the reference soc column");
  const Eigen::VectorXd soc_ref = test.socs();
  const TimeSeriesDataset blind = strip_soc(test);

  const CellParams biased = biased_identified(cfg);
  const std::string nb_path = join_path(cfg.out_dir, artifacts::kNoiseBaseline);
  const std::string nf_path = join_path(cfg.out_dir, artifacts::kNoiseFusion);
  const std::string vs_path = join_path(cfg.out_dir, artifacts::kVirtualSensor);
  require_artifact(nb_path, "calibrate");
  require_artifact(nf_path, "calibrate");
  require_artifact(vs_path, "train-vs");

  EvaluateResult out;

  EkfConfig cfg_b = make_ekf_base(cfg, EkfMode::Baseline, biased);
  cfg_b.noise = noise_from_file(nb_path);
  std::vector<double> times_b;
  EkfRun run_b = run_ekf(cfg_b, blind, nullptr, &times_b);
  out.bekf = score_method("bekf", run_b.soc_hat, soc_ref, times_b);
  write_trace_csv(join_path(cfg.out_dir, artifacts::kTraceBekf), test, run_b.soc_hat,
                  &run_b.v_hat, &run_b.innov_v, &run_b.innov_soc);

  VirtualSensor vs = VirtualSensor::load_file(vs_path);
  vs.reset();
  Eigen::VectorXd soc_vs(test.size());
  std::vector<double> times_v;
  times_v.reserve(static_cast<size_t>(test.size()));
  for (Eigen::Index k = 0; k < test.size(); ++k) {
    const Sample& s = test.samples[static_cast<size_t>(k)];
    const auto t0 = std::chrono::steady_clock::now();
    soc_vs(k) = vs.step(s.i, s.v).soc;
    const auto t1 = std::chrono::steady_clock::now();
    times_v.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  out.vs = score_method("vs", soc_vs, soc_ref, times_v);
  write_trace_csv(join_path(cfg.out_dir, artifacts::kTraceVs), test, soc_vs, nullptr, nullptr,
                  nullptr);

  EkfConfig cfg_f = make_ekf_base(cfg, EkfMode::Fusion, biased);
  cfg_f.noise = noise_from_file(nf_path);
  std::vector<double> times_f;
  EkfRun run_f = run_ekf(cfg_f, blind, &vs, &times_f);
  out.vsf = score_method("vsf", run_f.soc_hat, soc_ref, times_f);
  write_trace_csv(join_path(cfg.out_dir, artifacts::kTraceVsf), test, run_f.soc_hat,
                  &run_f.v_hat, &run_f.innov_v, &run_f.innov_soc);

  const std::string results_path = join_path(cfg.out_dir, artifacts::kResults);
  write_results_csv(results_path, out);
  std::cout << "wrote " << results_path << "\n";
  for (const MethodScore* s : {&out.bekf, &out.vs, &out.vsf})
    std::cout << s->method << ": rmse_soc=" << fmt_double(s->rmse_soc)
              << " tv_soc=" << fmt_double(s->tv_soc)
              << " median_step=" << fmt_double(s->median_step_time_s) << " s\n";
  return out;
}

void cmd_report(const PipelineConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  const std::string results_path = join_path(cfg.out_dir, artifacts::kResults);
  require_artifact(results_path, "evaluate");
  auto results = read_results_csv(results_path);
  for (const char* m : {"bekf", "vs", "vsf"})
    if (!results.count(m))
      throw ParseError(results_path + ": missing row for method \"" + m + "\"");

  std::vector<std::pair<std::string, double>> rows;
  for (const char* m : {"bekf", "vs", "vsf"}) {
    const pipeline::MethodScore& s = results[m];
    rows.emplace_back("rmse_soc_" + std::string(m), s.rmse_soc);
    rows.emplace_back("tv_soc_" + std::string(m), s.tv_soc);
    rows.emplace_back("median_step_time_s_" + std::string(m), s.median_step_time_s);
  }

  const std::string cb_path = join_path(cfg.out_dir, artifacts::kCalibrationBaseline);
  const std::string cf_path = join_path(cfg.out_dir, artifacts::kCalibrationFusion);
  require_artifact(cb_path, "calibrate");
  require_artifact(cf_path, "calibrate");
  CalLogSummary cb = read_calibration_log(cb_path);
  CalLogSummary cf = read_calibration_log(cf_path);
  rows.emplace_back("cal_baseline_evals", double(cb.evals));
  rows.emplace_back("cal_baseline_best_j", cb.best_j);
  rows.emplace_back("cal_fusion_evals", double(cf.evals));
  rows.emplace_back("cal_fusion_best_j", cf.best_j);

  const std::string fits_path = join_path(cfg.out_dir, artifacts::kEquilibriumFits);
  require_artifact(fits_path, "identify");
  auto fits = read_equilibrium_fits_csv(fits_path);
  double max_res = 0.0;
  for (const auto& f : fits) max_res = std::max(max_res, f.residual);
  rows.emplace_back("identify_n_equilibria", double(fits.size()));
  rows.emplace_back("identify_max_residual_ohm", max_res);

  const double rmse_ok = results["vs"].rmse_soc < results["vsf"].rmse_soc &&
                                 results["vsf"].rmse_soc < results["bekf"].rmse_soc
                             ? 1.0
                             : 0.0;
  const double tv_ok = results["vsf"].tv_soc < results["bekf"].tv_soc &&
                               results["bekf"].tv_soc < results["vs"].tv_soc
                           ? 1.0
                           : 0.0;
  const double tv_half_ok = results["vsf"].tv_soc <= 0.5 * results["vs"].tv_soc ? 1.0 : 0.0;
  rows.emplace_back("ordering_rmse_ok", rmse_ok);
  rows.emplace_back("ordering_tv_ok", tv_ok);
  rows.emplace_back("tv_halving_ok", tv_half_ok);

  const std::string report_path = join_path(cfg.out_dir, artifacts::kReport);
  write_metric_report_csv(report_path, rows);
  std::cout << "wrote " << report_path << "\n";
  for (const auto& [k, v] : rows) std::cout << k << " = " << fmt_double(v) << "\n";
}

}  // namespace pipeline

}  // namespace socbench
