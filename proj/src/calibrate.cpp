#include "socbench/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "socbench/common.hpp"
#include "socbench/metrics.hpp"

namespace socbench {

CostBreakdown cost_j(const EkfNoise& noise, const EkfConfig& base_cfg,
                     const TimeSeriesDataset& d_ref, const VirtualSensor* vs_proto,
                     const CostWeights& weights) {
  CostBreakdown out;
  if (!d_ref.has_full_soc())
    throw std::invalid_argument("cost_j: reference log must carry the soc column");
  if (!(weights.v_max > weights.v_min))
    throw std::invalid_argument("cost_j: v_max must exceed v_min");
  if (base_cfg.mode == EkfMode::Fusion && !vs_proto)
    throw std::invalid_argument("cost_j: fusion mode needs a virtual sensor");

  EkfConfig cfg = base_cfg;
  cfg.noise = noise;
  const TimeSeriesDataset stripped = strip_soc(d_ref);
  try {
    EkfRun run;
    if (cfg.mode == EkfMode::Fusion) {
      VirtualSensor vs = *vs_proto;  // fresh state per evaluation
      vs.reset();
      run = run_ekf(cfg, stripped, &vs);
    } else {
      run = run_ekf(cfg, stripped);
    }
    out.j1 = rmse(run.v_hat, d_ref.voltages());
    out.j2 = rmse(run.soc_hat, d_ref.socs());
    out.j3 = total_variation(run.soc_hat);
    out.j = weights.w1 * out.j1 / (weights.v_max - weights.v_min) + weights.w2 * out.j2 +
            weights.w3 * out.j3;
    if (!std::isfinite(out.j)) {
      out.failed = true;
      out.diagnostic = "non-finite cost";
      out.j = std::numeric_limits<double>::infinity();
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.diagnostic = e.what();
    out.j = std::numeric_limits<double>::infinity();
  }
  return out;
}

namespace {

struct Scaler {
  Eigen::VectorXd lo, span;  // in optimization coordinates
  Eigen::VectorXd lower, upper;
  bool log_scale;

  Eigen::VectorXd to_unit(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd g = log_scale ? theta.array().log10().matrix() : theta;
    return (g - lo).cwiseQuotient(span);
  }
  Eigen::VectorXd from_unit(const Eigen::VectorXd& z) const {
    Eigen::VectorXd g = lo + span.cwiseProduct(z);
    Eigen::VectorXd theta =
        log_scale ? Eigen::pow(10.0, g.array()).matrix().eval() : g;
    // Exact clamp so returned points sit inside the declared box.
    return theta.cwiseMax(lower).cwiseMin(upper);
  }
};

double rbf_eval(const Eigen::MatrixXd& centers, const Eigen::VectorXd& lambda,
                const Eigen::VectorXd& tail, const Eigen::VectorXd& z) {
  double acc = tail(0) + tail.segment(1, z.size()).dot(z);
  for (Eigen::Index n = 0; n < centers.rows(); ++n) {
    const double r = (centers.row(n).transpose() - z).norm();
    acc += lambda(n) * r * r * r;
  }
  return acc;
}

// Pattern search within the unit cube.
Eigen::VectorXd compass_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                                 Eigen::VectorXd z) {
  const Eigen::Index dim = z.size();
  double best = f(z);
  double step = 0.25;
  while (step > 1e-4) {
    bool improved = false;
    for (Eigen::Index n = 0; n < dim; ++n) {
      for (double sgn : {1.0, -1.0}) {
        Eigen::VectorXd cand = z;
        cand(n) = std::min(1.0, std::max(0.0, cand(n) + sgn * step));
        const double val = f(cand);
        if (val < best) {
          best = val;
          z = cand;
          improved = true;
        }
      }
    }
    if (!improved) step *= 0.5;
  }
  return z;
}

}  // namespace

Eigen::VectorXd bbo_minimize(const std::function<double(const Eigen::VectorXd&)>& f,
                             const BboOptions& opt, BboHistory* hist) {
  const Eigen::Index dim = opt.lower.size();
  if (dim < 1 || opt.upper.size() != dim)
    throw std::invalid_argument("bbo_minimize: malformed bounds");
  for (Eigen::Index n = 0; n < dim; ++n) {
    if (!(opt.lower(n) < opt.upper(n)))
      throw std::invalid_argument("bbo_minimize: lower must be < upper");
    if (opt.log_scale && !(opt.lower(n) > 0.0))
      throw std::invalid_argument("bbo_minimize: log scale needs positive bounds");
  }
  if (opt.budget < 1) throw std::invalid_argument("bbo_minimize: budget must be >= 1");

  Scaler sc;
  sc.log_scale = opt.log_scale;
  sc.lower = opt.lower;
  sc.upper = opt.upper;
  sc.lo = opt.log_scale ? opt.lower.array().log10().matrix().eval() : opt.lower;
  Eigen::VectorXd hi = opt.log_scale ? opt.upper.array().log10().matrix().eval() : opt.upper;
  sc.span = hi - sc.lo;

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  Eigen::MatrixXd zs(opt.budget, dim);
  Eigen::VectorXd vals(opt.budget);
  Eigen::VectorXd finite_vals(opt.budget);  // sentinel-replaced copy
  Eigen::Index n_done = 0;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::Index best_idx = -1;

  if (hist) {
    hist->points.resize(opt.budget, dim);
    hist->values.resize(opt.budget);
    hist->incumbent.resize(opt.budget);
  }

  auto evaluate = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd theta = sc.from_unit(z);
    const double val = f(theta);
    zs.row(n_done) = z.transpose();
    vals(n_done) = val;
    if (val < best_val) {
      best_val = val;
      best_idx = n_done;
    }
    if (hist) {
      hist->points.row(n_done) = theta.transpose();
      hist->values(n_done) = val;
      hist->incumbent(n_done) = best_val;
    }
    ++n_done;
  };

  const Eigen::Index n_init =
      opt.pure_random ? opt.budget
                      : std::min<Eigen::Index>(opt.budget, std::max<Eigen::Index>(2 * dim, 8));

  if (opt.pure_random) {
    for (Eigen::Index t = 0; t < n_init; ++t) {
      Eigen::VectorXd z(dim);
      for (Eigen::Index n = 0; n < dim; ++n) z(n) = uni(rng);
      evaluate(z);
    }
  } else {
    // Latin hypercube: one sample per stratum per dimension, strata permuted.
    std::vector<std::vector<Eigen::Index>> perms(static_cast<size_t>(dim));
    for (Eigen::Index n = 0; n < dim; ++n) {
      auto& p = perms[static_cast<size_t>(n)];
      p.resize(static_cast<size_t>(n_init));
      for (Eigen::Index t = 0; t < n_init; ++t) p[static_cast<size_t>(t)] = t;
      std::shuffle(p.begin(), p.end(), rng);
    }
    for (Eigen::Index t = 0; t < n_init; ++t) {
      Eigen::VectorXd z(dim);
      for (Eigen::Index n = 0; n < dim; ++n)
        z(n) = (static_cast<double>(perms[static_cast<size_t>(n)][static_cast<size_t>(t)]) +
                uni(rng)) /
               static_cast<double>(n_init);
      evaluate(z);
    }
  }

  while (n_done < opt.budget) {
    // Sentinel replacement keeps the surrogate finite.
    double max_f = -std::numeric_limits<double>::infinity();
    double min_f = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n_done; ++t)
      if (std::isfinite(vals(t))) {
        max_f = std::max(max_f, vals(t));
        min_f = std::min(min_f, vals(t));
      }
    Eigen::VectorXd z_next(dim);
    if (!std::isfinite(max_f)) {
      // Nothing finite yet; keep sampling randomly.
      for (Eigen::Index n = 0; n < dim; ++n) z_next(n) = uni(rng);
      evaluate(z_next);
      continue;
    }
    const double sentinel = max_f + 9.0 * std::max(std::abs(max_f), 1.0);
    for (Eigen::Index t = 0; t < n_done; ++t)
      finite_vals(t) = std::isfinite(vals(t)) ? vals(t) : sentinel;

    // Cubic RBF with linear tail: [Phi P; P^T 0] [lambda; tail] = [f; 0].
    const Eigen::Index rows = n_done + dim + 1;
    Eigen::MatrixXd sys = Eigen::MatrixXd::Zero(rows, rows);
    for (Eigen::Index a = 0; a < n_done; ++a)
      for (Eigen::Index b = 0; b < n_done; ++b) {
        const double r = (zs.row(a) - zs.row(b)).norm();
        sys(a, b) = r * r * r;
      }
    for (Eigen::Index a = 0; a < n_done; ++a) {
      sys(a, n_done) = 1.0;
      sys(n_done, a) = 1.0;
      sys.block(a, n_done + 1, 1, dim) = zs.row(a);
      sys.block(n_done + 1, a, dim, 1) = zs.row(a).transpose();
    }
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(rows);
    rhs.head(n_done) = finite_vals.head(n_done);

    Eigen::VectorXd sol;
    for (double jitter : {0.0, 1e-10, 1e-7, 1e-4}) {
      Eigen::MatrixXd j_sys = sys;
      j_sys.topLeftCorner(n_done, n_done).diagonal().array() += jitter;
      sol = Eigen::FullPivLU<Eigen::MatrixXd>(j_sys).solve(rhs);
      if (sol.allFinite()) break;
    }
    const Eigen::VectorXd lambda = sol.head(n_done);
    const Eigen::VectorXd tail = sol.tail(dim + 1);
    const Eigen::MatrixXd centers = zs.topRows(n_done);

    // Exploration decays to pure exploitation by the last evaluation.
    const double spread = std::max(max_f - min_f, 1e-12 * (1.0 + std::abs(max_f)));
    const double denom = std::max<double>(1, opt.budget - n_init - 1);
    const double progress = std::min(1.0, static_cast<double>(n_done - n_init) / denom);
    const double w_explore = 2.0 * (1.0 - progress);

    auto acquisition = [&](const Eigen::VectorXd& z) {
      double min_dist = std::numeric_limits<double>::infinity();
      for (Eigen::Index t = 0; t < centers.rows(); ++t)
        min_dist = std::min(min_dist, (centers.row(t).transpose() - z).norm());
      return rbf_eval(centers, lambda, tail, z) - w_explore * spread * min_dist;
    };

    Eigen::VectorXd best_z = zs.row(best_idx).transpose();
    double best_acq = acquisition(best_z);
    Eigen::VectorXd cand = compass_minimize(acquisition, best_z);
    if (acquisition(cand) < best_acq) {
      best_z = cand;
      best_acq = acquisition(cand);
    }
    for (int start = 0; start < 7; ++start) {
      Eigen::VectorXd z0(dim);
      for (Eigen::Index n = 0; n < dim; ++n) z0(n) = uni(rng);
      cand = compass_minimize(acquisition, z0);
      const double a = acquisition(cand);
      if (a < best_acq) {
        best_acq = a;
        best_z = cand;
      }
    }

    // Duplicates add no information; fall back to a random probe.
    double min_dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t < n_done; ++t)
      min_dist = std::min(min_dist, (zs.row(t).transpose() - best_z).norm());
    if (min_dist < 1e-9)
      for (Eigen::Index n = 0; n < dim; ++n) best_z(n) = uni(rng);

    evaluate(best_z);
  }

  if (hist) hist->best_index = best_idx;
  return sc.from_unit(zs.row(best_idx).transpose());
}

CalibrationResult calibrate_filter(const EkfConfig& base_cfg, const TimeSeriesDataset& d_tr,
                                   const VirtualSensor* vs_proto, const BboOptions& opt,
                                   const CostWeights& weights,
                                   const std::string& log_csv_path) {
  const bool fusion = base_cfg.mode == EkfMode::Fusion;
  // Baseline tunes 3 coordinates; the pseudo-measurement channel is inert and
  // logged at this fixed placeholder.
  const double socy_fixed = 1e-3;

  BboOptions full = opt;
  if (full.lower.size() == 0) {
    full.lower = Eigen::VectorXd::Constant(4, 1e-6);
    full.upper = Eigen::VectorXd::Constant(4, 1.0);
  }
  if (full.lower.size() != 4 || full.upper.size() != 4)
    throw std::invalid_argument("calibrate_filter: bounds must have 4 entries");

  struct LogRow {
    Eigen::Vector4d theta;
    CostBreakdown bd;
  };
  std::vector<LogRow> rows;

  auto score = [&](const Eigen::Vector4d& theta) {
    CostBreakdown bd = cost_j(EkfNoise::from_vector(theta), base_cfg, d_tr, vs_proto, weights);
    rows.push_back({theta, bd});
    return bd.j;
  };

  BboOptions inner = full;
  std::function<double(const Eigen::VectorXd&)> objective;
  if (fusion) {
    objective = [&](const Eigen::VectorXd& t) { return score(Eigen::Vector4d(t)); };
  } else {
    inner.lower = full.lower.head(3);
    inner.upper = full.upper.head(3);
    objective = [&](const Eigen::VectorXd& t) {
      Eigen::Vector4d theta;
      theta << t(0), t(1), t(2), socy_fixed;
      return score(theta);
    };
  }

  CalibrationResult res;
  Eigen::VectorXd best = bbo_minimize(objective, inner, &res.history);
  Eigen::Vector4d theta_best;
  if (fusion)
    theta_best = best;
  else
    theta_best << best(0), best(1), best(2), socy_fixed;
  res.noise = EkfNoise::from_vector(theta_best);
  res.best = cost_j(res.noise, base_cfg, d_tr, vs_proto, weights);

  if (!log_csv_path.empty()) {
    std::ofstream out(log_csv_path);
    if (!out) throw std::runtime_error("cannot write " + log_csv_path);
    out << "eval,theta_soc,theta_ir,theta_v,theta_socy,J,J1,J2,J3\n";
    for (size_t n = 0; n < rows.size(); ++n) {
      const auto& r = rows[n];
      out << n + 1 << ',' << fmt_double(r.theta(0)) << ',' << fmt_double(r.theta(1)) << ','
          << fmt_double(r.theta(2)) << ',' << fmt_double(r.theta(3)) << ',';
      // Failed evaluations keep their row (the probe counts against the
      // budget) but leave the metric cells empty.
      if (r.bd.failed)
        out << ",,,\n";
      else
        out << fmt_double(r.bd.j) << ',' << fmt_double(r.bd.j1) << ',' << fmt_double(r.bd.j2)
            << ',' << fmt_double(r.bd.j3) << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + log_csv_path);
  }
  return res;
}

}  // namespace socbench
