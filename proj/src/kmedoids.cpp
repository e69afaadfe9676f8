#include "socbench/kmedoids.hpp"

#include <limits>
#include <random>
#include <stdexcept>

#include "socbench/common.hpp"

namespace socbench {

namespace {

// One full init + alternation pass.
KMedoidsResult run_once(const Eigen::MatrixXd& pts, int k, std::uint64_t seed, int max_iter) {
  const Eigen::Index n = pts.rows();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // k-means++ seeding: first medoid uniform, the rest proportional to the
  // squared distance to the closest chosen medoid.
  std::vector<Eigen::Index> medoids;
  medoids.push_back(static_cast<Eigen::Index>(uni(rng) * static_cast<double>(n)) % n);
  Eigen::VectorXd d2 = (pts.rowwise() - pts.row(medoids[0])).rowwise().squaredNorm();
  while (static_cast<int>(medoids.size()) < k) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total <= 0.0) {
      // All remaining points coincide with a medoid; any choice is equivalent.
      pick = static_cast<Eigen::Index>(uni(rng) * static_cast<double>(n)) % n;
    } else {
      double r = uni(rng) * total;
      for (; pick < n - 1; ++pick) {
        r -= d2(pick);
        if (r <= 0.0) break;
      }
    }
    medoids.push_back(pick);
    d2 = d2.cwiseMin((pts.rowwise() - pts.row(pick)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<size_t>(n), 0);
  auto assign_all = [&]() {
    double objective = 0.0;
    for (Eigen::Index p = 0; p < n; ++p) {
      double best = std::numeric_limits<double>::infinity();
      int arg = 0;
      for (int c = 0; c < k; ++c) {
        const double d = (pts.row(p) - pts.row(medoids[static_cast<size_t>(c)])).norm();
        if (d < best) {
          best = d;
          arg = c;
        }
      }
      assign[static_cast<size_t>(p)] = arg;
      objective += best;
    }
    return objective;
  };

  double objective = assign_all();
  for (int it = 0; it < max_iter; ++it) {
    bool moved = false;
    for (int c = 0; c < k; ++c) {
      std::vector<Eigen::Index> members;
      for (Eigen::Index p = 0; p < n; ++p)
        if (assign[static_cast<size_t>(p)] == c) members.push_back(p);
      if (members.empty()) continue;
      // Medoid refresh: the member minimizing the within-cluster distance sum.
      double best_sum = std::numeric_limits<double>::infinity();
      Eigen::Index best_m = medoids[static_cast<size_t>(c)];
      for (Eigen::Index cand : members) {
        double sum = 0.0;
        for (Eigen::Index p : members) sum += (pts.row(p) - pts.row(cand)).norm();
        if (sum < best_sum) {
          best_sum = sum;
          best_m = cand;
        }
      }
      if (best_m != medoids[static_cast<size_t>(c)]) {
        medoids[static_cast<size_t>(c)] = best_m;
        moved = true;
      }
    }
    if (!moved) break;
    objective = assign_all();
  }

  KMedoidsResult res;
  res.medoids = medoids;
  res.assignment = assign;
  res.objective = objective;
  res.n_clusters = k;
  return res;
}

}  // namespace

KMedoidsResult kmedoids(const Eigen::MatrixXd& points, int k, std::uint64_t seed, int max_iter,
                        int n_restarts) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmedoids: k must be >= 1");
  if (n < k) throw std::invalid_argument("kmedoids: " + std::to_string(n) +
                                         " points cannot support k=" + std::to_string(k));
  if (max_iter < 1 || n_restarts < 1)
    throw std::invalid_argument("kmedoids: max_iter and n_restarts must be >= 1");

  KMedoidsResult best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < n_restarts; ++r) {
    KMedoidsResult res = run_once(points, k, sub_seed(seed, static_cast<std::uint64_t>(r)), max_iter);
    if (res.objective < best.objective) best = res;
  }

  // Merge medoids that landed on identical points (degenerate traces); the
  // caller sees a reduced cluster count.
  std::vector<Eigen::Index> kept;
  std::vector<int> remap(static_cast<size_t>(k), -1);
  for (int c = 0; c < k; ++c) {
    const Eigen::Index m = best.medoids[static_cast<size_t>(c)];
    int found = -1;
    for (size_t u = 0; u < kept.size(); ++u)
      if ((points.row(kept[u]) - points.row(m)).norm() < 1e-12) {
        found = static_cast<int>(u);
        break;
      }
    if (found < 0) {
      kept.push_back(m);
      remap[static_cast<size_t>(c)] = static_cast<int>(kept.size()) - 1;
    } else {
      remap[static_cast<size_t>(c)] = found;
      best.reduced = true;
    }
  }
  if (best.reduced) {
    best.medoids = kept;
    for (auto& a : best.assignment) a = remap[static_cast<size_t>(a)];
  }
  best.n_clusters = static_cast<int>(best.medoids.size());
  return best;
}

}  // namespace socbench
