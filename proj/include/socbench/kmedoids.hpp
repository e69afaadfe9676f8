#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace socbench {

struct KMedoidsResult {
  std::vector<Eigen::Index> medoids;     // row indices into the input
  std::vector<int> assignment;           // cluster id per row
  double objective = 0.0;                // sum of Euclidean distances to medoids
  int n_clusters = 0;                    // may be < k when medoids collapse
  bool reduced = false;                  // true when duplicates were merged
};

// Euclidean k-medoids with seeded k-means++ initialization and PAM-style
// alternation (assignment, then per-cluster medoid refresh). Runs n_restarts
// seeded restarts and keeps the lowest objective. Coincident medoids
// (identical points) are merged afterwards, reducing the cluster count.
// points: one observation per row.
KMedoidsResult kmedoids(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                        int max_iter = 100, int n_restarts = 4);

}  // namespace socbench
