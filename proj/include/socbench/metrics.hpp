#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace socbench {

// Root-mean-square deviation between two equally long sequences.
template <typename DerivedA, typename DerivedB>
double rmse(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("rmse: length mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  if (a.size() == 0) throw std::invalid_argument("rmse: empty sequences");
  return std::sqrt((a.derived().template cast<double>().array() -
                    b.derived().template cast<double>().array())
                       .square()
                       .mean());
}

// Mean absolute first difference: sum_{k>=1} |s[k]-s[k-1]| / (N-1).
// Used as the smoothness score of an estimate trace.
template <typename Derived>
double total_variation(const Eigen::MatrixBase<Derived>& s) {
  const Eigen::Index n = s.size();
  if (n < 2) throw std::invalid_argument("total_variation: need at least 2 samples");
  const auto v = s.derived().template cast<double>().eval();
  double acc = 0.0;
  for (Eigen::Index k = 1; k < n; ++k) acc += std::abs(v(k) - v(k - 1));
  return acc / static_cast<double>(n - 1);
}

inline double rmse(const std::vector<double>& a, const std::vector<double>& b) {
  return rmse(Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size())),
              Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size())));
}

inline double total_variation(const std::vector<double>& s) {
  return total_variation(
      Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
}

}  // namespace socbench
