#include "socbench/arx.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include "socbench/common.hpp"

namespace socbench {

namespace {

using Complex = std::complex<double>;

// Roots of a monic polynomial given by its non-leading coefficients in
// descending power order, via the companion matrix.
std::vector<Complex> poly_roots(const Eigen::VectorXd& tail) {
  const Eigen::Index deg = tail.size();
  if (deg == 0) return {};
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(deg, deg);
  comp.bottomRows(1) = -tail.reverse().transpose();
  if (deg > 1) comp.topRightCorner(deg - 1, deg - 1).setIdentity();
  Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  std::vector<Complex> roots(static_cast<size_t>(deg));
  for (Eigen::Index n = 0; n < deg; ++n) roots[static_cast<size_t>(n)] = es.eigenvalues()(n);
  return roots;
}

// Monic polynomial from roots; returns the non-leading coefficients in
// descending order. Fails (returns false) if the imaginary residue is large,
// meaning the root set was not conjugate-symmetric.
bool poly_from_roots(const std::vector<Complex>& roots, Eigen::VectorXd& tail) {
  std::vector<Complex> coeff{1.0};
  for (const Complex& r : roots) {
    std::vector<Complex> next(coeff.size() + 1, Complex(0.0));
    for (size_t n = 0; n < coeff.size(); ++n) {
      next[n] += coeff[n];
      next[n + 1] -= coeff[n] * r;
    }
    coeff.swap(next);
  }
  tail.resize(static_cast<Eigen::Index>(coeff.size()) - 1);
  for (size_t n = 1; n < coeff.size(); ++n) {
    if (std::abs(coeff[n].imag()) > 1e-6 * (1.0 + std::abs(coeff[n]))) return false;
    tail(static_cast<Eigen::Index>(n) - 1) = coeff[n].real();
  }
  return true;
}

LocalObserver build_canonical(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double c) {
  const Eigen::Index m = a.size();
  LocalObserver obs;
  obs.A = Eigen::MatrixXd::Zero(m, m);
  obs.A.col(0) = -a;
  if (m > 1) obs.A.topRightCorner(m - 1, m - 1).setIdentity();
  obs.B = b;
  obs.C = Eigen::RowVectorXd::Zero(m);
  obs.C(0) = 1.0;
  obs.d = Eigen::VectorXd::Zero(m);
  obs.d(0) = c;
  obs.e = 0.0;
  return obs;
}

double eval_monic(const Eigen::VectorXd& tail, double z) {
  double acc = 1.0;
  for (Eigen::Index n = 0; n < tail.size(); ++n) acc = acc * z + tail(n);
  return acc;
}

}  // namespace

ArxParams ArxParams::from_gamma(Eigen::VectorXd g) {
  if (g.size() < 3 || g.size() % 2 == 0)
    throw std::invalid_argument("arx: gamma must have odd length >= 3, got " +
                                std::to_string(g.size()));
  if (!g.allFinite()) throw std::invalid_argument("arx: gamma has non-finite entries");
  ArxParams p;
  p.gamma = std::move(g);
  return p;
}

LocalObserver arx_to_ss(const ArxParams& g, ArxRealizationInfo* info, double cancel_tol) {
  const int m = g.order();
  if (m < 1) throw std::invalid_argument("arx_to_ss: order must be >= 1");
  Eigen::VectorXd a(m), b(m);
  for (int n = 1; n <= m; ++n) {
    a(n - 1) = g.a(n);
    b(n - 1) = g.b(n);
  }
  if (info) *info = {};

  // Pole-zero cancellation check on the i->v transfer N(z)/D(z) with
  // D(z) = z^m + a_1 z^{m-1} + .. + a_m, N(z) = b_1 z^{m-1} + .. + b_m.
  Eigen::Index lead = 0;
  while (lead < b.size() && std::abs(b(lead)) < 1e-300) ++lead;
  if (lead < b.size() && m > 1) {
    const double b_lead = b(lead);
    Eigen::VectorXd n_tail = b.segment(lead + 1, b.size() - lead - 1) / b_lead;
    std::vector<Complex> zeros = poly_roots(n_tail);
    std::vector<Complex> poles = poly_roots(a);
    std::vector<bool> pole_used(poles.size(), false);
    std::vector<bool> zero_cancelled(zeros.size(), false);
    int cancelled = 0;
    for (size_t zn = 0; zn < zeros.size(); ++zn) {
      double best = cancel_tol;
      int best_p = -1;
      for (size_t pn = 0; pn < poles.size(); ++pn) {
        if (pole_used[pn]) continue;
        const double dist = std::abs(zeros[zn] - poles[pn]);
        if (dist < best) {
          best = dist;
          best_p = static_cast<int>(pn);
        }
      }
      if (best_p >= 0) {
        pole_used[static_cast<size_t>(best_p)] = true;
        zero_cancelled[zn] = true;
        ++cancelled;
      }
    }
    if (cancelled > 0 && m - cancelled >= 1) {
      std::vector<Complex> poles_left, zeros_left;
      for (size_t pn = 0; pn < poles.size(); ++pn)
        if (!pole_used[pn]) poles_left.push_back(poles[pn]);
      for (size_t zn = 0; zn < zeros.size(); ++zn)
        if (!zero_cancelled[zn]) zeros_left.push_back(zeros[zn]);

      Eigen::VectorXd a_red, n_red;
      if (poly_from_roots(poles_left, a_red) && poly_from_roots(zeros_left, n_red)) {
        const int m_red = m - cancelled;
        // The reduced numerator keeps the original leading coefficient and
        // any structural delay (leading zero b's).
        Eigen::VectorXd b_red = Eigen::VectorXd::Zero(m_red);
        b_red(lead) = b_lead;
        for (Eigen::Index n = 0; n < n_red.size(); ++n) b_red(lead + 1 + n) = b_lead * n_red(n);
        // Rescale the affine channel so the DC relation is preserved:
        // c' = c * D'(1) / D(1). A denominator root at z=1 makes the affine
        // channel ill-posed; keep the full order in that case.
        const double d1 = eval_monic(a, 1.0);
        if (std::abs(d1) > 1e-9) {
          LocalObserver obs = build_canonical(a_red, b_red, g.c() * eval_monic(a_red, 1.0) / d1);
          if (info) {
            info->reduced = true;
            info->cancelled = cancelled;
          }
          return obs;
        }
      }
    }
  }
  return build_canonical(a, b, g.c());
}

void place_observer_gain(LocalObserver& obs, double pole_radius) {
  if (!(std::abs(pole_radius) < 1.0))
    throw std::invalid_argument("place_observer_gain: |pole_radius| must be < 1");
  const int m = obs.order();
  if (m < 1 || obs.A.cols() != m || obs.C.size() != m)
    throw std::invalid_argument("place_observer_gain: malformed realization");

  // Observability rank check; unreachable for the canonical form but part of
  // the contract.
  Eigen::MatrixXd obs_mat(m, m);
  Eigen::RowVectorXd row = obs.C;
  for (int n = 0; n < m; ++n) {
    obs_mat.row(n) = row;
    row = row * obs.A;
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(obs_mat);
  if (lu.rank() < m)
    throw NumericalError("place_observer_gain: (A, C) pair is unobservable (rank " +
                         std::to_string(lu.rank()) + " of " + std::to_string(m) + ")");

  // Companion coefficient match against (z - p)^m: the j-th target
  // coefficient is binom(m, j) (-p)^j; L_j = t_j - a_j with a_j = -A(j-1, 0).
  Eigen::VectorXd gain(m);
  double binom = 1.0;
  double ppow = 1.0;
  for (int j = 1; j <= m; ++j) {
    binom = binom * static_cast<double>(m - j + 1) / static_cast<double>(j);
    ppow *= -pole_radius;
    const double t_j = binom * ppow;
    const double a_j = -obs.A(j - 1, 0);
    gain(j - 1) = t_j - a_j;
  }
  obs.L = gain;
}

Eigen::VectorXd zero_history_state(const LocalObserver& obs) { return obs.d; }

double observer_step(const LocalObserver& obs, Eigen::VectorXd& state, double i, double v,
                     double* v_hat_out) {
  if (state.size() != obs.order())
    throw std::invalid_argument("observer_step: state dimension mismatch");
  const double v_hat = obs.C.dot(state) + obs.e;
  const double eps = v_hat - v;
  state = obs.A * state + obs.B * i + obs.d;
  if (obs.L.size() > 0) state -= obs.L * eps;
  if (v_hat_out) *v_hat_out = v_hat;
  return eps;
}

}  // namespace socbench
