#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "stochflow/coefficients.hpp"
#include "stochflow/weight.hpp"

namespace sflow {

/// Sampling grid for check_assumptions: n_x points per axis on [lo, hi]^d,
/// n_r points on [t0, t1].
struct AssumptionGrid {
  double lo = -10.0;
  double hi = 10.0;
  int n_x = 81;
  double t0 = 0.0;
  double t1 = 1.0;
  int n_r = 5;
  double fd_step = kDefaultFdStep;
  double tolerance = 1e-9;
};

/// Worst observed ratio (left side / claimed bound) for each condition, and
/// the smallest rates that the samples would accept in place of K-tilde.
struct AssumptionReport {
  std::map<std::string, double> ratios;
  std::map<std::string, bool> violated;
  double tolerance = 0.0;
  bool pass = true;
  /// max over samples of max(|tr grad b - 1/2 sum tr[(grad sigma_k)^2]|, sum (tr grad sigma_k)^2)
  double observed_det_rate = 0.0;
  /// max over samples of the rho-moment conditions, divided by rho
  double observed_rho_rate = 0.0;
  /// max over samples of the (system, weight) pair conditions (weight and trace parts)
  double observed_pair_rate = 0.0;
  std::size_t samples = 0;
};

namespace detail {

inline double bound_ratio(double lhs, double bound) {
  if (lhs == 0.0) return 0.0;
  if (bound <= 0.0) return std::numeric_limits<double>::infinity();
  return lhs / bound;
}

}  // namespace detail

/// Samples (r, x) on the grid and compares every growth, weight and trace
/// condition to its bound. K-tilde is the system's trace bound plus the
/// weight's contribution. Conditions for exponential weights include the
/// boundedness |b| <= K, |sigma| <= K^{1/2}.
inline AssumptionReport check_assumptions(const CoefficientSystem& sys, const Weight& weight,
                                          const AssumptionGrid& grid = {}) {
  AssumptionReport rep;
  rep.tolerance = grid.tolerance;
  const TimeFunction k_tilde = (sys.K_tilde ? *sys.K_tilde : TimeFunction{}) + weight.K_tilde_weight;
  const TimeFunction k_hat = sys.K_hat ? *sys.K_hat : sys.K;
  const int d = sys.d;
  const int n_x = std::max(grid.n_x, 1);
  const int n_r = std::max(grid.n_r, 1);
  std::size_t total_x = 1;
  for (int k = 0; k < d; ++k) total_x *= static_cast<std::size_t>(n_x);

  auto update = [&rep](const std::string& key, double value) {
    auto [it, inserted] = rep.ratios.emplace(key, value);
    if (!inserted) it->second = std::max(it->second, value);
  };

  for (int ir = 0; ir < n_r; ++ir) {
    const double r = n_r == 1 ? grid.t0 : grid.t0 + (grid.t1 - grid.t0) * ir / (n_r - 1);
    const double K = sys.K(r);
    const double Kt = k_tilde(r);
    const double Kh = k_hat(r);
    for (std::size_t flat = 0; flat < total_x; ++flat) {
      Vec x(d);
      std::size_t rest = flat;
      for (int k = 0; k < d; ++k) {
        const std::size_t idx = rest % static_cast<std::size_t>(n_x);
        rest /= static_cast<std::size_t>(n_x);
        x(k) = n_x == 1 ? grid.lo : grid.lo + (grid.hi - grid.lo) * idx / (n_x - 1);
      }
      ++rep.samples;
      const double nx = 1.0 + x.norm();
      const Vec b = eval_drift(sys, r, x);
      const Mat s = eval_diffusion(sys, r, x);
      const Vec sh = sigma_hat(sys, r, x, grid.fd_step);
      const double rho = weight.rho(x);
      const Vec grho = weight.grad_rho(x);
      const Mat hrho = weight.hess_rho(x);

      update("growth_b", detail::bound_ratio(b.norm(), K * nx));
      update("growth_sigma", detail::bound_ratio(s.norm(), std::sqrt(K) * nx));
      update("growth_sigma_hat", detail::bound_ratio(sh.norm(), Kh * nx));

      const double w1 = std::abs(b.dot(grho)) + std::abs(sh.dot(grho));
      const double w2 = s.norm() * grho.norm();
      const double w3 = s.squaredNorm() * op_norm(hrho);
      update("weight_drift", detail::bound_ratio(w1, Kt * rho));
      update("weight_sigma", detail::bound_ratio(w2, std::sqrt(Kt) * rho));
      update("weight_hessian", detail::bound_ratio(w3, Kt * rho));

      const Mat gb = grad_drift(sys, r, x, grid.fd_step);
      const Mat gsh = grad_sigma_hat(sys, r, x, grid.fd_step);
      double sq_trace = 0.0;
      double trace_sq = 0.0;
      for (int k = 0; k < sys.dw; ++k) {
        const Mat gs = grad_diffusion_column(sys, k, r, x, grid.fd_step);
        sq_trace += (gs * gs).trace();
        trace_sq += gs.trace() * gs.trace();
      }
      const double t1 = std::abs(gb.trace() - gsh.trace() + 0.5 * sq_trace);
      update("trace_drift", detail::bound_ratio(t1, Kt));
      update("trace_noise", detail::bound_ratio(trace_sq, Kt));

      if (weight.family == WeightFamily::exponential) {
        update("bounded_b", detail::bound_ratio(b.norm(), K));
        update("bounded_sigma", detail::bound_ratio(s.norm(), std::sqrt(K)));
      }

      const double det_rate = std::max(std::abs(gb.trace() - 0.5 * sq_trace), trace_sq);
      rep.observed_det_rate = std::max(rep.observed_det_rate, det_rate);
      const double m1 = std::abs(b.dot(grho)) / rho;
      const double m2 = (w2 / rho) * (w2 / rho);
      const double m3 = w3 / rho;
      rep.observed_rho_rate = std::max({rep.observed_rho_rate, m1, m2, m3});
      rep.observed_pair_rate =
          std::max({rep.observed_pair_rate, w1 / rho, m2, m3, t1, trace_sq});
    }
  }
  for (const auto& [key, value] : rep.ratios) {
    const bool bad = !(value <= 1.0 + grid.tolerance);
    rep.violated[key] = bad;
    if (bad) rep.pass = false;
  }
  return rep;
}

}  // namespace sflow
