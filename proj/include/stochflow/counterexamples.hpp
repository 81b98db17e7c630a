#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/catalog.hpp"
#include "stochflow/norm_equivalence.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/quadrature.hpp"
#include "stochflow/rng.hpp"

namespace sflow {

struct GbmCounterexampleConfig {
  double alpha = 1.0;
  double beta = 0.0;
  double x = 1.0;
  double s = 1.0;
  /// Rate a of the weight e^{a|x|} used for the finite comparison integral.
  double weight_rate = -2.0;
  std::vector<double> caps{1e2, 1e4, 1e6};
  /// "divergent" needs a strictly increasing sequence with last/first above this.
  double ratio_threshold = 10.0;
  std::size_t n_paths = 100000;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
};

struct DivergenceReport {
  /// int e^x e^{a|x|} dx: closed form and quadrature.
  double weighted_integral_exact = 0.0;
  double weighted_integral_quadrature = 0.0;
  std::vector<double> caps;
  /// E[min(e^{X_s^x}, M)] by Gaussian quadrature over the Brownian value.
  std::vector<double> truncated;
  /// The same moments by Monte Carlo on the exact solution (shared paths across caps).
  std::vector<Estimate> truncated_mc;
  bool strictly_increasing = false;
  double last_to_first = 0.0;
  std::string verdict;
};

namespace detail {

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace detail

/// Truncated exponential moments of geometric Brownian motion. With
/// alpha != 0 and x > 0 the untruncated moment is infinite, so the sequence
/// keeps growing with the cap; with x <= 0 it is bounded by 1 and plateaus.
inline DivergenceReport counterexample_gbm(const GbmCounterexampleConfig& cfg) {
  if (cfg.alpha == 0.0) throw std::invalid_argument("counterexample_gbm: requires alpha != 0");
  if (!(cfg.s > 0.0)) throw std::invalid_argument("counterexample_gbm: requires s > 0");
  if (cfg.caps.size() < 2) throw std::invalid_argument("counterexample_gbm: need at least two caps");
  for (std::size_t k = 0; k < cfg.caps.size(); ++k) {
    if (!(cfg.caps[k] > 0.0) || (k > 0 && !(cfg.caps[k] > cfg.caps[k - 1]))) {
      throw std::invalid_argument("counterexample_gbm: caps must be positive and increasing");
    }
  }
  if (!(cfg.weight_rate < -1.0)) {
    throw std::invalid_argument("counterexample_gbm: weight rate must be below -1 for a finite integral");
  }
  DivergenceReport rep;
  rep.caps = cfg.caps;
  const double a = cfg.weight_rate;
  // int_{-inf}^0 e^{(1-a)x} dx + int_0^inf e^{(1+a)x} dx
  rep.weighted_integral_exact = 1.0 / (1.0 - a) - 1.0 / (1.0 + a);
  const double inf = std::numeric_limits<double>::infinity();
  const auto integrand = [a](double x) { return std::exp(x + a * std::abs(x)); };
  rep.weighted_integral_quadrature =
      adaptive_integrate(integrand, -inf, 0.0).value + adaptive_integrate(integrand, 0.0, inf).value;

  const double drift = (cfg.beta - 0.5 * cfg.alpha * cfg.alpha) * cfg.s;
  const double vol = std::abs(cfg.alpha) * std::sqrt(cfg.s);
  for (double cap : cfg.caps) {
    const double log_cap = std::log(cap);
    const auto f = [&](double z) {
      const double X = cfg.x * std::exp(drift + vol * z);
      return (X < log_cap ? std::exp(X) : cap) * detail::normal_pdf(z);
    };
    // Split where X crosses log(cap) so the kink sits on a panel edge.
    double total = 0.0;
    if (cfg.x > 0.0 && log_cap > 0.0) {
      const double z_star = (std::log(log_cap / cfg.x) - drift) / vol;
      total = adaptive_integrate(f, -inf, z_star, 1e-13).value + adaptive_integrate(f, z_star, inf, 1e-13).value;
    } else {
      total = adaptive_integrate(f, -inf, inf, 1e-13).value;
    }
    rep.truncated.push_back(total);
  }

  const std::size_t n = cfg.n_paths;
  if (n >= 2) {
    const std::size_t nc = cfg.caps.size();
    std::vector<double> table(n * nc);
    parallel_for(n, cfg.threads, [&](std::size_t m) {
      const double z = standard_normal(cfg.master_seed, {Stream::brownian, m, 0, 0});
      const double X = cfg.x * std::exp(drift + vol * z);
      for (std::size_t k = 0; k < nc; ++k) {
        table[m * nc + k] = X >= std::log(cfg.caps[k]) ? cfg.caps[k] : std::exp(X);
      }
    });
    for (std::size_t k = 0; k < nc; ++k) {
      std::vector<double> col(n);
      for (std::size_t m = 0; m < n; ++m) col[m] = table[m * nc + k];
      const SampleStats st = sample_stats(col);
      rep.truncated_mc.push_back(Estimate{st.mean, st.stderr_mean, n, 0, 0.0});
    }
  }

  rep.strictly_increasing = true;
  for (std::size_t k = 1; k < rep.truncated.size(); ++k) {
    rep.strictly_increasing = rep.strictly_increasing && rep.truncated[k] > rep.truncated[k - 1];
  }
  rep.last_to_first = rep.truncated.back() / rep.truncated.front();
  rep.verdict = rep.strictly_increasing && rep.last_to_first > cfg.ratio_threshold ? "divergent" : "finite";
  return rep;
}

struct OuCounterexampleConfig {
  double lambda = 1.0;
  double a = 1.0;
  double s = 1.0;
  double y_lo = -20.0;
  double y_hi = 20.0;
  int y_nodes = 81;
  /// "fails" when max r / min r exceeds this.
  double ratio_threshold = 10.0;
  /// Number of y-nodes at which the closed form is checked by adaptive quadrature.
  int validation_nodes = 9;
};

struct RatioReport {
  std::vector<double> y;
  std::vector<double> log_r;
  double log_ratio = 0.0;  // log(max r / min r)
  double ratio = 0.0;
  /// Largest relative gap between closed form and adaptive quadrature.
  double validation_error = 0.0;
  std::string verdict;
};

/// log r(y) for r(y) = e^{-ay} int p(s, x, y) e^{ax} dx, the OU transition
/// density p(s, x, .) = N(m x, v) with m = e^{-lambda s}, v = (1 - m^2)/(2 lambda):
///   r(y) = e^{lambda s} exp(a y (e^{lambda s} - 1) + a^2 v e^{2 lambda s} / 2).
inline double ou_log_ratio_closed_form(double lambda, double a, double s, double y) {
  const double v = -std::expm1(-2.0 * lambda * s) / (2.0 * lambda);
  return lambda * s + a * y * std::expm1(lambda * s) + 0.5 * a * a * v * std::exp(2.0 * lambda * s);
}

/// r(y) by adaptive Gauss-Kronrod on a window of +-40 standard deviations
/// around the peak of the integrand in x.
inline double ou_ratio_quadrature(double lambda, double a, double s, double y) {
  const double m = std::exp(-lambda * s);
  const double v = -std::expm1(-2.0 * lambda * s) / (2.0 * lambda);
  const double sd = std::sqrt(v) / m;
  const double centre = y / m + a * v / (m * m);
  // Exponent of the integrand p(s, x, y) e^{a(x - y)}; shifted by its value at
  // the window centre so the quadrature works on O(1) values.
  const auto g = [&](double x) { return -(y - m * x) * (y - m * x) / (2.0 * v) + a * (x - y); };
  const double log_peak = g(centre);
  const auto f = [&](double x) {
    return std::exp(g(x) - log_peak) / std::sqrt(2.0 * std::numbers::pi * v);
  };
  const AdaptiveResult r = adaptive_integrate(f, centre - 40.0 * sd, centre + 40.0 * sd, 1e-13);
  return r.value * std::exp(log_peak);
}

inline RatioReport counterexample_ou(const OuCounterexampleConfig& cfg) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("counterexample_ou: requires lambda > 0");
  if (!(cfg.s > 0.0)) throw std::invalid_argument("counterexample_ou: requires s > 0");
  if (cfg.y_nodes < 2 || !(cfg.y_hi > cfg.y_lo)) throw std::invalid_argument("counterexample_ou: bad y range");
  RatioReport rep;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (int i = 0; i < cfg.y_nodes; ++i) {
    const double y = cfg.y_lo + (cfg.y_hi - cfg.y_lo) * i / (cfg.y_nodes - 1);
    const double lr = ou_log_ratio_closed_form(cfg.lambda, cfg.a, cfg.s, y);
    rep.y.push_back(y);
    rep.log_r.push_back(lr);
    lo = std::min(lo, lr);
    hi = std::max(hi, lr);
  }
  rep.log_ratio = hi - lo;
  rep.ratio = std::exp(rep.log_ratio);
  const int nv = std::max(cfg.validation_nodes, 2);
  for (int i = 0; i < nv; ++i) {
    const double y = cfg.y_lo + (cfg.y_hi - cfg.y_lo) * i / (nv - 1);
    const double closed = std::exp(ou_log_ratio_closed_form(cfg.lambda, cfg.a, cfg.s, y));
    const double quad = ou_ratio_quadrature(cfg.lambda, cfg.a, cfg.s, y);
    rep.validation_error = std::max(rep.validation_error, std::abs(quad - closed) / closed);
  }
  rep.verdict = rep.ratio > cfg.ratio_threshold ? "fails" : "holds";
  return rep;
}

}  // namespace sflow
