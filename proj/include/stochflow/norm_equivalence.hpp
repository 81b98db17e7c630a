#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/coefficients.hpp"
#include "stochflow/jacobian.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/paths.hpp"
#include "stochflow/quadrature.hpp"
#include "stochflow/weight.hpp"

namespace sflow {

/// Monte-Carlo / quadrature value. stderr is the sample standard deviation of
/// the path-level contributions over sqrt(n_paths); quadrature is treated as exact.
struct Estimate {
  double value = 0.0;
  double stderr_value = 0.0;
  std::size_t n_paths = 0;
  std::size_t n_nodes = 0;
  double exploded_fraction = 0.0;
};

/// Test function with the points where it is not smooth (used as quadrature breaks).
struct TestFunction {
  std::string name;
  std::function<double(const Vec&)> f;
  std::vector<double> breaks;
};

inline TestFunction indicator_function(double half_width = 1.0) {
  return {"indicator",
          [half_width](const Vec& x) { return x.cwiseAbs().maxCoeff() <= half_width ? 1.0 : 0.0; },
          {-half_width, half_width}};
}

inline TestFunction gaussian_bump(double width = 1.0) {
  return {"gaussian_bump",
          [width](const Vec& x) { return std::exp(-0.5 * x.squaredNorm() / (width * width)); },
          {}};
}

inline TestFunction capped_abs() {
  return {"capped_abs", [](const Vec& x) { return std::min(x.norm(), 1.0); }, {-1.0, 0.0, 1.0}};
}

/// Monte-Carlo controls shared by the estimators.
struct McSpec {
  std::size_t n_paths = 10000;
  std::size_t steps = 64;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
  /// Use a grid equidistributing K instead of a uniform one.
  bool equidistribute = false;
  /// Estimates fail when more than this fraction of (node, path) runs explode.
  double max_exploded_fraction = 0.01;
};

inline TimeGrid make_grid(const CoefficientSystem& sys, double t, double s, const McSpec& mc) {
  return mc.equidistribute ? TimeGrid::equidistributed(sys.K, t, s, mc.steps)
                           : TimeGrid::uniform(t, s, mc.steps);
}

namespace detail {

inline QuadratureRule rule_with_breaks(QuadratureSpec quad, const std::vector<double>& breaks, int d) {
  quad.breaks.insert(quad.breaks.end(), breaks.begin(), breaks.end());
  return tensor_rule(quad, d);
}

// Reduces a paths x nodes table (NaN = exploded run) to the estimate
//   sum_i coef_i * mean_m(table_mi over non-exploded m)
// with path-level contributions Y_m = sum_i coef_i table_mi M / M_i.
inline Estimate reduce_table(const std::vector<double>& table, const std::vector<double>& coef,
                             std::size_t paths, double max_exploded, const char* what) {
  const std::size_t nodes = coef.size();
  std::vector<std::size_t> valid(nodes, 0);
  std::size_t exploded = 0;
  for (std::size_t m = 0; m < paths; ++m) {
    for (std::size_t i = 0; i < nodes; ++i) {
      if (std::isnan(table[m * nodes + i])) {
        ++exploded;
      } else {
        ++valid[i];
      }
    }
  }
  Estimate est;
  est.n_paths = paths;
  est.n_nodes = nodes;
  est.exploded_fraction =
      paths * nodes == 0 ? 0.0 : static_cast<double>(exploded) / static_cast<double>(paths * nodes);
  if (est.exploded_fraction > max_exploded) {
    throw DomainError(std::string(what) + ": exploded fraction " +
                      std::to_string(est.exploded_fraction) + " above threshold");
  }
  std::vector<double> scale(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    if (valid[i] == 0 && coef[i] != 0.0) throw DomainError(std::string(what) + ": node with no valid paths");
    if (valid[i] > 0) scale[i] = coef[i] * static_cast<double>(paths) / static_cast<double>(valid[i]);
  }
  std::vector<double> y(paths);
  std::vector<double> row(nodes);
  for (std::size_t m = 0; m < paths; ++m) {
    for (std::size_t i = 0; i < nodes; ++i) {
      const double v = table[m * nodes + i];
      row[i] = std::isnan(v) ? 0.0 : scale[i] * v;
    }
    y[m] = pairwise_sum(row);
  }
  const SampleStats st = sample_stats(y);
  est.value = st.mean;
  est.stderr_value = st.stderr_mean;
  return est;
}

}  // namespace detail

/// Tensor Gauss-Legendre value of  int_box |phi| rho dx  (stderr 0).
inline Estimate weighted_integral(const TestFunction& phi, const Weight& weight,
                                  const QuadratureSpec& quad) {
  const QuadratureRule rule = detail::rule_with_breaks(quad, phi.breaks, weight.d);
  std::vector<double> terms(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double v = std::abs(phi.f(rule.points[i])) * weight.rho(rule.points[i]);
    if (!std::isfinite(v)) throw DomainError("weighted_integral: non-finite integrand at a node");
    terms[i] = rule.weights[i] * v;
  }
  Estimate est;
  est.value = pairwise_sum(terms);
  est.n_nodes = rule.size();
  return est;
}

/// int_box E|phi(X_s^{t,x})| rho(x) dx: quadrature over x, Monte Carlo over
/// paths with common random numbers (path m uses the same increments at
/// every node). s == t returns weighted_integral exactly.
inline Estimate expected_weighted_integral(const CoefficientSystem& sys, const TestFunction& phi,
                                           const Weight& weight, double t, double s,
                                           const McSpec& mc, const QuadratureSpec& quad) {
  if (weight.d != sys.d) throw std::invalid_argument("weight and system dimensions differ");
  if (s < t) throw std::invalid_argument("expected_weighted_integral: need s >= t");
  if (s == t) return weighted_integral(phi, weight, quad);
  if (mc.n_paths < 2 || mc.steps < 1) throw std::invalid_argument("mc: need n_paths >= 2 and steps >= 1");
  const QuadratureRule rule = detail::rule_with_breaks(quad, phi.breaks, sys.d);
  const std::size_t nodes = rule.size();
  std::vector<double> coef(nodes);
  for (std::size_t i = 0; i < nodes; ++i) coef[i] = rule.weights[i] * weight.rho(rule.points[i]);
  const TimeGrid grid = make_grid(sys, t, s, mc);
  std::vector<double> table(mc.n_paths * nodes);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t m) {
    const BrownianPath path = sample_brownian(grid, sys.dw, mc.master_seed, m);
    for (std::size_t i = 0; i < nodes; ++i) {
      Vec last;
      const bool ok = euler_walk(sys, rule.points[i], path, [&](std::size_t, const Vec& x) { last = x; });
      table[m * nodes + i] = ok ? std::abs(phi.f(last)) : std::numeric_limits<double>::quiet_NaN();
    }
  });
  return detail::reduce_table(table, coef, mc.n_paths, mc.max_exploded_fraction,
                              "expected_weighted_integral");
}

using SpaceTimeFunction = std::function<double(double s, const Vec& x)>;

/// int_box int_t^T E|psi(s, X_s^{t,x})| rho(x) ds dx with a trapezoid rule in
/// s on `time_nodes` + 1 equally spaced grid nodes, all read off one path per
/// (x-node, path) pair. time_nodes must divide mc.steps.
inline Estimate spacetime_expected_weighted_integral(const CoefficientSystem& sys,
                                                     const SpaceTimeFunction& psi,
                                                     const std::vector<double>& breaks,
                                                     const Weight& weight, double t, double T,
                                                     const McSpec& mc, const QuadratureSpec& quad,
                                                     std::size_t time_nodes) {
  if (T < t) throw std::invalid_argument("spacetime integral: need T >= t");
  if (T == t) return Estimate{};
  if (time_nodes < 1 || mc.steps % time_nodes != 0) {
    throw std::invalid_argument("spacetime integral: time_nodes must divide mc.steps");
  }
  const QuadratureRule rule = detail::rule_with_breaks(quad, breaks, sys.d);
  const std::size_t nodes = rule.size();
  std::vector<double> coef(nodes);
  for (std::size_t i = 0; i < nodes; ++i) coef[i] = rule.weights[i] * weight.rho(rule.points[i]);
  const TimeGrid grid = TimeGrid::uniform(t, T, mc.steps);
  const std::size_t stride = mc.steps / time_nodes;
  const double tau = (T - t) / static_cast<double>(time_nodes);
  std::vector<double> table(mc.n_paths * nodes);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t m) {
    const BrownianPath path = sample_brownian(grid, sys.dw, mc.master_seed, m);
    for (std::size_t i = 0; i < nodes; ++i) {
      double acc = 0.0;
      const bool ok = euler_walk(sys, rule.points[i], path, [&](std::size_t j, const Vec& x) {
        if (j % stride != 0) return;
        const double w = (j == 0 || j == mc.steps) ? 0.5 * tau : tau;
        acc += w * std::abs(psi(grid[j], x));
      });
      table[m * nodes + i] = ok ? acc : std::numeric_limits<double>::quiet_NaN();
    }
  });
  return detail::reduce_table(table, coef, mc.n_paths, mc.max_exploded_fraction,
                              "spacetime_expected_weighted_integral");
}

struct NormEquivConfig {
  McSpec mc;
  QuadratureSpec quad;
  /// Confidence multiplier on the Monte-Carlo standard error.
  double z = 3.0;
};

struct NormEquivReport {
  Estimate lhs;
  Estimate mid;
  double k_tilde_l1 = 0.0;
  NormEquivConstants constants;
  /// log((mid + z se) / (c lhs)): >= 0 means the lower bound holds.
  double lower_log_margin = 0.0;
  /// log(C lhs / (mid - z se)): >= 0 means the upper bound holds.
  double upper_log_margin = 0.0;
  bool lower_pass = false;
  bool upper_pass = false;
  double ratio = 0.0;  // mid / lhs
};

/// K-tilde of a (system, weight) pair: the system's trace bound plus the
/// weight's compatibility part. Throws when the system has none.
inline TimeFunction pair_k_tilde(const CoefficientSystem& sys, const Weight& weight) {
  if (!sys.K_tilde) throw std::invalid_argument("system '" + sys.name + "' has no K_tilde");
  return *sys.K_tilde + weight.K_tilde_weight;
}

/// Both sides of  c int|phi|rho <= int E|phi(X_s^{t,x})| rho <= C int|phi|rho
/// with c = exp(-5 ||K-tilde||), C = exp(5 ||K-tilde||), ||.|| over [t, s].
/// Comparisons run in the log domain so an overflowing C is harmless.
inline NormEquivReport check_equivalence(const CoefficientSystem& sys, const TestFunction& phi,
                                         const Weight& weight, double t, double s,
                                         const NormEquivConfig& cfg) {
  NormEquivReport rep;
  rep.k_tilde_l1 = pair_k_tilde(sys, weight).l1_norm(t, s);
  rep.constants = norm_equiv_constants(rep.k_tilde_l1);
  rep.constants.log_c -= weight.log_constant_slack;
  rep.constants.log_C += weight.log_constant_slack;
  rep.constants.c = std::exp(rep.constants.log_c);
  rep.constants.C = std::exp(rep.constants.log_C);
  rep.lhs = weighted_integral(phi, weight, cfg.quad);
  rep.mid = expected_weighted_integral(sys, phi, weight, t, s, cfg.mc, cfg.quad);
  const double inf = std::numeric_limits<double>::infinity();
  // 1e-12 relative floor: with c = C = 1 and zero stderr, summation order alone decides the sign.
  const double band = cfg.z * rep.mid.stderr_value + 1e-12 * std::abs(rep.mid.value);
  const double lo = rep.mid.value + band;
  const double hi = rep.mid.value - band;
  const double log_lhs = rep.lhs.value > 0.0 ? std::log(rep.lhs.value) : -inf;
  rep.lower_log_margin = rep.lhs.value > 0.0 ? (lo > 0.0 ? std::log(lo) : -inf) - (rep.constants.log_c + log_lhs) : inf;
  rep.upper_log_margin = hi > 0.0 ? rep.constants.log_C + log_lhs - std::log(hi) : inf;
  rep.lower_pass = rep.lower_log_margin >= 0.0;
  rep.upper_pass = rep.upper_log_margin >= 0.0;
  rep.ratio = rep.lhs.value > 0.0 ? rep.mid.value / rep.lhs.value : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

struct ChangeOfVariablesReport {
  Estimate forward;   // A = int E|phi(X_s^{t,x})| rho(x) dx
  Estimate inverse;   // B = int |phi(y)| E[rho(X^_s^{t,y}) det grad X^] dy
  double residual = 0.0;
  double relative_residual = 0.0;
  double combined_stderr = 0.0;
  bool pass = false;
};

/// Two estimators of the same quantity, linked by the substitution x = X^_s^{t,y}.
/// The inverse-flow determinant comes from the Liouville formula along the
/// inverse SDE. Passes when |A - B| < z * sqrt(se_A^2 + se_B^2) and |A - B| / A < rel_tol.
inline ChangeOfVariablesReport change_of_variables_check(const CoefficientSystem& sys,
                                                         const TestFunction& phi,
                                                         const Weight& weight, double t, double s,
                                                         const NormEquivConfig& cfg,
                                                         double rel_tol = 0.05) {
  if (sys.d > 2) throw std::invalid_argument("change_of_variables_check: d must be 1 or 2");
  ChangeOfVariablesReport rep;
  rep.forward = expected_weighted_integral(sys, phi, weight, t, s, cfg.mc, cfg.quad);
  if (s == t) {
    rep.inverse = rep.forward;
  } else {
    const QuadratureRule rule = detail::rule_with_breaks(cfg.quad, phi.breaks, sys.d);
    const std::size_t nodes = rule.size();
    std::vector<double> coef(nodes);
    for (std::size_t i = 0; i < nodes; ++i) coef[i] = rule.weights[i] * std::abs(phi.f(rule.points[i]));
    const TimeGrid grid = make_grid(sys, t, s, cfg.mc);
    std::vector<double> table(cfg.mc.n_paths * nodes);
    parallel_for(cfg.mc.n_paths, cfg.mc.threads, [&](std::size_t m) {
      const BrownianPath path = sample_brownian(grid, sys.dw, cfg.mc.master_seed, m);
      for (std::size_t i = 0; i < nodes; ++i) {
        double& cell = table[m * nodes + i];
        if (coef[i] == 0.0) {
          cell = 0.0;
          continue;
        }
        const FlowPath inv = euler_inverse(sys, s, rule.points[i], path);
        if (inv.exploded) {
          cell = std::numeric_limits<double>::quiet_NaN();
          continue;
        }
        const DeterminantPath det = inverse_liouville_determinant(sys, inv, path);
        cell = std::exp(weight.log_rho(inv.terminal()) + det.log_det.back());
        if (!std::isfinite(cell)) cell = std::numeric_limits<double>::quiet_NaN();
      }
    });
    rep.inverse = detail::reduce_table(table, coef, cfg.mc.n_paths, cfg.mc.max_exploded_fraction,
                                       "change_of_variables_check");
  }
  rep.residual = rep.forward.value - rep.inverse.value;
  rep.combined_stderr = std::hypot(rep.forward.stderr_value, rep.inverse.stderr_value);
  rep.relative_residual = rep.forward.value != 0.0 ? std::abs(rep.residual) / rep.forward.value
                                                   : std::abs(rep.residual);
  // The floor absorbs rounding when both sides are deterministic.
  const double floor = 1e-12 * std::abs(rep.forward.value);
  rep.pass = std::abs(rep.residual) <= cfg.z * rep.combined_stderr + floor &&
             rep.relative_residual < rel_tol;
  return rep;
}

}  // namespace sflow
