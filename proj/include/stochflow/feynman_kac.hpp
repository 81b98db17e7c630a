#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/coefficients.hpp"
#include "stochflow/norm_equivalence.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/paths.hpp"
#include "stochflow/quadrature.hpp"
#include "stochflow/weight.hpp"

namespace sflow {

/// Terminal-value problem  du/dt + L u + f = 0,  u(T) = h, with
/// L = 1/2 tr(sigma sigma^T grad^2) + b . grad. Only sources that do not
/// depend on (u, sigma^T grad u) are supported.
struct PdeProblem {
  CoefficientSystem system;
  std::function<double(const Vec&)> h;
  std::function<double(double, const Vec&)> f;
  /// Non-smooth points of h and f in x (quadrature breaks).
  std::vector<double> breaks;
  double T = 1.0;
  Weight weight;
  double p = 2.0;
  bool linear = true;
};

namespace detail {

inline void require_linear(const PdeProblem& pb) {
  if (!pb.linear) {
    throw std::invalid_argument("feynman_kac: only sources independent of (y, z) are supported");
  }
  if (!pb.h || !pb.f) throw std::invalid_argument("feynman_kac: h and f must be set");
}

// Path-level samples h(X_T) + trapezoid of f along the Euler path, for every
// start point; NaN marks an exploded run.
inline std::vector<double> fk_table(const PdeProblem& pb, double t, const std::vector<Vec>& xs,
                                    const McSpec& mc) {
  const std::size_t nodes = xs.size();
  std::vector<double> table(mc.n_paths * nodes);
  if (t == pb.T) {
    for (std::size_t m = 0; m < mc.n_paths; ++m) {
      for (std::size_t i = 0; i < nodes; ++i) table[m * nodes + i] = pb.h(xs[i]);
    }
    return table;
  }
  const TimeGrid grid = make_grid(pb.system, t, pb.T, mc);
  parallel_for(mc.n_paths, mc.threads, [&](std::size_t m) {
    const BrownianPath path = sample_brownian(grid, pb.system.dw, mc.master_seed, m);
    const std::size_t n = grid.steps();
    for (std::size_t i = 0; i < nodes; ++i) {
      double integral = 0.0;
      double prev = 0.0;
      Vec last;
      const bool ok = euler_walk(pb.system, xs[i], path, [&](std::size_t j, const Vec& x) {
        const double fx = pb.f(grid[j], x);
        if (j > 0) integral += 0.5 * (prev + fx) * grid.dt(j - 1);
        prev = fx;
        if (j == n) last = x;
      });
      table[m * nodes + i] = ok ? pb.h(last) + integral : std::numeric_limits<double>::quiet_NaN();
    }
  });
  return table;
}

}  // namespace detail

/// u(t, x) = E[h(X_T^{t,x}) + int_t^T f(r, X_r^{t,x}) dr] at every x in xs,
/// with common random numbers across the nodes.
inline std::vector<Estimate> fk_solve(const PdeProblem& pb, double t, const std::vector<Vec>& xs,
                                      const McSpec& mc) {
  detail::require_linear(pb);
  if (t > pb.T) throw std::invalid_argument("fk_solve: need t <= T");
  const std::vector<double> table = detail::fk_table(pb, t, xs, mc);
  std::vector<Estimate> out;
  const std::size_t nodes = xs.size();
  for (std::size_t i = 0; i < nodes; ++i) {
    std::vector<double> col(mc.n_paths);
    for (std::size_t m = 0; m < mc.n_paths; ++m) col[m] = table[m * nodes + i];
    out.push_back(detail::reduce_table(col, {1.0}, mc.n_paths, mc.max_exploded_fraction, "fk_solve"));
  }
  return out;
}

/// u for the heat system with sigma = sigma0 I, f = 0 and h(x) = exp(-|x|^2/2):
///   u(t, x) = (1 + sigma0^2 tau)^{-d/2} exp(-|x|^2 / (2 (1 + sigma0^2 tau))),  tau = T - t.
inline double heat_gaussian_solution(double sigma0, double tau, const Vec& x) {
  const double q = 1.0 + sigma0 * sigma0 * tau;
  return std::pow(q, -0.5 * static_cast<double>(x.size())) * std::exp(-0.5 * x.squaredNorm() / q);
}

struct InequalityReport {
  std::string kind;
  Estimate lhs;
  double rhs = 0.0;
  double log_constant = 0.0;
  double k_tilde_l1 = 0.0;
  /// log(rhs / (lhs - z se)) for upper bounds, log((lhs + z se) / rhs) for lower bounds.
  double log_margin = 0.0;
  bool pass = false;
  /// lower_bound_check only: every node estimate of u is >= -z stderr.
  bool nonnegative = true;
  /// The gradient (Z) part of the estimate is not checked.
  std::string z_component = "skipped";
};

struct FkConfig {
  McSpec mc;
  QuadratureSpec quad;
  int time_nodes = 16;
  double z = 3.0;
};

namespace detail {

inline double log_or_neg_inf(double v) {
  return v > 0.0 ? std::log(v) : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// int |u(t,x)|^p rho dx <= C_p int |h|^p rho dx + C_p (int_t^T (int |f|^p rho dx)^{1/p} ds)^p
/// with C_p = 2^{p-1} exp(10 ||K-tilde||_{L1[t,T]}). The left side's
/// standard error comes from the delta method on the path-level samples.
inline InequalityReport weighted_lp_check(const PdeProblem& pb, double t, const FkConfig& cfg) {
  detail::require_linear(pb);
  if (!(pb.p >= 1.0)) throw std::invalid_argument("weighted_lp_check: need p >= 1");
  const int d = pb.system.d;
  const QuadratureRule rule = detail::rule_with_breaks(cfg.quad, pb.breaks, d);
  const std::size_t nodes = rule.size();
  const std::vector<double> table = detail::fk_table(pb, t, rule.points, cfg.mc);

  // Node means first, then the linearized path-level contributions.
  std::vector<double> mean(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    std::vector<double> col(cfg.mc.n_paths);
    for (std::size_t m = 0; m < cfg.mc.n_paths; ++m) col[m] = table[m * nodes + i];
    mean[i] = detail::reduce_table(col, {1.0}, cfg.mc.n_paths, cfg.mc.max_exploded_fraction,
                                   "weighted_lp_check")
                  .value;
  }
  std::vector<double> coef(nodes);
  std::vector<double> value_terms(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double rho = pb.weight.rho(rule.points[i]);
    const double u = mean[i];
    value_terms[i] = rule.weights[i] * rho * std::pow(std::abs(u), pb.p);
    const double sgn = u > 0.0 ? 1.0 : (u < 0.0 ? -1.0 : 0.0);
    coef[i] = rule.weights[i] * rho * pb.p * std::pow(std::abs(u), pb.p - 1.0) * sgn;
  }
  InequalityReport rep;
  rep.kind = "weighted_lp";
  const Estimate lin = detail::reduce_table(table, coef, cfg.mc.n_paths, cfg.mc.max_exploded_fraction,
                                            "weighted_lp_check");
  rep.lhs = Estimate{pairwise_sum(value_terms), lin.stderr_value, cfg.mc.n_paths, nodes,
                     lin.exploded_fraction};

  std::vector<double> h_terms(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    h_terms[i] = rule.weights[i] * std::pow(std::abs(pb.h(rule.points[i])), pb.p) * pb.weight.rho(rule.points[i]);
  }
  const double h_part = pairwise_sum(h_terms);
  double f_part = 0.0;
  if (pb.T > t) {
    const Rule1D time_rule = composite_rule(t, pb.T, cfg.time_nodes);
    std::vector<double> outer(time_rule.nodes.size());
    for (std::size_t q = 0; q < time_rule.nodes.size(); ++q) {
      std::vector<double> inner(nodes);
      for (std::size_t i = 0; i < nodes; ++i) {
        inner[i] = rule.weights[i] * std::pow(std::abs(pb.f(time_rule.nodes[q], rule.points[i])), pb.p) *
                   pb.weight.rho(rule.points[i]);
      }
      outer[q] = time_rule.weights[q] * std::pow(pairwise_sum(inner), 1.0 / pb.p);
    }
    f_part = std::pow(pairwise_sum(outer), pb.p);
  }
  rep.k_tilde_l1 = pair_k_tilde(pb.system, pb.weight).l1_norm(t, pb.T);
  rep.log_constant = (pb.p - 1.0) * std::log(2.0) + 10.0 * rep.k_tilde_l1 + 2.0 * pb.weight.log_constant_slack;
  const double log_rhs = rep.log_constant + detail::log_or_neg_inf(h_part + f_part);
  rep.rhs = std::exp(log_rhs);
  const double hi = rep.lhs.value - cfg.z * rep.lhs.stderr_value;
  rep.log_margin = hi > 0.0 ? log_rhs - std::log(hi) : std::numeric_limits<double>::infinity();
  rep.pass = rep.log_margin >= 0.0;
  return rep;
}

/// int u(t,x) rho dx >= C (int h rho dx + int_t^T int f rho dx ds) with
/// C = exp(-5 ||K-tilde||_{L1[t,T]}), for nonnegative h and f.
inline InequalityReport lower_bound_check(const PdeProblem& pb, double t, const FkConfig& cfg) {
  detail::require_linear(pb);
  const int d = pb.system.d;
  const QuadratureRule rule = detail::rule_with_breaks(cfg.quad, pb.breaks, d);
  const std::size_t nodes = rule.size();
  const Rule1D time_rule = pb.T > t ? composite_rule(t, pb.T, cfg.time_nodes) : Rule1D{};
  std::vector<double> h_terms(nodes);
  std::vector<double> f_terms(nodes, 0.0);
  for (std::size_t i = 0; i < nodes; ++i) {
    const double rho = pb.weight.rho(rule.points[i]);
    const double hv = pb.h(rule.points[i]);
    if (hv < 0.0) throw std::invalid_argument("lower_bound_check: h is negative at a quadrature node");
    h_terms[i] = rule.weights[i] * hv * rho;
    for (std::size_t q = 0; q < time_rule.nodes.size(); ++q) {
      const double fv = pb.f(time_rule.nodes[q], rule.points[i]);
      if (fv < 0.0) throw std::invalid_argument("lower_bound_check: f is negative at a quadrature node");
      f_terms[i] += time_rule.weights[q] * rule.weights[i] * fv * rho;
    }
  }
  const double data = pairwise_sum(h_terms) + pairwise_sum(f_terms);

  const std::vector<double> table = detail::fk_table(pb, t, rule.points, cfg.mc);
  std::vector<double> coef(nodes);
  for (std::size_t i = 0; i < nodes; ++i) coef[i] = rule.weights[i] * pb.weight.rho(rule.points[i]);
  InequalityReport rep;
  rep.kind = "lower_bound";
  rep.lhs = detail::reduce_table(table, coef, cfg.mc.n_paths, cfg.mc.max_exploded_fraction,
                                 "lower_bound_check");
  for (std::size_t i = 0; i < nodes && rep.nonnegative; ++i) {
    std::vector<double> col(cfg.mc.n_paths);
    for (std::size_t m = 0; m < cfg.mc.n_paths; ++m) col[m] = table[m * nodes + i];
    const Estimate u = detail::reduce_table(col, {1.0}, cfg.mc.n_paths, 1.0, "lower_bound_check");
    rep.nonnegative = u.value >= -cfg.z * u.stderr_value;
  }
  rep.k_tilde_l1 = pair_k_tilde(pb.system, pb.weight).l1_norm(t, pb.T);
  rep.log_constant = -5.0 * rep.k_tilde_l1 - pb.weight.log_constant_slack;
  rep.rhs = std::exp(rep.log_constant) * data;
  const double lo = rep.lhs.value + cfg.z * rep.lhs.stderr_value;
  if (data == 0.0) {
    rep.log_margin = lo >= 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  } else {
    rep.log_margin = detail::log_or_neg_inf(lo) - (rep.log_constant + std::log(data));
  }
  rep.pass = rep.log_margin >= 0.0;
  return rep;
}

}  // namespace sflow
