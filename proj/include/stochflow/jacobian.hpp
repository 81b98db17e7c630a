#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/coefficients.hpp"
#include "stochflow/parallel.hpp"
#include "stochflow/paths.hpp"
#include "stochflow/weight.hpp"

namespace sflow {

enum class JacobianSource { variational, finite_difference };

struct JacobianPath {
  TimeGrid grid;
  std::vector<Mat> matrices;
  JacobianSource source = JacobianSource::variational;
};

/// log det J along the grid; det itself is positive by construction.
struct DeterminantPath {
  TimeGrid grid;
  std::vector<double> log_det;
};

namespace detail {

inline void require_complete(const FlowPath& flow, const BrownianPath& path, const char* what) {
  if (flow.exploded || flow.states.size() != path.grid.steps() + 1) {
    throw DomainError(std::string(what) + ": flow exploded");
  }
  if (flow.direction == FlowDirection::forward && !(flow.grid == path.grid)) {
    throw std::invalid_argument(std::string(what) + ": flow and path must share a grid");
  }
}

}  // namespace detail

/// Euler scheme for the variational equation
///   J_{j+1} = J_j + grad b(t_j, X_j) J_j dt_j + sum_k grad sigma_k(t_j, X_j) J_j dW_j^k.
inline JacobianPath variational_jacobian(const CoefficientSystem& sys, const FlowPath& flow,
                                         const BrownianPath& path, double h = kDefaultFdStep) {
  detail::require_complete(flow, path, "variational_jacobian");
  JacobianPath out{path.grid, {identity(sys.d)}, JacobianSource::variational};
  out.matrices.reserve(flow.states.size());
  Mat J = identity(sys.d);
  for (std::size_t j = 0; j < path.grid.steps(); ++j) {
    const double r = path.grid[j];
    const Vec& x = flow.states[j];
    Mat step = grad_drift(sys, r, x, h) * path.grid.dt(j);
    for (int k = 0; k < sys.dw; ++k) step += grad_diffusion_column(sys, k, r, x, h) * path.increments[j](k);
    J += step * J;
    detail::require_finite(J, "variational Jacobian");
    out.matrices.push_back(J);
  }
  return out;
}

/// Stochastic Liouville formula in the log domain:
///   log det J_s = sum_j (tr grad b - 1/2 sum_k tr[(grad sigma_k)^2]) dt_j
///               + sum_j sum_k tr grad sigma_k dW_j^k,
/// all integrands at the left endpoint (the same nodes the Euler scheme uses).
inline DeterminantPath liouville_determinant(const CoefficientSystem& sys, const FlowPath& flow,
                                             const BrownianPath& path, double h = kDefaultFdStep) {
  detail::require_complete(flow, path, "liouville_determinant");
  DeterminantPath out{path.grid, {0.0}};
  out.log_det.reserve(flow.states.size());
  double acc = 0.0;
  for (std::size_t j = 0; j < path.grid.steps(); ++j) {
    const TraceTerms tt = trace_terms(sys, path.grid[j], flow.states[j], h);
    acc += tt.drift_trace * path.grid.dt(j) + tt.noise_trace.dot(path.increments[j]);
    out.log_det.push_back(acc);
  }
  return out;
}

/// Liouville formula for the inverse flow, whose reversed-time SDE has drift
/// -(b - sigma_hat) and diffusion -sigma:
///   drift term  -tr grad b + tr grad sigma_hat - 1/2 sum_k tr[(grad sigma_k)^2]
///   noise term  -tr grad sigma_k  against the reversed increments.
/// `path` is the original-time path; `flow` comes from euler_inverse on it.
inline DeterminantPath inverse_liouville_determinant(const CoefficientSystem& sys,
                                                     const FlowPath& flow,
                                                     const BrownianPath& path,
                                                     double h = kDefaultFdStep) {
  if (flow.direction != FlowDirection::inverse) {
    throw std::invalid_argument("inverse_liouville_determinant: needs an inverse flow");
  }
  detail::require_complete(flow, path, "inverse_liouville_determinant");
  const std::size_t n = path.grid.steps();
  const auto& ts = path.grid.times();
  DeterminantPath out{flow.grid, {0.0}};
  out.log_det.reserve(n + 1);
  double acc = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double r = ts[n - j];
    const Vec& z = flow.states[j];
    Vec noise(sys.dw);
    double sq = 0.0;
    for (int k = 0; k < sys.dw; ++k) {
      const Mat gs = grad_diffusion_column(sys, k, r, z, h);
      noise(k) = gs.trace();
      sq += (gs * gs).trace();
    }
    const double drift =
        -grad_drift(sys, r, z, h).trace() + grad_sigma_hat(sys, r, z, h).trace() - 0.5 * sq;
    acc += drift * (ts[n - j] - ts[n - j - 1]) - noise.dot(path.increments[n - 1 - j]);
    out.log_det.push_back(acc);
  }
  return out;
}

/// Central differences of the terminal Euler state, all runs driven by the same increments.
inline Mat fd_jacobian(const CoefficientSystem& sys, double t, const Vec& x,
                       const BrownianPath& path, double h = 1e-4) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_jacobian: h must be > 0");
  Mat out(sys.d, sys.d);
  for (int i = 0; i < sys.d; ++i) {
    Vec xp = x;
    Vec xm = x;
    xp(i) += h;
    xm(i) -= h;
    const FlowPath fp = euler_forward(sys, t, xp, path);
    const FlowPath fm = euler_forward(sys, t, xm, path);
    if (fp.exploded || fm.exploded) throw DomainError("fd_jacobian: bumped path exploded");
    out.col(i) = (fp.terminal() - fm.terminal()) / (2.0 * h);
  }
  return out;
}

enum class MomentKind { det, rho };

inline const char* to_string(MomentKind k) { return k == MomentKind::det ? "det" : "rho"; }

/// One moment estimate against its bound exp(c_alpha ||K-tilde||).
struct BoundReport {
  MomentKind kind = MomentKind::det;
  double alpha = 0.0;
  double estimate = 0.0;
  double stderr_estimate = 0.0;
  double bound = 0.0;
  double log_bound = 0.0;
  double k_tilde_l1 = 0.0;
  bool pass = false;
  std::size_t n_paths = 0;
  std::size_t exploded = 0;
  std::size_t stopped = 0;
};

struct MomentConfig {
  double t = 0.0;
  double s = 1.0;
  Vec x;
  std::size_t steps = 256;
  std::size_t n_paths = 10000;
  std::uint64_t master_seed = 1;
  unsigned threads = 1;
  /// Localization level N of tau_N; infinity disables stopping.
  double truncation = std::numeric_limits<double>::infinity();
};

/// c_alpha of the two moment estimates.
inline double moment_exponent(MomentKind kind, double alpha) {
  return 0.5 * alpha * alpha + (kind == MomentKind::det ? 1.0 : 2.0) * std::abs(alpha);
}

/// Monte-Carlo moments, for every alpha in `alphas`, of
///   det: |det J_s|^alpha 1{tau_N >= s}      bound exp(c_alpha ||K-tilde_sys||)
///   rho: (rho(X_{s ^ tau_N}) / rho(x))^alpha bound exp(c_alpha ||K-tilde_moment||)
/// with L1 norms over [t, s]. tau_N is the first grid node with |X| >= N;
/// a path stopped before s counts as stopped (indicator 0 for det).
/// Passes when estimate - 3 stderr <= bound. Exploded paths are dropped.
inline std::vector<BoundReport> moment_report(MomentKind kind, const CoefficientSystem& sys,
                                              const Weight* weight,
                                              const std::vector<double>& alphas,
                                              const MomentConfig& cfg) {
  if (kind == MomentKind::rho && weight == nullptr) {
    throw std::invalid_argument("moment_report: rho moments need a weight");
  }
  for (double a : alphas) {
    if (!std::isfinite(a)) throw std::invalid_argument("moment_report: alpha must be finite");
  }
  if (cfg.x.size() != sys.d) throw std::invalid_argument("moment_report: start point dimension");
  double k_l1 = 0.0;
  if (kind == MomentKind::det) {
    if (!sys.K_tilde) throw std::invalid_argument("moment_report: system has no K_tilde");
    k_l1 = sys.K_tilde->l1_norm(cfg.t, cfg.s);
  } else {
    k_l1 = weight->K_tilde_moment.l1_norm(cfg.t, cfg.s);
  }
  const TimeGrid grid = TimeGrid::uniform(cfg.t, cfg.s, cfg.steps);
  const std::size_t na = alphas.size();
  std::vector<double> logs(cfg.n_paths, 0.0);
  std::vector<unsigned char> status(cfg.n_paths, 0);  // 0 ok, 1 stopped, 2 exploded
  const double log_rho0 = kind == MomentKind::rho ? weight->log_rho(cfg.x) : 0.0;

  parallel_for(cfg.n_paths, cfg.threads, [&](std::size_t m) {
    const BrownianPath path = sample_brownian(grid, sys.dw, cfg.master_seed, m);
    double log_det = 0.0;
    Vec last = cfg.x;
    bool stopped = false;
    const bool finished = euler_walk(sys, cfg.x, path, [&](std::size_t j, const Vec& state) {
      if (stopped) return;
      last = state;
      if (j < grid.steps() && state.norm() >= cfg.truncation) {
        stopped = true;
        return;
      }
      if (kind == MomentKind::det && j < grid.steps()) {
        const TraceTerms tt = trace_terms(sys, grid[j], state);
        log_det += tt.drift_trace * grid.dt(j) + tt.noise_trace.dot(path.increments[j]);
      }
    });
    if (!finished && !stopped) {
      status[m] = 2;
      return;
    }
    if (kind == MomentKind::det) {
      status[m] = stopped ? 1 : 0;
      logs[m] = log_det;
    } else {
      status[m] = stopped ? 1 : 0;
      logs[m] = weight->log_rho(last) - log_rho0;
    }
  });

  std::vector<BoundReport> out;
  std::size_t exploded = 0;
  std::size_t stopped = 0;
  for (unsigned char st : status) {
    exploded += st == 2;
    stopped += st == 1;
  }
  if (exploded == cfg.n_paths) throw DomainError("moment_report: every path exploded");
  for (std::size_t a = 0; a < na; ++a) {
    const double alpha = alphas[a];
    std::vector<double> vals;
    vals.reserve(cfg.n_paths - exploded);
    for (std::size_t m = 0; m < cfg.n_paths; ++m) {
      if (status[m] == 2) continue;
      if (kind == MomentKind::det && status[m] == 1) {
        vals.push_back(0.0);
      } else {
        vals.push_back(std::exp(alpha * logs[m]));
      }
    }
    const SampleStats st = sample_stats(vals);
    BoundReport rep;
    rep.kind = kind;
    rep.alpha = alpha;
    rep.estimate = st.mean;
    rep.stderr_estimate = st.stderr_mean;
    rep.k_tilde_l1 = k_l1;
    rep.log_bound = moment_exponent(kind, alpha) * k_l1;
    rep.bound = std::exp(rep.log_bound);
    rep.pass = st.mean - 3.0 * st.stderr_mean <= rep.bound;
    rep.n_paths = vals.size();
    rep.exploded = exploded;
    rep.stopped = stopped;
    out.push_back(rep);
  }
  return out;
}

}  // namespace sflow
