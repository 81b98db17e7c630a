#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/catalog.hpp"
#include "stochflow/coefficients.hpp"
#include "stochflow/linalg.hpp"
#include "stochflow/rng.hpp"

namespace sflow {

/// Strictly increasing time nodes t_0 < ... < t_n, n >= 1.
class TimeGrid {
 public:
  TimeGrid() = default;

  explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) throw std::invalid_argument("TimeGrid needs at least two nodes");
    for (std::size_t j = 0; j < times_.size(); ++j) {
      if (!std::isfinite(times_[j])) throw std::invalid_argument("TimeGrid node not finite");
      if (j > 0 && !(times_[j] > times_[j - 1])) {
        throw std::invalid_argument("TimeGrid nodes must be strictly increasing");
      }
    }
  }

  static TimeGrid uniform(double t0, double t1, std::size_t steps) {
    if (steps < 1) throw std::invalid_argument("TimeGrid::uniform needs steps >= 1");
    if (!(t1 > t0)) throw std::invalid_argument("TimeGrid::uniform needs t1 > t0");
    std::vector<double> times(steps + 1);
    for (std::size_t j = 0; j <= steps; ++j) {
      times[j] = t0 + (t1 - t0) * static_cast<double>(j) / static_cast<double>(steps);
    }
    times[steps] = t1;
    return TimeGrid(std::move(times));
  }

  /// Nodes equidistributing the measure  K(r)/||K|| dr + dr/(t1 - t0),
  /// which concentrates steps where K spikes while keeping at least half of
  /// them uniformly spread.
  static TimeGrid equidistributed(const TimeFunction& K, double t0, double t1, std::size_t steps) {
    const double mass = K.integral(t0, t1);
    if (!(mass > 0.0) || !std::isfinite(mass)) return uniform(t0, t1, steps);
    auto measure = [&](double r) { return K.integral(t0, r) / mass + (r - t0) / (t1 - t0); };
    std::vector<double> times(steps + 1);
    times[0] = t0;
    times[steps] = t1;
    for (std::size_t j = 1; j < steps; ++j) {
      const double target = 2.0 * static_cast<double>(j) / static_cast<double>(steps);
      double lo = times[j - 1];
      double hi = t1;
      for (int it = 0; it < 200 && hi - lo > 1e-15 * (1.0 + std::abs(hi)); ++it) {
        const double mid = 0.5 * (lo + hi);
        (measure(mid) < target ? lo : hi) = mid;
      }
      times[j] = 0.5 * (lo + hi);
    }
    // Drop nodes that collapsed onto their neighbour in floating point.
    times.erase(std::unique(times.begin(), times.end()), times.end());
    return TimeGrid(std::move(times));
  }

  [[nodiscard]] const std::vector<double>& times() const { return times_; }
  [[nodiscard]] std::size_t steps() const { return times_.empty() ? 0 : times_.size() - 1; }
  [[nodiscard]] double start() const { return times_.front(); }
  [[nodiscard]] double end() const { return times_.back(); }
  [[nodiscard]] double dt(std::size_t j) const { return times_[j + 1] - times_[j]; }
  double operator[](std::size_t j) const { return times_[j]; }

  friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

 private:
  std::vector<double> times_;
};

/// Brownian increments on a grid, with the seed record that regenerates them.
struct BrownianPath {
  TimeGrid grid;
  int dw = 1;
  std::vector<Vec> increments;
  std::uint64_t master_seed = 0;
  std::uint64_t path_index = 0;
  bool reversed = false;
};

/// Increments dW_j = sqrt(dt_j) * N(0, 1), each draw addressed by
/// (master, brownian stream, path, step, component).
inline BrownianPath sample_brownian(const TimeGrid& grid, int dw, std::uint64_t master,
                                    std::uint64_t path_index) {
  check_dimension(dw, "Brownian dimension");
  BrownianPath path{grid, dw, {}, master, path_index, false};
  path.increments.resize(grid.steps());
  for (std::size_t j = 0; j < grid.steps(); ++j) {
    const double scale = std::sqrt(grid.dt(j));
    Vec inc(dw);
    for (int k = 0; k < dw; ++k) {
      inc(k) = scale * standard_normal(master, {Stream::brownian, path_index,
                                                static_cast<std::uint32_t>(j),
                                                static_cast<std::uint32_t>(k)});
    }
    path.increments[j] = inc;
  }
  return path;
}

/// Sums blocks of `factor` consecutive increments: the same Brownian path
/// seen on a grid that keeps every factor-th node.
inline BrownianPath coarsen(const BrownianPath& path, std::size_t factor) {
  if (factor < 1 || path.grid.steps() % factor != 0) {
    throw std::invalid_argument("coarsen: factor must divide the number of steps");
  }
  std::vector<double> times;
  for (std::size_t j = 0; j <= path.grid.steps(); j += factor) times.push_back(path.grid[j]);
  BrownianPath out{TimeGrid(std::move(times)), path.dw, {}, path.master_seed, path.path_index,
                   path.reversed};
  for (std::size_t j = 0; j < path.grid.steps(); j += factor) {
    Vec sum = Vec::Zero(path.dw);
    for (std::size_t q = 0; q < factor; ++q) sum += path.increments[j + q];
    out.increments.push_back(sum);
  }
  return out;
}

namespace detail {

inline bool same_time(double a, double b) {
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace detail

/// Increments of W~_u = W_s - W_{s-u} on the reflected grid {s - t_{n-j}}:
/// dW~_j = dW_{n-1-j}. Applying it twice returns the original increments bit for bit.
inline BrownianPath reverse_path(const BrownianPath& path, double s) {
  if (!detail::same_time(s, path.grid.end())) {
    throw std::invalid_argument("reverse_path: s must equal the terminal grid time");
  }
  const std::size_t n = path.grid.steps();
  std::vector<double> times(n + 1);
  for (std::size_t j = 0; j <= n; ++j) times[j] = s - path.grid[n - j];
  times[0] = 0.0;
  BrownianPath out{TimeGrid(std::move(times)), path.dw, {}, path.master_seed, path.path_index,
                   !path.reversed};
  out.increments.assign(path.increments.rbegin(), path.increments.rend());
  return out;
}

enum class FlowDirection { forward, inverse };

/// States of a simulated flow. Forward runs are indexed along the original
/// grid starting at (t, x). Inverse runs are indexed along the reversed time
/// u in [0, s - t]: states[j] approximates the inverse flow at original
/// time s - u_j, starting from y at u = 0.
struct FlowPath {
  TimeGrid grid;
  std::vector<Vec> states;
  double origin_time = 0.0;
  Vec origin;
  FlowDirection direction = FlowDirection::forward;
  bool exploded = false;

  /// State at original time `time`; must be a grid node.
  [[nodiscard]] const Vec& state_at(double time) const {
    const double key = direction == FlowDirection::forward ? time : origin_time - time;
    const auto& ts = grid.times();
    auto it = std::lower_bound(ts.begin(), ts.end(), key - 1e-12 * std::max(1.0, std::abs(key)));
    if (it == ts.end() || !detail::same_time(*it, key)) {
      throw std::invalid_argument("FlowPath::state_at: time is not a grid node");
    }
    const auto idx = static_cast<std::size_t>(it - ts.begin());
    if (idx >= states.size()) throw std::runtime_error("FlowPath::state_at: path exploded before this time");
    return states[idx];
  }
  [[nodiscard]] const Vec& terminal() const { return states.back(); }
};

/// States with |X| above this (or non-finite) mark a path as exploded.
inline constexpr double kOverflowGuard = 1e12;

inline bool overflowed(const Vec& x) { return !x.allFinite() || x.norm() > kOverflowGuard; }

/// Euler-Maruyama walk of X_{j+1} = X_j + b(t_j, X_j) dt_j + sigma(t_j, X_j) dW_j
/// calling visit(j, X_j) at every node. Stops and returns false at the first
/// overflowing state (which is not visited).
template <class Visit>
bool euler_walk(const CoefficientSystem& sys, const Vec& x, const BrownianPath& path,
                Visit&& visit) {
  Vec state = x;
  visit(std::size_t{0}, static_cast<const Vec&>(state));
  const auto& ts = path.grid.times();
  for (std::size_t j = 0; j + 1 < ts.size(); ++j) {
    const double r = ts[j];
    state += sys.b(r, state) * (ts[j + 1] - r) + sys.sigma(r, state) * path.increments[j];
    if (overflowed(state)) return false;
    visit(j + 1, static_cast<const Vec&>(state));
  }
  return true;
}

inline void require_dims(const CoefficientSystem& sys, const Vec& x, const BrownianPath& path) {
  if (x.size() != sys.d) throw std::invalid_argument("state dimension does not match the system");
  if (path.dw != sys.dw) throw std::invalid_argument("Brownian dimension does not match the system");
}

inline FlowPath euler_forward(const CoefficientSystem& sys, double t, const Vec& x,
                              const BrownianPath& path) {
  require_dims(sys, x, path);
  if (!detail::same_time(t, path.grid.start())) {
    throw std::invalid_argument("euler_forward: path grid must start at t");
  }
  FlowPath flow{path.grid, {}, t, x, FlowDirection::forward, false};
  flow.states.reserve(path.grid.steps() + 1);
  flow.exploded = !euler_walk(sys, x, path, [&](std::size_t, const Vec& s) {
    flow.states.push_back(s);
  });
  return flow;
}

/// Closed-form solution driven by the path's increments (step by step, so
/// the OU stochastic integral uses the grid's own discretization).
inline FlowPath exact_forward(const CoefficientSystem& sys, double t, const Vec& x,
                              const BrownianPath& path) {
  if (sys.exact == ExactSolution::none) {
    throw std::invalid_argument("exact_forward: system '" + sys.name + "' has no closed-form solution");
  }
  require_dims(sys, x, path);
  if (!detail::same_time(t, path.grid.start())) {
    throw std::invalid_argument("exact_forward: path grid must start at t");
  }
  FlowPath flow{path.grid, {x}, t, x, FlowDirection::forward, false};
  Vec state = x;
  for (std::size_t j = 0; j < path.grid.steps(); ++j) {
    state = exact_step(sys, state, path.grid.dt(j), path.increments[j]);
    if (overflowed(state)) {
      flow.exploded = true;
      break;
    }
    flow.states.push_back(state);
  }
  return flow;
}

/// Closed-form inverse of the exact flow. Every catalog solution is affine
/// in the initial point, X_s = M x + c, so the inverse is M^{-1}(y - c).
inline Vec exact_inverse(const CoefficientSystem& sys, double t, const Vec& y,
                         const BrownianPath& path) {
  const Vec zero = Vec::Zero(sys.d);
  const FlowPath base = exact_forward(sys, t, zero, path);
  if (base.exploded) throw DomainError("exact_inverse: exact flow exploded");
  const Vec c = base.terminal();
  Mat M(sys.d, sys.d);
  for (int i = 0; i < sys.d; ++i) {
    Vec e = Vec::Zero(sys.d);
    e(i) = 1.0;
    const FlowPath col = exact_forward(sys, t, e, path);
    if (col.exploded) throw DomainError("exact_inverse: exact flow exploded");
    M.col(i) = col.terminal() - c;
  }
  return M.partialPivLu().solve(y - c);
}

/// Inverse flow y -> X^_s^{t,y} for t = path start, integrated forward in
/// reversed time u:
///   Z_{j+1} = Z_j - (b - sigma_hat)(s - u_j, Z_j) du_j - sigma(s - u_j, Z_j) dW~_j
/// with dW~ the reversed increments. states[j] sits at original time s - u_j.
inline FlowPath euler_inverse(const CoefficientSystem& sys, double s, const Vec& y,
                              const BrownianPath& path, double h = kDefaultFdStep) {
  require_dims(sys, y, path);
  const BrownianPath rev = reverse_path(path, s);
  const auto& ts = path.grid.times();
  const std::size_t n = path.grid.steps();
  FlowPath flow{rev.grid, {y}, s, y, FlowDirection::inverse, false};
  flow.states.reserve(n + 1);
  Vec z = y;
  for (std::size_t j = 0; j < n; ++j) {
    const double r = ts[n - j];
    const double du = ts[n - j] - ts[n - j - 1];
    z -= (sys.b(r, z) - sigma_hat(sys, r, z, h)) * du + sys.sigma(r, z) * rev.increments[j];
    if (overflowed(z)) {
      flow.exploded = true;
      break;
    }
    flow.states.push_back(z);
  }
  return flow;
}

namespace detail {

inline void require_values(const std::vector<double>& values, const BrownianPath& path, int k) {
  if (values.size() != path.grid.steps() + 1) {
    throw std::invalid_argument("Ito sum: values must have one entry per grid node");
  }
  if (k < 0 || k >= path.dw) throw std::invalid_argument("Ito sum: component out of range");
}

}  // namespace detail

/// Left-endpoint sum  sum_j f_{r_j} dW_j^k.
inline double forward_ito_sum(const std::vector<double>& values, const BrownianPath& path, int k) {
  detail::require_values(values, path, k);
  double sum = 0.0;
  for (std::size_t j = 0; j < path.increments.size(); ++j) sum += values[j] * path.increments[j](k);
  return sum;
}

/// Right-endpoint sum  sum_j f_{r_{j+1}} dW_j^k, accumulated from the
/// terminal step backwards, which is the order of the reversed-time forward
/// sum. Equal bit for bit to
///   forward_ito_sum(reflect(values), reverse_path(path, s), k).
inline double backward_ito_sum(const std::vector<double>& values, const BrownianPath& path, int k) {
  detail::require_values(values, path, k);
  double sum = 0.0;
  for (std::size_t j = path.increments.size(); j-- > 0;) sum += values[j + 1] * path.increments[j](k);
  return sum;
}

inline std::vector<double> reflect(std::vector<double> values) {
  std::reverse(values.begin(), values.end());
  return values;
}

using ScalarField = std::function<double(double r, const Vec& x)>;

/// V^Delta_k = sum_j (g(r_{j+1}, X_{j+1}) - g(r_j, X_j)) dW_j^k.
inline double covariation_sum(const ScalarField& g, const FlowPath& flow,
                              const BrownianPath& path, int k) {
  if (flow.direction != FlowDirection::forward || !(flow.grid == path.grid)) {
    throw std::invalid_argument("covariation_sum: flow and path must share a grid");
  }
  if (flow.states.size() != path.grid.steps() + 1) {
    throw std::invalid_argument("covariation_sum: flow exploded before the terminal time");
  }
  if (k < 0 || k >= path.dw) throw std::invalid_argument("covariation_sum: component out of range");
  double sum = 0.0;
  double prev = g(path.grid[0], flow.states[0]);
  for (std::size_t j = 0; j < path.grid.steps(); ++j) {
    const double next = g(path.grid[j + 1], flow.states[j + 1]);
    sum += (next - prev) * path.increments[j](k);
    prev = next;
  }
  return sum;
}

}  // namespace sflow
