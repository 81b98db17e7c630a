#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "stochflow/linalg.hpp"

namespace sflow {

/// One-dimensional rule: nodes and weights.
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1], Newton iteration on P_n.
inline Rule1D gauss_legendre(int n) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: n must be >= 1");
  if (n == 1) return Rule1D{{0.0}, {2.0}};
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = -x;
    rule.nodes[n - 1 - i] = x;
    rule.weights[i] = w;
    rule.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

/// Composite Gauss-Legendre rule on [lo, hi], with panel edges at the
/// given breakpoints (those strictly inside the interval) and
/// `nodes_per_panel` points in each panel.
inline Rule1D composite_rule(double lo, double hi, int nodes_per_panel,
                             std::vector<double> breaks = {}) {
  if (!(hi > lo)) throw std::invalid_argument("composite_rule: need hi > lo");
  std::vector<double> edges{lo, hi};
  for (double b : breaks) {
    if (b > lo && b < hi) edges.push_back(b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  const Rule1D base = gauss_legendre(nodes_per_panel);
  Rule1D out;
  for (std::size_t p = 0; p + 1 < edges.size(); ++p) {
    const double half = 0.5 * (edges[p + 1] - edges[p]);
    const double mid = 0.5 * (edges[p + 1] + edges[p]);
    for (int i = 0; i < nodes_per_panel; ++i) {
      out.nodes.push_back(mid + half * base.nodes[i]);
      out.weights.push_back(half * base.weights[i]);
    }
  }
  return out;
}

/// Quadrature configuration: a cube [lo, hi]^d, Gauss-Legendre panels split
/// at `breaks` on every axis.
struct QuadratureSpec {
  double lo = -8.0;
  double hi = 8.0;
  int nodes = 64;
  std::vector<double> breaks;
};

/// Tensor-product rule in d dimensions.
struct QuadratureRule {
  std::vector<Vec> points;
  std::vector<double> weights;
  [[nodiscard]] std::size_t size() const { return points.size(); }
};

inline QuadratureRule tensor_rule(const QuadratureSpec& spec, int d) {
  check_dimension(d, "quadrature dimension");
  const Rule1D axis = composite_rule(spec.lo, spec.hi, spec.nodes, spec.breaks);
  const std::size_t m = axis.nodes.size();
  std::size_t total = 1;
  for (int k = 0; k < d; ++k) total *= m;
  QuadratureRule rule;
  rule.points.reserve(total);
  rule.weights.reserve(total);
  for (std::size_t flat = 0; flat < total; ++flat) {
    Vec x(d);
    double w = 1.0;
    std::size_t rest = flat;
    for (int k = 0; k < d; ++k) {
      const std::size_t idx = rest % m;
      rest /= m;
      x(k) = axis.nodes[idx];
      w *= axis.weights[idx];
    }
    rule.points.push_back(x);
    rule.weights.push_back(w);
  }
  return rule;
}

/// Adaptive 31-point Gauss-Kronrod integration (possibly infinite limits).
/// Used to validate closed forms; returns the estimate and its error bound.
struct AdaptiveResult {
  double value = 0.0;
  double error = 0.0;
};

inline AdaptiveResult adaptive_integrate(const std::function<double(double)>& f, double a,
                                         double b, double rel_tol = 1e-12) {
  AdaptiveResult out;
  out.value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, 20, rel_tol, &out.error);
  return out;
}

}  // namespace sflow
