#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

#include "stochflow/linalg.hpp"
#include "stochflow/quadrature.hpp"

namespace sflow {

/// Scalar space-time field with its time domain of definition.
struct SpaceTimeField {
  int d = 1;
  std::function<double(double r, const Vec& x)> f;
  double t_lo = -std::numeric_limits<double>::infinity();
  double t_hi = std::numeric_limits<double>::infinity();
};

/// Where the approximation metric  int_0^T sup_{|x|<=R} |f_n - f|^p dr  is
/// evaluated: n_r midpoints in time, n_x equispaced points per axis on
/// [-R, R]^d (an odd n_x keeps the origin on the grid).
struct MollifierProbe {
  double R = 1.0;
  double p = 1.0;
  double T = 1.0;
  int n_r = 32;
  int n_x = 201;
};

struct MollifiedField {
  SpaceTimeField field;
  double metric = 0.0;
};

namespace detail {

// exp(-1/(1-z^2)) on (-1, 1).
inline double bump(double z) {
  const double q = 1.0 - z * z;
  return q > 0.0 ? std::exp(-1.0 / q) : 0.0;
}

// Discrete mollifier on [-1, 1]: 16 Gauss-Legendre nodes, weights
// proportional to bump(z) and normalized to unit mass.
inline Rule1D mollifier_rule() {
  Rule1D rule = gauss_legendre(16);
  double mass = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    rule.weights[i] *= bump(rule.nodes[i]);
    mass += rule.weights[i];
  }
  for (double& w : rule.weights) w /= mass;
  return rule;
}

}  // namespace detail

/// Space-time mollification f_n = f * (rho_n (x) rho_n^1): tensor products
/// of the normalized bump exp(-1/(1-z^2)), time support |s| <= 1/n and
/// spatial axes scaled by 1/(n sqrt(d)) so the spatial support lies in the
/// ball of radius 1/n. Returns the mollified field and the approximation metric.
///
/// Throws if a time node r - s would leave f's time domain, or n < 1, p < 1.
inline MollifiedField mollify_field(const SpaceTimeField& f, int n, const MollifierProbe& probe) {
  if (n < 1) throw std::invalid_argument("mollify_field: n must be >= 1");
  if (!(probe.p >= 1.0)) throw std::invalid_argument("mollify_field: p must be >= 1");
  check_dimension(f.d, "mollify_field dimension");
  const double time_radius = 1.0 / n;
  const double space_radius = 1.0 / (n * std::sqrt(static_cast<double>(f.d)));
  if (0.0 - time_radius < f.t_lo || probe.T + time_radius > f.t_hi) {
    throw std::domain_error("mollify_field: quadrature nodes fall outside the field's time domain");
  }
  const Rule1D rule = detail::mollifier_rule();
  const int m = static_cast<int>(rule.nodes.size());
  const int d = f.d;

  auto smooth = [f, rule, m, d, time_radius, space_radius](double r, const Vec& x) {
    if (r - time_radius < f.t_lo || r + time_radius > f.t_hi) {
      throw std::domain_error("mollified field queried outside its time domain");
    }
    std::size_t total = 1;
    for (int k = 0; k <= d; ++k) total *= static_cast<std::size_t>(m);
    double sum = 0.0;
    Vec y(d);
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rest = flat;
      const std::size_t it = rest % m;
      rest /= m;
      double w = rule.weights[it];
      const double s = rule.nodes[it] * time_radius;
      for (int k = 0; k < d; ++k) {
        const std::size_t ix = rest % m;
        rest /= m;
        w *= rule.weights[ix];
        y(k) = x(k) - rule.nodes[ix] * space_radius;
      }
      sum += w * f.f(r - s, y);
    }
    return sum;
  };

  MollifiedField out;
  out.field = SpaceTimeField{d, smooth, f.t_lo + time_radius, f.t_hi - time_radius};

  const int n_x = std::max(probe.n_x, 1);
  std::size_t total_x = 1;
  for (int k = 0; k < d; ++k) total_x *= static_cast<std::size_t>(n_x);
  double metric = 0.0;
  const double dr = probe.T / probe.n_r;
  for (int ir = 0; ir < probe.n_r; ++ir) {
    const double r = (ir + 0.5) * dr;
    double sup = 0.0;
    for (std::size_t flat = 0; flat < total_x; ++flat) {
      Vec x(d);
      std::size_t rest = flat;
      for (int k = 0; k < d; ++k) {
        const std::size_t idx = rest % n_x;
        rest /= n_x;
        x(k) = n_x == 1 ? 0.0 : -probe.R + 2.0 * probe.R * idx / (n_x - 1);
      }
      if (x.norm() > probe.R) continue;
      sup = std::max(sup, std::abs(smooth(r, x) - f.f(r, x)));
    }
    metric += std::pow(sup, probe.p) * dr;
  }
  out.metric = metric;
  return out;
}

}  // namespace sflow
