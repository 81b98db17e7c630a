#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

#include "stochflow/linalg.hpp"
#include "stochflow/time_function.hpp"

namespace sflow {

enum class WeightFamily { polynomial, exponential, custom };

/// Profile F of an exponential weight rho = exp(F).
///   abs        F = a |x|             (kink at the origin)
///   smooth_abs F = a sqrt(1 + |x|^2)
///   linear     F = a x_1
enum class ExpProfile { abs, smooth_abs, linear };

inline const char* to_string(WeightFamily f) {
  switch (f) {
    case WeightFamily::polynomial: return "polynomial";
    case WeightFamily::exponential: return "exponential";
    case WeightFamily::custom: break;
  }
  return "custom";
}

inline const char* to_string(ExpProfile p) {
  switch (p) {
    case ExpProfile::abs: return "abs";
    case ExpProfile::smooth_abs: return "smooth_abs";
    case ExpProfile::linear: break;
  }
  return "linear";
}

/// Strictly positive C^2 weight with its derivatives and the weight part of
/// K-tilde. log_rho is kept alongside rho so ratios of weights can be formed
/// without overflow.
struct Weight {
  WeightFamily family = WeightFamily::custom;
  int d = 1;
  double beta = 0.0;
  ExpProfile profile = ExpProfile::smooth_abs;
  double rate = 0.0;
  std::function<double(const Vec&)> log_rho;
  std::function<Vec(const Vec&)> grad_rho;
  std::function<Mat(const Vec&)> hess_rho;
  /// Weight contribution to K-tilde (compatibility conditions with b, sigma, sigma_hat).
  TimeFunction K_tilde_weight;
  /// Weight contribution for the localized moment estimate of rho(X).
  TimeFunction K_tilde_moment;
  /// Extra log factor by which c shrinks and C grows (nonsmooth profiles
  /// are compared against a smoothed weight).
  double log_constant_slack = 0.0;

  [[nodiscard]] double rho(const Vec& x) const {
    const double v = std::exp(log_rho(x));
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw DomainError("weight is not strictly positive and finite at the queried point");
    }
    return v;
  }
};

/// rho(x) = (1 + |x|^2)^beta. K is the growth bound of the coefficient system;
/// the weight part of K-tilde is
///   (16 (beta^2 + 2|beta|) + 4 sqrt(d) (beta^2 + 2|beta|)^{1/2}) K.
inline Weight polynomial_weight(double beta, int d, const TimeFunction& K) {
  check_dimension(d, "weight dimension");
  if (!std::isfinite(beta)) throw std::invalid_argument("polynomial weight: beta not finite");
  Weight w;
  w.family = WeightFamily::polynomial;
  w.d = d;
  w.beta = beta;
  w.log_rho = [beta](const Vec& x) { return beta * std::log1p(x.squaredNorm()); };
  w.grad_rho = [beta](const Vec& x) -> Vec {
    const double q = 1.0 + x.squaredNorm();
    return 2.0 * beta * std::pow(q, beta - 1.0) * x;
  };
  w.hess_rho = [beta, d](const Vec& x) -> Mat {
    const double q = 1.0 + x.squaredNorm();
    Mat h = 2.0 * beta * std::pow(q, beta - 1.0) * identity(d);
    h += 4.0 * beta * (beta - 1.0) * std::pow(q, beta - 2.0) * (x * x.transpose());
    return h;
  };
  const double g = beta * beta + 2.0 * std::abs(beta);
  w.K_tilde_moment = (16.0 * g) * K;
  w.K_tilde_weight = (16.0 * g + 4.0 * std::sqrt(static_cast<double>(d)) * std::sqrt(g)) * K;
  return w;
}

/// rho = exp(F) for the given profile and rate a. With ||grad F|| = |a| and
/// ||hess F|| <= |a|, the weight part of K-tilde is
///   ((1 + sqrt(d)) |a| + a^2 + |a|) K.
/// For the kinked profile abs, F is compared against a version smoothed on
/// |x| <= 3, which costs exp(+-2 sup_{|x|<=3} |F|) = exp(+-6|a|) in the constants.
inline Weight exponential_weight(ExpProfile profile, double a, int d, const TimeFunction& K) {
  check_dimension(d, "weight dimension");
  if (!std::isfinite(a)) throw std::invalid_argument("exponential weight: rate not finite");
  Weight w;
  w.family = WeightFamily::exponential;
  w.d = d;
  w.profile = profile;
  w.rate = a;
  std::function<double(const Vec&)> F;
  std::function<Vec(const Vec&)> dF;
  std::function<Mat(const Vec&)> d2F;
  double hess_bound = 0.0;
  switch (profile) {
    case ExpProfile::abs:
      F = [a](const Vec& x) { return a * x.norm(); };
      dF = [a, d](const Vec& x) -> Vec {
        const double n = x.norm();
        return n > 0.0 ? Vec(a * x / n) : Vec::Zero(d);
      };
      d2F = [a, d](const Vec& x) -> Mat {
        const double n = x.norm();
        if (n == 0.0) return Mat::Zero(d, d);
        return a * (identity(d) - x * x.transpose() / (n * n)) / n;
      };
      hess_bound = std::abs(a);
      w.log_constant_slack = 6.0 * std::abs(a);
      break;
    case ExpProfile::smooth_abs:
      F = [a](const Vec& x) { return a * std::sqrt(1.0 + x.squaredNorm()); };
      dF = [a](const Vec& x) -> Vec { return a * x / std::sqrt(1.0 + x.squaredNorm()); };
      d2F = [a, d](const Vec& x) -> Mat {
        const double s = std::sqrt(1.0 + x.squaredNorm());
        return a * (identity(d) / s - x * x.transpose() / (s * s * s));
      };
      hess_bound = std::abs(a);
      break;
    case ExpProfile::linear:
      F = [a](const Vec& x) { return a * x(0); };
      dF = [a, d](const Vec&) -> Vec {
        Vec g = Vec::Zero(d);
        g(0) = a;
        return g;
      };
      d2F = [d](const Vec&) -> Mat { return Mat::Zero(d, d); };
      break;
  }
  w.log_rho = F;
  w.grad_rho = [F, dF](const Vec& x) -> Vec { return std::exp(F(x)) * dF(x); };
  w.hess_rho = [F, dF, d2F](const Vec& x) -> Mat {
    const Vec g = dF(x);
    return std::exp(F(x)) * (g * g.transpose() + d2F(x));
  };
  const double grad = std::abs(a);
  w.K_tilde_weight =
      ((1.0 + std::sqrt(static_cast<double>(d))) * grad + grad * grad + hess_bound) * K;
  w.K_tilde_moment = (grad + grad * grad + hess_bound) * K;
  return w;
}

}  // namespace sflow
