#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "stochflow/coefficients.hpp"

namespace sflow {

/// Radial C^2 cutoff: chi = 1 on |x| <= 1, chi = 0 on |x| >= 2, and the
/// quintic 1 - (10u^3 - 15u^4 + 6u^5), u = |x| - 1, in between (first and
/// second derivatives vanish at both ends).
struct QuinticCutoff {
  static double profile(double rho) {
    if (rho <= 1.0) return 1.0;
    if (rho >= 2.0) return 0.0;
    const double u = rho - 1.0;
    return 1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u);
  }
  static double profile_d1(double rho) {
    if (rho <= 1.0 || rho >= 2.0) return 0.0;
    const double u = rho - 1.0;
    return -30.0 * u * u * (1.0 - u) * (1.0 - u);
  }
  static double profile_d2(double rho) {
    if (rho <= 1.0 || rho >= 2.0) return 0.0;
    const double u = rho - 1.0;
    return -60.0 * u * (1.0 - u) * (1.0 - 2.0 * u);
  }

  double operator()(const Vec& x) const { return profile(x.norm()); }

  Vec gradient(const Vec& x) const {
    const double n = x.norm();
    if (n <= 1.0 || n >= 2.0) return Vec::Zero(x.size());
    return profile_d1(n) * x / n;
  }

  Mat hessian(const Vec& x) const {
    const int d = static_cast<int>(x.size());
    const double n = x.norm();
    if (n <= 1.0 || n >= 2.0) return Mat::Zero(d, d);
    const Vec e = x / n;
    const Mat radial = e * e.transpose();
    return profile_d2(n) * radial + (profile_d1(n) / n) * (identity(d) - radial);
  }

  /// sup (1+|x|)|grad chi| + sup (1+|x|)^2 |hess chi| (Frobenius), in dimension d.
  static double gamma(int d) {
    double g1 = 0.0;
    double g2 = 0.0;
    constexpr int kSamples = 20000;
    for (int i = 0; i <= kSamples; ++i) {
      const double rho = 1.0 + static_cast<double>(i) / kSamples;
      const double d1 = profile_d1(rho);
      const double d2 = profile_d2(rho);
      g1 = std::max(g1, (1.0 + rho) * std::abs(d1));
      const double frob = std::sqrt(d2 * d2 + (d - 1) * (d1 / rho) * (d1 / rho));
      g2 = std::max(g2, (1.0 + rho) * (1.0 + rho) * frob);
    }
    return g1 + g2;
  }
};

/// Localized system
///   b^n = b chi_n^2,  sigma^n = sigma chi_n,
///   sigma_hat^n = sigma_hat chi_n^2 + sigma sigma^T grad(chi_n) chi_n,
/// with chi_n(x) = chi(x/n). No time indicator is applied. The trace bound
/// becomes 4(1 + gamma + gamma^2)(K + K_tilde + K_hat).
///
/// Throws if n <= 0, or if the system has no analytic sigma_hat and
/// allow_fd_sigma_hat is false.
inline CoefficientSystem truncate_system(const CoefficientSystem& sys, int n,
                                         bool allow_fd_sigma_hat = true,
                                         double h = kDefaultFdStep) {
  if (n <= 0) throw std::invalid_argument("truncate_system: n must be positive");
  if (!sys.sigma_hat && !allow_fd_sigma_hat) {
    throw std::invalid_argument("truncate_system: system has no sigma_hat and FD fallback is off");
  }
  auto base = std::make_shared<const CoefficientSystem>(sys);
  const double scale = static_cast<double>(n);
  auto chi = [scale](const Vec& x) { return QuinticCutoff::profile(x.norm() / scale); };
  auto grad_chi = [scale](const Vec& x) -> Vec {
    return QuinticCutoff{}.gradient(x / scale) / scale;
  };

  CoefficientSystem out;
  out.name = sys.name + "_trunc" + std::to_string(n);
  out.d = sys.d;
  out.dw = sys.dw;
  out.b = [base, chi](double r, const Vec& x) -> Vec {
    const double c = chi(x);
    return c == 0.0 ? Vec(Vec::Zero(base->d)) : Vec(base->b(r, x) * c * c);
  };
  out.sigma = [base, chi](double r, const Vec& x) -> Mat {
    const double c = chi(x);
    return c == 0.0 ? Mat(Mat::Zero(base->d, base->dw)) : Mat(base->sigma(r, x) * c);
  };
  out.sigma_hat = [base, chi, grad_chi, h](double r, const Vec& x) -> Vec {
    const double c = chi(x);
    if (c == 0.0) return Vec::Zero(base->d);
    const Mat s = base->sigma(r, x);
    return sigma_hat(*base, r, x, h) * c * c + s * s.transpose() * grad_chi(x) * c;
  };
  out.grad_b = [base, chi, grad_chi, h](double r, const Vec& x) -> Mat {
    const double c = chi(x);
    if (c == 0.0) return Mat::Zero(base->d, base->d);
    return grad_drift(*base, r, x, h) * c * c +
           2.0 * c * base->b(r, x) * grad_chi(x).transpose();
  };
  for (int k = 0; k < sys.dw; ++k) {
    out.grad_sigma.push_back([base, chi, grad_chi, h, k](double r, const Vec& x) -> Mat {
      const double c = chi(x);
      if (c == 0.0) return Mat::Zero(base->d, base->d);
      return grad_diffusion_column(*base, k, r, x, h) * c +
             base->sigma(r, x).col(k) * grad_chi(x).transpose();
    });
  }
  out.K = sys.K;
  const double gamma = QuinticCutoff::gamma(sys.d);
  TimeFunction sum = sys.K;
  if (sys.K_tilde) sum = sum + *sys.K_tilde;
  if (sys.K_hat) sum = sum + *sys.K_hat;
  out.K_tilde = (4.0 * (1.0 + gamma + gamma * gamma)) * sum;
  out.K_hat = sys.K_hat;
  out.params = sys.params;
  out.params["truncation_n"] = n;
  return out;
}

}  // namespace sflow
