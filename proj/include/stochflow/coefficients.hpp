#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/linalg.hpp"
#include "stochflow/time_function.hpp"

namespace sflow {

using VectorField = std::function<Vec(double r, const Vec& x)>;
using MatrixField = std::function<Mat(double r, const Vec& x)>;

/// Closed-form solution families known to the catalog.
enum class ExactSolution { none, gbm, ou, linear };

inline const char* to_string(ExactSolution e) {
  switch (e) {
    case ExactSolution::gbm: return "gbm";
    case ExactSolution::ou: return "ou";
    case ExactSolution::linear: return "linear";
    case ExactSolution::none: break;
  }
  return "none";
}

/// Parameters of the closed-form solution, when one exists.
///   gbm:    dX = beta X dr + alpha X dW (d = d' = 1)
///   ou:     dX = -lambda X dr + dW      (sigma = I)
///   linear: dX = B X dr + sum_k A_k X dW^k, all matrices commuting
struct ExactParams {
  double alpha = 0.0;
  double beta = 0.0;
  double lambda = 0.0;
  Mat B;
  std::vector<Mat> A;
};

/// Drift b, diffusion sigma, the correction field
///   sigma_hat_i = sum_{j,k} sigma_jk d_j sigma_ik,
/// optional analytic gradients and the bound functions. All fields are
/// optional except b and sigma; missing gradients fall back to central
/// differences.
///
/// grad_sigma[k] is the Jacobian of the k-th column of sigma:
/// (grad_sigma[k])_ij = d_j sigma_ik.
struct CoefficientSystem {
  std::string name;
  int d = 1;
  int dw = 1;
  VectorField b;
  MatrixField sigma;
  VectorField sigma_hat;
  MatrixField grad_b;
  std::vector<MatrixField> grad_sigma;
  MatrixField grad_sigma_hat;
  /// Growth/Lipschitz bound: |b| <= K(1+|x|), |sigma| <= K^(1/2)(1+|x|).
  TimeFunction K;
  /// Bound for the trace conditions (weight-independent part of K-tilde).
  std::optional<TimeFunction> K_tilde;
  /// Bound on |sigma_hat| <= K_hat (1+|x|).
  std::optional<TimeFunction> K_hat;
  ExactSolution exact = ExactSolution::none;
  ExactParams exact_params;
  /// Catalog parameters, echoed into reports.
  std::map<std::string, double> params;
};

/// Default finite-difference step, scaled by (1 + |x|) at the evaluation point.
inline constexpr double kDefaultFdStep = 1e-4;

namespace detail {

inline double fd_step(const Vec& x, double h) { return h * (1.0 + x.norm()); }

inline void require_finite(const Vec& v, const char* what) {
  if (!v.allFinite()) throw DomainError(std::string("non-finite ") + what);
}
inline void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw DomainError(std::string("non-finite ") + what);
}

// Central-difference Jacobian of a vector field.
inline Mat fd_jacobian_of(const VectorField& f, double r, const Vec& x, double h) {
  const double step = fd_step(x, h);
  const Vec f0 = f(r, x);
  Mat jac(f0.size(), x.size());
  Vec xp = x;
  Vec xm = x;
  for (int j = 0; j < x.size(); ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    jac.col(j) = (f(r, xp) - f(r, xm)) / (2.0 * step);
    xp(j) = x(j);
    xm(j) = x(j);
  }
  return jac;
}

}  // namespace detail

inline Vec eval_drift(const CoefficientSystem& sys, double r, const Vec& x) {
  Vec out = sys.b(r, x);
  detail::require_finite(out, "drift");
  return out;
}

inline Mat eval_diffusion(const CoefficientSystem& sys, double r, const Vec& x) {
  Mat out = sys.sigma(r, x);
  detail::require_finite(out, "diffusion");
  return out;
}

/// Correction field sigma_hat(r, x): the analytic field when present,
/// otherwise the central-difference evaluation of sum_{j,k} sigma_jk d_j sigma_ik.
/// At points where sigma is not differentiable the value is whatever the
/// difference quotient yields.
inline Vec sigma_hat(const CoefficientSystem& sys, double r, const Vec& x,
                     double h = kDefaultFdStep) {
  if (sys.sigma_hat) {
    Vec out = sys.sigma_hat(r, x);
    detail::require_finite(out, "sigma_hat");
    return out;
  }
  if (!(h > 0.0)) throw std::invalid_argument("sigma_hat: FD step must be > 0");
  const Mat s = eval_diffusion(sys, r, x);
  const double step = detail::fd_step(x, h);
  Vec out = Vec::Zero(sys.d);
  Vec xp = x;
  Vec xm = x;
  for (int j = 0; j < sys.d; ++j) {
    xp(j) = x(j) + step;
    xm(j) = x(j) - step;
    const Mat ds = (eval_diffusion(sys, r, xp) - eval_diffusion(sys, r, xm)) / (2.0 * step);
    xp(j) = x(j);
    xm(j) = x(j);
    for (int i = 0; i < sys.d; ++i) {
      for (int k = 0; k < sys.dw; ++k) out(i) += s(j, k) * ds(i, k);
    }
  }
  detail::require_finite(out, "sigma_hat");
  return out;
}

inline Mat grad_drift(const CoefficientSystem& sys, double r, const Vec& x,
                      double h = kDefaultFdStep) {
  if (sys.grad_b) return sys.grad_b(r, x);
  return detail::fd_jacobian_of(sys.b, r, x, h);
}

inline Mat grad_diffusion_column(const CoefficientSystem& sys, int k, double r, const Vec& x,
                                 double h = kDefaultFdStep) {
  if (static_cast<int>(sys.grad_sigma.size()) == sys.dw && sys.grad_sigma[k]) {
    return sys.grad_sigma[k](r, x);
  }
  const VectorField column = [&sys, k](double rr, const Vec& xx) -> Vec {
    return sys.sigma(rr, xx).col(k);
  };
  return detail::fd_jacobian_of(column, r, x, h);
}

inline Mat grad_sigma_hat(const CoefficientSystem& sys, double r, const Vec& x,
                          double h = kDefaultFdStep) {
  if (sys.grad_sigma_hat) return sys.grad_sigma_hat(r, x);
  // Nested differences; use a coarser outer step so the inner FD noise stays small.
  const VectorField field = [&sys, h](double rr, const Vec& xx) -> Vec {
    return sigma_hat(sys, rr, xx, h);
  };
  return detail::fd_jacobian_of(field, r, x, sys.sigma_hat ? h : std::sqrt(h) * 0.1);
}

/// Gradient terms entering the Jacobian determinant along one state:
///   drift_trace  = tr grad b - 1/2 sum_k tr[(grad sigma_k)^2]
///   noise_trace  = (tr grad sigma_k)_k
struct TraceTerms {
  double drift_trace = 0.0;
  Vec noise_trace;
};

inline TraceTerms trace_terms(const CoefficientSystem& sys, double r, const Vec& x,
                              double h = kDefaultFdStep) {
  TraceTerms out;
  out.noise_trace = Vec::Zero(sys.dw);
  double corr = 0.0;
  for (int k = 0; k < sys.dw; ++k) {
    const Mat gs = grad_diffusion_column(sys, k, r, x, h);
    out.noise_trace(k) = gs.trace();
    corr += (gs * gs).trace();
  }
  out.drift_trace = grad_drift(sys, r, x, h).trace() - 0.5 * corr;
  return out;
}

/// Constants of the two-sided norm bounds.
struct NormEquivConstants {
  double c = 1.0;
  double C = 1.0;
  double log_c = 0.0;
  double log_C = 0.0;
};

/// c = exp(-5 a), C = exp(5 a) for a = ||K-tilde||_L1.
inline NormEquivConstants norm_equiv_constants(double k_tilde_l1) {
  if (!std::isfinite(k_tilde_l1) || k_tilde_l1 < 0.0) {
    throw std::invalid_argument("norm_equiv_constants: ||K_tilde||_L1 must be finite and >= 0");
  }
  NormEquivConstants out;
  out.log_c = -5.0 * k_tilde_l1;
  out.log_C = 5.0 * k_tilde_l1;
  out.c = std::exp(out.log_c);
  out.C = std::exp(out.log_C);
  return out;
}

}  // namespace sflow
