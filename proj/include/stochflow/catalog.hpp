#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stochflow/coefficients.hpp"

namespace sflow {

/// Exact flow over one step [r, r + dt] driven by the Brownian increment dW.
/// For gbm and commuting linear systems this composes to the exact solution;
/// for ou it composes to x e^{-lambda (s-t)} + sum_j e^{-lambda (s - t_j)} dW_j,
/// i.e. the stochastic convolution discretized on the same grid.
inline Vec exact_step(const CoefficientSystem& sys, const Vec& x, double dt, const Vec& dw) {
  const ExactParams& p = sys.exact_params;
  switch (sys.exact) {
    case ExactSolution::gbm:
      return x * std::exp((p.beta - 0.5 * p.alpha * p.alpha) * dt + p.alpha * dw(0));
    case ExactSolution::ou:
      return std::exp(-p.lambda * dt) * (x + dw);
    case ExactSolution::linear: {
      Mat gen = p.B * dt;
      for (std::size_t k = 0; k < p.A.size(); ++k) {
        gen += -0.5 * p.A[k] * p.A[k] * dt + p.A[k] * dw(static_cast<int>(k));
      }
      return expm(gen) * x;
    }
    case ExactSolution::none: break;
  }
  throw std::invalid_argument("exact_step: system '" + sys.name + "' has no exact solution");
}

/// Spot check that the closed-form map matches the coefficients: with the
/// symmetric two-point increments dW = +-sqrt(dt) e_k, the averaged exact
/// step reproduces x + b dt to O(dt^2) and the half-difference reproduces
/// sigma e_k sqrt(dt) to O(dt). Returns the worst normalized residual
/// (<= 1 means consistent).
inline double exact_solution_residual(const CoefficientSystem& sys, const Vec& x,
                                      double r = 0.0) {
  const double dt = 1e-6;
  const double sq = std::sqrt(dt);
  const Vec drift = eval_drift(sys, r, x);
  const Mat diff = eval_diffusion(sys, r, x);
  const double scale = 1.0 + x.norm() + drift.norm() + diff.squaredNorm();
  double worst = 0.0;
  for (int k = 0; k < sys.dw; ++k) {
    Vec dw = Vec::Zero(sys.dw);
    dw(k) = sq;
    const Vec half = 0.5 * (exact_step(sys, x, dt, dw) - exact_step(sys, x, dt, -dw)) / sq;
    worst = std::max(worst, (half - diff.col(k)).norm() / (1e-2 * scale));
  }
  // The 2 d' points +-sqrt(d' dt) e_k have increment covariance dt I, so
  // their average cancels the Ito correction of the exact map.
  Vec avg = Vec::Zero(sys.d);
  for (int k = 0; k < sys.dw; ++k) {
    Vec e = Vec::Zero(sys.dw);
    e(k) = sq * std::sqrt(static_cast<double>(sys.dw));
    avg += exact_step(sys, x, dt, e) + exact_step(sys, x, dt, -e);
  }
  avg /= 2.0 * sys.dw;
  worst = std::max(worst, (avg - (x + drift * dt)).norm() / (1e-3 * dt * scale));
  return worst;
}

namespace detail {

inline double require_param(const std::map<std::string, double>& params, const std::string& key,
                            const std::string& tag) {
  const auto it = params.find(key);
  if (it == params.end()) {
    throw std::invalid_argument("catalog '" + tag + "': missing parameter '" + key + "'");
  }
  if (!std::isfinite(it->second)) {
    throw std::invalid_argument("catalog '" + tag + "': parameter '" + key + "' is not finite");
  }
  return it->second;
}

inline double optional_param(const std::map<std::string, double>& params, const std::string& key,
                             double fallback, const std::string& tag) {
  const auto it = params.find(key);
  if (it == params.end()) return fallback;
  if (!std::isfinite(it->second)) {
    throw std::invalid_argument("catalog '" + tag + "': parameter '" + key + "' is not finite");
  }
  return it->second;
}

inline int dimension_param(const std::map<std::string, double>& params, const std::string& key,
                           int fallback, const std::string& tag) {
  const double v = optional_param(params, key, fallback, tag);
  if (v != std::floor(v)) throw std::invalid_argument("catalog '" + tag + "': non-integer " + key);
  const int d = static_cast<int>(v);
  check_dimension(d, key.c_str());
  return d;
}

inline void attach_derived_bounds(CoefficientSystem& sys) {
  const double d = sys.d;
  sys.K_tilde = (2.5 * d + d * d) * sys.K;
  sys.K_hat = std::sqrt(d) * sys.K;
}

}  // namespace detail

/// dX = beta X dr + alpha X dW in d = d' = 1.
inline CoefficientSystem gbm_system(double alpha, double beta) {
  CoefficientSystem sys;
  sys.name = "gbm";
  sys.d = 1;
  sys.dw = 1;
  sys.b = [beta](double, const Vec& x) -> Vec { return beta * x; };
  sys.sigma = [alpha](double, const Vec& x) -> Mat { return Mat::Constant(1, 1, alpha * x(0)); };
  sys.sigma_hat = [alpha](double, const Vec& x) -> Vec { return alpha * alpha * x; };
  sys.grad_b = [beta](double, const Vec&) -> Mat { return Mat::Constant(1, 1, beta); };
  sys.grad_sigma = {[alpha](double, const Vec&) -> Mat { return Mat::Constant(1, 1, alpha); }};
  sys.grad_sigma_hat = [alpha](double, const Vec&) -> Mat {
    return Mat::Constant(1, 1, alpha * alpha);
  };
  sys.K = TimeFunction::constant(std::max(std::abs(beta), alpha * alpha));
  detail::attach_derived_bounds(sys);
  sys.exact = ExactSolution::gbm;
  sys.exact_params.alpha = alpha;
  sys.exact_params.beta = beta;
  sys.params = {{"alpha", alpha}, {"beta", beta}};
  return sys;
}

/// dX = -lambda X dr + dW in dimension d (sigma = I).
inline CoefficientSystem ou_system(double lambda, int d = 1) {
  check_dimension(d, "ou dimension");
  CoefficientSystem sys;
  sys.name = "ou";
  sys.d = d;
  sys.dw = d;
  sys.b = [lambda](double, const Vec& x) -> Vec { return -lambda * x; };
  sys.sigma = [d](double, const Vec&) -> Mat { return identity(d); };
  sys.sigma_hat = [d](double, const Vec&) -> Vec { return Vec::Zero(d); };
  sys.grad_b = [lambda, d](double, const Vec&) -> Mat { return -lambda * identity(d); };
  for (int k = 0; k < d; ++k) {
    sys.grad_sigma.push_back([d](double, const Vec&) -> Mat { return Mat::Zero(d, d); });
  }
  sys.grad_sigma_hat = [d](double, const Vec&) -> Mat { return Mat::Zero(d, d); };
  sys.K = TimeFunction::constant(std::max(std::abs(lambda), static_cast<double>(d)));
  detail::attach_derived_bounds(sys);
  sys.exact = ExactSolution::ou;
  sys.exact_params.lambda = lambda;
  sys.params = {{"lambda", lambda}, {"d", d}};
  return sys;
}

/// dX = B X dr + sum_k A_k X dW^k. The correction field is sum_k A_k^2 x.
/// The closed-form solution is attached only when B and all A_k commute.
inline CoefficientSystem linear_system(const Mat& B, const std::vector<Mat>& A) {
  const int d = static_cast<int>(B.rows());
  const int dw = static_cast<int>(A.size());
  check_dimension(d, "linear dimension");
  check_dimension(dw, "linear Brownian dimension");
  if (B.cols() != d) throw std::invalid_argument("linear: B must be square");
  Mat correction = Mat::Zero(d, d);
  for (const Mat& a : A) {
    if (a.rows() != d || a.cols() != d) throw std::invalid_argument("linear: A_k must be d x d");
    correction += a * a;
  }
  CoefficientSystem sys;
  sys.name = "linear";
  sys.d = d;
  sys.dw = dw;
  sys.b = [B](double, const Vec& x) -> Vec { return B * x; };
  sys.sigma = [A, d, dw](double, const Vec& x) -> Mat {
    Mat s(d, dw);
    for (int k = 0; k < dw; ++k) s.col(k) = A[k] * x;
    return s;
  };
  sys.sigma_hat = [correction](double, const Vec& x) -> Vec { return correction * x; };
  sys.grad_b = [B](double, const Vec&) -> Mat { return B; };
  for (int k = 0; k < dw; ++k) {
    sys.grad_sigma.push_back([a = A[k]](double, const Vec&) -> Mat { return a; });
  }
  sys.grad_sigma_hat = [correction](double, const Vec&) -> Mat { return correction; };
  double noise = 0.0;
  for (const Mat& a : A) noise += a.squaredNorm();
  sys.K = TimeFunction::constant(std::max({B.norm(), noise, correction.norm()}));
  detail::attach_derived_bounds(sys);
  bool commuting = true;
  auto commutes = [](const Mat& x, const Mat& y) {
    return (x * y - y * x).cwiseAbs().maxCoeff() <= 1e-14 * (1.0 + x.norm() * y.norm());
  };
  for (int k = 0; k < dw; ++k) {
    commuting = commuting && commutes(B, A[k]);
    for (int l = k + 1; l < dw; ++l) commuting = commuting && commutes(A[k], A[l]);
  }
  if (commuting) {
    sys.exact = ExactSolution::linear;
    sys.exact_params.B = B;
    sys.exact_params.A = A;
  }
  return sys;
}

/// Bounded smooth system in d = d' in {1, 2}:
///   b_i = kappa cos(x_{(i+1) mod d}),  sigma = diag(kappa sin(x_i)).
/// The drift couples the coordinates when d = 2 so the Jacobian is not diagonal.
inline CoefficientSystem bounded_trig_system(double kappa, int d = 1) {
  check_dimension(d, "bounded_trig dimension");
  CoefficientSystem sys;
  sys.name = "bounded_trig";
  sys.d = d;
  sys.dw = d;
  sys.b = [kappa, d](double, const Vec& x) -> Vec {
    Vec out(d);
    for (int i = 0; i < d; ++i) out(i) = kappa * std::cos(x((i + 1) % d));
    return out;
  };
  sys.sigma = [kappa, d](double, const Vec& x) -> Mat {
    Mat s = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) s(i, i) = kappa * std::sin(x(i));
    return s;
  };
  sys.sigma_hat = [kappa, d](double, const Vec& x) -> Vec {
    Vec out(d);
    for (int i = 0; i < d; ++i) out(i) = kappa * kappa * std::sin(x(i)) * std::cos(x(i));
    return out;
  };
  sys.grad_b = [kappa, d](double, const Vec& x) -> Mat {
    Mat g = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) {
      const int j = (i + 1) % d;
      g(i, j) += -kappa * std::sin(x(j));
    }
    return g;
  };
  for (int k = 0; k < d; ++k) {
    sys.grad_sigma.push_back([kappa, d, k](double, const Vec& x) -> Mat {
      Mat g = Mat::Zero(d, d);
      g(k, k) = kappa * std::cos(x(k));
      return g;
    });
  }
  sys.grad_sigma_hat = [kappa, d](double, const Vec& x) -> Mat {
    Mat g = Mat::Zero(d, d);
    for (int i = 0; i < d; ++i) g(i, i) = kappa * kappa * std::cos(2.0 * x(i));
    return g;
  };
  sys.K = TimeFunction::constant(std::max(kappa * std::sqrt(d), d * kappa * kappa));
  detail::attach_derived_bounds(sys);
  sys.params = {{"kappa", kappa}, {"d", d}};
  return sys;
}

/// Brownian motion with variance sigma0^2 per unit time: b = 0, sigma = sigma0 I.
inline CoefficientSystem heat_system(double sigma0, int d = 1) {
  check_dimension(d, "heat dimension");
  CoefficientSystem sys;
  sys.name = "heat";
  sys.d = d;
  sys.dw = d;
  sys.b = [d](double, const Vec&) -> Vec { return Vec::Zero(d); };
  sys.sigma = [sigma0, d](double, const Vec&) -> Mat { return sigma0 * identity(d); };
  sys.sigma_hat = [d](double, const Vec&) -> Vec { return Vec::Zero(d); };
  sys.grad_b = [d](double, const Vec&) -> Mat { return Mat::Zero(d, d); };
  for (int k = 0; k < d; ++k) {
    sys.grad_sigma.push_back([d](double, const Vec&) -> Mat { return Mat::Zero(d, d); });
  }
  sys.grad_sigma_hat = [d](double, const Vec&) -> Mat { return Mat::Zero(d, d); };
  sys.K = TimeFunction::constant(d * sigma0 * sigma0);
  detail::attach_derived_bounds(sys);
  sys.params = {{"sigma0", sigma0}, {"d", d}};
  return sys;
}

/// Catalog lookup by tag with named parameters:
///   gbm(alpha, beta)                 -- "counterexample" = 1 rejects alpha = 0
///   ou(lambda [, d])
///   linear(d, dw, B<i><j>, A<k>_<i><j>)   -- matrix entries default to 0
///   bounded_trig(kappa [, d])
///   heat(sigma0 [, d])
inline CoefficientSystem builtin_system(const std::string& tag,
                                        const std::map<std::string, double>& params) {
  CoefficientSystem sys;
  if (tag == "gbm") {
    const double alpha = detail::require_param(params, "alpha", tag);
    const double beta = detail::require_param(params, "beta", tag);
    if (alpha == 0.0 && detail::optional_param(params, "counterexample", 0.0, tag) != 0.0) {
      throw std::invalid_argument("catalog 'gbm': counterexample mode requires alpha != 0");
    }
    sys = gbm_system(alpha, beta);
  } else if (tag == "ou") {
    sys = ou_system(detail::require_param(params, "lambda", tag),
                    detail::dimension_param(params, "d", 1, tag));
  } else if (tag == "linear") {
    const int d = detail::dimension_param(params, "d", -1, tag);
    const int dw = detail::dimension_param(params, "dw", -1, tag);
    Mat B = Mat::Zero(d, d);
    std::vector<Mat> A(dw, Mat::Zero(d, d));
    for (const auto& [key, value] : params) {
      if (!std::isfinite(value)) {
        throw std::invalid_argument("catalog 'linear': parameter '" + key + "' is not finite");
      }
    }
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        const std::string ij = std::to_string(i + 1) + std::to_string(j + 1);
        B(i, j) = detail::optional_param(params, "B" + ij, 0.0, tag);
        for (int k = 0; k < dw; ++k) {
          A[k](i, j) = detail::optional_param(params, "A" + std::to_string(k + 1) + "_" + ij,
                                              0.0, tag);
        }
      }
    }
    sys = linear_system(B, A);
    sys.params = params;
  } else if (tag == "bounded_trig") {
    sys = bounded_trig_system(detail::require_param(params, "kappa", tag),
                              detail::dimension_param(params, "d", 1, tag));
  } else if (tag == "heat") {
    sys = heat_system(detail::require_param(params, "sigma0", tag),
                      detail::dimension_param(params, "d", 1, tag));
  } else {
    throw std::invalid_argument("unknown catalog tag '" + tag + "'");
  }
  if (sys.exact != ExactSolution::none) {
    const Vec probe = Vec::Constant(sys.d, 0.75);
    if (exact_solution_residual(sys, probe) > 1.0) {
      throw std::logic_error("catalog '" + tag + "': closed-form solution inconsistent");
    }
  }
  return sys;
}

/// The zero system in dimension d: b = 0, sigma = 0.
inline CoefficientSystem zero_system(int d = 1, int dw = 1) {
  auto sys = linear_system(Mat::Zero(d, d), std::vector<Mat>(dw, Mat::Zero(d, d)));
  sys.name = "zero";
  return sys;
}

}  // namespace sflow
