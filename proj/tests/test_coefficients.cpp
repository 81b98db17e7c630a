#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "stochflow/assumptions.hpp"
#include "stochflow/catalog.hpp"
#include "stochflow/truncation.hpp"
#include "stochflow/weight.hpp"

using namespace sflow;

namespace {

Vec v1(double x) { return scalar_vec(x); }

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

}  // namespace

TEST(Catalog, GbmQueries) {
  const auto sys = builtin_system("gbm", {{"alpha", 1.0}, {"beta", 0.0}});
  EXPECT_EQ(eval_drift(sys, 0.3, v1(2.0))(0), 0.0);
  EXPECT_EQ(eval_diffusion(sys, 0.3, v1(2.0))(0, 0), 2.0);
  EXPECT_EQ(sys.exact, ExactSolution::gbm);
}

TEST(Catalog, OuQueries) {
  const auto sys = builtin_system("ou", {{"lambda", 1.0}});
  EXPECT_EQ(eval_drift(sys, 0.0, v1(3.0))(0), -3.0);
  EXPECT_EQ(eval_diffusion(sys, 0.0, v1(3.0))(0, 0), 1.0);
  EXPECT_EQ(sigma_hat(sys, 0.0, v1(3.0))(0), 0.0);
}

TEST(Catalog, LinearZeroIsZero) {
  const auto sys = builtin_system("linear", {{"d", 2}, {"dw", 1}});
  const Vec x = v2(1.5, -0.2);
  EXPECT_EQ(eval_drift(sys, 0.1, x).norm(), 0.0);
  EXPECT_EQ(eval_diffusion(sys, 0.1, x).norm(), 0.0);
  EXPECT_EQ(sys.exact, ExactSolution::linear);
}

TEST(Catalog, Errors) {
  EXPECT_THROW(builtin_system("nope", {}), std::invalid_argument);
  EXPECT_THROW(builtin_system("gbm", {{"alpha", 1.0}}), std::invalid_argument);
  EXPECT_THROW(builtin_system("ou", {{"lambda", std::nan("")}}), std::invalid_argument);
  EXPECT_THROW(builtin_system("gbm", {{"alpha", 0.0}, {"beta", 0.1}, {"counterexample", 1}}),
               std::invalid_argument);
  EXPECT_NO_THROW(builtin_system("gbm", {{"alpha", 0.0}, {"beta", 0.1}}));
}

TEST(Catalog, ExactSolutionsConsistent) {
  EXPECT_LE(exact_solution_residual(gbm_system(0.5, 0.1), v1(1.3)), 1.0);
  EXPECT_LE(exact_solution_residual(ou_system(2.0, 2), v2(0.4, -1.0)), 1.0);
  Mat B(2, 2);
  B << -1.0, 0.5, 0.5, -1.0;
  Mat A = 0.3 * identity(2);
  EXPECT_LE(exact_solution_residual(linear_system(B, {A}), v2(0.4, -1.0)), 1.0);
}

TEST(SigmaHat, AnalyticMatchesFiniteDifference) {
  const auto gbm = gbm_system(0.7, 0.2);
  auto stripped = gbm;
  stripped.sigma_hat = nullptr;
  EXPECT_NEAR(sigma_hat(stripped, 0.0, v1(1.7))(0), 0.49 * 1.7, 1e-8);

  const auto trig = bounded_trig_system(1.3, 1);
  auto fd = trig;
  fd.sigma_hat = nullptr;
  for (double x : {-2.0, 0.3, 1.1, 4.0}) {
    EXPECT_NEAR(sigma_hat(fd, 0.0, v1(x))(0), 1.69 * std::sin(x) * std::cos(x), 1e-7);
  }
}

TEST(SigmaHat, FiniteDifferenceConvergesQuadratically) {
  auto sys = bounded_trig_system(1.0, 2);
  const Vec x = v2(0.8, -0.4);
  const Vec exact = sigma_hat(sys, 0.0, x);
  sys.sigma_hat = nullptr;
  std::vector<double> lh, le;
  for (double h : {0.08, 0.04, 0.02, 0.01}) {
    lh.push_back(std::log(h));
    le.push_back(std::log((sigma_hat(sys, 0.0, x, h) - exact).norm()));
  }
  const double slope = (le.back() - le.front()) / (lh.back() - lh.front());
  EXPECT_GE(slope, 1.7);
  EXPECT_LE(slope, 2.3);
}

TEST(SigmaHat, RejectsBadStepWithoutAnalyticField) {
  auto sys = gbm_system(1.0, 0.0);
  sys.sigma_hat = nullptr;
  EXPECT_THROW(sigma_hat(sys, 0.0, v1(1.0), 0.0), std::invalid_argument);
}

TEST(Constants, Table) {
  auto k = norm_equiv_constants(0.0);
  EXPECT_EQ(k.c, 1.0);
  EXPECT_EQ(k.C, 1.0);
  k = norm_equiv_constants(0.1);
  EXPECT_NEAR(k.c, 0.60653065971263342, 1e-15);
  EXPECT_NEAR(k.C, 1.6487212707001282, 1e-15);
  k = norm_equiv_constants(std::log(2.0) / 5.0);
  EXPECT_NEAR(k.c, 0.5, 1e-15);
  EXPECT_NEAR(k.C, 2.0, 1e-15);
  EXPECT_THROW(norm_equiv_constants(-1e-3), std::invalid_argument);
  EXPECT_THROW(norm_equiv_constants(std::numeric_limits<double>::infinity()), std::invalid_argument);
  double prev_c = 2.0;
  for (double a = 0.0; a < 3.0; a += 0.25) {
    const auto kk = norm_equiv_constants(a);
    EXPECT_NEAR(kk.c * kk.C, 1.0, 1e-15);
    EXPECT_LT(kk.c, prev_c);
    prev_c = kk.c;
  }
}

TEST(Weight, PolynomialExact) {
  const auto w = polynomial_weight(1.5, 2, TimeFunction::constant(1.0));
  const Vec x = v2(0.3, -2.0);
  EXPECT_NEAR(w.rho(x), std::pow(1.0 + x.squaredNorm(), 1.5), 1e-12);
  // Gradient and Hessian against central differences.
  const double h = 1e-5;
  for (int i = 0; i < 2; ++i) {
    Vec e = Vec::Zero(2);
    e(i) = h;
    EXPECT_NEAR(w.grad_rho(x)(i), (w.rho(x + e) - w.rho(x - e)) / (2 * h), 1e-6);
    const Vec col = (w.grad_rho(x + e) - w.grad_rho(x - e)) / (2 * h);
    EXPECT_NEAR((w.hess_rho(x).col(i) - col).norm(), 0.0, 1e-5);
  }
  const double g = 1.5 * 1.5 + 3.0;
  EXPECT_NEAR(w.K_tilde_weight(0.0), 16 * g + 4 * std::sqrt(2.0) * std::sqrt(g), 1e-12);
}

TEST(Weight, ExponentialDerivatives) {
  for (auto profile : {ExpProfile::abs, ExpProfile::smooth_abs, ExpProfile::linear}) {
    const auto w = exponential_weight(profile, -0.8, 2, TimeFunction::constant(1.0));
    const Vec x = v2(0.7, 1.1);
    const double h = 1e-5;
    for (int i = 0; i < 2; ++i) {
      Vec e = Vec::Zero(2);
      e(i) = h;
      EXPECT_NEAR(w.grad_rho(x)(i), (w.rho(x + e) - w.rho(x - e)) / (2 * h), 1e-6);
      const Vec col = (w.grad_rho(x + e) - w.grad_rho(x - e)) / (2 * h);
      EXPECT_NEAR((w.hess_rho(x).col(i) - col).norm(), 0.0, 1e-5);
    }
  }
}

TEST(Truncation, IdentityInsideZeroOutside) {
  const auto sys = gbm_system(1.0, 1.0);
  const auto tr = truncate_system(sys, 4);
  for (double x : {-4.0, -1.0, 0.0, 2.5, 4.0}) {
    EXPECT_EQ(tr.b(0.0, v1(x))(0), sys.b(0.0, v1(x))(0));
    EXPECT_EQ(tr.sigma(0.0, v1(x))(0, 0), sys.sigma(0.0, v1(x))(0, 0));
    EXPECT_EQ(tr.sigma_hat(0.0, v1(x))(0), sys.sigma_hat(0.0, v1(x))(0));
  }
  for (double x : {-8.0, 8.0, 12.0, -100.0}) {
    EXPECT_EQ(tr.b(0.0, v1(x))(0), 0.0);
    EXPECT_EQ(tr.sigma(0.0, v1(x))(0, 0), 0.0);
    EXPECT_EQ(tr.sigma_hat(0.0, v1(x))(0), 0.0);
  }
  // Transition zone: sigma^n(6) = 6 chi(6/4) with chi(1.5) = 1/2 for the quintic step.
  EXPECT_NEAR(tr.sigma(0.0, v1(6.0))(0, 0), 6.0 * QuinticCutoff::profile(1.5), 1e-15);
  EXPECT_NEAR(QuinticCutoff::profile(1.5), 0.5, 1e-15);
}

TEST(Truncation, SigmaHatMatchesDefinitionInTransitionZone) {
  const auto sys = bounded_trig_system(0.9, 2);
  const auto tr = truncate_system(sys, 1);
  auto fd = tr;
  fd.sigma_hat = nullptr;
  const Vec x = v2(1.1, 0.6);  // |x| ~ 1.25: inside the cutoff ramp
  EXPECT_NEAR((tr.sigma_hat(0.0, x) - sigma_hat(fd, 0.0, x)).norm(), 0.0, 1e-6);
  // Analytic gradients of the truncated fields against central differences.
  auto nograd = tr;
  nograd.grad_b = nullptr;
  nograd.grad_sigma.clear();
  EXPECT_NEAR((grad_drift(tr, 0.0, x) - grad_drift(nograd, 0.0, x)).norm(), 0.0, 1e-6);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR((grad_diffusion_column(tr, k, 0.0, x) - grad_diffusion_column(nograd, k, 0.0, x)).norm(),
                0.0, 1e-6);
  }
}

TEST(Truncation, Errors) {
  auto sys = gbm_system(1.0, 0.0);
  EXPECT_THROW(truncate_system(sys, 0), std::invalid_argument);
  sys.sigma_hat = nullptr;
  EXPECT_THROW(truncate_system(sys, 2, false), std::invalid_argument);
  EXPECT_NO_THROW(truncate_system(sys, 2, true));
}

TEST(Truncation, CutoffIsC2) {
  EXPECT_EQ(QuinticCutoff::profile_d1(1.0), 0.0);
  EXPECT_EQ(QuinticCutoff::profile_d1(2.0), 0.0);
  EXPECT_EQ(QuinticCutoff::profile_d2(1.0), 0.0);
  EXPECT_EQ(QuinticCutoff::profile_d2(2.0), 0.0);
  EXPECT_GT(QuinticCutoff::gamma(1), 0.0);
}

TEST(Assumptions, OuWithPolynomialWeightPasses) {
  const auto sys = ou_system(1.0);
  const auto w = polynomial_weight(1.0, 1, sys.K);
  const auto rep = check_assumptions(sys, w);
  EXPECT_TRUE(rep.pass);
  for (const auto& [key, ratio] : rep.ratios) EXPECT_LE(ratio, 1.0) << key;
}

TEST(Assumptions, ZeroSystemRatiosVanish) {
  const auto sys = zero_system(1, 1);
  const auto rep = check_assumptions(sys, polynomial_weight(-2.0, 1, sys.K));
  EXPECT_TRUE(rep.pass);
  for (const auto& [key, ratio] : rep.ratios) EXPECT_EQ(ratio, 0.0) << key;
}

TEST(Assumptions, GbmWithExponentialWeightFlagsBoundedness) {
  const auto sys = gbm_system(1.0, 1.0);
  const auto rep = check_assumptions(sys, exponential_weight(ExpProfile::abs, 1.0, 1, sys.K));
  EXPECT_FALSE(rep.pass);
  EXPECT_TRUE(rep.violated.at("bounded_b"));
  EXPECT_TRUE(rep.violated.at("bounded_sigma"));
}

TEST(Assumptions, CatalogPairsPass) {
  const auto gbm = gbm_system(1.0, 0.0);
  EXPECT_TRUE(check_assumptions(gbm, polynomial_weight(-2.0, 1, gbm.K)).pass);
  const auto trig = bounded_trig_system(1.0, 2);
  AssumptionGrid grid;
  grid.n_x = 21;
  EXPECT_TRUE(check_assumptions(trig, exponential_weight(ExpProfile::smooth_abs, 1.0, 2, trig.K), grid).pass);
  const auto heat = heat_system(1.0);
  EXPECT_TRUE(check_assumptions(heat, polynomial_weight(-2.0, 1, heat.K)).pass);
}
