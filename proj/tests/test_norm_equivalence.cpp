#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "stochflow/counterexamples.hpp"
#include "stochflow/norm_equivalence.hpp"

using namespace sflow;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

}  // namespace

TEST(WeightedIntegral, Basics) {
  const auto K = TimeFunction::constant(1.0);
  QuadratureSpec unit{0.0, 1.0, 8, {}};
  TestFunction one{"one", [](const Vec&) { return 1.0; }, {}};
  EXPECT_NEAR(weighted_integral(one, polynomial_weight(0.0, 1, K), unit).value, 1.0, 1e-15);

  TestFunction ex{"exp", [](const Vec& x) { return std::exp(x(0)); }, {0.0}};
  QuadratureSpec wide{-40.0, 40.0, 64, {-10.0, -2.0, 2.0, 10.0}};
  EXPECT_NEAR(weighted_integral(ex, exponential_weight(ExpProfile::abs, -2.0, 1, K), wide).value,
              4.0 / 3.0, 1e-10);

  QuadratureSpec q{-20.0, 20.0, 64, {-6.0, -2.0, 2.0, 6.0}};
  const auto bump = gaussian_bump();
  const auto w = polynomial_weight(-2.0, 1, K);
  const double a = weighted_integral(bump, w, q).value;
  q.nodes = 128;
  EXPECT_NEAR(weighted_integral(bump, w, q).value, a, 1e-9);
  EXPECT_NEAR(a, 1.2533141373155, 1e-9);
}

TEST(ExpectedWeighted, DegenerateTimeAndZeroSystem) {
  const auto ou = ou_system(1.0);
  const auto w = polynomial_weight(1.0, 1, ou.K);
  QuadratureSpec q{-8.0, 8.0, 32, {}};
  McSpec mc;
  mc.n_paths = 50;
  const auto phi = indicator_function();
  const double lhs = weighted_integral(phi, w, q).value;
  EXPECT_EQ(expected_weighted_integral(ou, phi, w, 0.3, 0.3, mc, q).value, lhs);
  const auto zero = zero_system(1, 1);
  EXPECT_NEAR(expected_weighted_integral(zero, phi, w, 0.0, 1.0, mc, q).value, lhs, 1e-12 * lhs);
}

TEST(ExpectedWeighted, OuMatchesGaussianOracle) {
  // int_{-8}^{8} P(|X_1^x| <= 1) dx with X_1^x ~ N(m x, v).
  const double lambda = 1.0;
  const double m = std::exp(-lambda);
  const double sd = std::sqrt((1.0 - m * m) / (2.0 * lambda));
  const auto sys = ou_system(lambda);
  const auto w = polynomial_weight(0.0, 1, sys.K);
  QuadratureSpec q{-8.0, 8.0, 64, {}};
  double oracle = 0.0;
  const auto rule = composite_rule(-8.0, 8.0, 200);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    oracle += rule.weights[i] * (normal_cdf((1.0 - m * x) / sd) - normal_cdf((-1.0 - m * x) / sd));
  }
  McSpec mc;
  mc.n_paths = 2000;
  mc.steps = 256;
  // The Euler chain is itself Gaussian: X_n = m_e x + N(0, v_e).
  const double dt = 1.0 / mc.steps;
  const double m_e = std::pow(1.0 - lambda * dt, mc.steps);
  const double sd_e = std::sqrt(dt * (1.0 - m_e * m_e) / (1.0 - (1.0 - lambda * dt) * (1.0 - lambda * dt)));
  double euler_oracle = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double x = rule.nodes[i];
    euler_oracle += rule.weights[i] * (normal_cdf((1.0 - m_e * x) / sd_e) - normal_cdf((-1.0 - m_e * x) / sd_e));
  }
  const auto est = expected_weighted_integral(sys, indicator_function(), w, 0.0, 1.0, mc, q);
  EXPECT_LT(std::abs(est.value - euler_oracle), 3.0 * est.stderr_value);
  EXPECT_LT(std::abs(est.value - oracle), 3.0 * est.stderr_value + std::abs(euler_oracle - oracle));
  EXPECT_GT(est.stderr_value, 0.0);
}

TEST(ExpectedWeighted, ScaleEquivariance) {
  const auto sys = ou_system(1.0);
  const auto w = polynomial_weight(-2.0, 1, sys.K);
  QuadratureSpec q{-8.0, 8.0, 16, {}};
  McSpec mc;
  mc.n_paths = 100;
  mc.steps = 16;
  const auto bump = gaussian_bump();
  TestFunction scaled{"scaled", [bump](const Vec& x) { return 4.0 * bump.f(x); }, {}};
  const auto a = expected_weighted_integral(sys, bump, w, 0.0, 0.5, mc, q);
  const auto b = expected_weighted_integral(sys, scaled, w, 0.0, 0.5, mc, q);
  EXPECT_DOUBLE_EQ(b.value, 4.0 * a.value);
}

TEST(SpaceTime, ZeroSystemAndZeroIntegrand) {
  const auto zero = zero_system(1, 1);
  const auto w = polynomial_weight(-2.0, 1, zero.K);
  QuadratureSpec q{-8.0, 8.0, 32, {}};
  McSpec mc;
  mc.n_paths = 10;
  mc.steps = 8;
  const auto bump = gaussian_bump();
  const auto st = spacetime_expected_weighted_integral(
      zero, [&](double, const Vec& x) { return bump.f(x); }, {}, w, 0.0, 2.0, mc, q, 4);
  EXPECT_NEAR(st.value, 2.0 * weighted_integral(bump, w, q).value, 1e-12);
  const auto z = spacetime_expected_weighted_integral(
      ou_system(1.0), [](double, const Vec&) { return 0.0; }, {}, w, 0.0, 1.0, mc, q, 4);
  EXPECT_EQ(z.value, 0.0);
  EXPECT_THROW(spacetime_expected_weighted_integral(zero, [](double, const Vec&) { return 1.0; }, {}, w,
                                                    0.0, 1.0, mc, q, 3),
               std::invalid_argument);
}

TEST(CheckEquivalence, ZeroSystemAndOu) {
  NormEquivConfig cfg;
  cfg.quad = QuadratureSpec{-8.0, 8.0, 32, {}};
  cfg.mc.n_paths = 500;
  cfg.mc.steps = 32;
  const auto zero = zero_system(1, 1);
  const auto rz = check_equivalence(zero, gaussian_bump(), polynomial_weight(1.0, 1, zero.K), 0.0, 1.0, cfg);
  EXPECT_TRUE(rz.lower_pass && rz.upper_pass);
  EXPECT_NEAR(rz.ratio, 1.0, 1e-12);

  const auto ou = ou_system(1.0);
  cfg.quad = QuadratureSpec{-20.0, 20.0, 64, {}};
  const auto r = check_equivalence(ou, gaussian_bump(), polynomial_weight(1.0, 1, ou.K), 0.0, 0.5, cfg);
  EXPECT_TRUE(r.lower_pass);
  EXPECT_TRUE(r.upper_pass);
  EXPECT_LE(r.constants.c, 1.0);
  EXPECT_GE(r.constants.C, 1.0);

  auto bare = ou;
  bare.K_tilde.reset();
  EXPECT_THROW(check_equivalence(bare, gaussian_bump(), polynomial_weight(1.0, 1, ou.K), 0.0, 0.5, cfg),
               std::invalid_argument);
}

TEST(ChangeOfVariables, ZeroSystemExactAndOu) {
  NormEquivConfig cfg;
  cfg.quad = QuadratureSpec{-10.0, 10.0, 32, {}};
  cfg.mc.n_paths = 400;
  cfg.mc.steps = 100;
  const auto zero = zero_system(1, 1);
  const auto rz = change_of_variables_check(zero, gaussian_bump(), polynomial_weight(0.0, 1, zero.K), 0.0, 0.5, cfg);
  EXPECT_TRUE(rz.pass);
  EXPECT_NEAR(rz.residual, 0.0, 1e-12);
  const auto ou = ou_system(1.0);
  const auto r = change_of_variables_check(ou, gaussian_bump(), polynomial_weight(1.0, 1, ou.K), 0.0, 0.5, cfg);
  EXPECT_TRUE(r.pass) << r.forward.value << " " << r.inverse.value << " " << r.combined_stderr;
  const auto gbm = gbm_system(0.5, 0.0);
  const auto g = change_of_variables_check(gbm, gaussian_bump(), polynomial_weight(0.0, 1, gbm.K), 0.0, 0.5, cfg);
  EXPECT_TRUE(g.pass) << g.forward.value << " " << g.inverse.value << " " << g.combined_stderr;
}

TEST(ChangeOfVariables, OuFlatWeightIsBiasDominated) {
  // Flat weight, additive noise: each path integrates phi(m x + I) over x, which is
  // sqrt(2 pi) / m whatever I is. Both sides are deterministic, the residual is the
  // Euler bias in m = (1 - dt)^n, and the stderr test cannot hold.
  NormEquivConfig cfg;
  cfg.quad = QuadratureSpec{-10.0, 10.0, 32, {}};
  cfg.mc.n_paths = 200;
  cfg.mc.steps = 100;
  const auto ou = ou_system(1.0);
  const auto r = change_of_variables_check(ou, gaussian_bump(), polynomial_weight(0.0, 1, ou.K), 0.0, 0.5, cfg);
  const double root2pi = std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(r.forward.value, root2pi * std::pow(1.0 - 0.005, -100), 1e-6);
  EXPECT_NEAR(r.inverse.value, root2pi * std::exp(0.5), 1e-6);
  EXPECT_LT(r.relative_residual, 0.05);
  EXPECT_LT(r.combined_stderr, 1e-5);
  EXPECT_FALSE(r.pass);
}

TEST(Counterexamples, Gbm) {
  GbmCounterexampleConfig cfg;
  cfg.n_paths = 20000;
  const auto rep = counterexample_gbm(cfg);
  EXPECT_NEAR(rep.weighted_integral_exact, 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(rep.weighted_integral_quadrature, 4.0 / 3.0, 1e-9);
  EXPECT_TRUE(rep.strictly_increasing);
  EXPECT_GT(rep.last_to_first, 10.0);
  EXPECT_EQ(rep.verdict, "divergent");
  // Monte Carlo agrees with the quadrature at the smallest cap.
  EXPECT_NEAR(rep.truncated_mc[0].value, rep.truncated[0], 4.0 * rep.truncated_mc[0].stderr_value);

  cfg.x = -1.0;
  const auto neg = counterexample_gbm(cfg);
  EXPECT_EQ(neg.verdict, "finite");
  EXPECT_NEAR(neg.last_to_first, 1.0, 1e-12);

  cfg.alpha = 0.0;
  EXPECT_THROW(counterexample_gbm(cfg), std::invalid_argument);
  cfg.alpha = 1.0;
  cfg.caps = {10.0};
  EXPECT_THROW(counterexample_gbm(cfg), std::invalid_argument);
}

TEST(Counterexamples, Ou) {
  OuCounterexampleConfig cfg;
  const auto fails = counterexample_ou(cfg);
  EXPECT_GT(fails.ratio, 1e6);
  EXPECT_NEAR(fails.log_ratio, std::expm1(1.0) * 40.0, 1e-9);
  EXPECT_LT(fails.validation_error, 1e-8);
  EXPECT_EQ(fails.verdict, "fails");
  cfg.a = 0.0;
  const auto holds = counterexample_ou(cfg);
  EXPECT_NEAR(holds.ratio, 1.0, 1e-12);
  EXPECT_EQ(holds.verdict, "holds");
  for (double lr : holds.log_r) EXPECT_NEAR(lr, 1.0, 1e-15);  // r = e^{lambda s}
  // s -> 0: r -> 1.
  cfg.a = 1.0;
  cfg.s = 1e-8;
  EXPECT_NEAR(std::exp(ou_log_ratio_closed_form(1.0, 1.0, 1e-8, 3.0)), 1.0, 1e-6);
  // Ratio grows with |a| and with the range.
  cfg.s = 1.0;
  double prev = 0.0;
  for (double a : {0.25, 0.5, 1.0, 2.0}) {
    cfg.a = a;
    const double lr = counterexample_ou(cfg).log_ratio;
    EXPECT_GT(lr, prev);
    prev = lr;
  }
}
