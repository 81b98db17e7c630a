#include <gtest/gtest.h>

#include <cmath>

#include "stochflow/feynman_kac.hpp"

using namespace sflow;

namespace {

PdeProblem heat_problem(double sigma0 = 1.0) {
  PdeProblem pb;
  pb.system = heat_system(sigma0);
  pb.h = [](const Vec& x) { return std::exp(-0.5 * x.squaredNorm()); };
  pb.f = [](double, const Vec&) { return 0.0; };
  pb.T = 1.0;
  pb.weight = polynomial_weight(-2.0, 1, pb.system.K);
  pb.p = 2.0;
  return pb;
}

}  // namespace

TEST(FeynmanKac, TrivialData) {
  auto pb = heat_problem();
  McSpec mc;
  mc.n_paths = 50;
  mc.steps = 16;
  pb.h = [](const Vec&) { return 1.0; };
  for (const auto& e : fk_solve(pb, 0.0, {scalar_vec(0.0), scalar_vec(2.0)}, mc)) EXPECT_DOUBLE_EQ(e.value, 1.0);
  pb.h = [](const Vec&) { return 0.0; };
  pb.f = [](double, const Vec&) { return 1.0; };
  for (const auto& e : fk_solve(pb, 0.25, {scalar_vec(0.5)}, mc)) EXPECT_NEAR(e.value, 0.75, 1e-14);
  pb.linear = false;
  EXPECT_THROW(fk_solve(pb, 0.0, {scalar_vec(0.0)}, mc), std::invalid_argument);
}

TEST(FeynmanKac, HeatMatchesGaussianConvolution) {
  const auto pb = heat_problem();
  McSpec mc;
  mc.n_paths = 4000;
  mc.steps = 8;
  for (double x : {-1.5, 0.0, 0.7}) {
    const auto e = fk_solve(pb, 0.0, {scalar_vec(x)}, mc)[0];
    EXPECT_LT(std::abs(e.value - heat_gaussian_solution(1.0, 1.0, scalar_vec(x))), 3.0 * e.stderr_value);
  }
}

TEST(FeynmanKac, InequalityChecks) {
  auto pb = heat_problem();
  FkConfig cfg;
  cfg.mc.n_paths = 500;
  cfg.mc.steps = 16;
  cfg.quad = QuadratureSpec{-10.0, 10.0, 32, {}};
  const auto lp = weighted_lp_check(pb, 0.0, cfg);
  EXPECT_TRUE(lp.pass);
  EXPECT_EQ(lp.z_component, "skipped");
  const auto lb = lower_bound_check(pb, 0.0, cfg);
  EXPECT_TRUE(lb.pass);
  EXPECT_TRUE(lb.nonnegative);

  pb.h = [](const Vec&) { return 0.0; };
  const auto zero = weighted_lp_check(pb, 0.0, cfg);
  EXPECT_EQ(zero.lhs.value, 0.0);
  EXPECT_TRUE(zero.pass);
  EXPECT_TRUE(lower_bound_check(pb, 0.0, cfg).pass);

  pb.h = [](const Vec& x) { return x(0); };
  EXPECT_THROW(lower_bound_check(pb, 0.0, cfg), std::invalid_argument);
}

TEST(FeynmanKac, OuConstantSource) {
  PdeProblem pb;
  pb.system = ou_system(1.0);
  pb.h = [](const Vec&) { return 0.0; };
  pb.f = [](double, const Vec&) { return 1.0; };
  pb.T = 1.0;
  pb.weight = polynomial_weight(-2.0, 1, pb.system.K);
  FkConfig cfg;
  cfg.mc.n_paths = 20;
  cfg.mc.steps = 16;
  cfg.quad = QuadratureSpec{-50.0, 50.0, 64, {-10.0, -2.0, 2.0, 10.0}};
  const auto rep = lower_bound_check(pb, 0.0, cfg);
  EXPECT_TRUE(rep.pass);
  // int_{-50}^{50} (1+x^2)^{-2} dx = [x / (1+x^2) + atan x] at 50.
  EXPECT_NEAR(rep.lhs.value, 50.0 / 2501.0 + std::atan(50.0), 1e-8);
  EXPECT_GT(rep.log_margin, 0.0);
}
