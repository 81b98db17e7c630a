#include <gtest/gtest.h>

#include <cmath>

#include "stochflow/jacobian.hpp"

using namespace sflow;

TEST(Jacobian, ZeroSystem) {
  const auto sys = zero_system(2, 1);
  Vec x(2);
  x << 0.5, 1.0;
  const auto p = sample_brownian(TimeGrid::uniform(0.0, 1.0, 16), 1, 3, 0);
  const auto flow = euler_forward(sys, 0.0, x, p);
  for (const Mat& J : variational_jacobian(sys, flow, p).matrices) EXPECT_EQ(J, identity(2));
  for (double l : liouville_determinant(sys, flow, p).log_det) EXPECT_EQ(l, 0.0);
  EXPECT_LT((fd_jacobian(sys, 0.0, x, p) - identity(2)).norm(), 1e-10);
}

TEST(Jacobian, OuIsDeterministicProduct) {
  const auto sys = ou_system(1.0);
  const auto grid = TimeGrid::uniform(0.0, 1.0, 1000);
  const auto p = sample_brownian(grid, 1, 3, 0);
  const auto flow = euler_forward(sys, 0.0, scalar_vec(0.2), p);
  const auto J = variational_jacobian(sys, flow, p);
  EXPECT_NEAR(J.matrices.back()(0, 0), std::pow(1.0 - 1e-3, 1000), 1e-12);
  EXPECT_NEAR(J.matrices.back()(0, 0), std::exp(-1.0), 1e-3);
  EXPECT_NEAR(fd_jacobian(sys, 0.0, scalar_vec(0.2), p)(0, 0), J.matrices.back()(0, 0), 1e-9);
  // Constant sigma, b = Bx: log det = tr(B)(s - t) at any grid.
  EXPECT_NEAR(liouville_determinant(sys, flow, p).log_det.back(), -1.0, 1e-12);
}

TEST(Jacobian, GbmLiouvilleMatchesExactSolution) {
  const auto sys = gbm_system(0.5, 0.1);
  const auto grid = TimeGrid::uniform(0.0, 1.0, 1024);
  const auto p = sample_brownian(grid, 1, 8, 4);
  const auto flow = euler_forward(sys, 0.0, scalar_vec(1.5), p);
  const double log_det = liouville_determinant(sys, flow, p).log_det.back();
  const double exact = std::log(exact_forward(sys, 0.0, scalar_vec(1.5), p).terminal()(0) / 1.5);
  EXPECT_NEAR(log_det, exact, 1e-2);
  const double var = variational_jacobian(sys, flow, p).matrices.back()(0, 0);
  EXPECT_NEAR(var, flow.terminal()(0) / 1.5, 1e-10);  // linear flow: J = X / x exactly for Euler
}

TEST(Jacobian, RoutesAgreeOnBoundedTrig2d) {
  const auto sys = bounded_trig_system(0.8, 2);
  const auto grid = TimeGrid::uniform(0.0, 1.0, 1024);
  Vec x(2);
  x << 0.4, -0.9;
  for (int m = 0; m < 5; ++m) {
    const auto p = sample_brownian(grid, 2, 31, m);
    const auto flow = euler_forward(sys, 0.0, x, p);
    const double det_var = variational_jacobian(sys, flow, p).matrices.back().determinant();
    const double det_liou = std::exp(liouville_determinant(sys, flow, p).log_det.back());
    const double det_fd = fd_jacobian(sys, 0.0, x, p).determinant();
    EXPECT_NEAR(det_var / det_liou, 1.0, 0.05);
    EXPECT_NEAR(det_fd / det_var, 1.0, 1e-5);
  }
}

TEST(Jacobian, InverseLiouvilleGbm) {
  const auto sys = gbm_system(0.5, 0.1);
  const auto grid = TimeGrid::uniform(0.0, 1.0, 256);
  const auto p = sample_brownian(grid, 1, 2, 9);
  const auto inv = euler_inverse(sys, 1.0, scalar_vec(0.7), p);
  double w = 0.0;
  for (const Vec& inc : p.increments) w += inc(0);
  // -(beta - alpha^2/2)(s - t) - alpha (W_s - W_t)
  EXPECT_NEAR(inverse_liouville_determinant(sys, inv, p).log_det.back(), -(0.1 - 0.125) - 0.5 * w, 1e-12);
}

TEST(Jacobian, LinearTracelessNoiseHasDeterministicLogDet) {
  Mat B(2, 2);
  B << -0.5, 0.2, 0.1, -0.3;
  Mat A(2, 2);
  A << 0.0, 0.4, -0.4, 0.0;  // tr A = 0
  const auto sys = linear_system(B, {A});
  const auto grid = TimeGrid::uniform(0.0, 1.0, 64);
  Vec x(2);
  x << 1.0, 1.0;
  const double first = liouville_determinant(sys, euler_forward(sys, 0.0, x, sample_brownian(grid, 1, 1, 0)),
                                             sample_brownian(grid, 1, 1, 0)).log_det.back();
  for (int m = 1; m < 5; ++m) {
    const auto p = sample_brownian(grid, 1, 1, m);
    EXPECT_NEAR(liouville_determinant(sys, euler_forward(sys, 0.0, x, p), p).log_det.back(), first, 1e-12);
  }
}

TEST(Moments, ZeroSystemDetMomentIsOne) {
  const auto sys = zero_system(1, 1);
  MomentConfig cfg;
  cfg.x = scalar_vec(0.3);
  cfg.n_paths = 100;
  cfg.steps = 8;
  for (const auto& rep : moment_report(MomentKind::det, sys, nullptr, {-2, 1, 3}, cfg)) {
    EXPECT_EQ(rep.estimate, 1.0);
    EXPECT_EQ(rep.bound, 1.0);
    EXPECT_TRUE(rep.pass);
  }
}

TEST(Moments, OuDeterminantAndBounds) {
  const auto sys = ou_system(1.0);
  MomentConfig cfg;
  cfg.x = scalar_vec(0.0);
  cfg.n_paths = 200;
  cfg.steps = 1000;
  const auto reps = moment_report(MomentKind::det, sys, nullptr, {1.0}, cfg);
  EXPECT_NEAR(reps[0].estimate, std::exp(-1.0), 1e-3);
  EXPECT_TRUE(reps[0].pass);
  const Weight w = polynomial_weight(1.0, 1, sys.K);
  for (const auto& rep : moment_report(MomentKind::rho, sys, &w, {-2, -1, 1, 2, 3}, cfg)) {
    EXPECT_TRUE(rep.pass) << rep.alpha;
  }
}

TEST(Moments, TruncationStopsPaths) {
  const auto sys = gbm_system(1.0, 0.0);
  MomentConfig cfg;
  cfg.x = scalar_vec(1.0);
  cfg.n_paths = 500;
  cfg.steps = 64;
  cfg.truncation = 1.5;
  const auto reps = moment_report(MomentKind::det, sys, nullptr, {1.0}, cfg);
  EXPECT_GT(reps[0].stopped, 0u);
  EXPECT_LT(reps[0].estimate, 1.0);
  EXPECT_THROW(moment_report(MomentKind::rho, sys, nullptr, {1.0}, cfg), std::invalid_argument);
}
