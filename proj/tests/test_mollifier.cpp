#include <gtest/gtest.h>

#include <cmath>

#include "stochflow/mollifier.hpp"

using namespace sflow;

TEST(Mollifier, ConstantAndAffineReproduced) {
  MollifierProbe probe;
  probe.R = 2.0;
  probe.n_r = 4;
  probe.n_x = 21;
  const SpaceTimeField c{1, [](double, const Vec&) { return 3.25; }};
  const auto mc = mollify_field(c, 4, probe);
  EXPECT_LT(mc.metric, 1e-14);
  EXPECT_NEAR(mc.field.f(0.5, scalar_vec(0.3)), 3.25, 1e-14);

  const SpaceTimeField lin{1, [](double r, const Vec& x) { return 2.0 * x(0) - r + 1.0; }};
  const auto ml = mollify_field(lin, 3, probe);
  EXPECT_LT(ml.metric, 1e-13);

  Vec x(2);
  x << 0.4, -1.2;
  const SpaceTimeField lin2{2, [](double r, const Vec& y) { return y(0) - 3.0 * y(1) + 0.5 * r; }};
  probe.n_x = 7;
  const auto m2 = mollify_field(lin2, 2, probe);
  EXPECT_NEAR(m2.field.f(0.25, x), lin2.f(0.25, x), 1e-13);
  EXPECT_LT(m2.metric, 1e-12);
}

TEST(Mollifier, AbsoluteValueMetricHalvesPerDoubling) {
  MollifierProbe probe;
  probe.n_r = 2;
  probe.n_x = 101;
  const SpaceTimeField f{1, [](double, const Vec& x) { return std::abs(x(0)); }};
  double prev = mollify_field(f, 4, probe).metric;
  for (int n : {8, 16, 32}) {
    const double m = mollify_field(f, n, probe).metric;
    EXPECT_NEAR(m / prev, 0.5, 0.15) << "n=" << n;
    prev = m;
  }
}

TEST(Mollifier, Errors) {
  MollifierProbe probe;
  const SpaceTimeField f{1, [](double, const Vec& x) { return x(0); }, 0.0, 2.0};
  EXPECT_THROW(mollify_field(f, 4, probe), std::domain_error);  // r - 1/n < 0
  const SpaceTimeField g{1, [](double, const Vec& x) { return x(0); }};
  EXPECT_THROW(mollify_field(g, 0, probe), std::invalid_argument);
  probe.p = 0.5;
  EXPECT_THROW(mollify_field(g, 2, probe), std::invalid_argument);
}
