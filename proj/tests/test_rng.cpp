#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "stochflow/parallel.hpp"
#include "stochflow/rng.hpp"

using namespace sflow;

// Known-answer vectors of the reference Philox4x32-10 implementation.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}),
            (Philox4x32{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                       {0xffffffffu, 0xffffffffu}),
            (Philox4x32{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                       {0xa4093822u, 0x299f31d0u}),
            (Philox4x32{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(DeriveSeed, DeterministicAndDistinct) {
  const SeedIndex a{Stream::brownian, 7, 3, 1};
  EXPECT_EQ(derive_seed(42, a), derive_seed(42, a));
  SeedIndex b = a;
  b.path = 8;
  EXPECT_NE(derive_seed(42, a), derive_seed(42, b));
  EXPECT_NE(derive_seed(42, a).fingerprint(), derive_seed(42, b).fingerprint());
  SeedIndex c = a;
  c.stream = Stream::auxiliary;
  EXPECT_NE(derive_seed(42, a), derive_seed(42, c));
  EXPECT_NE(derive_seed(42, a), derive_seed(43, a));
}

TEST(DeriveSeed, NoCollisionsOverAMillionKeys) {
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(1 << 21);
  std::size_t n = 0;
  for (std::uint64_t path = 0; path < 1000; ++path) {
    for (std::uint32_t step = 0; step < 250; ++step) {
      for (std::uint32_t comp = 0; comp < 4; ++comp) {
        seen.insert(derive_seed(2024, {Stream::brownian, path, step, comp}).fingerprint());
        ++n;
      }
    }
  }
  EXPECT_EQ(n, 1000000u);
  EXPECT_EQ(seen.size(), n);
}

TEST(StandardNormal, Moments) {
  constexpr int n = 100000;
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) {
    z[i] = standard_normal(99, {Stream::brownian, static_cast<std::uint64_t>(i), 0, 0});
  }
  const SampleStats s = sample_stats(z);
  EXPECT_LT(std::abs(s.mean), 4.0 / std::sqrt(n));
  std::vector<double> sq(n);
  for (int i = 0; i < n; ++i) sq[i] = z[i] * z[i];
  EXPECT_NEAR(sample_stats(sq).mean, 1.0, 0.05);
  // Paired components are uncorrelated.
  double cross = 0.0;
  for (int i = 0; i < n; ++i) {
    cross += z[i] * standard_normal(99, {Stream::brownian, static_cast<std::uint64_t>(i), 0, 1});
  }
  EXPECT_LT(std::abs(cross / n), 4.0 / std::sqrt(n));
}

TEST(Parallel, ResultIndependentOfThreads) {
  constexpr std::size_t n = 1000;
  auto run = [](unsigned threads) {
    std::vector<double> out(n);
    parallel_for(n, threads, [&](std::size_t i) {
      out[i] = standard_normal(5, {Stream::auxiliary, i, 0, 0});
    });
    return pairwise_sum(out);
  };
  const double one = run(1);
  EXPECT_EQ(one, run(3));
  EXPECT_EQ(one, run(8));
}

TEST(Parallel, RethrowsWorkerException) {
  EXPECT_THROW(parallel_for(10, 4, [](std::size_t i) {
                 if (i == 7) throw std::runtime_error("boom");
               }),
               std::runtime_error);
}

TEST(Parallel, PairwiseSumMatchesExactSmallIntegers) {
  std::vector<double> v(1000);
  std::iota(v.begin(), v.end(), 1.0);
  EXPECT_EQ(pairwise_sum(v), 500500.0);
}
