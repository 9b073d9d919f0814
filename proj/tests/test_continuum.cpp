#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "occlab/continuum.hpp"
#include "occlab/oracles.hpp"
#include "occlab/stats.hpp"

using namespace occlab;

namespace {
ContinuumConfig bm(int d, double dt, double horizon, std::uint64_t seed = 1) {
  ContinuumConfig c;
  c.process = Brownian{};
  c.dimension = d;
  c.time_step = dt;
  c.horizon = horizon;
  c.seed = seed;
  return c;
}

ContinuumConfig stable(double alpha, int d, double dt, double horizon, std::uint64_t seed = 1) {
  auto c = bm(d, dt, horizon, seed);
  c.process = Stable{alpha};
  return c;
}
}  // namespace

TEST(ContinuumConfig, Validation) {
  EXPECT_THROW(bm(1, 0.1, 1.0).validate(), Error);
  EXPECT_NO_THROW(bm(1, 0.01, 1.0).validate());
  EXPECT_THROW(stable(2.0, 1, 0.01, 1.0).validate(), Error);
  EXPECT_THROW(stable(0.0, 1, 0.01, 1.0).validate(), Error);
}

TEST(Simulate, PathShapeAndDeterminism) {
  const auto cfg = bm(2, 0.01, 1.0, 5);
  const std::vector<double> start{0.5, -0.5};
  const auto p = simulate(cfg, start, 3);
  const auto q = simulate(cfg, start, 3);
  ASSERT_EQ(p.size(), 101u);
  EXPECT_EQ(p.times.front(), 0.0);
  EXPECT_EQ(p.end_time(), 1.0);
  EXPECT_EQ(p.position(0)[0], 0.5);
  for (std::size_t i = 1; i < p.size(); ++i) EXPECT_GT(p.times[i], p.times[i - 1]);
  EXPECT_EQ(p.coords, q.coords);
  EXPECT_NE(p.coords, simulate(cfg, start, 4).coords);
}

TEST(Simulate, BrownianEndpointVariance) {
  const auto cfg = bm(1, 1e-3, 1.0, 11);
  std::vector<double> end;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto p = simulate(cfg, std::vector<double>{0.0}, i);
    end.push_back(p.position(p.size() - 1)[0]);
  }
  EXPECT_NEAR(stats::variance(end), 1.0, 0.03);
}

TEST(Simulate, CauchyMedianAbsoluteValue) {
  const auto cfg = stable(1.0, 1, 0.01, 1.0, 12);
  std::vector<double> absend;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto p = simulate(cfg, std::vector<double>{0.0}, i);
    absend.push_back(std::abs(p.position(p.size() - 1)[0]));
  }
  EXPECT_NEAR(stats::median(absend), 1.0, 0.05);
}

TEST(Simulate, StableSelfSimilarity) {
  // Y_t and s^{-1/alpha} Y_{st} agree in law
  const double alpha = 1.5, s = 4.0;
  const auto short_cfg = stable(alpha, 2, 0.01, 1.0, 21);
  const auto long_cfg = stable(alpha, 2, 0.04, s, 22);
  std::vector<double> a, b;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const std::vector<double> o{0.0, 0.0};
    auto p = simulate(short_cfg, o, i);
    auto q = simulate(long_cfg, o, i);
    a.push_back(p.position(p.size() - 1)[0]);
    b.push_back(q.position(q.size() - 1)[0] * std::pow(s, -1 / alpha));
  }
  EXPECT_TRUE(stats::ks_two_sample(a, b).pass);
}

TEST(Occupation, FrozenAndOutside) {
  ContinuumPath p;
  p.dimension = 1;
  p.times = {0, 0.5, 1.0, 1.5};
  p.coords = {2, 2, 2, 2};
  EXPECT_DOUBLE_EQ(occupation_time(p, std::vector<double>{2.0}, 0.1, 1.2), 1.2);
  EXPECT_EQ(occupation_time(p, std::vector<double>{0.0}, 1.0, 1.5), 0.0);
  EXPECT_THROW(occupation_time(p, std::vector<double>{2.0}, 0.1, 2.0), Error);
}

TEST(Occupation, AdditivityAndMonotonicity) {
  const auto cfg = bm(2, 0.01, 4.0, 8);
  const std::vector<double> o{0.0, 0.0};
  const auto p = simulate(cfg, o, 0);
  const double u1 = occupation_time(p, o, 1.0, 1.0), u2 = occupation_time(p, o, 1.0, 3.0);
  EXPECT_LE(u1, u2);
  // grid-aligned windows split exactly
  double piece = 0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i)
    if (p.times[i] >= 1.0 - 1e-12 && p.times[i] < 3.0 - 1e-12 && euclidean_distance(p.position(i), o) < 1.0)
      piece += p.times[i + 1] - p.times[i];
  EXPECT_NEAR(u1 + piece, u2, 1e-12);
  EXPECT_LE(occupation_time(p, o, 0.5, 3.0), u2);
  EXPECT_LE(u2, occupation_time(p, o, 2.0, 3.0));
}

TEST(Occupation, StreamingMatchesStoredPath) {
  const auto cfg = bm(3, 0.01, 2.0, 9);
  const std::vector<double> o{0.0, 0.0, 0.0};
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    const auto p = simulate(cfg, o, rep);
    const auto s = occupation_streaming(cfg, o, rep, o, 0.8, 2.0);
    EXPECT_DOUBLE_EQ(occupation_time(p, o, 0.8, 2.0), s.occupation);
    const auto e1 = exit_time(p, o, 0.8);
    const auto e2 = exit_time_streaming(cfg, o, rep, o, 0.8);
    EXPECT_EQ(e1.exited, e2.exited);
    EXPECT_DOUBLE_EQ(e1.time, e2.time);
  }
}

TEST(Occupation, HalvingTimeStepMovesMeanLittle) {
  const std::vector<double> o{0.0};
  auto mean_occ = [&](double dt) {
    const auto cfg = bm(1, dt, 1.0, 31);
    double s = 0;
    for (std::uint64_t i = 0; i < 10000; ++i) s += occupation_streaming(cfg, o, i, o, 0.5, 1.0).occupation;
    return s / 10000;
  };
  const double a = mean_occ(1e-3), b = mean_occ(5e-4);
  EXPECT_LT(std::abs(a - b) / b, 0.02);
}

TEST(ExitTime, DomainAndHugeBall) {
  const auto cfg = bm(1, 0.01, 1.0, 3);
  const auto p = simulate(cfg, std::vector<double>{0.0}, 0);
  EXPECT_THROW(exit_time(p, std::vector<double>{5.0}, 1.0), Error);
  const auto e = exit_time(p, std::vector<double>{0.0}, 1e6);
  EXPECT_FALSE(e.exited);
  EXPECT_EQ(e.time, 1.0);
}

TEST(ExitTime, BrownianMeanOneDimension) {
  const std::vector<double> o{0.0};
  const auto cfg = bm(1, 1e-4, 50.0, 41);
  std::vector<double> t;
  for (std::uint64_t i = 0; i < 10000; ++i) {
    const auto e = exit_time_streaming(cfg, o, i, o, 1.0);
    ASSERT_TRUE(e.exited);
    t.push_back(e.time);
  }
  EXPECT_NEAR(stats::mean(t), getoor_mean_exit(2, 1, 1), 0.03);
}

TEST(ExitTime, BridgeMonitoringRemovesGridBias) {
  // dt = 0.01 r^2: the grid estimate overshoots by roughly 12%
  for (int d : {1, 3}) {
    const std::vector<double> o(static_cast<std::size_t>(d), 0.0);
    auto cfg = bm(d, 1e-2, 50.0, 47);
    std::vector<double> grid, bridge;
    for (std::uint64_t i = 0; i < 4000; ++i) grid.push_back(exit_time_streaming(cfg, o, i, o, 1.0).time);
    cfg.bridge_exit = true;
    for (std::uint64_t i = 0; i < 4000; ++i) bridge.push_back(exit_time_streaming(cfg, o, i, o, 1.0).time);
    const double exact = getoor_mean_exit(2, d, 1);
    EXPECT_GT(stats::mean(grid) / exact, 1.06) << d;
    EXPECT_NEAR(stats::mean(bridge) / exact, 1.0, 0.04) << d;
  }
}

TEST(ExitTime, BridgeHitProbability) {
  const std::vector<double> c{0.0};
  // one barrier dominates: exp(-2 a0 a1 / dt)
  EXPECT_NEAR(bridge_hit_probability(std::vector<double>{0.9}, std::vector<double>{0.8}, 0.01, c, 1.0),
              std::exp(-2 * 0.1 * 0.2 / 0.01), 1e-12);
  EXPECT_LT(bridge_hit_probability(std::vector<double>{0.0}, std::vector<double>{0.0}, 1e-4, c, 1.0), 1e-300);
  auto stable_cfg = stable(1.0, 1, 1e-3, 1.0, 1);
  stable_cfg.bridge_exit = true;
  EXPECT_THROW(stable_cfg.validate(), Error);
}

TEST(ExitTime, CauchyMean) {
  const std::vector<double> o{0.0};
  const auto cfg = stable(1.0, 1, 1e-4, 200.0, 43);
  std::vector<double> t;
  for (std::uint64_t i = 0; i < 10000; ++i) t.push_back(exit_time_streaming(cfg, o, i, o, 1.0).time);
  EXPECT_NEAR(stats::mean(t), getoor_mean_exit(1, 1, 1), 0.05);
}

TEST(StepPolicies, FarFieldAndGeometric) {
  auto far = far_field_step_policy({0.0, 0.0, 0.0}, 1.0, 1e-3, 0.2, 1.0);
  EXPECT_EQ(far(0.0, std::vector<double>{0.5, 0, 0}), 1e-3);
  EXPECT_NEAR(far(0.0, std::vector<double>{3.0, 0, 0}), 0.16, 1e-12);
  EXPECT_EQ(far(0.0, std::vector<double>{100.0, 0, 0}), 1.0);
  auto geo = geometric_time_policy(0.01, 1e-6);
  EXPECT_EQ(geo(0.0, std::vector<double>{0.0}), 1e-6);
  EXPECT_NEAR(geo(2.0, std::vector<double>{0.0}), 0.02, 1e-15);
}

TEST(Region, LeavingRegionCensors) {
  auto cfg = bm(1, 1e-3, 100.0, 4);
  cfg.region = Ball{{0.0}, 0.5};
  const auto p = simulate(cfg, std::vector<double>{0.0}, 0);
  EXPECT_TRUE(p.censored);
  EXPECT_LT(p.end_time(), 100.0);
  EXPECT_GE(std::abs(p.position(p.size() - 1)[0]), 0.5);
}
