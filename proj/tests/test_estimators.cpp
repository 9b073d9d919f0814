#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "occlab/continuum.hpp"
#include "occlab/estimators.hpp"
#include "occlab/lattice.hpp"
#include "occlab/oracles.hpp"

using namespace occlab;

namespace {
ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;
}

std::vector<double> geometric(double a, double ratio, int n) {
  std::vector<double> v;
  for (int i = 0; i < n; ++i) v.push_back(a * std::pow(ratio, i));
  return v;
}

std::vector<double> kappa_grid() { return geometric(0.05, std::pow(10.0, 0.25), 13); }

// Walker that sits at distance 0 until `leave` and is far away afterwards.
OccupationGrid escaping(double leave, const std::vector<double>& radii, const std::vector<double>& rates,
                        const std::vector<double>& kappas, double horizon) {
  NestedOccupation acc(radii, rates, kappas, horizon);
  acc.add(0.0, leave, 0.0);
  acc.add(leave, horizon, 1e300);
  return std::move(acc).finish();
}

ComparabilityReport bm_comparability(int d, std::vector<double> radii, double scale_mult) {
  std::vector<ExitSample> samples;
  for (double r : radii) {
    ContinuumConfig cfg;
    cfg.dimension = d;
    cfg.time_step = 1e-3 * r * r;
    cfg.horizon = 40 * r * r;
    cfg.seed = 77;
    ExitSample s{r, {}, 0};
    const std::vector<double> o(static_cast<std::size_t>(d), 0.0);
    for (std::uint64_t i = 0; i < 2000; ++i) {
      const auto e = exit_time_streaming(cfg, o, i, o, r);
      if (e.exited) s.taus.push_back(e.time);
      else ++s.censored;
    }
    samples.push_back(std::move(s));
  }
  return mean_exit_comparability(samples, [&](double r) { return scale_mult * r * r; });
}
}  // namespace

TEST(NestedOccupation, HandComputedPath) {
  // distance 0 on [0,1), 1.5 on [1,3), 5 on [3,10)
  NestedOccupation acc({1.0, 2.0, 6.0}, {1.0, 1.0, 1.0}, {0.5, 2.0, 8.0}, 10.0);
  acc.add(0, 1, 0);
  acc.add(1, 3, 1.5);
  acc.add(3, 10, 5);
  const auto g = std::move(acc).finish();
  EXPECT_DOUBLE_EQ(g.occupation[g.slot(0, 0)], 0.5);
  EXPECT_DOUBLE_EQ(g.occupation[g.slot(1, 0)], 1.0);
  EXPECT_DOUBLE_EQ(g.occupation[g.slot(1, 1)], 2.0);
  EXPECT_DOUBLE_EQ(g.occupation[g.slot(2, 1)], 3.0);
  EXPECT_DOUBLE_EQ(g.occupation[g.slot(2, 2)], 8.0);
  EXPECT_EQ(g.excluded_count(), 0u);
}

TEST(NestedOccupation, UnreachedCheckpointsAreExcluded) {
  NestedOccupation acc({1.0}, {1.0}, {1.0, 4.0}, 10.0);
  acc.add(0, 2, 0);
  const auto g = std::move(acc).finish();
  EXPECT_EQ(g.excluded[0], 0);
  EXPECT_EQ(g.excluded[1], 1);
}

TEST(NestedOccupation, MatchesExactLatticeOccupation) {
  const LatticeBox box(2, 60);
  const auto field = generate_field(Percolation{1.0}, box, 1);
  const auto path = simulate_ctmc(field, Walk::vsrw, box.origin(), 400.0, 5, 0);
  const std::vector<double> radii{2, 3.5, 7, 12}, rates{10, 20, 30, 40}, kappas{0.5, 1, 3};
  NestedOccupation acc(radii, rates, kappas, 400.0);
  for (std::size_t i = 0; i < path.size(); ++i)
    acc.add(path.jump_times[i], path.jump_times[i] + path.holding_time(i), box.l1_norm(path.sites[i]));
  const auto g = std::move(acc).finish();
  for (std::size_t k = 0; k < kappas.size(); ++k)
    for (std::size_t n = 0; n < radii.size(); ++n)
      EXPECT_NEAR(g.occupation[g.slot(k, n)], occupation_time_exact(path, box.origin(), radii[n], g.window(k, n)), 1e-9);
}

TEST(LimsupCurve, FrozenProcessIsIdenticallyOne) {
  const auto radii = geometric(4, 1.15, 20), kappas = kappa_grid();
  std::vector<double> rates;
  for (double r : radii) rates.push_back(r * r);
  std::vector<OccupationGrid> reps;
  for (int i = 0; i < 100; ++i) {
    NestedOccupation acc(radii, rates, kappas, 1e6);
    acc.add(0.0, 1e6, 0.0);
    reps.push_back(std::move(acc).finish());
  }
  const auto c = limsup_curve(reps, Regime::infinity);
  for (std::size_t i = 0; i < kappas.size(); ++i) {
    EXPECT_EQ(c.raw[i], 1.0);
    EXPECT_EQ(c.projected[i], 1.0);
    EXPECT_EQ(c.ci_lo[i], 1.0);
  }
  EXPECT_EQ(c.displacement(), 0.0);
}

TEST(LimsupCurve, NestedWindowsNeedNoProjection) {
  // U/T is nonincreasing in T for an escaping walker, so the raw curve is
  // already monotone.
  const auto radii = geometric(4, 1.15, 20), kappas = kappa_grid();
  std::vector<double> rates;
  for (double r : radii) rates.push_back(r * r);
  std::vector<OccupationGrid> reps;
  CounterRng g(4, 0, stream::synthetic);
  for (int i = 0; i < 120; ++i) reps.push_back(escaping(50 * g.exponential(1.0), radii, rates, kappas, 1e6));
  const auto c = limsup_curve(reps, Regime::infinity);
  EXPECT_LT(c.displacement(), 1e-12);
  for (std::size_t i = 1; i < c.raw.size(); ++i) EXPECT_LE(c.raw[i], c.raw[i - 1]);
}

TEST(LimsupCurve, Preconditions) {
  const auto radii = geometric(4, 1.15, 20), kappas = kappa_grid();
  std::vector<double> rates;
  for (double r : radii) rates.push_back(r * r);
  std::vector<OccupationGrid> reps(100, escaping(1.0, radii, rates, kappas, 1e5));
  EXPECT_EQ(kind_of([&] { limsup_curve({reps.begin(), reps.begin() + 99}, Regime::infinity); }),
            ErrorKind::insufficient_data);
  reps[3].horizon = 10.0;
  try {
    limsup_curve(reps, Regime::infinity);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::insufficient_horizon);
    EXPECT_NE(std::string(e.what()).find("kappa="), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("n="), std::string::npos);
  }
  const std::vector<double> few(radii.begin(), radii.begin() + 19), few_rates(rates.begin(), rates.begin() + 19);
  std::vector<OccupationGrid> small(100, escaping(1.0, few, few_rates, kappas, 1e5));
  EXPECT_EQ(kind_of([&] { limsup_curve(small, Regime::infinity); }), ErrorKind::invalid_grid);
}

namespace {
LimsupCurve synthetic_curve(std::vector<double> kappas, auto f) {
  LimsupCurve c;
  c.kappas = kappas;
  for (double k : kappas) c.raw.push_back(f(k));
  c.projected = c.raw;
  return c;
}
}  // namespace

TEST(Kappa1, SyntheticCurves) {
  const auto k = geometric(0.5, 2.0, 10);
  auto exact = synthetic_curve(k, [](double x) { return std::min(1.0, 2.0 / x); });
  EXPECT_NEAR(kappa1_estimate(exact).value, 2.0, 1e-12);
  EXPECT_NEAR(kappa1_estimate(exact).spread, 0.0, 1e-12);

  auto slow = synthetic_curve({10, 20, 40, 80}, [](double x) { return std::min(1.0, 2.0 / x + 5.0 / (x * x)); });
  const auto e = kappa1_estimate(slow);
  // kappa f = 2.5, 2.25, 2.125, 2.0625
  EXPECT_DOUBLE_EQ(e.value, 2.1875);
  EXPECT_GE(e.value, 2.0);
  EXPECT_LE(e.value, 2.6);

  auto half = exact;
  for (auto& v : half.projected) v /= 2;
  EXPECT_NEAR(kappa1_estimate(half).value, 1.0, 1e-12);
}

TEST(Kappa1, Errors) {
  auto flat = synthetic_curve({1, 2, 4, 8}, [](double) { return 0.9; });
  EXPECT_EQ(kind_of([&] { kappa1_estimate(flat); }), ErrorKind::insufficient_data);
  flat.regime = Regime::zero;
  EXPECT_EQ(kind_of([&] { kappa1_estimate(flat); }), ErrorKind::regime);
}

TEST(ExitTail, ExponentialControl) {
  CounterRng g(11, 0, stream::synthetic);
  std::vector<double> tau;
  for (int i = 0; i < 10000; ++i) tau.push_back(3.0 * g.exponential(1.0));
  const auto f = exit_tail_fit(tau, 3.0);
  EXPECT_NEAR(f.slope, 1.0, 0.05);
  EXPECT_GT(f.r_squared, 0.99);
  EXPECT_LE(f.slope_lower, f.slope_upper);
  EXPECT_GT(f.c4, 0.0);
  EXPECT_TRUE(std::isfinite(f.c6));
  EXPECT_LT(f.envelope_spread, 1.5);
  EXPECT_FALSE(f.sp_violation);
}

TEST(ExitTail, ParetoControlViolatesSP) {
  CounterRng g(12, 0, stream::synthetic);
  std::vector<double> tau;
  for (int i = 0; i < 10000; ++i) tau.push_back(std::pow(g.uniform(), -1.0 / 1.5));
  const auto f = exit_tail_fit(tau, 1.0);
  EXPECT_LT(f.r_squared, 0.9);
  EXPECT_TRUE(f.sp_violation);
  EXPECT_LT(f.tail_ratio, 0.5);
  // the envelope at the central slope widens with the range of n
  ExitTailOptions strict;
  strict.min_exceedances = 400;
  EXPECT_GT(f.envelope_spread, 5.0);
  EXPECT_GT(f.envelope_spread, exit_tail_fit(tau, 1.0, 0, strict).envelope_spread);
}

TEST(ExitTail, BrownianInterval) {
  // (1/2) Laplacian on (-1, 1): principal eigenvalue pi^2 / 8
  ContinuumConfig cfg;
  cfg.time_step = 1e-3;
  cfg.horizon = 60;
  cfg.seed = 13;
  const std::vector<double> o{0.0};
  std::vector<double> tau;
  for (std::uint64_t i = 0; i < 10000; ++i) tau.push_back(exit_time_streaming(cfg, o, i, o, 1.0).time);
  const auto f = exit_tail_fit(tau, 1.0);
  EXPECT_NEAR(f.slope, std::numbers::pi * std::numbers::pi / 8, 0.1);
  EXPECT_GT(f.r_squared, 0.99);
  EXPECT_FALSE(f.sp_violation);
}

TEST(ExitTail, Preconditions) {
  std::vector<double> tau(9999, 1.0);
  EXPECT_EQ(kind_of([&] { exit_tail_fit(tau, 1.0); }), ErrorKind::insufficient_data);
  tau.push_back(1.0);
  EXPECT_EQ(kind_of([&] { exit_tail_fit(tau, 1.0, 200); }), ErrorKind::censoring);
  // everything at 1.5: only n = 1 is usable
  std::vector<double> flat(10000, 1.5);
  EXPECT_EQ(kind_of([&] { exit_tail_fit(flat, 1.0); }), ErrorKind::insufficient_data);
}

TEST(Comparability, BrownianPlane) {
  const auto rep = bm_comparability(2, {1, 2, 4}, 1.0);
  for (double q : rep.ratios) EXPECT_NEAR(q, 0.5, 0.03);
  EXPECT_NEAR(rep.lambda_hat, 2.0, 0.15);
  const auto scaled = bm_comparability(2, {1, 2, 4}, 10.0);
  EXPECT_NEAR(scaled.lambda_hat / rep.lambda_hat, 10.0, 1e-9);
}

TEST(Comparability, CauchyLine) {
  std::vector<ExitSample> samples;
  for (double r : {1.0, 2.0, 4.0}) {
    ContinuumConfig cfg;
    cfg.process = Stable{1.0};
    cfg.time_step = 1e-3 * r;
    cfg.horizon = 300 * r;
    cfg.seed = 78;
    ExitSample s{r, {}, 0};
    const std::vector<double> o{0.0};
    for (std::uint64_t i = 0; i < 2000; ++i) {
      const auto e = exit_time_streaming(cfg, o, i, o, r);
      if (e.exited) s.taus.push_back(e.time);
      else ++s.censored;
    }
    samples.push_back(std::move(s));
  }
  const auto rep = mean_exit_comparability(samples, [](double r) { return r; });
  for (double q : rep.ratios) EXPECT_NEAR(q, 1.0, 0.05);
  EXPECT_LE(rep.lambda_hat, 1.1);
}

TEST(Comparability, Preconditions) {
  std::vector<ExitSample> s(3, ExitSample{1.0, std::vector<double>(1000, 1.0), 0});
  auto phi = [](double r) { return r; };
  EXPECT_NO_THROW(mean_exit_comparability(s, phi));
  s[1].censored = 11;
  EXPECT_EQ(kind_of([&] { mean_exit_comparability(s, phi); }), ErrorKind::censoring);
  s[1].censored = 0;
  s[2].taus.pop_back();
  EXPECT_EQ(kind_of([&] { mean_exit_comparability(s, phi); }), ErrorKind::insufficient_data);
  s.pop_back();
  EXPECT_EQ(kind_of([&] { mean_exit_comparability(s, phi); }), ErrorKind::insufficient_data);
}

TEST(OccupationMeanBound, OriginOnPlane) {
  const LatticeBox box(2, 1500);
  const auto field = generate_field(Percolation{1.0}, box, 1);
  std::vector<double> times = geometric(100, std::pow(10.0, 0.25), 9);
  std::vector<double> mean_u(times.size(), 0.0);
  const int reps = 300;
  for (int rep = 0; rep < reps; ++rep) {
    CounterRng rng(21, static_cast<std::uint64_t>(rep), stream::path);
    std::vector<double> u(times.size(), 0.0);
    walk(field, Walk::vsrw, box.origin(), times.back(), rng, [&](SiteIndex x, double t0, double t1) {
      if (x == box.origin())
        for (std::size_t i = 0; i < times.size(); ++i) u[i] += std::max(0.0, std::min(t1, times[i]) - t0);
      return true;
    });
    for (std::size_t i = 0; i < times.size(); ++i) mean_u[i] += u[i] / reps;
  }
  ThetaFunction theta(VolumeModel::lattice(box), ScaleFunction::power(1, 2), Coord{0.0, 0.0}, 1.0);
  auto th = [&](double t) { return theta.theta(t); };
  const auto b = occupation_mean_bound(times, mean_u, th, 1.0);
  const auto [lo, hi] = std::minmax_element(b.ratios.begin(), b.ratios.end());
  EXPECT_LT(*hi / *lo, 2.0);
  EXPECT_TRUE(b.pass);
  EXPECT_GT(b.k0_hat, 0.0);

  std::vector<double> doubled = mean_u;
  for (auto& v : doubled) v *= 2;
  const auto b2 = occupation_mean_bound(times, doubled, th, 2.0);
  EXPECT_NEAR(b2.k0_hat, b.k0_hat, 1e-12);

  std::vector<double> zero(times.size(), 0.0);
  const auto b0 = occupation_mean_bound(times, zero, th, 0.0);
  EXPECT_EQ(b0.k0_hat, 0.0);
  EXPECT_TRUE(b0.pass);
}

TEST(Recurrence, Profiles) {
  const auto phi = ScaleFunction::power(1, 2);
  EXPECT_EQ(recurrence_test(ThetaFunction(VolumeModel::power(1, 2), phi, Coord{0.0, 0.0}, 1.0)), Recurrence::recurrent);
  EXPECT_EQ(recurrence_test(ThetaFunction(VolumeModel::power(1, 3), phi, Coord{0.0, 0.0, 0.0}, 1.0)),
            Recurrence::transient);
  // V = s, phi = s^(1/2): integral of s^-2 converges
  EXPECT_EQ(recurrence_test(ThetaFunction(VolumeModel::power(1, 1), ScaleFunction::power(1, 0.5), Coord{0.0}, 1.0)),
            Recurrence::transient);
}

TEST(TestFunctionClass, Thresholds) {
  EXPECT_TRUE(test_function_class_check({TestFunction::Kind::compact, 0}, 1.0, 3.0));
  EXPECT_TRUE(test_function_class_check({TestFunction::Kind::weighted, 5}, 2, 1));
  EXPECT_FALSE(test_function_class_check({TestFunction::Kind::weighted, 1.5}, 2, 1));
  EXPECT_EQ(kind_of([] { test_function_class_check({TestFunction::Kind::weighted, 5}, 2, 2); }), ErrorKind::regime);
}

TEST(RunningMax, Drift) {
  const std::vector<double> t{1, 10, 100, 1000}, v{1, 0.5, 2, 1};
  const auto d = running_max_drift(t, v);
  EXPECT_EQ(d.running_max, (std::vector<double>{1, 1, 2, 2}));
  const std::vector<double> flat{3, 3, 3, 3};
  EXPECT_NEAR(running_max_drift(t, flat).slope, 0.0, 1e-15);
}
