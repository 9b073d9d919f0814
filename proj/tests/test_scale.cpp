#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "occlab/scale.hpp"

using namespace occlab;

namespace {
ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::io;  // sentinel: nothing thrown
}
}  // namespace

TEST(LevyScale, RadialProfiles) {
  EXPECT_NEAR(levy_scale([](double p) { return std::pow(p, 1.5); }, 2.0), std::pow(2.0, 1.5), 1e-12);
  EXPECT_NEAR(levy_scale([](double p) { return p * p; }, 3.0), 9.0, 1e-12);
  EXPECT_NEAR(levy_scale([](double p) { return p * p + p; }, 0.5), 1.0 / 6.0, 1e-12);
  EXPECT_EQ(kind_of([] { levy_scale([](double) { return 0.0; }, 1.0); }), ErrorKind::degenerate_scale);
}

TEST(LevyScale, NonMonotoneProfileUsesSupremum) {
  // peak at rho = 1 inside the window |rho| <= 1/r = 2
  auto psi = [](double p) { return p * std::exp(1.0 - p); };
  EXPECT_NEAR(levy_scale(psi, 0.5, 1024), 1.0, 1e-5);
}

TEST(SymbolScale, IsotropicMatchesRadial) {
  auto q = [](std::span<const double> xi) {
    double n2 = 0;
    for (double v : xi) n2 += v * v;
    return std::pow(n2, 0.75);
  };
  EXPECT_NEAR(symbol_scale(q, 2, 2.0), std::pow(2.0, 1.5), 1e-9);
}

TEST(SymbolScale, AnisotropicSupOnAxis) {
  auto q = [](std::span<const double> xi) { return 4 * xi[0] * xi[0] + xi[1] * xi[1]; };
  EXPECT_NEAR(symbol_scale(q, 2, 1.0), 0.25, 1e-9);
}

TEST(InvertMonotone, Examples) {
  EXPECT_NEAR(invert_monotone([](double r) { return r * r; }, 9.0, 0.0, 10.0), 3.0, 1e-9);
  EXPECT_NEAR(invert_monotone([](double r) { return r - 1; }, 0.0, 0.5, 2.0), 1.0, 1e-10);
  EXPECT_EQ(kind_of([] { invert_monotone([](double r) { return r; }, 5.0, 0.0, 1.0); }), ErrorKind::bracket);
}

TEST(Regularize, ClosedForms) {
  const auto reg2 = regularize(ScaleFunction::power(1, 2));
  EXPECT_NEAR(reg2(2.0), 1.5, 1e-12);
  EXPECT_EQ(reg2(1.0), 0.0);
  EXPECT_NEAR(reg2.inverse(1.5), 2.0, 1e-8);
  const auto reg1 = regularize(ScaleFunction::power(1, 1));
  EXPECT_NEAR(reg1(5.0), 4.0, 1e-12);
}

TEST(Regularize, ComparabilityForSquare) {
  // phi / Phi = (r^2 - 1) / (2 r^2) ranges over [3/8, 1/2) on [2, 1e6]
  const auto reg = regularize(ScaleFunction::power(1, 2));
  double lo = 1, hi = 0;
  for (int i = 0; i <= 60; ++i) {
    const double r = 2 * std::pow(5e5, i / 60.0);
    const double q = reg(r) / (r * r);
    EXPECT_NEAR(q, (r * r - 1) / (2 * r * r), 1e-9);
    lo = std::min(lo, q);
    hi = std::max(hi, q);
  }
  EXPECT_NEAR(lo, 0.375, 1e-9);
  EXPECT_LT(hi, 0.5);
  EXPECT_GT(hi, 0.49999);
  EXPECT_NEAR(reg.comparability_constant, 8.0 / 3.0, 1e-9);
}

TEST(Regularize, InvalidBase) {
  auto bad = ScaleFunction::tabulated({{2.0, 1.0}, {10.0, 2.0}});
  EXPECT_EQ(kind_of([&] { regularize(bad); }), ErrorKind::invalid_scale);
}

TEST(Regularize, InverseRoundTrip) {
  const auto reg = regularize(ScaleFunction::power(1, 1.5));
  for (double r : {1.5, 2.0, 10.0, 1234.5, 9e5}) EXPECT_NEAR(reg.inverse(reg(r)) / r, 1.0, 1e-8);
}

TEST(Regularize, ScalingOfRegularizedScale) {
  const auto reg = regularize(ScaleFunction::power(1, 2));
  EXPECT_TRUE(check_scaling(reg, reg.scaling, 4.0, 1e6));
  EXPECT_GT(reg.scaling.beta1, 1.9);
  EXPECT_LE(reg.scaling.beta2, 2.0 + 1e-9 + 1.0);
}

TEST(Tabulated, LogLogInterpolationAndRange) {
  const auto f = ScaleFunction::tabulated({{1, 1}, {10, 100}, {100, 1000}});
  EXPECT_NEAR(f(std::sqrt(10.0)), 10.0, 1e-9);
  EXPECT_NEAR(f(std::sqrt(1000.0)), std::pow(10.0, 2.5), 1e-9);
  EXPECT_EQ(kind_of([&] { f(200.0); }), ErrorKind::range);
  EXPECT_EQ(kind_of([] { ScaleFunction::tabulated({{1, 2}, {2, 1}}); }), ErrorKind::invalid_scale);
}

TEST(Theta, ClosedForms) {
  const auto phi = ScaleFunction::power(1, 2);
  ThetaFunction t1(VolumeModel::power(1, 1), phi, Coord{0.0}, 1.0);
  ThetaFunction t2(VolumeModel::power(1, 2), phi, Coord{0.0, 0.0}, 1.0);
  ThetaFunction t3(VolumeModel::power(1, 3), phi, Coord{0.0, 0.0, 0.0}, 1.0);
  EXPECT_NEAR(t1.theta(4.0), 2.0, 1e-9);
  EXPECT_EQ(t1.theta(1.0), 0.0);
  for (double t : {2.0, 37.0, 1e4, 1e8}) {
    EXPECT_NEAR(t1.theta(t) / (2 * (std::sqrt(t) - 1)), 1.0, 1e-6);
    EXPECT_NEAR(t2.theta(t) / std::log(t), 1.0, 1e-6);
    EXPECT_NEAR(t3.theta(t) / (2 * (1 - 1 / std::sqrt(t))), 1.0, 1e-6);
  }
  EXPECT_EQ(kind_of([&] { t1.theta(0.5); }), ErrorKind::range);
}

TEST(Theta, TailClassification) {
  const auto phi = ScaleFunction::power(1, 2);
  ThetaFunction t2(VolumeModel::power(1, 2), phi, Coord{0.0, 0.0}, 1.0);
  ThetaFunction t3(VolumeModel::power(1, 3), phi, Coord{0.0, 0.0, 0.0}, 1.0);
  EXPECT_EQ(t2.classify_tail().verdict, Recurrence::recurrent);
  EXPECT_EQ(t2.theta(kInf), kInf);
  EXPECT_EQ(t3.classify_tail().verdict, Recurrence::transient);
  EXPECT_NEAR(t3.theta(kInf), 2.0, 1e-6);
  // V = s, phi = s^(1/2): integrand s^-2, summable
  ThetaFunction th(VolumeModel::power(1, 1), ScaleFunction::power(1, 0.5), Coord{0.0}, 1.0);
  EXPECT_EQ(th.classify_tail().verdict, Recurrence::transient);
}

TEST(Theta, MonotoneInT) {
  const auto phi = ScaleFunction::power(2, 1.7);
  ThetaFunction tf(VolumeModel::power(3, 1.2), phi, Coord{0.0}, 0.5);
  double prev = 0;
  for (double t = tf.phi_r0(); t < 1e6; t *= 1.7) {
    const double v = tf.theta(t);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(Theta, LatticeStepVolumeIsExactPerSegment) {
  // V(rho) = 2k^2 + 2k + 1 on (k, k+1]; phi = rho^2 gives closed segment sums
  const LatticeBox box(2, 200);
  ThetaFunction tf(VolumeModel::lattice(box), ScaleFunction::power(1, 2), Coord{0.0, 0.0}, 1.0);
  double expected = 0;
  for (int k = 1; k < 50; ++k) expected += ((k + 1.0) * (k + 1.0) - k * k) / (2.0 * k * k + 2.0 * k + 1.0);
  EXPECT_NEAR(tf.theta(2500.0), expected, 1e-9);
}

TEST(Rates, RateZero) {
  auto sq = [](double r) { return r * r; };
  EXPECT_NEAR(rate_zero(sq, 1.0, 0.1), 0.015271796258079, 1e-12);
  EXPECT_NEAR(rate_zero(sq, 2.0, 0.1), 2 * 0.015271796258079, 1e-12);
  auto id = [](double r) { return r; };
  EXPECT_NEAR(rate_zero(id, 1.0, std::exp(-std::numbers::e)), 0.065988035845313, 1e-12);
  EXPECT_EQ(kind_of([&] { rate_zero(id, 1.0, 0.5); }), ErrorKind::regime);
}

TEST(Rates, RateInfinity) {
  const auto reg = regularize(ScaleFunction::power(1, 2));
  // 4999.5 * log log 4999.5, evaluated in 30-digit arithmetic
  EXPECT_NEAR(rate_infinity(reg, 1.0, 100.0), 10709.304499068297, 1e-6);
  EXPECT_NEAR(rate_infinity(reg, 3.0, 100.0), 3 * 10709.304499068297, 1e-5);
  auto id = [](double r) { return r; };
  EXPECT_NEAR(rate_infinity(id, 1.0, std::exp(std::numbers::e)), 15.154262241479264, 1e-9);
  EXPECT_EQ(kind_of([&] { rate_infinity(id, 1.0, 2.0); }), ErrorKind::regime);
}

TEST(Rates, RateOccupation) {
  const auto phi = ScaleFunction::power(1, 2);
  // Theta(t) = log t
  ThetaFunction t2(VolumeModel::power(1, 2), phi, Coord{0.0, 0.0}, 1.0);
  const double t = 1e8;
  const double L = std::log(std::log(std::log(t)));
  EXPECT_NEAR(rate_occupation(t2, t) / (std::log(t / L) * L), 1.0, 1e-6);
  // Theta(t) = 2(sqrt t - 1) is recurrent too; value frozen from 30-digit arithmetic
  ThetaFunction t1(VolumeModel::power(1, 1), phi, Coord{0.0}, 1.0);
  EXPECT_NEAR(rate_occupation(t1, t) / 30279.911106064185, 1.0, 1e-6);
  EXPECT_NEAR(rate_occupation_simple(t1, t) / 17068.901508087132, 1.0, 1e-8);
  // transient profile has no occupation rate
  ThetaFunction t3(VolumeModel::power(1, 3), phi, Coord{0.0, 0.0, 0.0}, 1.0);
  EXPECT_EQ(kind_of([&] { rate_occupation(t3, t); }), ErrorKind::regime);
  // Theta(1e5) = 11.5 < e^e
  EXPECT_EQ(kind_of([&] { rate_occupation(t2, 1e5); }), ErrorKind::regime);
}

TEST(ScalingFit, PowerAndMixed) {
  const auto s = estimate_scaling([](double r) { return r * r + r; }, 1.0, 1e4);
  EXPECT_GE(s.beta1, 1.0);
  EXPECT_LE(s.beta2, 2.0);
  EXPECT_TRUE(check_scaling([](double r) { return r * r + r; }, s, 1.0, 1e4));
}
