#pragma once

// Estimators for the occupation-time LILs and their assumptions: empirical
// limsup curves, the kappa_1 plateau, exit-tail fits, mean-exit
// comparability, occupation-mean bounds and the recurrence verdict.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "occlab/error.hpp"
#include "occlab/scale.hpp"
#include "occlab/stats.hpp"

namespace occlab {

enum class Regime { zero, infinity };

inline const char* to_string(Regime r) { return r == Regime::zero ? "zero" : "infinity"; }

// Occupation of nested balls B(x, r_n) sampled at checkpoint times
// T_{k,n} = kappas[k] * rates[n], for one replica.
struct OccupationGrid {
  std::vector<double> radii;
  std::vector<double> rates;
  std::vector<double> kappas;
  std::vector<double> occupation;      // [k * radii.size() + n]
  std::vector<std::uint8_t> excluded;  // censored windows
  double horizon = 0.0;

  std::size_t slot(std::size_t k, std::size_t n) const { return k * radii.size() + n; }
  double window(std::size_t k, std::size_t n) const { return kappas[k] * rates[n]; }
  std::size_t excluded_count() const { return static_cast<std::size_t>(std::count(excluded.begin(), excluded.end(), 1)); }
};

// Streams holding intervals (t0, t1, distance to the center) and records the
// occupation of every ball of the grid at every checkpoint. One shell
// accumulator per radius, so each interval costs a binary search.
class NestedOccupation {
 public:
  NestedOccupation(std::vector<double> radii, std::vector<double> rates, std::vector<double> kappas, double horizon) {
    require(!radii.empty() && !kappas.empty() && radii.size() == rates.size(), ErrorKind::invalid_grid,
            "occupation grid needs radii, matching rates and kappas");
    grid_.radii = std::move(radii);
    grid_.rates = std::move(rates);
    grid_.kappas = std::move(kappas);
    grid_.horizon = horizon;
    const std::size_t n = grid_.radii.size(), total = n * grid_.kappas.size();
    grid_.occupation.assign(total, 0.0);
    grid_.excluded.assign(total, 1);

    order_.resize(n);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](auto a, auto b) { return grid_.radii[a] < grid_.radii[b]; });
    sorted_radii_.resize(n);
    rank_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      sorted_radii_[j] = grid_.radii[order_[j]];
      rank_[order_[j]] = j;
    }
    shells_.assign(n + 1, 0.0);

    checkpoints_.resize(total);
    std::iota(checkpoints_.begin(), checkpoints_.end(), std::size_t{0});
    auto at = [&](std::size_t s) { return grid_.window(s / n, s % n); };
    std::stable_sort(checkpoints_.begin(), checkpoints_.end(), [&](auto a, auto b) { return at(a) < at(b); });
    times_.resize(total);
    for (std::size_t i = 0; i < total; ++i) times_[i] = at(checkpoints_[i]);
  }

  double last_checkpoint() const { return times_.empty() ? 0.0 : times_.back(); }
  bool done() const { return next_ >= times_.size(); }

  // Time in [t0, t1) spent at `distance` from the center.
  void add(double t0, double t1, double distance) {
    const auto shell = static_cast<std::size_t>(
        std::upper_bound(sorted_radii_.begin(), sorted_radii_.end(), distance) - sorted_radii_.begin());
    while (next_ < times_.size() && times_[next_] <= t1) {
      const double tc = times_[next_];
      if (tc > t0) {
        shells_[shell] += tc - t0;
        t0 = tc;
      }
      record(checkpoints_[next_]);
      ++next_;
    }
    if (t1 > t0) shells_[shell] += t1 - t0;
  }

  // Checkpoints not reached by `t_end` stay excluded.
  OccupationGrid finish() && { return std::move(grid_); }

 private:
  void record(std::size_t slot) {
    const std::size_t n = slot % grid_.radii.size();
    // inside B(r) iff distance < r: shells with index <= rank
    double u = 0.0;
    for (std::size_t j = 0; j <= rank_[n]; ++j) u += shells_[j];
    grid_.occupation[slot] = u;
    grid_.excluded[slot] = 0;
  }

  OccupationGrid grid_;
  std::vector<std::size_t> order_, rank_;
  std::vector<double> sorted_radii_, shells_;
  std::vector<std::size_t> checkpoints_;
  std::vector<double> times_;
  std::size_t next_ = 0;
};

struct LimsupCurve {
  std::vector<double> kappas;
  std::vector<double> raw;
  std::vector<double> projected;
  std::vector<double> ci_lo, ci_hi;
  Regime regime = Regime::infinity;
  std::vector<double> radii;
  std::size_t replicas = 0;
  std::size_t excluded_windows = 0;
  std::size_t total_windows = 0;

  double displacement() const {
    double d = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) d = std::max(d, std::abs(raw[i] - projected[i]));
    return d;
  }
};

struct LimsupOptions {
  std::size_t min_radii = 20;
  std::size_t min_replicas = 100;
  int resamples = 200;
  double level = 0.95;
  std::uint64_t bootstrap_seed = 0;
};

// Per-replica running maximum of U / T over the radius grid, then the median
// over replicas, then the nonincreasing projection.
inline LimsupCurve limsup_curve(const std::vector<OccupationGrid>& samples, Regime regime, const LimsupOptions& opt = {}) {
  require(samples.size() >= opt.min_replicas, ErrorKind::insufficient_data,
          "limsup curve needs >= " + std::to_string(opt.min_replicas) + " replicas, got " + std::to_string(samples.size()));
  const auto& g0 = samples.front();
  require(g0.radii.size() >= opt.min_radii, ErrorKind::invalid_grid,
          "limsup curve needs >= " + std::to_string(opt.min_radii) + " radii, got " + std::to_string(g0.radii.size()));
  require(!g0.kappas.empty() && std::is_sorted(g0.kappas.begin(), g0.kappas.end()), ErrorKind::invalid_grid,
          "kappas must be nonempty and increasing");
  const std::size_t K = g0.kappas.size(), N = g0.radii.size();
  for (const auto& g : samples) {
    require(g.kappas == g0.kappas && g.radii == g0.radii && g.occupation.size() == K * N, ErrorKind::validation,
            "replica grids disagree");
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t n = 0; n < N; ++n)
        if (g.window(k, n) > g.horizon * (1 + 1e-12))
          fail(ErrorKind::insufficient_horizon, "window (kappa=" + std::to_string(g.kappas[k]) + ", n=" + std::to_string(n) +
                                                    ") needs time " + std::to_string(g.window(k, n)) + " > horizon " +
                                                    std::to_string(g.horizon));
  }

  LimsupCurve c;
  c.kappas = g0.kappas;
  c.radii = g0.radii;
  c.regime = regime;
  c.replicas = samples.size();
  c.total_windows = samples.size() * K * N;
  for (const auto& g : samples) c.excluded_windows += g.excluded_count();

  for (std::size_t k = 0; k < K; ++k) {
    std::vector<double> per_replica;
    per_replica.reserve(samples.size());
    for (const auto& g : samples) {
      double best = -1.0;
      for (std::size_t n = 0; n < N; ++n)
        if (!g.excluded[g.slot(k, n)]) best = std::max(best, g.occupation[g.slot(k, n)] / g.window(k, n));
      if (best >= 0.0) per_replica.push_back(best);
    }
    require(!per_replica.empty(), ErrorKind::censoring,
            "every window at kappa=" + std::to_string(g0.kappas[k]) + " was censored");
    c.raw.push_back(stats::median(per_replica));
    const auto ci = stats::bootstrap_interval(
        per_replica, [](std::span<const double> s) { return stats::median({s.begin(), s.end()}); }, opt.bootstrap_seed,
        opt.resamples, opt.level);
    c.ci_lo.push_back(ci.lo);
    c.ci_hi.push_back(ci.hi);
  }
  c.projected = stats::isotonic_nonincreasing(c.raw);
  return c;
}

struct Kappa1Estimate {
  double value = 0.0;
  double spread = 0.0;  // max - min of kappa * f over the plateau points
  std::vector<double> plateau;
};

inline Kappa1Estimate kappa1_estimate(const LimsupCurve& curve) {
  require(curve.regime == Regime::infinity, ErrorKind::regime, "kappa_1 is defined for the regime at infinity");
  std::vector<double> kf;
  for (std::size_t i = 0; i < curve.kappas.size(); ++i)
    if (curve.projected[i] < 0.5) kf.push_back(curve.kappas[i] * curve.projected[i]);
  require(kf.size() >= 4, ErrorKind::insufficient_data,
          "kappa_1 needs >= 4 curve points below 1/2, got " + std::to_string(kf.size()));
  Kappa1Estimate e;
  e.plateau.assign(kf.end() - 4, kf.end());
  e.value = stats::median(e.plateau);
  const auto [lo, hi] = std::minmax_element(e.plateau.begin(), e.plateau.end());
  e.spread = *hi - *lo;
  return e;
}

struct ExitTailFit {
  double slope = 0.0;        // central least-squares decay rate
  double slope_lower = 0.0;  // C7: upper envelope S(n) <= C6 exp(-C7 n)
  double slope_upper = 0.0;  // C5: lower envelope S(n) >= C4 exp(-C5 n)
  double c4 = 0.0, c6 = 0.0;
  double r_squared = 0.0;
  double tail_ratio = 1.0;  // mean local decay, second half over first half
  // max / min of S(n) exp(slope n): stays near 1 for exponential tails and
  // grows with n_max for heavier ones
  double envelope_spread = 1.0;
  int n_max = 0;
  std::vector<double> survival;  // S(1..n_max)
  std::size_t samples = 0;
  bool sp_violation = false;
};

struct ExitTailOptions {
  std::size_t min_samples = 10000;
  std::size_t min_exceedances = 50;
  double max_censoring = 0.01;
  double min_r_squared = 0.9;
  double min_tail_ratio = 0.5;
};

// Survival of tau / Phi(r) at n = 1..n_max, log-linear fit weighted by the
// exceedance counts, and the pointwise exponential envelopes.
inline ExitTailFit exit_tail_fit(std::span<const double> taus, double scale_value, std::size_t censored = 0,
                                 const ExitTailOptions& opt = {}) {
  require(scale_value > 0, ErrorKind::validation, "scale value must be positive");
  require(taus.size() >= opt.min_samples, ErrorKind::insufficient_data,
          "exit tail fit needs >= " + std::to_string(opt.min_samples) + " samples, got " + std::to_string(taus.size()));
  const double total = static_cast<double>(taus.size() + censored);
  require(static_cast<double>(censored) < opt.max_censoring * total, ErrorKind::censoring,
          "censoring rate " + std::to_string(censored / total) + " is not below " + std::to_string(opt.max_censoring));

  std::vector<double> scaled(taus.begin(), taus.end());
  for (double& v : scaled) v /= scale_value;
  std::sort(scaled.begin(), scaled.end());
  auto exceed = [&](double n) {
    return static_cast<double>(scaled.end() - std::lower_bound(scaled.begin(), scaled.end(), n));
  };
  ExitTailFit f;
  f.samples = taus.size();
  std::vector<double> ns, logs, weights;
  for (int n = 1;; ++n) {
    const double count = exceed(n);
    if (count < static_cast<double>(opt.min_exceedances)) break;
    f.n_max = n;
    ns.push_back(n);
    f.survival.push_back(count / static_cast<double>(taus.size()));
    logs.push_back(std::log(f.survival.back()));
    weights.push_back(count);
  }
  require(ns.size() >= 3, ErrorKind::insufficient_data,
          "exit tail has only " + std::to_string(ns.size()) + " usable n values, need >= 3");

  const auto lf = stats::weighted_least_squares(ns, logs, weights);
  f.slope = -lf.slope;
  f.r_squared = lf.r_squared;

  std::vector<double> local;
  for (std::size_t i = 0; i + 1 < logs.size(); ++i) local.push_back(logs[i] - logs[i + 1]);
  f.slope_lower = *std::min_element(local.begin(), local.end());
  f.slope_upper = *std::max_element(local.begin(), local.end());
  f.c6 = 0.0;
  f.c4 = kInf;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    f.c6 = std::max(f.c6, f.survival[i] * std::exp(f.slope_lower * ns[i]));
    f.c4 = std::min(f.c4, f.survival[i] * std::exp(f.slope_upper * ns[i]));
  }
  double emax = 0.0, emin = kInf;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double e = f.survival[i] * std::exp(f.slope * ns[i]);
    emax = std::max(emax, e);
    emin = std::min(emin, e);
  }
  f.envelope_spread = emax / emin;
  const std::size_t half = local.size() / 2;
  const double first = std::accumulate(local.begin(), local.begin() + static_cast<std::ptrdiff_t>(std::max<std::size_t>(half, 1)), 0.0) /
                       static_cast<double>(std::max<std::size_t>(half, 1));
  const double second = std::accumulate(local.begin() + static_cast<std::ptrdiff_t>(half), local.end(), 0.0) /
                        static_cast<double>(local.size() - half);
  f.tail_ratio = first > 0 ? second / first : 0.0;
  f.sp_violation = f.r_squared < opt.min_r_squared || f.slope_lower <= 0 || f.tail_ratio < opt.min_tail_ratio;
  return f;
}

struct ExitSample {
  double radius = 0.0;
  std::vector<double> taus;  // uncensored exits
  std::size_t censored = 0;
};

struct ComparabilityReport {
  double lambda_hat = 1.0;
  std::vector<double> radii, means, standard_errors, scale_values, ratios;
};

inline ComparabilityReport mean_exit_comparability(const std::vector<ExitSample>& samples,
                                                   const std::function<double(double)>& phi,
                                                   std::size_t min_exits = 1000, double max_censoring = 0.01) {
  require(samples.size() >= 3, ErrorKind::insufficient_data, "comparability needs >= 3 radii");
  ComparabilityReport rep;
  for (const auto& s : samples) {
    const double total = static_cast<double>(s.taus.size() + s.censored);
    require(static_cast<double>(s.censored) <= max_censoring * total, ErrorKind::censoring,
            "radius " + std::to_string(s.radius) + ": censored fraction " + std::to_string(s.censored / total) +
                " exceeds " + std::to_string(max_censoring));
    require(s.taus.size() >= min_exits, ErrorKind::insufficient_data,
            "radius " + std::to_string(s.radius) + " has " + std::to_string(s.taus.size()) + " exits, need >= " +
                std::to_string(min_exits));
    const double m = stats::mean(s.taus), v = phi(s.radius);
    require(v > 0, ErrorKind::invalid_scale, "scale must be positive");
    rep.radii.push_back(s.radius);
    rep.means.push_back(m);
    rep.standard_errors.push_back(stats::standard_error(s.taus));
    rep.scale_values.push_back(v);
    rep.ratios.push_back(m / v);
    rep.lambda_hat = std::max({rep.lambda_hat, m / v, v / m});
  }
  return rep;
}

struct MeanBound {
  double k0_hat = 0.0;
  std::vector<double> ratios;
  double last_decade_slope = 0.0;
  bool pass = false;
};

// K0 = max_t mean U(F,t) / (|F|_1 Theta(t)). A drift of the ratio above
// `slope_tolerance` per unit log t over the last decade counts as explosive.
template <class Theta>
MeanBound occupation_mean_bound(std::span<const double> times, std::span<const double> mean_u, const Theta& theta,
                                double f_l1, double slope_tolerance = 0.05) {
  require(times.size() == mean_u.size() && times.size() >= 2, ErrorKind::validation, "need matching t grid and means");
  require(f_l1 >= 0, ErrorKind::validation, "F_l1 must be nonnegative");
  MeanBound b;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double th = theta(times[i]);
    require(th > 0, ErrorKind::range, "Theta(t) must be positive on the grid");
    const double r = f_l1 > 0 ? mean_u[i] / (f_l1 * th) : 0.0;
    b.ratios.push_back(r);
    b.k0_hat = std::max(b.k0_hat, r);
  }
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] >= times.back() / 10.0 && b.ratios[i] > 0) {
      lx.push_back(std::log(times[i]));
      ly.push_back(std::log(b.ratios[i]));
    }
  if (lx.size() >= 2) b.last_decade_slope = stats::least_squares(lx, ly).slope;
  b.pass = std::isfinite(b.k0_hat) && b.last_decade_slope <= slope_tolerance;
  return b;
}

template <class Scale>
Recurrence recurrence_test(const ThetaFunction<Scale>& theta) {
  return theta.classify_tail().verdict;
}

struct TestFunction {
  enum class Kind { compact, weighted } kind = Kind::compact;
  double gamma = 0.0;
};

// True iff F is compactly supported, or d(x)^gamma F bounded with
// gamma > beta1 d2 / (beta1 - d2).
inline bool test_function_class_check(const TestFunction& f, double beta1, double d2) {
  if (f.kind == TestFunction::Kind::compact) return true;
  require(beta1 > d2, ErrorKind::regime, "weighted test functions need beta1 > d2");
  return f.gamma > beta1 * d2 / (beta1 - d2);
}

struct DriftFit {
  std::vector<double> running_max;
  double slope = 0.0;
};

// Running maximum of a positive series and its log-log slope against t.
inline DriftFit running_max_drift(std::span<const double> times, std::span<const double> values) {
  require(times.size() == values.size() && times.size() >= 2, ErrorKind::validation, "need matching series");
  DriftFit d;
  double m = 0.0;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < times.size(); ++i) {
    m = std::max(m, values[i]);
    d.running_max.push_back(m);
    if (m > 0) {
      lx.push_back(std::log(times[i]));
      ly.push_back(std::log(m));
    }
  }
  require(lx.size() >= 2, ErrorKind::insufficient_data, "running maximum stays zero");
  d.slope = stats::least_squares(lx, ly).slope;
  return d;
}

}  // namespace occlab
