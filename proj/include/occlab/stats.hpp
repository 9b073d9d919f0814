#pragma once

// Sample statistics, goodness-of-fit tests, least squares, isotonic
// projection and the percentile bootstrap.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>

#include "occlab/error.hpp"
#include "occlab/rng.hpp"

namespace occlab::stats {

inline double mean(std::span<const double> x) {
  require(!x.empty(), ErrorKind::insufficient_data, "mean of an empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance(std::span<const double> x) {
  require(x.size() >= 2, ErrorKind::insufficient_data, "variance needs two samples");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double standard_error(std::span<const double> x) {
  return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

// Linear interpolation between order statistics (type 7).
inline double quantile(std::vector<double> x, double q) {
  require(!x.empty(), ErrorKind::insufficient_data, "quantile of an empty sample");
  std::sort(x.begin(), x.end());
  const double pos = q * static_cast<double>(x.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (pos - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

struct KsResult {
  double statistic = 0.0;
  double critical = 0.0;
  bool pass = false;
};

// Two-sample Kolmogorov-Smirnov; `c_alpha` = 1.628 is the asymptotic 1%
// critical coefficient.
inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b, double c_alpha = 1.628) {
  require(!a.empty() && !b.empty(), ErrorKind::insufficient_data, "KS test needs two nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KsResult out;
  out.statistic = d;
  out.critical = c_alpha * std::sqrt((n + m) / (n * m));
  out.pass = d <= out.critical;
  return out;
}

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  bool pass = false;
};

// Pearson goodness of fit of `observed` counts against cell probabilities.
// Cells with expected count below `min_expected` are pooled from the right.
inline ChiSquareResult chi_square_gof(const std::vector<double>& observed, const std::vector<double>& probs,
                                      double alpha = 0.01, double min_expected = 5.0) {
  require(observed.size() == probs.size() && !observed.empty(), ErrorKind::validation,
          "chi-square needs matching observed and expected cells");
  const double n = std::accumulate(observed.begin(), observed.end(), 0.0);
  const double ptot = std::accumulate(probs.begin(), probs.end(), 0.0);
  std::vector<double> obs, expct;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    o_acc += observed[i];
    e_acc += n * probs[i] / ptot;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (expct.empty()) {
      obs.push_back(o_acc);
      expct.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      expct.back() += e_acc;
    }
  }
  require(expct.size() >= 2, ErrorKind::insufficient_data, "chi-square needs at least two pooled cells");
  ChiSquareResult out;
  for (std::size_t i = 0; i < obs.size(); ++i) out.statistic += (obs[i] - expct[i]) * (obs[i] - expct[i]) / expct[i];
  out.dof = static_cast<int>(obs.size()) - 1;
  out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(out.dof), out.statistic));
  out.pass = out.p_value >= alpha;
  return out;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

inline LinearFit weighted_least_squares(std::span<const double> x, std::span<const double> y,
                                        std::span<const double> w) {
  require(x.size() == y.size() && x.size() == w.size(), ErrorKind::validation, "least squares needs equal lengths");
  require(x.size() >= 2, ErrorKind::insufficient_data, "least squares needs two points");
  double sw = 0, mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sw += w[i], mx += w[i] * x[i], my += w[i] * y[i];
  mx /= sw;
  my /= sw;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += w[i] * (x[i] - mx) * (x[i] - mx);
    sxy += w[i] * (x[i] - mx) * (y[i] - my);
    syy += w[i] * (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0, ErrorKind::insufficient_data, "least squares needs distinct abscissae");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r_squared = syy > 0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return f;
}

inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  std::vector<double> w(x.size(), 1.0);
  return weighted_least_squares(x, y, w);
}

// Pool-adjacent-violators: the weighted L2 projection onto nonincreasing
// sequences.
inline std::vector<double> isotonic_nonincreasing(std::span<const double> y, std::span<const double> w = {}) {
  struct Block {
    double value, weight;
    std::size_t count;
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < y.size(); ++i) {
    blocks.push_back({y[i], w.empty() ? 1.0 : w[i], 1});
    while (blocks.size() >= 2 && blocks[blocks.size() - 2].value < blocks.back().value) {
      auto b = blocks.back();
      blocks.pop_back();
      auto& a = blocks.back();
      const double tw = a.weight + b.weight;
      a.value = (a.value * a.weight + b.value * b.weight) / tw;
      a.weight = tw;
      a.count += b.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.value);
  return out;
}

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Percentile bootstrap of statistic(resample). Resample b draws from the
// counter stream (seed, b, bootstrap), so intervals do not depend on the
// order resamples are evaluated in.
template <class Statistic>
Interval bootstrap_interval(std::span<const double> sample, Statistic&& statistic, std::uint64_t seed,
                            int resamples = 200, double level = 0.95) {
  require(!sample.empty(), ErrorKind::insufficient_data, "bootstrap of an empty sample");
  std::vector<double> values(static_cast<std::size_t>(resamples));
  std::vector<double> draw(sample.size());
  for (int b = 0; b < resamples; ++b) {
    CounterRng rng(seed, static_cast<std::uint64_t>(b), stream::bootstrap);
    for (auto& v : draw) {
      const auto k = static_cast<std::size_t>(rng.uniform() * static_cast<double>(sample.size()));
      v = sample[std::min(k, sample.size() - 1)];
    }
    values[static_cast<std::size_t>(b)] = statistic(draw);
  }
  const double tail = (1.0 - level) / 2.0;
  return {quantile(values, tail), quantile(values, 1.0 - tail)};
}

}  // namespace occlab::stats
