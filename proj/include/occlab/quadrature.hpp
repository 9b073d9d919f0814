#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace occlab {

struct QuadratureResult {
  double value = 0.0;
  double error_estimate = 0.0;
  std::size_t evaluations = 0;
  bool converged = false;
};

// Trapezoid rule with doubling refinement and Richardson extrapolation of the
// successive estimates (Romberg). Stops when two consecutive extrapolated
// estimates agree to rel_tol.
template <class F>
QuadratureResult romberg(F&& f, double a, double b, double rel_tol = 1e-10, int max_level = 24, int min_level = 4) {
  QuadratureResult out;
  if (a == b) {
    out.converged = true;
    return out;
  }
  constexpr int kMaxCols = 8;
  std::array<double, kMaxCols> prev{}, cur{};
  double h = b - a;
  double trap = 0.5 * h * (f(a) + f(b));
  out.evaluations = 2;
  prev[0] = trap;
  std::size_t intervals = 1;
  for (int level = 1; level <= max_level; ++level) {
    h *= 0.5;
    double mid_sum = 0.0;
    for (std::size_t i = 0; i < intervals; ++i) mid_sum += f(a + (2.0 * static_cast<double>(i) + 1.0) * h);
    out.evaluations += intervals;
    intervals *= 2;
    trap = 0.5 * trap + h * mid_sum;
    cur[0] = trap;
    const int cols = level + 1 < kMaxCols ? level + 1 : kMaxCols;
    double factor = 4.0;
    for (int j = 1; j < cols; ++j) {
      cur[j] = cur[j - 1] + (cur[j - 1] - prev[j - 1]) / (factor - 1.0);
      factor *= 4.0;
    }
    const double best = cur[cols - 1];
    const double last = prev[cols - 2 >= 0 ? cols - 2 : 0];
    out.value = best;
    out.error_estimate = std::abs(best - last);
    if (level >= min_level && out.error_estimate <= rel_tol * std::abs(best)) {
      out.converged = true;
      return out;
    }
    if (level >= min_level && best == 0.0 && last == 0.0) {
      out.converged = true;
      return out;
    }
    prev = cur;
  }
  return out;
}

// Integral of f over [a, b] (0 < a <= b) on a geometric grid: the
// substitution s = e^u turns it into an integral of f(e^u) e^u over
// [log a, log b].
template <class F>
QuadratureResult integrate_geometric(F&& f, double a, double b, double rel_tol = 1e-10) {
  return romberg(
      [&](double u) {
        const double s = std::exp(u);
        return f(s) * s;
      },
      std::log(a), std::log(b), rel_tol);
}

}  // namespace occlab
