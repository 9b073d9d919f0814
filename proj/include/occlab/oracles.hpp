#pragma once

// Closed-form ground truth used to check the simulators: first Bessel zeros,
// the Ciesielski-Taylor constant, mean exit times of isotropic stable
// processes from balls, and the total occupation mean of transient Brownian
// motion. Brownian motion here has generator (1/2) Laplacian.

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "occlab/error.hpp"

namespace occlab {

// Lanczos approximation, g = 7, 9 coefficients.
inline constexpr double kLanczosG = 7.0;
inline constexpr std::array<double, 9> kLanczosCoefficients = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

inline double lanczos_gamma(double x) {
  if (x < 0.5) {
    // reflection
    return std::numbers::pi / (std::sin(std::numbers::pi * x) * lanczos_gamma(1.0 - x));
  }
  x -= 1.0;
  double a = kLanczosCoefficients[0];
  const double t = x + kLanczosG + 0.5;
  for (std::size_t i = 1; i < kLanczosCoefficients.size(); ++i) a += kLanczosCoefficients[i] / (x + static_cast<double>(i));
  return std::sqrt(2.0 * std::numbers::pi) * std::pow(t, x + 0.5) * std::exp(-t) * a;
}

struct BesselSpec {
  double nu = 0.0;
  int series_terms = 30;  // minimum; more are added until the tail is negligible
};

// J_nu(z) by its ascending series, summed in long double. Cancellation grows
// with z; the zero finder only goes to 20.
inline double bessel_j(const BesselSpec& spec, double z) {
  require(spec.nu >= -0.5, ErrorKind::domain, "Bessel order must be >= -1/2");
  require(z > 0.0, ErrorKind::domain, "Bessel series evaluated at z <= 0");
  const long double half = 0.5L * z;
  const long double q = half * half;
  long double term = std::pow(half, static_cast<long double>(spec.nu)) / lanczos_gamma(spec.nu + 1.0);
  long double sum = term;
  for (int k = 1;; ++k) {
    term *= -q / (static_cast<long double>(k) * (static_cast<long double>(k) + spec.nu));
    sum += term;
    // once past the peak term, stop when the remaining alternating tail is
    // below the rounding floor
    if (k >= spec.series_terms && k > half && std::abs(term) <= 1e-19L * std::abs(sum)) break;
    if (k > 500) break;
  }
  return static_cast<double>(sum);
}

// Smallest positive root of J_nu: first sign change on a 0.01 scan of (0, 20],
// refined by bisection to 1e-13.
inline double bessel_first_zero(double nu) {
  require(nu >= -0.5, ErrorKind::domain, "Bessel order must be >= -1/2");
  const BesselSpec spec{nu, 30};
  const double step = 0.01;
  double a = step, fa = bessel_j(spec, a);
  for (double b = 2 * step; b <= 20.0 + 1e-12; b += step) {
    const double fb = bessel_j(spec, b);
    if ((fa > 0) != (fb > 0)) {
      double lo = a, hi = b, flo = fa;
      while (hi - lo > 1e-13) {
        const double mid = 0.5 * (lo + hi);
        const double fm = bessel_j(spec, mid);
        if ((fm > 0) == (flo > 0)) {
          lo = mid;
          flo = fm;
        } else {
          hi = mid;
        }
      }
      return 0.5 * (lo + hi);
    }
    a = b;
    fa = fb;
  }
  fail(ErrorKind::bracket, "no sign change of J_nu on (0, 20] for nu = " + std::to_string(nu));
}

// 2 / p_d^2 with p_d the first positive zero of J_{d/2 - 2}: the small-ball
// limsup constant of Brownian total occupation time in d >= 3.
inline double ct_constant(int d) {
  require(d >= 3, ErrorKind::domain, "Ciesielski-Taylor constant needs d >= 3 (total occupation is infinite for d <= 2)");
  const double p = bessel_first_zero(d / 2.0 - 2.0);
  return 2.0 / (p * p);
}

// E^0[tau_{B(0,r)}]. alpha = 2 is Brownian motion with generator (1/2)
// Laplacian; alpha < 2 is the isotropic stable process with exponent |xi|^alpha.
inline double getoor_mean_exit(double alpha, int d, double r) {
  require(alpha > 0.0 && alpha <= 2.0, ErrorKind::domain, "alpha must lie in (0, 2]");
  require(d >= 1, ErrorKind::domain, "dimension must be >= 1");
  require(r > 0.0, ErrorKind::domain, "radius must be positive");
  if (alpha == 2.0) return r * r / d;
  return std::pow(r, alpha) * lanczos_gamma(d / 2.0) /
         (std::pow(2.0, alpha) * lanczos_gamma(1.0 + alpha / 2.0) * lanczos_gamma((d + alpha) / 2.0));
}

// E^0[U(B(0,r), infinity)] = r^2 / (d - 2) for Brownian motion with generator
// (1/2) Laplacian.
inline double bm_total_occupation_mean(int d, double r) {
  require(d >= 3, ErrorKind::domain, "total occupation mean is infinite for d <= 2");
  require(r > 0.0, ErrorKind::domain, "radius must be positive");
  return r * r / (d - 2);
}

// Upper bound on E^0[U(B(0,r), infinity)] - E^0[U(B(0,r), T)]: the Gaussian
// density is at most (2 pi s)^{-d/2}, so the missing mass is at most
// |B(0,r)| * integral_T^infinity (2 pi s)^{-d/2} ds.
inline double bm_occupation_truncation_bound(int d, double r, double horizon) {
  require(d >= 3, ErrorKind::domain, "truncation bound needs d >= 3");
  const double ball = std::pow(std::numbers::pi, d / 2.0) / lanczos_gamma(d / 2.0 + 1.0) * std::pow(r, d);
  const double tail = std::pow(2.0 * std::numbers::pi, -d / 2.0) * std::pow(horizon, 1.0 - d / 2.0) / (d / 2.0 - 1.0);
  return ball * tail;
}

}  // namespace occlab
