#pragma once

// Scale functions (the characteristic time of a process at spatial scale r),
// their regularization, monotone inversion, the recurrence integral Theta and
// the three iterated-logarithm rate functions.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "occlab/error.hpp"
#include "occlab/geometry.hpp"
#include "occlab/quadrature.hpp"

namespace occlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Bisection for an increasing continuous f. Returns x in [lo, hi] with
// |f(x) - y| <= 1e-10 * max(1, |y|), or the bracket midpoint once the bracket
// has collapsed to machine precision.
template <class F>
double invert_monotone(F&& f, double y, double lo, double hi, int max_iter = 200) {
  require(lo <= hi, ErrorKind::bracket, "inverted bracket");
  const double flo = f(lo), fhi = f(hi);
  require(flo <= y && y <= fhi, ErrorKind::bracket,
          "target " + std::to_string(y) + " outside [f(lo), f(hi)] = [" + std::to_string(flo) + ", " +
              std::to_string(fhi) + "]");
  const double tol = 1e-10 * std::max(1.0, std::abs(y));
  if (std::abs(flo - y) <= tol) return lo;
  if (std::abs(fhi - y) <= tol) return hi;
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < max_iter; ++it) {
    mid = 0.5 * (lo + hi);
    if (!(lo < mid && mid < hi)) break;
    const double fm = f(mid);
    if (std::abs(fm - y) <= tol) return mid;
    if (fm < y)
      lo = mid;
    else
      hi = mid;
  }
  return mid;
}

// Inversion of an increasing f on (domain_lo, domain_hi) with a bracket grown
// geometrically from [lo, hi].
template <class F>
double invert_increasing(F&& f, double y, double lo, double hi, double domain_lo, double domain_hi) {
  lo = std::max(lo, domain_lo);
  hi = std::min(hi, domain_hi);
  for (int i = 0; i < 200 && f(hi) < y && hi < domain_hi; ++i) hi = std::min(domain_hi, hi * 2.0 + 1.0);
  for (int i = 0; i < 200 && f(lo) > y && lo > domain_lo; ++i)
    lo = std::max(domain_lo, lo > 0.0 ? lo * 0.5 : 2.0 * lo - 1.0);
  return invert_monotone(f, y, lo, hi);
}

struct ScalingIndices {
  double beta1 = 0.0;
  double beta2 = 0.0;
  double C_L = 1.0;
  double C_U = 1.0;
};

// Fits two-sided power scaling C_L (r/s)^beta1 <= f(r)/f(s) <= C_U (r/s)^beta2
// on a log grid over [lo, hi]: beta from the extreme exponents over pairs with
// r/s >= 2, constants from the pointwise envelope.
template <class F>
ScalingIndices estimate_scaling(F&& f, double lo, double hi, int points = 48) {
  require(lo > 0 && hi > lo, ErrorKind::invalid_grid, "scaling fit needs 0 < lo < hi");
  std::vector<double> r(points), v(points);
  for (int i = 0; i < points; ++i) {
    r[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    v[i] = f(r[i]);
    require(v[i] > 0.0, ErrorKind::invalid_scale, "scale function not positive at r = " + std::to_string(r[i]));
  }
  ScalingIndices out{kInf, -kInf, 1.0, 1.0};
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < i; ++j) {
      if (r[i] / r[j] < 2.0) continue;
      const double e = std::log(v[i] / v[j]) / std::log(r[i] / r[j]);
      out.beta1 = std::min(out.beta1, e);
      out.beta2 = std::max(out.beta2, e);
    }
  if (!std::isfinite(out.beta1)) {
    const double e = std::log(v.back() / v.front()) / std::log(hi / lo);
    out.beta1 = out.beta2 = e;
  }
  for (int i = 0; i < points; ++i)
    for (int j = 0; j < i; ++j) {
      const double lr = std::log(r[i] / r[j]), lv = std::log(v[i] / v[j]);
      out.C_L = std::min(out.C_L, std::exp(lv - out.beta1 * lr));
      out.C_U = std::max(out.C_U, std::exp(lv - out.beta2 * lr));
    }
  return out;
}

template <class F>
bool check_scaling(F&& f, const ScalingIndices& idx, double lo, double hi, int points = 48, double rel_tol = 1e-9) {
  for (int i = 0; i < points; ++i)
    for (int j = 0; j <= i; ++j) {
      const double r = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
      const double s = lo * std::pow(hi / lo, static_cast<double>(j) / (points - 1));
      const double q = f(r) / f(s);
      if (q < idx.C_L * std::pow(r / s, idx.beta1) * (1 - rel_tol)) return false;
      if (q > idx.C_U * std::pow(r / s, idx.beta2) * (1 + rel_tol)) return false;
    }
  return true;
}

// 1 / sup_{0 <= rho <= 1/r} psi(rho) for a radial exponent profile. The sup is
// taken over a uniform grid including the endpoint, so nondecreasing profiles
// give exactly 1 / psi(1/r).
inline double levy_scale(const std::function<double(double)>& psi, double r, int grid = 256) {
  require(r > 0.0, ErrorKind::validation, "levy_scale radius must be positive");
  const double top = 1.0 / r;
  double sup = psi(top);
  for (int i = 1; i < grid; ++i) sup = std::max(sup, psi(top * i / grid));
  require(sup > 0.0, ErrorKind::degenerate_scale, "exponent vanishes on |xi| <= 1/r at r = " + std::to_string(r));
  return 1.0 / sup;
}

namespace detail {
inline double radical_inverse(std::uint64_t i, std::uint64_t base) {
  double inv = 1.0 / static_cast<double>(base), f = inv, out = 0.0;
  while (i > 0) {
    out += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return out;
}
}  // namespace detail

// 1 / sup_{|xi| <= 1/r} Re q(xi) for a symbol in `dim` dimensions. The sup is
// approximated on `points` Halton points of the ball plus the 2*dim axis
// endpoints.
inline double symbol_scale(const std::function<double(std::span<const double>)>& re_q, int dim, double r,
                           int points = 4096) {
  require(r > 0.0, ErrorKind::validation, "symbol_scale radius must be positive");
  static constexpr std::uint64_t primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29};
  require(dim >= 1 && dim <= 10, ErrorKind::validation, "symbol_scale supports dimensions 1..10");
  const double top = 1.0 / r;
  std::vector<double> xi(dim);
  double sup = -kInf;
  for (int k = 0; k < dim; ++k)
    for (double sign : {-1.0, 1.0}) {
      std::fill(xi.begin(), xi.end(), 0.0);
      xi[k] = sign * top;
      sup = std::max(sup, re_q(xi));
    }
  int accepted = 0;
  for (std::uint64_t i = 1; accepted < points && i < 64ull * static_cast<std::uint64_t>(points); ++i) {
    double n2 = 0.0;
    for (int k = 0; k < dim; ++k) {
      xi[k] = 2.0 * detail::radical_inverse(i, primes[k]) - 1.0;
      n2 += xi[k] * xi[k];
    }
    if (n2 > 1.0) continue;
    for (double& v : xi) v *= top;
    sup = std::max(sup, re_q(xi));
    ++accepted;
  }
  require(sup > 0.0, ErrorKind::degenerate_scale, "symbol vanishes on |xi| <= 1/r at r = " + std::to_string(r));
  return 1.0 / sup;
}

// An increasing positive function of the radius with scaling indices.
class ScaleFunction {
 public:
  struct Power {
    double c, alpha;
  };
  struct LevyExponent {
    std::function<double(double)> psi;
  };
  struct Symbol {
    std::function<double(std::span<const double>)> re_q;
    int dimension;
    Coord center;
  };
  struct Tabulated {
    std::vector<double> log_r, log_v;
  };
  using Kind = std::variant<Power, LevyExponent, Symbol, Tabulated>;

  static ScaleFunction power(double c, double alpha) {
    require(c > 0 && alpha > 0, ErrorKind::invalid_scale, "power scale needs c > 0 and alpha > 0");
    ScaleFunction f(Power{c, alpha}, 0.0, kInf);
    f.scaling = {alpha, alpha, 1.0, 1.0};
    return f;
  }

  static ScaleFunction levy_exponent(std::function<double(double)> psi, double r_min = 1e-6, double r_max = 1e12) {
    return ScaleFunction(LevyExponent{std::move(psi)}, r_min, r_max);
  }

  static ScaleFunction symbol(std::function<double(std::span<const double>)> re_q, int dimension, Coord center,
                              double r_min = 1e-6, double r_max = 1e12) {
    return ScaleFunction(Symbol{std::move(re_q), dimension, std::move(center)}, r_min, r_max);
  }

  // (r, value) pairs, strictly increasing in both columns.
  static ScaleFunction tabulated(const std::vector<std::pair<double, double>>& table) {
    require(table.size() >= 2, ErrorKind::invalid_scale, "tabulated scale needs at least 2 points");
    Tabulated t;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto [r, v] = table[i];
      require(r > 0 && v > 0, ErrorKind::invalid_scale, "tabulated scale needs positive entries");
      if (i > 0)
        require(r > table[i - 1].first && v > table[i - 1].second, ErrorKind::invalid_scale,
                "tabulated scale must be strictly increasing in both columns");
      t.log_r.push_back(std::log(r));
      t.log_v.push_back(std::log(v));
    }
    const double lo = table.front().first, hi = table.back().first;
    return ScaleFunction(std::move(t), lo, hi);
  }

  double operator()(double r) const {
    return std::visit(
        [&](const auto& k) -> double {
          using K = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<K, Power>) {
            return k.c * std::pow(r, k.alpha);
          } else if constexpr (std::is_same_v<K, LevyExponent>) {
            return levy_scale(k.psi, r);
          } else if constexpr (std::is_same_v<K, Symbol>) {
            return symbol_scale(k.re_q, k.dimension, r);
          } else {
            const double lr = std::log(r);
            require(lr >= k.log_r.front() - 1e-12 && lr <= k.log_r.back() + 1e-12, ErrorKind::range,
                    "tabulated scale evaluated outside its table at r = " + std::to_string(r));
            auto it = std::upper_bound(k.log_r.begin(), k.log_r.end(), lr);
            std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - k.log_r.begin()), 1, k.log_r.size() - 1);
            const double w = (lr - k.log_r[i - 1]) / (k.log_r[i] - k.log_r[i - 1]);
            return std::exp(k.log_v[i - 1] + w * (k.log_v[i] - k.log_v[i - 1]));
          }
        },
        kind_);
  }

  double derivative(double r) const {
    if (const auto* p = std::get_if<Power>(&kind_)) return p->c * p->alpha * std::pow(r, p->alpha - 1.0);
    if (const auto* t = std::get_if<Tabulated>(&kind_)) {
      const double lr = std::log(r);
      auto it = std::upper_bound(t->log_r.begin(), t->log_r.end(), lr);
      std::size_t i = std::clamp<std::size_t>(static_cast<std::size_t>(it - t->log_r.begin()), 1, t->log_r.size() - 1);
      const double slope = (t->log_v[i] - t->log_v[i - 1]) / (t->log_r[i] - t->log_r[i - 1]);
      return (*this)(r) * slope / r;
    }
    const double h = 1e-5;
    return ((*this)(r * (1 + h)) - (*this)(r * (1 - h))) / (2 * h * r);
  }

  double increment(double a, double b) const { return (*this)(b) - (*this)(a); }

  double inverse(double y) const {
    if (const auto* p = std::get_if<Power>(&kind_)) {
      require(y >= 0, ErrorKind::domain, "power scale inverse of a negative value");
      return std::pow(y / p->c, 1.0 / p->alpha);
    }
    const double lo = std::isfinite(r_min_) && r_min_ > 0 ? r_min_ : 1e-300;
    const double hi = std::isfinite(r_max_) ? r_max_ : 1e300;
    const double guess_lo = std::max(lo, 1e-3), guess_hi = std::min(hi, 1e3);
    return invert_increasing(*this, y, std::min(guess_lo, guess_hi), guess_hi, lo, hi);
  }

  double r_min() const { return r_min_; }
  double r_max() const { return r_max_; }
  const Kind& kind() const { return kind_; }

  ScalingIndices scaling;

 private:
  ScaleFunction(Kind k, double lo, double hi) : kind_(std::move(k)), r_min_(lo), r_max_(hi) {}

  Kind kind_;
  double r_min_, r_max_;
};

// r -> integral_1^r s^{-1} Phi(s) ds, comparable to Phi on r >= 2.
class RegularizedScale {
 public:
  RegularizedScale(ScaleFunction base, double r_max, double rel_tol)
      : base_(std::move(base)), r_max_(r_max), rel_tol_(rel_tol) {}

  const ScaleFunction& base() const { return base_; }

  double operator()(double r) const {
    require(r >= 1.0, ErrorKind::range, "regularized scale is defined for r >= 1");
    if (r == 1.0) return 0.0;
    return increment(1.0, r);
  }

  // phi(b) - phi(a), integrated directly for accuracy.
  double increment(double a, double b) const {
    double total = 0.0;
    // unit chunks in log r keep each Romberg run short and well conditioned
    double u = std::log(a);
    const double ub = std::log(b);
    while (u < ub) {
      const double next = std::min(ub, u + 1.0);
      total += romberg([&](double v) { return base_(std::exp(v)); }, u, next, rel_tol_ * 1e-2).value;
      u = next;
    }
    return total;
  }

  double derivative(double r) const { return base_(r) / r; }

  double inverse(double y) const {
    require(y >= 0.0, ErrorKind::range, "regularized scale inverse needs y >= 0");
    if (y == 0.0) return 1.0;
    return invert_increasing(*this, y, 1.0, 16.0, 1.0, r_max_);
  }

  double r_min() const { return 1.0; }
  double r_max() const { return r_max_; }

  double comparability_constant = 1.0;
  ScalingIndices scaling;

 private:
  ScaleFunction base_;
  double r_max_;
  double rel_tol_;
};

struct RegularizeOptions {
  double r_max = 1e6;
  double rel_tol = 1e-10;
  int scan_points = 121;
};

inline RegularizedScale regularize(const ScaleFunction& base, const RegularizeOptions& opt = {}) {
  const double r_max = std::min(opt.r_max, base.r_max());
  require(base.r_min() <= 1.0 + 1e-12, ErrorKind::invalid_scale, "base scale must be defined from r = 1");
  require(r_max > 2.0, ErrorKind::invalid_scale, "regularization needs a valid range beyond r = 2");
  for (int i = 0; i <= 32; ++i) {
    const double r = std::pow(r_max, i / 32.0);
    require(base(r) > 0.0, ErrorKind::invalid_scale, "base scale not positive at r = " + std::to_string(r));
  }
  RegularizedScale reg(base, r_max, opt.rel_tol);
  double c = 1.0;
  const int n = opt.scan_points;
  // cumulative scan from r = 2 reuses increments
  double r_prev = 2.0, phi = reg(2.0);
  for (int i = 0; i < n; ++i) {
    const double r = 2.0 * std::pow(r_max / 2.0, static_cast<double>(i) / (n - 1));
    if (i > 0) phi += reg.increment(r_prev, r);
    r_prev = r;
    const double ratio = phi / base(r);
    c = std::max({c, ratio, 1.0 / ratio});
  }
  reg.comparability_constant = c;
  reg.scaling = estimate_scaling(reg, 2.0, r_max);
  return reg;
}

// Anything usable as the scale inside Theta.
template <class S>
concept MonotoneScale = requires(const S& s, double r) {
  { s(r) } -> std::convertible_to<double>;
  { s.derivative(r) } -> std::convertible_to<double>;
  { s.increment(r, r) } -> std::convertible_to<double>;
  { s.inverse(r) } -> std::convertible_to<double>;
  { s.r_max() } -> std::convertible_to<double>;
};

enum class Recurrence { recurrent, transient, inconclusive };

inline const char* to_string(Recurrence v) {
  switch (v) {
    case Recurrence::recurrent: return "recurrent";
    case Recurrence::transient: return "transient";
    case Recurrence::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ThetaTail {
  Recurrence verdict = Recurrence::inconclusive;
  double value = kInf;          // Theta(infinity) when transient
  double tail_exponent = 0.0;   // fitted log-log slope of the integrand
  double s_max = 0.0;
};

struct ThetaOptions {
  double rel_tol = 1e-9;
  double tail_s_max = 1e12;     // end of the classification grid (capped by phi(r_max))
  double slope_tol = 0.05;
};

// Theta(x, r0, t) = integral_{phi(r0)}^t ds / V(x, phi^{-1}(s)).
//
// Evaluated in the radius variable, rho = phi^{-1}(s):
//   Theta = integral_{r0}^{phi^{-1}(t)} phi'(rho) / V(x, rho) d rho,
// exactly per unit segment when V is a lattice step function.
template <MonotoneScale Scale>
class ThetaFunction {
 public:
  ThetaFunction(VolumeModel volume, Scale scale, Coord center, double r0, ThetaOptions opt = {})
      : volume_(std::move(volume)), scale_(std::move(scale)), center_(std::move(center)), r0_(r0), opt_(opt) {
    require(r0 > 0.0, ErrorKind::validation, "Theta lower radius must be positive");
    phi_r0_ = scale_(r0_);
  }

  const VolumeModel& volume() const { return volume_; }
  const Scale& scale() const { return scale_; }
  const Coord& center() const { return center_; }
  double r0() const { return r0_; }
  double phi_r0() const { return phi_r0_; }

  double V(double rho) const { return volume_(center_, rho); }

  double operator()(double t) const { return theta(t); }

  double theta(double t) const {
    if (t == kInf) {
      const auto tail = classify_tail();
      require(tail.verdict != Recurrence::inconclusive, ErrorKind::regime, "Theta(infinity) tail is inconclusive");
      return tail.value;
    }
    require(t >= phi_r0_, ErrorKind::range,
            "Theta evaluated below phi(r0): t = " + std::to_string(t) + " < " + std::to_string(phi_r0_));
    if (t == phi_r0_) return 0.0;
    return integrate_radius(r0_, scale_.inverse(t));
  }

  // Verdict on Theta(infinity) from the integrand's log-log slope over the
  // last two decades of the s grid: slope >= -1 (integrand no lighter than
  // c/s) is divergent; otherwise the tail is summed under the fitted power law.
  ThetaTail classify_tail() const {
    ThetaTail out;
    double s_max = opt_.tail_s_max;
    if (std::isfinite(scale_.r_max())) s_max = std::min(s_max, scale_(scale_.r_max()));
    require(s_max > 100.0 * std::max(phi_r0_, 1e-300), ErrorKind::range, "Theta tail grid is shorter than two decades");
    out.s_max = s_max;
    constexpr int n = 21;
    std::vector<double> ls(n), lg(n);
    for (int i = 0; i < n; ++i) {
      const double s = s_max * std::pow(10.0, -2.0 + 2.0 * i / (n - 1));
      ls[i] = std::log(s);
      lg[i] = -std::log(V(scale_.inverse(s)));
    }
    double mx = 0, my = 0;
    for (int i = 0; i < n; ++i) mx += ls[i] / n, my += lg[i] / n;
    double sxy = 0, sxx = 0;
    for (int i = 0; i < n; ++i) sxy += (ls[i] - mx) * (lg[i] - my), sxx += (ls[i] - mx) * (ls[i] - mx);
    const double p = sxy / sxx;
    out.tail_exponent = p;
    // Local slopes over quarter-decade windows.
    double lo_slope = kInf, hi_slope = -kInf;
    for (int i = 0; i + 5 < n; i += 5) {
      const double sl = (lg[i + 5] - lg[i]) / (ls[i + 5] - ls[i]);
      lo_slope = std::min(lo_slope, sl);
      hi_slope = std::max(hi_slope, sl);
    }
    if (lo_slope < -1.0 - opt_.slope_tol && hi_slope > -1.0 + opt_.slope_tol) {
      out.verdict = Recurrence::inconclusive;
      return out;
    }
    if (p >= -1.0 - opt_.slope_tol) {
      out.verdict = Recurrence::recurrent;
      out.value = kInf;
      return out;
    }
    out.verdict = Recurrence::transient;
    const double g_end = std::exp(lg[n - 1]);
    out.value = theta(s_max) + g_end * s_max / (-p - 1.0);
    return out;
  }

 private:
  double integrate_radius(double a, double b) const {
    if (volume_.unit_steps()) {
      // V is constant on (k, k+1].
      double total = 0.0;
      double lo = a;
      while (lo < b) {
        const double k = std::ceil(lo) == lo ? lo + 1.0 : std::ceil(lo);
        const double hi = std::min(b, k);
        const double v = V(0.5 * (lo + hi));
        require(v > 0.0, ErrorKind::domain, "zero volume inside Theta");
        total += scale_.increment(lo, hi) / v;
        lo = hi;
      }
      return total;
    }
    double total = 0.0;
    double u = std::log(a);
    const double ub = std::log(b);
    while (u < ub) {
      const double next = std::min(ub, u + 2.0);
      total += romberg(
                   [&](double w) {
                     const double rho = std::exp(w);
                     return scale_.derivative(rho) * rho / V(rho);
                   },
                   u, next, opt_.rel_tol)
                   .value;
      u = next;
    }
    return total;
  }

  VolumeModel volume_;
  Scale scale_;
  Coord center_;
  double r0_;
  double phi_r0_;
  ThetaOptions opt_;
};

// kappa phi(x, r) log|log phi(x, r)|, the small-radius rate. Only meaningful
// where the double log is positive: phi(x, r) < 1/e.
template <class Phi>
double rate_zero(const Phi& phi_x, double kappa, double r) {
  require(kappa > 0, ErrorKind::validation, "kappa must be positive");
  const double p = phi_x(r);
  require(p > 0 && p < std::exp(-1.0), ErrorKind::regime,
          "small-radius rate needs 0 < phi(x,r) < 1/e, got " + std::to_string(p));
  return kappa * p * std::log(std::abs(std::log(p)));
}

// kappa phi(r) log log phi(r), the large-radius rate; requires phi(r) > e.
template <class Phi>
double rate_infinity(const Phi& reg, double kappa, double r) {
  require(kappa > 0, ErrorKind::validation, "kappa must be positive");
  const double p = reg(r);
  require(p > std::numbers::e, ErrorKind::regime, "large-radius rate needs phi(r) > e, got " + std::to_string(p));
  return kappa * p * std::log(std::log(p));
}

// Theta(t / L) * L with L = log log Theta(t). Requires a recurrent Theta and
// Theta(t) > e^e.
template <class Scale>
double rate_occupation(const ThetaFunction<Scale>& tf, double t) {
  const auto tail = tf.classify_tail();
  require(tail.verdict == Recurrence::recurrent, ErrorKind::regime,
          std::string("occupation rate needs a divergent Theta(infinity); verdict: ") + to_string(tail.verdict));
  const double th = tf.theta(t);
  require(th > std::exp(std::numbers::e), ErrorKind::regime,
          "occupation rate needs Theta(t) > e^e, got Theta(" + std::to_string(t) + ") = " + std::to_string(th));
  const double L = std::log(std::log(th));
  require(t / L >= tf.phi_r0(), ErrorKind::range, "t / log log Theta(t) falls below phi(r0)");
  return tf.theta(t / L) * L;
}

// t / V(o, phi^{-1}(t / log log t)), the closed form valid when the lower
// scaling index of phi exceeds the upper volume dimension.
template <class Scale>
double rate_occupation_simple(const ThetaFunction<Scale>& tf, double t) {
  require(t > std::exp(std::numbers::e), ErrorKind::regime, "simple occupation rate needs t > e^e");
  const double L = std::log(std::log(t));
  return t / tf.V(tf.scale().inverse(t / L));
}

}  // namespace occlab
