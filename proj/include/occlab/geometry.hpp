#pragma once

// Metric-measure scaffolding: Euclidean space and boxed lattices, balls,
// volume models and the volume-doubling / reverse-doubling (VRD) checker.
//
// Balls are open: B(x, r) = { y : d(x, y) < r }. On the lattice the metric is
// the graph (l1) distance of nearest-neighbour Z^d.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "occlab/error.hpp"

namespace occlab {

using Coord = std::vector<double>;
using SiteIndex = std::int64_t;

inline double euclidean_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// The box [-R, R]^d of Z^d with sites packed into a linear index.
class LatticeBox {
 public:
  LatticeBox() = default;
  LatticeBox(int dimension, int radius) : dim_(dimension), radius_(radius), side_(2 * std::int64_t{radius} + 1) {
    require(dimension >= 1, ErrorKind::validation, "lattice dimension must be >= 1");
    require(radius >= 0, ErrorKind::validation, "lattice box radius must be >= 0");
    strides_.resize(dim_);
    std::int64_t stride = 1;
    for (int k = 0; k < dim_; ++k) {
      strides_[k] = stride;
      require(stride <= std::numeric_limits<std::int64_t>::max() / side_, ErrorKind::resource,
              "lattice box too large to index");
      stride *= side_;
    }
    size_ = stride;
  }

  int dimension() const { return dim_; }
  int radius() const { return radius_; }
  std::int64_t side() const { return side_; }
  std::int64_t size() const { return size_; }
  std::int64_t stride(int axis) const { return strides_[axis]; }

  bool contains(std::span<const int> x) const {
    if (static_cast<int>(x.size()) != dim_) return false;
    for (int v : x)
      if (v < -radius_ || v > radius_) return false;
    return true;
  }

  SiteIndex index(std::span<const int> x) const {
    SiteIndex idx = 0;
    for (int k = 0; k < dim_; ++k) idx += (x[k] + radius_) * strides_[k];
    return idx;
  }

  SiteIndex origin() const {
    std::vector<int> o(dim_, 0);
    return index(o);
  }

  std::vector<int> coords(SiteIndex idx) const {
    std::vector<int> x(dim_);
    for (int k = 0; k < dim_; ++k) {
      x[k] = static_cast<int>(idx % side_) - radius_;
      idx /= side_;
    }
    return x;
  }

  int coord(SiteIndex idx, int axis) const {
    return static_cast<int>((idx / strides_[axis]) % side_) - radius_;
  }

  bool on_boundary(SiteIndex idx) const {
    for (int k = 0; k < dim_; ++k) {
      const int c = coord(idx, k);
      if (c == -radius_ || c == radius_) return true;
    }
    return false;
  }

  int l1_norm(SiteIndex idx) const {
    int s = 0;
    for (int k = 0; k < dim_; ++k) s += std::abs(coord(idx, k));
    return s;
  }

  int l1_distance(SiteIndex a, SiteIndex b) const {
    int s = 0;
    for (int k = 0; k < dim_; ++k) s += std::abs(coord(a, k) - coord(b, k));
    return s;
  }

  double euclidean_distance(SiteIndex a, SiteIndex b) const {
    double s = 0.0;
    for (int k = 0; k < dim_; ++k) {
      const double d = coord(a, k) - coord(b, k);
      s += d * d;
    }
    return std::sqrt(s);
  }

  // Distance from x to the complement of the box.
  int distance_to_outside(SiteIndex idx) const {
    int m = std::numeric_limits<int>::max();
    for (int k = 0; k < dim_; ++k) m = std::min(m, radius_ + 1 - std::abs(coord(idx, k)));
    return m;
  }

 private:
  int dim_ = 1;
  int radius_ = 0;
  std::int64_t side_ = 1;
  std::int64_t size_ = 1;
  std::vector<std::int64_t> strides_;
};

inline std::vector<int> to_site(std::span<const double> x) {
  std::vector<int> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = std::round(x[i]);
    require(r == x[i], ErrorKind::domain, "lattice coordinate is not an integer");
    s[i] = static_cast<int>(r);
  }
  return s;
}

struct EuclideanSpace {
  int dimension = 1;
};

struct LatticeSpace {
  LatticeBox box;
};

class Space {
 public:
  static Space euclidean(int dimension) {
    require(dimension >= 1, ErrorKind::validation, "dimension must be >= 1");
    return Space(EuclideanSpace{dimension}, Coord(dimension, 0.0));
  }
  static Space lattice(int dimension, int box_radius) {
    return Space(LatticeSpace{LatticeBox(dimension, box_radius)}, Coord(dimension, 0.0));
  }

  bool is_lattice() const { return std::holds_alternative<LatticeSpace>(kind_); }
  int dimension() const {
    return is_lattice() ? std::get<LatticeSpace>(kind_).box.dimension() : std::get<EuclideanSpace>(kind_).dimension;
  }
  const LatticeBox& box() const { return std::get<LatticeSpace>(kind_).box; }
  const Coord& base_point() const { return base_point_; }

  bool contains(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != dimension()) return false;
    if (!is_lattice()) return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
    for (double v : x)
      if (std::round(v) != v) return false;
    return box().contains(to_site(x));
  }

  double distance(std::span<const double> a, std::span<const double> b) const {
    if (!is_lattice()) return euclidean_distance(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
  }

  // d(x, o) + 1.
  double shifted_distance(std::span<const double> x) const { return distance(x, base_point_) + 1.0; }

  // Distance to the complement of the space (infinite for R^d).
  double distance_to_outside(std::span<const double> x) const {
    if (!is_lattice()) return std::numeric_limits<double>::infinity();
    return box().distance_to_outside(box().index(to_site(x)));
  }

 private:
  Space(std::variant<EuclideanSpace, LatticeSpace> kind, Coord base) : kind_(std::move(kind)), base_point_(std::move(base)) {}

  std::variant<EuclideanSpace, LatticeSpace> kind_;
  Coord base_point_;
};

inline double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
}

// Number of lattice sites y in the box, with |y - center|_1 < radius and
// member(y) (when a membership mask is given).
inline double lattice_ball_count(const LatticeBox& box, std::span<const int> center, double radius,
                                 const std::vector<bool>* member = nullptr) {
  const int dim = box.dimension();
  const int R = box.radius();
  std::vector<int> y(dim);
  double count = 0.0;
  // Recursive enumeration over the first dim-1 axes; the last axis is counted
  // in closed form when no mask is present.
  auto recurse = [&](auto&& self, int axis, double budget) -> void {
    const int c = center[axis];
    // offsets with |k| < budget
    const int kmax = static_cast<int>(std::ceil(budget)) - 1;
    if (kmax < 0) return;
    const int lo = std::max(c - kmax, -R);
    const int hi = std::min(c + kmax, R);
    if (lo > hi) return;
    if (axis == dim - 1 && member == nullptr) {
      count += hi - lo + 1;
      return;
    }
    for (int v = lo; v <= hi; ++v) {
      y[axis] = v;
      if (axis == dim - 1) {
        if ((*member)[box.index(y)]) count += 1.0;
      } else {
        self(self, axis + 1, budget - std::abs(v - c));
      }
    }
  };
  recurse(recurse, 0, radius);
  return count;
}

struct VrdIndices {
  double d1 = 0.0;
  double d2 = 0.0;
  double c_mu = 0.0;
  double C_mu = 0.0;
};

// V(x, r) = mu(B(x, r)).
class VolumeModel {
 public:
  using Evaluator = std::function<double(std::span<const double>, double)>;

  VolumeModel(Evaluator eval, bool unit_steps) : eval_(std::move(eval)), unit_steps_(unit_steps) {}

  static VolumeModel euclidean(int dimension) {
    const double omega = unit_ball_volume(dimension);
    return VolumeModel([omega, dimension](std::span<const double>, double r) { return omega * std::pow(r, dimension); },
                       false);
  }

  // V(x, r) = c r^d independent of x; closed-form test profiles.
  static VolumeModel power(double c, double exponent) {
    return VolumeModel([c, exponent](std::span<const double>, double r) { return c * std::pow(r, exponent); }, false);
  }

  // Site counts in the open l1 ball, optionally restricted to a site set.
  static VolumeModel lattice(LatticeBox box, std::shared_ptr<const std::vector<bool>> member = nullptr) {
    return VolumeModel(
        [box, member](std::span<const double> x, double r) {
          const auto site = to_site(x);
          return lattice_ball_count(box, site, r, member.get());
        },
        true);
  }

  double operator()(std::span<const double> center, double radius) const { return eval_(center, radius); }

  // Lattice counts are constant on (k, k+1] for integer k.
  bool unit_steps() const { return unit_steps_; }

  VrdIndices fitted;

 private:
  Evaluator eval_;
  bool unit_steps_;
};

inline double ball_volume(const Space& space, const VolumeModel& model, std::span<const double> center, double radius) {
  require(radius > 0.0, ErrorKind::validation, "radius must be positive");
  require(space.contains(center), ErrorKind::domain, "ball center lies outside the space");
  return model(center, radius);
}

namespace detail {
inline double quantile(std::vector<double> v, double q) {
  require(!v.empty(), ErrorKind::insufficient_data, "quantile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[hi] * frac;
}
}  // namespace detail

struct VrdOptions {
  double R_inf = 0.0;     // valid range r > R_inf * d(x)^upsilon
  double upsilon = 1.0;
  double lower_quantile = 0.025;
  double upper_quantile = 0.975;
  double slack = 2.0;     // tolerance factor applied to the envelope constants for `pass`
};

struct VrdFit {
  double d1 = 0.0;
  double d2 = 0.0;
  double c_mu = 0.0;
  double C_mu = 0.0;
  double central_exponent = 0.0;
  // Largest C0 in (0, 1] such that every sampled pair with r <= C0 * delta(x)
  // satisfies the envelope.
  double c0 = 1.0;
  std::size_t pairs = 0;
  std::size_t violations = 0;
  bool pass = false;
};

inline VrdFit vrd_fit(const Space& space, const VolumeModel& model, const std::vector<Coord>& centers,
                      std::vector<double> radii, const VrdOptions& opt = {}) {
  std::sort(radii.begin(), radii.end());
  radii.erase(std::unique(radii.begin(), radii.end()), radii.end());
  require(radii.size() >= 2, ErrorKind::invalid_grid, "VRD fit needs at least 2 distinct radii");
  require(radii.size() >= 4, ErrorKind::validation, "VRD fit needs a grid of at least 4 radii");
  require(!centers.empty(), ErrorKind::validation, "VRD fit needs at least one center");

  struct Pair {
    double log_ratio_r, log_ratio_v, r, delta;
  };
  std::vector<Pair> pairs;
  for (const auto& x : centers) {
    require(space.contains(x), ErrorKind::domain, "VRD center lies outside the space");
    const double lower = opt.R_inf * std::pow(space.shifted_distance(x), opt.upsilon);
    std::vector<double> v(radii.size());
    for (std::size_t i = 0; i < radii.size(); ++i) {
      require(radii[i] > lower, ErrorKind::validation, "VRD radius below the valid range R_inf * d(x)^upsilon");
      v[i] = model(x, radii[i]);
      require(v[i] > 0.0, ErrorKind::domain, "VRD ball has zero volume");
    }
    const double delta = space.distance_to_outside(x);
    for (std::size_t i = 0; i < radii.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        pairs.push_back({std::log(radii[i] / radii[j]), std::log(v[i] / v[j]), radii[i], delta});
  }

  VrdFit fit;
  fit.pairs = pairs.size();
  double sxy = 0.0, sxx = 0.0;
  std::vector<double> exponents;
  exponents.reserve(pairs.size());
  for (const auto& p : pairs) {
    sxy += p.log_ratio_r * p.log_ratio_v;
    sxx += p.log_ratio_r * p.log_ratio_r;
    exponents.push_back(p.log_ratio_v / p.log_ratio_r);
  }
  fit.central_exponent = sxy / sxx;
  fit.d1 = std::min(fit.central_exponent, detail::quantile(exponents, opt.lower_quantile));
  fit.d2 = std::max(fit.central_exponent, detail::quantile(exponents, opt.upper_quantile));

  std::vector<double> lower_c, upper_c;
  for (const auto& p : pairs) {
    lower_c.push_back(std::exp(p.log_ratio_v - fit.d1 * p.log_ratio_r));
    upper_c.push_back(std::exp(p.log_ratio_v - fit.d2 * p.log_ratio_r));
  }
  fit.c_mu = std::min(1.0, detail::quantile(lower_c, opt.lower_quantile));
  fit.C_mu = std::max(1.0, detail::quantile(upper_c, opt.upper_quantile));

  double first_violation = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const bool ok = lower_c[k] >= fit.c_mu / opt.slack && upper_c[k] <= fit.C_mu * opt.slack;
    if (!ok) {
      ++fit.violations;
      first_violation = std::min(first_violation, pairs[k].r / pairs[k].delta);
    }
  }
  fit.c0 = std::min(1.0, first_violation);
  fit.pass = fit.violations == 0 && fit.d1 > 0.0 && fit.d1 <= fit.d2;
  return fit;
}

}  // namespace occlab
