#pragma once

// Path simulation on R^d: Brownian motion (generator (1/2) Laplacian) and the
// isotropic alpha-stable process with exponent |xi|^alpha, built by
// subordinating a Brownian motion with generator Laplacian to an
// (alpha/2)-stable subordinator.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "occlab/error.hpp"
#include "occlab/geometry.hpp"
#include "occlab/rng.hpp"

namespace occlab {

struct Brownian {};
struct Stable {
  double alpha = 1.0;
};
using ContinuumProcess = std::variant<Brownian, Stable>;

struct Ball {
  Coord center;
  double radius = 1.0;

  bool contains(std::span<const double> x) const { return euclidean_distance(x, center) < radius; }
};

// Returns the next step length given (t, X_t).
using StepPolicy = std::function<double(double, std::span<const double>)>;

struct ContinuumConfig {
  ContinuumProcess process = Brownian{};
  int dimension = 1;
  double time_step = 1e-3;
  double horizon = 1.0;
  std::uint64_t seed = 0;
  // Overrides the uniform time_step when set.
  StepPolicy step_policy;
  // Leaving this region stops the path and marks it censored.
  std::optional<Ball> region;
  // Brownian only: also count an exit when the bridge between two grid
  // points leaves the ball (crossing drawn from the bridge-hit probability).
  bool bridge_exit = false;

  void validate() const {
    require(dimension >= 1, ErrorKind::validation, "process.dimension must be >= 1");
    require(time_step > 0, ErrorKind::validation, "process.time_step must be positive");
    require(horizon > 0, ErrorKind::validation, "process.horizon must be positive");
    require(time_step <= horizon / 100.0 * (1 + 1e-12), ErrorKind::validation, "process.time_step must be <= horizon / 100");
    if (const auto* s = std::get_if<Stable>(&process))
      require(s->alpha > 0 && s->alpha < 2, ErrorKind::validation, "process.alpha must lie in (0, 2)");
    require(!bridge_exit || std::holds_alternative<Brownian>(process), ErrorKind::validation,
            "process.exit_monitoring = \"bridge\" needs Brownian motion");
  }
};

struct ContinuumPath {
  int dimension = 1;
  std::vector<double> times;
  std::vector<double> coords;  // times.size() * dimension, row-major
  bool censored = false;

  std::size_t size() const { return times.size(); }
  std::span<const double> position(std::size_t i) const {
    return {coords.data() + i * static_cast<std::size_t>(dimension), static_cast<std::size_t>(dimension)};
  }
  double end_time() const { return times.empty() ? 0.0 : times.back(); }
};

// Positive strictly (a)-stable variable with Laplace transform exp(-lambda^a),
// 0 < a < 1 (Kanter's representation, the totally skewed case of the
// Chambers-Mallows-Stuck transform).
inline double positive_stable(double a, CounterRng& rng) {
  const double u = std::numbers::pi * rng.uniform();
  const double w = -std::log(rng.uniform());
  const double log_z = std::log(std::sin(a * u)) - std::log(std::sin(u)) / a +
                       (1.0 - a) / a * (std::log(std::sin((1.0 - a) * u)) - std::log(w));
  return std::exp(log_z);
}

class ContinuumStepper {
 public:
  ContinuumStepper(const ContinuumConfig& cfg, std::span<const double> start, std::uint64_t replica)
      : cfg_(cfg), rng_(cfg.seed, replica, stream::path), x_(start.begin(), start.end()) {
    require(static_cast<int>(start.size()) == cfg.dimension, ErrorKind::validation, "start point has the wrong dimension");
  }

  double time() const { return t_; }
  std::span<const double> position() const { return x_; }
  bool finished() const { return t_ >= cfg_.horizon; }

  double next_step_length() const {
    const double dt = cfg_.step_policy ? cfg_.step_policy(t_, x_) : cfg_.time_step;
    return std::min(dt, cfg_.horizon - t_);
  }

  void advance(double dt) {
    if (std::holds_alternative<Brownian>(cfg_.process)) {
      const double sd = std::sqrt(dt);
      for (double& v : x_) v += sd * rng_.normal();
    } else {
      const double alpha = std::get<Stable>(cfg_.process).alpha;
      const double subordinate = std::pow(dt, 2.0 / alpha) * positive_stable(alpha / 2.0, rng_);
      const double sd = std::sqrt(2.0 * subordinate);
      for (double& v : x_) v += sd * rng_.normal();
    }
    t_ += dt;
    // absorb rounding at the horizon
    if (cfg_.horizon - t_ < 1e-12 * cfg_.horizon) t_ = cfg_.horizon;
  }

 private:
  const ContinuumConfig& cfg_;
  CounterRng rng_;
  std::vector<double> x_;
  double t_ = 0.0;
};

enum class PathEnd { horizon, censored, stopped };

// Drives one replica and hands every grid step to `visit(t0, x0, t1, x1)`;
// returning false stops the path.
template <class Visitor>
PathEnd run_path(const ContinuumConfig& cfg, std::span<const double> start, std::uint64_t replica, Visitor&& visit) {
  ContinuumStepper stepper(cfg, start, replica);
  std::vector<double> prev(start.begin(), start.end());
  while (!stepper.finished()) {
    const double t0 = stepper.time();
    stepper.advance(stepper.next_step_length());
    const auto x1 = stepper.position();
    if (!visit(t0, std::span<const double>(prev), stepper.time(), x1)) return PathEnd::stopped;
    if (cfg.region && !cfg.region->contains(x1)) return PathEnd::censored;
    std::copy(x1.begin(), x1.end(), prev.begin());
  }
  return PathEnd::horizon;
}

inline ContinuumPath simulate(const ContinuumConfig& cfg, std::span<const double> start, std::uint64_t replica = 0) {
  cfg.validate();
  ContinuumPath path;
  path.dimension = cfg.dimension;
  path.times.push_back(0.0);
  path.coords.assign(start.begin(), start.end());
  const auto end = run_path(cfg, start, replica, [&](double, std::span<const double>, double t1, std::span<const double> x1) {
    path.times.push_back(t1);
    path.coords.insert(path.coords.end(), x1.begin(), x1.end());
    return true;
  });
  path.censored = end == PathEnd::censored;
  return path;
}

// Left-point Riemann sum of 1{X in B(center, radius)} over [0, t_cut]; the
// step straddling t_cut is prorated.
inline double occupation_time(const ContinuumPath& path, std::span<const double> center, double radius, double t_cut) {
  require(radius > 0, ErrorKind::validation, "radius must be positive");
  require(t_cut >= 0, ErrorKind::validation, "t_cut must be nonnegative");
  require(t_cut <= path.end_time() * (1 + 1e-12) || path.censored, ErrorKind::range, "t_cut beyond the end of an uncensored path");
  double u = 0.0;
  for (std::size_t i = 0; i + 1 < path.size() && path.times[i] < t_cut; ++i) {
    if (euclidean_distance(path.position(i), center) < radius)
      u += std::min(path.times[i + 1], t_cut) - path.times[i];
  }
  return u;
}

struct ExitResult {
  double time = 0.0;
  bool exited = false;
};

// First grid time at which the path is outside the closed ball.
inline ExitResult exit_time(const ContinuumPath& path, std::span<const double> center, double radius) {
  require(path.size() > 0, ErrorKind::validation, "empty path");
  require(euclidean_distance(path.position(0), center) < radius, ErrorKind::domain, "path starts outside the ball");
  for (std::size_t i = 1; i < path.size(); ++i)
    if (euclidean_distance(path.position(i), center) > radius) return {path.times[i], true};
  return {path.end_time(), false};
}

// Streaming counterparts: same numbers as simulate + functional, without
// storing the path.
// Probability that a Brownian bridge (unit variance per unit time and
// coordinate) between two interior points touches the sphere: two flat
// barriers in d = 1, the tangent half-space at the nearer radial distance
// otherwise.
inline double bridge_hit_probability(std::span<const double> x0, std::span<const double> x1, double dt,
                                     std::span<const double> center, double radius) {
  if (x0.size() == 1) {
    const double a0 = x0[0] - center[0], a1 = x1[0] - center[0];
    const double up = std::exp(-2.0 * (radius - a0) * (radius - a1) / dt);
    const double down = std::exp(-2.0 * (radius + a0) * (radius + a1) / dt);
    return 1.0 - (1.0 - up) * (1.0 - down);
  }
  const double g0 = radius - euclidean_distance(x0, center), g1 = radius - euclidean_distance(x1, center);
  return std::exp(-2.0 * g0 * g1 / dt);
}

inline bool bridge_crosses(std::span<const double> x0, std::span<const double> x1, double dt,
                           std::span<const double> center, double radius, CounterRng& rng) {
  return rng.uniform() < bridge_hit_probability(x0, x1, dt, center, radius);
}

// First grid time at which the path has left the open ball (or, with
// bridge_exit, the end of the step whose bridge touched the sphere).
inline ExitResult exit_time_streaming(const ContinuumConfig& cfg, std::span<const double> start, std::uint64_t replica,
                                      std::span<const double> center, double radius) {
  require(euclidean_distance(start, center) < radius, ErrorKind::domain, "path starts outside the ball");
  ExitResult out;
  out.time = cfg.horizon;
  CounterRng bridge(cfg.seed, replica, stream::bridge);
  run_path(cfg, start, replica, [&](double t0, std::span<const double> x0, double t1, std::span<const double> x1) {
    if (euclidean_distance(x1, center) >= radius) {
      out = {t1, true};
      return false;
    }
    if (cfg.bridge_exit && bridge_crosses(x0, x1, t1 - t0, center, radius, bridge)) {
      out = {t1, true};
      return false;
    }
    return true;
  });
  return out;
}

struct OccupationResult {
  double occupation = 0.0;
  bool censored = false;
  std::size_t steps = 0;
};

inline OccupationResult occupation_streaming(const ContinuumConfig& cfg, std::span<const double> start,
                                             std::uint64_t replica, std::span<const double> center, double radius,
                                             double t_cut) {
  OccupationResult out;
  const auto end = run_path(cfg, start, replica, [&](double t0, std::span<const double> x0, double t1, std::span<const double>) {
    ++out.steps;
    if (t0 >= t_cut) return false;
    if (euclidean_distance(x0, center) < radius) out.occupation += std::min(t1, t_cut) - t0;
    return true;
  });
  out.censored = end == PathEnd::censored;
  return out;
}

// Fine steps near the ball, steps of (factor * distance to the ball)^2 away
// from it; a Brownian path then crosses the gap within one step only with
// probability of order exp(-1 / (2 factor^2)).
inline StepPolicy far_field_step_policy(Coord center, double radius, double base_dt, double factor, double max_dt) {
  return [center = std::move(center), radius, base_dt, factor, max_dt](double, std::span<const double> x) {
    const double gap = euclidean_distance(x, center) - radius;
    if (gap <= 0) return base_dt;
    const double dt = factor * gap * factor * gap;
    return std::clamp(dt, base_dt, max_dt);
  };
}

// Step proportional to elapsed time, floored at min_dt; resolves all scales
// of small-time functionals.
inline StepPolicy geometric_time_policy(double relative_step, double min_dt) {
  return [relative_step, min_dt](double t, std::span<const double>) { return std::max(min_dt, relative_step * t); };
}

}  // namespace occlab
