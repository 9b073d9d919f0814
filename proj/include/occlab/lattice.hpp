#pragma once

// Random conductance models on boxed Z^d and the continuous-time random walks
// they generate.
//
//  * percolation(p): nearest-neighbour Bernoulli(p) conductances
//  * unbounded(law): nearest-neighbour i.i.d. conductances from `law`
//  * stable_like(alpha, law): all pairs, eta_xy = w_xy |x - y|^{-(d + alpha)}
//
// Nearest-neighbour weights are a pure function of (seed, edge): they are
// materialized for small boxes and recomputed on the fly otherwise, so walks
// can run in boxes far larger than memory would allow.
//
// VSRW leaves x at rate nu_x = sum_y eta_xy, CSRW at rate 1; both jump to y
// with probability eta_xy / nu_x.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "occlab/error.hpp"
#include "occlab/geometry.hpp"
#include "occlab/rng.hpp"

namespace occlab {

// Walker/Vose alias table: O(1) sampling from a fixed discrete law.
class AliasTable {
 public:
  AliasTable() = default;
  explicit AliasTable(const std::vector<double>& weights) {
    const std::size_t n = weights.size();
    require(n > 0, ErrorKind::validation, "alias table needs at least one weight");
    const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    require(total > 0, ErrorKind::validation, "alias table needs positive total weight");
    prob_.resize(n);
    alias_.resize(n);
    std::vector<double> scaled(n);
    std::vector<std::uint32_t> small, large;
    for (std::size_t i = 0; i < n; ++i) {
      scaled[i] = weights[i] * static_cast<double>(n) / total;
      (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
    }
    while (!small.empty() && !large.empty()) {
      const auto s = small.back();
      small.pop_back();
      const auto l = large.back();
      prob_[s] = scaled[s];
      alias_[s] = l;
      scaled[l] = (scaled[l] + scaled[s]) - 1.0;
      if (scaled[l] < 1.0) {
        large.pop_back();
        small.push_back(l);
      }
    }
    for (auto i : large) prob_[i] = 1.0, alias_[i] = i;
    for (auto i : small) prob_[i] = 1.0, alias_[i] = i;
  }

  std::size_t size() const { return prob_.size(); }

  std::size_t sample(CounterRng& rng) const {
    const double u = rng.uniform() * static_cast<double>(prob_.size());
    const auto i = std::min(static_cast<std::size_t>(u), prob_.size() - 1);
    return (u - static_cast<double>(i)) < prob_[i] ? i : alias_[i];
  }

 private:
  std::vector<double> prob_;
  std::vector<std::uint32_t> alias_;
};

struct WeightLaw {
  enum class Kind { constant, uniform, two_point, lognormal, pareto };
  Kind kind = Kind::constant;
  double a = 1.0;  // constant value | lower | low value | mu | x_min
  double b = 1.0;  // - | upper | high value | sigma | shape
  double p = 0.5;  // two_point: probability of b

  static WeightLaw constant(double v) { return {Kind::constant, v, v, 0.0}; }
  static WeightLaw uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 0.0}; }
  static WeightLaw two_point(double lo, double hi, double p_hi) { return {Kind::two_point, lo, hi, p_hi}; }
  static WeightLaw lognormal(double mu, double sigma) { return {Kind::lognormal, mu, sigma, 0.0}; }
  static WeightLaw pareto(double x_min, double shape) { return {Kind::pareto, x_min, shape, 0.0}; }

  bool degenerate() const { return kind == Kind::constant; }

  double upper_bound() const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::uniform: return b;
      case Kind::two_point: return std::max(a, b);
      default: return std::numeric_limits<double>::infinity();
    }
  }

  // Inverse CDF at u in (0, 1).
  double quantile(double u) const {
    switch (kind) {
      case Kind::constant: return a;
      case Kind::uniform: return a + (b - a) * u;
      case Kind::two_point: return u < p ? b : a;
      case Kind::lognormal: return std::exp(a + b * boost::math::quantile(boost::math::normal(), u));
      case Kind::pareto: return a * std::pow(1.0 - u, -1.0 / b);
    }
    return a;
  }

  void validate() const {
    switch (kind) {
      case Kind::constant: require(a >= 0, ErrorKind::validation, "constant weight must be >= 0"); break;
      case Kind::uniform: require(0 <= a && a <= b, ErrorKind::validation, "uniform weights need 0 <= lo <= hi"); break;
      case Kind::two_point:
        require(a >= 0 && b >= 0 && p >= 0 && p <= 1, ErrorKind::validation, "two_point weights need a, b >= 0 and p in [0,1]");
        break;
      case Kind::lognormal: require(b >= 0, ErrorKind::validation, "lognormal sigma must be >= 0"); break;
      case Kind::pareto: require(a > 0 && b > 0, ErrorKind::validation, "pareto needs x_min > 0 and shape > 0"); break;
    }
  }
};

struct Percolation {
  double p = 1.0;
};
struct Unbounded {
  WeightLaw law;
};
struct StableLike {
  double alpha = 1.0;
  WeightLaw law;
};
using ModelTag = std::variant<Percolation, Unbounded, StableLike>;

inline std::string describe(const ModelTag& tag) {
  std::ostringstream os;
  std::visit(
      [&](const auto& m) {
        using M = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<M, Percolation>) os << "percolation p=" << m.p;
        if constexpr (std::is_same_v<M, Unbounded>) os << "unbounded law=" << static_cast<int>(m.law.kind) << " a=" << m.law.a << " b=" << m.law.b << " p=" << m.law.p;
        if constexpr (std::is_same_v<M, StableLike>) os << "stable_like alpha=" << m.alpha << " law=" << static_cast<int>(m.law.kind) << " a=" << m.law.a << " b=" << m.law.b << " p=" << m.law.p;
      },
      tag);
  return os.str();
}

enum class Walk { vsrw, csrw };

struct FieldLimits {
  std::int64_t materialize_edges = 50'000'000;
  std::int64_t long_range_sites = 20'001;
};

class ConductanceField {
 public:
  const LatticeBox& box() const { return box_; }
  const ModelTag& tag() const { return tag_; }
  std::uint64_t seed() const { return seed_; }
  bool long_range() const { return std::holds_alternative<StableLike>(tag_); }
  int dimension() const { return box_.dimension(); }

  // Nearest-neighbour edge {x, x + e_axis}; 0 when the edge leaves the box.
  double edge_weight(SiteIndex x, int axis) const {
    if (box_.coord(x, axis) == box_.radius()) return 0.0;
    if (constant_nn_) return constant_weight_;
    if (!nn_weights_.empty()) return nn_weights_[static_cast<std::size_t>(x) * box_.dimension() + axis];
    return draw_nn_weight(static_cast<std::uint64_t>(x) * box_.dimension() + axis);
  }

  // eta_xy for any pair.
  double weight(SiteIndex x, SiteIndex y) const {
    if (x == y) return 0.0;
    if (!long_range()) {
      if (box_.l1_distance(x, y) != 1) return 0.0;
      const SiteIndex lo = std::min(x, y), hi = std::max(x, y);
      for (int k = 0; k < box_.dimension(); ++k)
        if (hi - lo == box_.stride(k)) return edge_weight(lo, k);
      return 0.0;
    }
    return pair_weight(x, y) * kernel_of(x, y);
  }

  double nu(SiteIndex x) const {
    if (long_range()) return nu_[static_cast<std::size_t>(x)];
    double s = 0.0;
    for (int k = 0; k < box_.dimension(); ++k) {
      s += edge_weight(x, k);
      if (box_.coord(x, k) > -box_.radius()) s += edge_weight(x - box_.stride(k), k);
    }
    return s;
  }

  template <class F>
  void for_each_neighbor(SiteIndex x, F&& f) const {
    if (!long_range()) {
      for (int k = 0; k < box_.dimension(); ++k) {
        const double up = edge_weight(x, k);
        if (up > 0) f(x + box_.stride(k), up);
        if (box_.coord(x, k) > -box_.radius()) {
          const double down = edge_weight(x - box_.stride(k), k);
          if (down > 0) f(x - box_.stride(k), down);
        }
      }
      return;
    }
    for (SiteIndex y = 0; y < box_.size(); ++y) {
      if (y == x) continue;
      const double w = weight(x, y);
      if (w > 0) f(y, w);
    }
  }

  // Next site of the embedded jump chain: y with probability eta_xy / nu_x.
  SiteIndex sample_jump(SiteIndex x, CounterRng& rng) const {
    if (!long_range()) {
      const int dim = box_.dimension();
      double w[2 * 8];
      SiteIndex to[2 * 8];
      int n = 0;
      double total = 0.0;
      for (int k = 0; k < dim; ++k) {
        const double up = edge_weight(x, k);
        if (up > 0) w[n] = up, to[n++] = x + box_.stride(k), total += up;
        if (box_.coord(x, k) > -box_.radius()) {
          const double down = edge_weight(x - box_.stride(k), k);
          if (down > 0) w[n] = down, to[n++] = x - box_.stride(k), total += down;
        }
      }
      double u = rng.uniform() * total;
      for (int i = 0; i < n - 1; ++i) {
        if (u < w[i]) return to[i];
        u -= w[i];
      }
      return to[n - 1];
    }
    const auto& lr = std::get<StableLike>(tag_);
    const double w_max = lr.law.upper_bound();
    std::vector<int> xc = box_.coords(x);
    std::vector<int> yc(xc.size());
    for (;;) {
      const std::size_t o = offsets_.sample(rng);
      for (int k = 0; k < box_.dimension(); ++k) yc[k] = xc[k] + offset_coord(o, k);
      if (!box_.contains(yc)) continue;
      const SiteIndex y = box_.index(yc);
      if (lr.law.degenerate() || rng.uniform() * w_max < pair_weight(x, y)) return y;
    }
  }

  // sum over y with |y - x| > r of eta_xy (Euclidean distance).
  double tail_sum(SiteIndex x, double r) const {
    double s = 0.0;
    for_each_neighbor(x, [&](SiteIndex y, double w) {
      if (box_.euclidean_distance(x, y) > r) s += w;
    });
    return s;
  }

  // Size of the offset table backing long-range jumps.
  std::size_t offset_count() const { return offsets_.size(); }

  friend ConductanceField generate_field(const ModelTag& tag, const LatticeBox& box, std::uint64_t seed,
                                         const FieldLimits& limits);
  friend ConductanceField read_field(const std::string& path);

 private:
  double draw_nn_weight(std::uint64_t edge) const {
    const double u = hashed_uniform(seed_, edge, stream::field);
    if (const auto* p = std::get_if<Percolation>(&tag_)) return u < p->p ? 1.0 : 0.0;
    return std::get<Unbounded>(tag_).law.quantile(u);
  }

  double pair_weight(SiteIndex x, SiteIndex y) const {
    const auto& law = std::get<StableLike>(tag_).law;
    if (law.degenerate()) return law.a;
    const auto lo = static_cast<std::uint64_t>(std::min(x, y)), hi = static_cast<std::uint64_t>(std::max(x, y));
    const std::uint64_t key = lo * static_cast<std::uint64_t>(box_.size()) + hi;
    if (!explicit_pairs_.empty()) {
      auto it = explicit_pairs_.find(key);
      return it == explicit_pairs_.end() ? 0.0 : it->second;
    }
    return law.quantile(hashed_uniform(seed_, key, stream::field));
  }

  double kernel_of(SiteIndex x, SiteIndex y) const {
    const double dist = box_.euclidean_distance(x, y);
    return std::pow(dist, -(box_.dimension() + std::get<StableLike>(tag_).alpha));
  }

  int offset_coord(std::size_t o, int axis) const {
    // offsets are packed over [-2R, 2R]^d with the zero offset removed
    std::size_t idx = o >= zero_offset_ ? o + 1 : o;
    const std::size_t side = 4 * static_cast<std::size_t>(box_.radius()) + 1;
    for (int k = 0; k < axis; ++k) idx /= side;
    return static_cast<int>(idx % side) - 2 * box_.radius();
  }

  LatticeBox box_;
  ModelTag tag_;
  std::uint64_t seed_ = 0;
  bool constant_nn_ = false;
  double constant_weight_ = 0.0;
  std::vector<double> nn_weights_;
  // long-range
  AliasTable offsets_;
  std::size_t zero_offset_ = 0;
  std::vector<double> nu_;
  std::unordered_map<std::uint64_t, double> explicit_pairs_;
};

inline ConductanceField generate_field(const ModelTag& tag, const LatticeBox& box, std::uint64_t seed,
                                       const FieldLimits& limits = {}) {
  ConductanceField f;
  f.box_ = box;
  f.tag_ = tag;
  f.seed_ = seed;
  require(box.dimension() <= 8, ErrorKind::validation, "lattice dimension must be <= 8");
  if (const auto* p = std::get_if<Percolation>(&tag)) {
    require(p->p >= 0 && p->p <= 1, ErrorKind::validation, "percolation p must lie in [0, 1]");
    if (p->p == 1.0 || p->p == 0.0) f.constant_nn_ = true, f.constant_weight_ = p->p;
  } else if (const auto* u = std::get_if<Unbounded>(&tag)) {
    u->law.validate();
    if (u->law.degenerate()) f.constant_nn_ = true, f.constant_weight_ = u->law.a;
  }
  if (!f.long_range()) {
    const std::int64_t edges = box.size() * box.dimension();
    if (!f.constant_nn_ && edges <= limits.materialize_edges) {
      f.nn_weights_.resize(static_cast<std::size_t>(edges));
      for (std::int64_t e = 0; e < edges; ++e) f.nn_weights_[static_cast<std::size_t>(e)] = f.draw_nn_weight(static_cast<std::uint64_t>(e));
    }
    return f;
  }

  const auto& lr = std::get<StableLike>(tag);
  lr.law.validate();
  require(lr.alpha > 0 && lr.alpha < 2, ErrorKind::validation, "stable_like alpha must lie in (0, 2)");
  require(std::isfinite(lr.law.upper_bound()), ErrorKind::validation,
          "stable_like weights need a bounded law (constant, uniform or two_point)");
  require(box.size() <= limits.long_range_sites, ErrorKind::resource,
          "stable_like box has " + std::to_string(box.size()) + " sites; the all-pairs budget allows " +
              std::to_string(limits.long_range_sites));
  const int dim = box.dimension();
  const int R = box.radius();
  const std::size_t side = 4 * static_cast<std::size_t>(R) + 1;
  std::size_t count = 1;
  for (int k = 0; k < dim; ++k) count *= side;
  // zero offset sits at the centre of the packed cube
  std::size_t zero = 0, mul = 1;
  for (int k = 0; k < dim; ++k) zero += static_cast<std::size_t>(2 * R) * mul, mul *= side;
  f.zero_offset_ = zero;
  std::vector<double> kernel;
  kernel.reserve(count - 1);
  for (std::size_t o = 0; o < count; ++o) {
    if (o == zero) continue;
    std::size_t idx = o;
    double n2 = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double c = static_cast<double>(static_cast<int>(idx % side) - 2 * R);
      n2 += c * c;
      idx /= side;
    }
    kernel.push_back(std::pow(std::sqrt(n2), -(dim + lr.alpha)));
  }
  f.offsets_ = AliasTable(kernel);

  const auto n = static_cast<std::size_t>(box.size());
  f.nu_.assign(n, 0.0);
  if (dim == 1 && lr.law.degenerate()) {
    // prefix sums of the one-sided kernel
    std::vector<double> prefix(2 * static_cast<std::size_t>(R) + 1, 0.0);
    for (std::size_t m = 1; m < prefix.size(); ++m) prefix[m] = prefix[m - 1] + std::pow(static_cast<double>(m), -(1 + lr.alpha));
    for (std::size_t i = 0; i < n; ++i) {
      const int x = static_cast<int>(i) - R;
      f.nu_[i] = lr.law.a * (prefix[static_cast<std::size_t>(R - x)] + prefix[static_cast<std::size_t>(R + x)]);
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double w = f.weight(static_cast<SiteIndex>(i), static_cast<SiteIndex>(j));
        f.nu_[i] += w;
        f.nu_[j] += w;
      }
  }
  return f;
}

struct Cluster {
  std::vector<SiteIndex> sites;  // BFS order, origin first
  std::shared_ptr<std::vector<bool>> mask;
  bool isolated = false;
};

// Sites connected to the origin through open (positive-weight) edges.
inline Cluster origin_cluster(const ConductanceField& field) {
  require(!field.long_range(), ErrorKind::validation, "origin_cluster needs a nearest-neighbour field");
  const auto& box = field.box();
  require(box.size() <= 200'000'000, ErrorKind::resource, "box too large for a cluster search");
  Cluster c;
  c.mask = std::make_shared<std::vector<bool>>(static_cast<std::size_t>(box.size()), false);
  const SiteIndex o = box.origin();
  std::deque<SiteIndex> queue{o};
  (*c.mask)[static_cast<std::size_t>(o)] = true;
  while (!queue.empty()) {
    const SiteIndex x = queue.front();
    queue.pop_front();
    c.sites.push_back(x);
    field.for_each_neighbor(x, [&](SiteIndex y, double) {
      if (!(*c.mask)[static_cast<std::size_t>(y)]) {
        (*c.mask)[static_cast<std::size_t>(y)] = true;
        queue.push_back(y);
      }
    });
  }
  c.isolated = c.sites.size() == 1;
  return c;
}

struct PercolationDraw {
  ConductanceField field;
  Cluster cluster;
  std::uint64_t seed_used = 0;
  int retries = 0;
};

// Redraws the field until the origin is not isolated.
inline PercolationDraw percolation_with_cluster(double p, const LatticeBox& box, std::uint64_t seed, int max_retries = 1000) {
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    const std::uint64_t s =
        attempt == 0 ? seed : (CounterRng(seed, static_cast<std::uint64_t>(attempt), stream::cluster_retry))();
    auto field = generate_field(Percolation{p}, box, s);
    auto cluster = origin_cluster(field);
    if (!cluster.isolated || box.radius() == 0) return {std::move(field), std::move(cluster), s, attempt};
  }
  fail(ErrorKind::resource, "origin isolated in every percolation retry");
}

struct CtmcPath {
  LatticeBox box;
  std::vector<SiteIndex> sites;
  std::vector<double> jump_times;  // entry time of sites[i]; jump_times[0] = 0
  double end_time = 0.0;
  bool censored = false;
  bool absorbed = false;

  std::size_t size() const { return sites.size(); }
  double holding_time(std::size_t i) const {
    return (i + 1 < sites.size() ? jump_times[i + 1] : end_time) - jump_times[i];
  }
};

enum class WalkEnd { horizon, censored, absorbed, stopped };

// Exact simulation. `on_hold(site, t_enter, t_leave)` is called for every
// holding interval (clipped at the horizon); returning false stops the walk.
// Reaching the boundary shell of the box censors the path.
template <class OnHold>
WalkEnd walk(const ConductanceField& field, Walk kind, SiteIndex start, double horizon, CounterRng& rng,
             OnHold&& on_hold) {
  const auto& box = field.box();
  SiteIndex x = start;
  double t = 0.0;
  if (box.on_boundary(x) && box.radius() > 0) {
    on_hold(x, 0.0, 0.0);
    return WalkEnd::censored;
  }
  for (;;) {
    const double nu = field.nu(x);
    if (nu <= 0.0) {
      on_hold(x, t, horizon);
      return WalkEnd::absorbed;
    }
    const double rate = kind == Walk::vsrw ? nu : 1.0;
    const double hold = rng.exponential(rate);
    if (t + hold >= horizon) {
      on_hold(x, t, horizon);
      return WalkEnd::horizon;
    }
    if (!on_hold(x, t, t + hold)) return WalkEnd::stopped;
    t += hold;
    x = field.sample_jump(x, rng);
    if (box.on_boundary(x)) {
      on_hold(x, t, t);
      return WalkEnd::censored;
    }
  }
}

inline CtmcPath simulate_ctmc(const ConductanceField& field, Walk kind, SiteIndex start, double horizon,
                              std::uint64_t seed, std::uint64_t replica = 0) {
  require(horizon > 0, ErrorKind::validation, "horizon must be positive");
  require(field.nu(start) > 0, ErrorKind::domain, "walk must start at a site with nu > 0");
  CounterRng rng(seed, replica, stream::path);
  CtmcPath path;
  path.box = field.box();
  const auto end = walk(field, kind, start, horizon, rng, [&](SiteIndex x, double t0, double t1) {
    if (path.sites.empty() || path.sites.back() != x || t0 > path.jump_times.back()) {
      path.sites.push_back(x);
      path.jump_times.push_back(t0);
    }
    path.end_time = t1;
    return true;
  });
  path.censored = end == WalkEnd::censored;
  path.absorbed = end == WalkEnd::absorbed;
  return path;
}

// Time spent in the open l1 ball B(center, radius) during [0, t_cut]; exact
// for piecewise-constant paths.
inline double occupation_time_exact(const CtmcPath& path, SiteIndex center, double radius, double t_cut) {
  double u = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double t0 = path.jump_times[i];
    if (t0 >= t_cut) break;
    const double t1 = std::min(t_cut, i + 1 < path.size() ? path.jump_times[i + 1] : path.end_time);
    if (path.box.l1_distance(path.sites[i], center) < radius) u += t1 - t0;
  }
  return u;
}

struct LatticeBall {
  SiteIndex center;
  double radius;
};

struct HeatKernelSlice {
  double time = 0.0;
  SiteIndex source = 0;
  std::vector<SiteIndex> sites;
  std::vector<double> mass;
  bool killed = false;

  double total() const { return std::accumulate(mass.begin(), mass.end(), 0.0); }
  double at(SiteIndex y) const {
    auto it = std::find(sites.begin(), sites.end(), y);
    return it == sites.end() ? 0.0 : mass[static_cast<std::size_t>(it - sites.begin())];
  }
};

// Generator restricted to a site set, ready for uniformization. Killed
// domains keep the full exit rate, so mass leaving the domain disappears.
class UniformizedChain {
 public:
  UniformizedChain(const ConductanceField& field, Walk kind, std::optional<LatticeBall> domain,
                   std::int64_t max_sites = 5'000'000)
      : killed_(domain.has_value()) {
    const auto& box = field.box();
    if (domain) {
      const auto c = box.coords(domain->center);
      const int reach = static_cast<int>(std::ceil(domain->radius));
      std::vector<int> y(c.size());
      auto rec = [&](auto&& self, int axis, int budget) -> void {
        for (int v = std::max(-box.radius(), c[axis] - budget); v <= std::min(box.radius(), c[axis] + budget); ++v) {
          y[axis] = v;
          const int rest = budget - std::abs(v - c[axis]);
          if (axis + 1 == static_cast<int>(c.size())) {
            const SiteIndex s = box.index(y);
            if (box.l1_distance(s, domain->center) < domain->radius) sites_.push_back(s);
          } else {
            self(self, axis + 1, rest);
          }
        }
      };
      rec(rec, 0, reach);
      std::sort(sites_.begin(), sites_.end());
    } else {
      require(box.size() <= max_sites, ErrorKind::resource, "box too large for a global heat kernel");
      sites_.resize(static_cast<std::size_t>(box.size()));
      std::iota(sites_.begin(), sites_.end(), SiteIndex{0});
    }
    require(static_cast<std::int64_t>(sites_.size()) <= max_sites, ErrorKind::resource, "heat-kernel domain too large");
    std::unordered_map<SiteIndex, std::int32_t> local;
    local.reserve(sites_.size() * 2);
    for (std::size_t i = 0; i < sites_.size(); ++i) local.emplace(sites_[i], static_cast<std::int32_t>(i));
    row_start_.push_back(0);
    exit_rate_.resize(sites_.size());
    for (std::size_t i = 0; i < sites_.size(); ++i) {
      const double nu = field.nu(sites_[i]);
      const double scale = kind == Walk::vsrw ? 1.0 : (nu > 0 ? 1.0 / nu : 0.0);
      exit_rate_[i] = nu * scale;
      field.for_each_neighbor(sites_[i], [&](SiteIndex y, double w) {
        auto it = local.find(y);
        if (it == local.end()) return;  // killed edge
        col_.push_back(it->second);
        rate_.push_back(w * scale);
      });
      row_start_.push_back(static_cast<std::int64_t>(col_.size()));
      lambda_ = std::max(lambda_, exit_rate_[i]);
    }
    index_ = std::move(local);
  }

  const std::vector<SiteIndex>& sites() const { return sites_; }
  double uniformization_rate() const { return lambda_; }

  std::int32_t local_index(SiteIndex s) const {
    auto it = index_.find(s);
    require(it != index_.end(), ErrorKind::domain, "site outside the heat-kernel domain");
    return it->second;
  }

  // p(t, source, .) for every t in `times`, sharing the powers of the
  // uniformized matrix. Poisson weights are truncated once the remaining
  // tail is below tail_tol.
  std::vector<HeatKernelSlice> propagate(SiteIndex source, const std::vector<double>& times,
                                         double tail_tol = 1e-12) const {
    const std::size_t n = sites_.size();
    const auto src = local_index(source);
    double t_max = 0.0;
    for (double t : times) {
      require(t >= 0, ErrorKind::validation, "heat-kernel time must be >= 0");
      t_max = std::max(t_max, t);
      require(lambda_ * t <= 1e5, ErrorKind::resource, "uniformization needs Lambda t <= 1e5");
    }
    std::vector<std::vector<double>> acc(times.size(), std::vector<double>(n, 0.0));
    std::vector<double> v(n, 0.0), next(n, 0.0);
    v[static_cast<std::size_t>(src)] = 1.0;
    const double lam = lambda_ > 0 ? lambda_ : 1.0;
    std::vector<bool> done(times.size(), false);
    std::size_t remaining = times.size();
    for (std::size_t i = 0; i < times.size(); ++i)
      if (times[i] == 0.0 || lambda_ == 0.0) {
        acc[i] = v;
        done[i] = true;
        --remaining;
      }
    for (std::int64_t k = 0; remaining > 0; ++k) {
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (done[i]) continue;
        const double mean = lam * times[i];
        const double logw = -mean + static_cast<double>(k) * std::log(mean) - std::lgamma(static_cast<double>(k) + 1.0);
        const double w = std::exp(logw);
        if (w > 0)
          for (std::size_t j = 0; j < n; ++j) acc[i][j] += w * v[j];
        // P(N > k) <= w_k (k + 1) / (k + 1 - mean) past the mean; 1 - sum(w)
        // would stall at the lgamma rounding level for large means
        const double kk = static_cast<double>(k);
        if (kk > mean && w * (kk + 1.0) / (kk + 1.0 - mean) < tail_tol) {
          done[i] = true;
          --remaining;
        }
      }
      if (remaining == 0) break;
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t a = 0; a < n; ++a) {
        const double va = v[a];
        if (va == 0.0) continue;
        next[a] += va * (1.0 - exit_rate_[a] / lam);
        for (auto e = row_start_[a]; e < row_start_[a + 1]; ++e)
          next[static_cast<std::size_t>(col_[static_cast<std::size_t>(e)])] += va * rate_[static_cast<std::size_t>(e)] / lam;
      }
      std::swap(v, next);
    }
    std::vector<HeatKernelSlice> out;
    for (std::size_t i = 0; i < times.size(); ++i)
      out.push_back(HeatKernelSlice{times[i], source, sites_, std::move(acc[i]), killed_});
    return out;
  }

 private:
  bool killed_;
  std::vector<SiteIndex> sites_;
  std::unordered_map<SiteIndex, std::int32_t> index_;
  std::vector<std::int64_t> row_start_;
  std::vector<std::int32_t> col_;
  std::vector<double> rate_;
  std::vector<double> exit_rate_;
  double lambda_ = 0.0;
};

inline HeatKernelSlice heat_kernel(const ConductanceField& field, Walk kind, std::optional<LatticeBall> domain, double t,
                                   SiteIndex source) {
  UniformizedChain chain(field, kind, domain);
  return chain.propagate(source, {t}).front();
}

// Edge-list serialization: '#' header lines with model tag, seed and box,
// then "a_1..a_d,b_1..b_d,weight" rows for every positive weight.
inline void write_field(const ConductanceField& field, const std::string& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), ErrorKind::io, "cannot open " + path);
  const auto& box = field.box();
  const int dim = box.dimension();
  os << "# occlab conductance field v1\n";
  os << "# model_tag: " << describe(field.tag()) << "\n";
  os << "# seed: " << field.seed() << "\n";
  os << "# box: dimension=" << dim << " radius=" << box.radius() << "\n";
  for (int k = 0; k < dim; ++k) os << "a" << k + 1 << ",";
  for (int k = 0; k < dim; ++k) os << "b" << k + 1 << ",";
  os << "weight\n";
  os.precision(17);
  for (SiteIndex x = 0; x < box.size(); ++x) {
    field.for_each_neighbor(x, [&](SiteIndex y, double w) {
      if (y <= x) return;
      for (int c : box.coords(x)) os << c << ",";
      for (int c : box.coords(y)) os << c << ",";
      os << w << "\n";
    });
  }
}

// Reads a nearest-neighbour edge list back into a materialized field.
inline ConductanceField read_field(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::io, "cannot open " + path);
  std::string line;
  int dim = 0, radius = -1;
  std::uint64_t seed = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (auto p = line.find("dimension="); p != std::string::npos) {
        std::istringstream ss(line.substr(p));
        std::string tok;
        while (ss >> tok) {
          if (tok.rfind("dimension=", 0) == 0) dim = std::stoi(tok.substr(10));
          if (tok.rfind("radius=", 0) == 0) radius = std::stoi(tok.substr(7));
        }
      }
      if (auto p = line.find("seed: "); p != std::string::npos) seed = std::stoull(line.substr(p + 6));
      continue;
    }
    if (line[0] == 'a') continue;  // column header
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  require(dim >= 1 && radius >= 0, ErrorKind::io, "field file lacks a box header");
  ConductanceField f;
  f.box_ = LatticeBox(dim, radius);
  f.tag_ = Unbounded{WeightLaw::constant(0.0)};
  f.seed_ = seed;
  f.nn_weights_.assign(static_cast<std::size_t>(f.box_.size() * dim), 0.0);
  for (const auto& row : rows) {
    require(static_cast<int>(row.size()) == 2 * dim + 1, ErrorKind::io, "malformed field row");
    std::vector<int> a(dim), b(dim);
    for (int k = 0; k < dim; ++k) a[k] = static_cast<int>(row[k]), b[k] = static_cast<int>(row[dim + k]);
    SiteIndex x = f.box_.index(a), y = f.box_.index(b);
    if (y < x) std::swap(x, y);
    int axis = -1;
    for (int k = 0; k < dim; ++k)
      if (y - x == f.box_.stride(k)) axis = k;
    require(axis >= 0 && f.box_.l1_distance(x, y) == 1, ErrorKind::io, "field file has a non nearest-neighbour edge");
    f.nn_weights_[static_cast<std::size_t>(x) * dim + axis] = row[2 * dim];
  }
  return f;
}

// Site-set helpers used by experiments.
inline std::vector<SiteIndex> l1_ball_sites(const LatticeBox& box, SiteIndex center, double radius) {
  std::vector<SiteIndex> out;
  const auto c = box.coords(center);
  const int reach = static_cast<int>(std::ceil(radius));
  std::vector<int> y(c.size());
  auto rec = [&](auto&& self, int axis, int budget) -> void {
    for (int v = std::max(-box.radius(), c[axis] - budget); v <= std::min(box.radius(), c[axis] + budget); ++v) {
      y[axis] = v;
      if (axis + 1 == static_cast<int>(c.size())) {
        const SiteIndex s = box.index(y);
        if (box.l1_distance(s, center) < radius) out.push_back(s);
      } else {
        self(self, axis + 1, budget - std::abs(v - c[axis]));
      }
    }
  };
  rec(rec, 0, reach);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace occlab
