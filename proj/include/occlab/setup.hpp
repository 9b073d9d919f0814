#pragma once

// Builds processes, fields, scale functions and grids from a Config.

#include <algorithm>
#include <cmath>
#include <functional>
#include <locale>
#include <span>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "occlab/config.hpp"
#include "occlab/continuum.hpp"
#include "occlab/lattice.hpp"
#include "occlab/scale.hpp"

namespace occlab {

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "experiment", "seed", "replicas", "workers", "output_dir", "label",
      // process
      "process.kind", "process.dimension", "process.alpha", "process.time_step", "process.horizon",
      "process.radius_scaling", "process.scaling_exponent", "process.step_policy", "process.far_field_factor",
      "process.max_step", "process.relative_step", "process.min_step", "process.exit_monitoring", "process.dump_paths", "process.model", "process.p", "process.law",
      "process.law_a", "process.law_b", "process.law_p", "process.walk", "process.box_radius", "process.retries",
      // scale
      "scale.kind", "scale.c", "scale.exponent", "scale.file",
      // grid
      "grid.radii", "grid.r0", "grid.ratio", "grid.count", "grid.kappas", "grid.kappa_min", "grid.kappa_max",
      "grid.kappa_count", "grid.times", "grid.t_min", "grid.t_max", "grid.t_count",
      // checks and experiment parameters
      "check.kinds", "check.controls", "check.eta", "check.ndl_radii", "check.lambda_max", "check.jumps",
      "check.jump_bins", "check.tail_radii", "check.tail_sites", "check.vrd_centers", "check.vrd_radii",
      "check.min_r_squared", "check.probes", "check.block_half_width", "check.r0", "check.radius",
      "check.z_max",
      // oracle
      "oracle.bessel_nu", "oracle.ct_dimensions", "oracle.getoor_alpha", "oracle.getoor_d", "oracle.getoor_r",
      "oracle.bm_d", "oracle.bm_r"};
  return keys;
}

inline std::vector<double> log_spaced(double lo, double hi, std::int64_t count) {
  std::vector<double> v;
  for (std::int64_t i = 0; i < count; ++i)
    v.push_back(count == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1)));
  return v;
}

inline void require_sorted(const std::vector<double>& v, const std::string& key) {
  require(!v.empty(), ErrorKind::validation, key + ": grid must be nonempty");
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(std::isfinite(v[i]) && v[i] > 0, ErrorKind::validation, key + ": grid values must be positive");
    if (i) require(v[i] > v[i - 1], ErrorKind::validation, key + ": grid must be strictly increasing");
  }
}

// Explicit list under `key`, or a geometric progression from lo/ratio/count
// style keys. Returned in increasing order.
inline std::vector<double> radius_grid(const Config& cfg, const std::string& key = "grid.radii") {
  std::vector<double> v;
  if (cfg.has(key)) {
    v = cfg.get_reals(key);
    require_sorted(v, key);
    return v;
  }
  require(key == "grid.radii", ErrorKind::validation, key + ": missing required key");
  const double r0 = cfg.get_real("grid.r0"), ratio = cfg.get_real("grid.ratio");
  const auto count = cfg.get_int("grid.count");
  require(r0 > 0, ErrorKind::validation, "grid.r0: must be positive");
  require(ratio > 0 && ratio != 1, ErrorKind::validation, "grid.ratio: must be positive and != 1");
  require(count >= 1, ErrorKind::validation, "grid.count: must be >= 1");
  for (std::int64_t i = 0; i < count; ++i) v.push_back(r0 * std::pow(ratio, static_cast<double>(i)));
  std::sort(v.begin(), v.end());
  return v;
}

inline std::vector<double> kappa_grid(const Config& cfg) {
  std::vector<double> v;
  if (cfg.has("grid.kappas")) {
    v = cfg.get_reals("grid.kappas");
  } else {
    const double lo = cfg.get_real("grid.kappa_min", 0.01), hi = cfg.get_real("grid.kappa_max", 100.0);
    const auto n = cfg.get_int("grid.kappa_count", 17);
    require(lo > 0 && hi > lo, ErrorKind::validation, "grid.kappa_min: need 0 < kappa_min < kappa_max");
    require(n >= 2, ErrorKind::validation, "grid.kappa_count: must be >= 2");
    v = log_spaced(lo, hi, n);
  }
  require_sorted(v, "grid.kappas");
  return v;
}

inline std::vector<double> time_grid(const Config& cfg) {
  std::vector<double> v;
  if (cfg.has("grid.times")) {
    v = cfg.get_reals("grid.times");
  } else {
    const double lo = cfg.get_real("grid.t_min"), hi = cfg.get_real("grid.t_max");
    const auto n = cfg.get_int("grid.t_count");
    require(lo > 0 && hi > lo, ErrorKind::validation, "grid.t_min: need 0 < t_min < t_max");
    require(n >= 2, ErrorKind::validation, "grid.t_count: must be >= 2");
    v = log_spaced(lo, hi, n);
  }
  require_sorted(v, "grid.times");
  return v;
}

struct ProcessSpec {
  enum class Kind { brownian, stable, lattice } kind = Kind::brownian;
  int dimension = 1;
  double alpha = 2.0;
  // continuum
  double time_step = 1e-3;
  double horizon = 1.0;
  bool radius_scaling = false;  // time_step and horizon multiply by r^scaling_exponent
  double scaling_exponent = 2.0;
  std::string step_policy = "uniform";
  double far_field_factor = 0.2, max_step = 1.0, relative_step = 1e-3, min_step = 1e-6;
  bool bridge_exit = false;  // exit_monitoring = "bridge"
  // lattice
  ModelTag model = Percolation{1.0};
  Walk walk = Walk::vsrw;
  int box_radius = 0;
  int retries = 1000;

  bool lattice() const { return kind == Kind::lattice; }
  bool long_range() const { return lattice() && std::holds_alternative<StableLike>(model); }

  double radius_factor(double r) const { return radius_scaling ? std::pow(r, scaling_exponent) : 1.0; }

  ContinuumConfig continuum(std::uint64_t seed, double r = 1.0) const {
    ContinuumConfig c;
    if (kind == Kind::stable) c.process = Stable{alpha};
    c.dimension = dimension;
    c.time_step = time_step * radius_factor(r);
    c.horizon = horizon * radius_factor(r);
    c.seed = seed;
    c.bridge_exit = bridge_exit;
    c.validate();
    return c;
  }
};

inline WeightLaw parse_law(const Config& cfg) {
  const auto law = cfg.get_string("process.law", "constant");
  const double a = cfg.get_real("process.law_a", 1.0), b = cfg.get_real("process.law_b", 1.0),
               p = cfg.get_real("process.law_p", 0.5);
  WeightLaw w;
  if (law == "constant") w = WeightLaw::constant(a);
  else if (law == "uniform") w = WeightLaw::uniform(a, b);
  else if (law == "two_point") w = WeightLaw::two_point(a, b, p);
  else if (law == "lognormal") w = WeightLaw::lognormal(a, b);
  else if (law == "pareto") w = WeightLaw::pareto(a, b);
  else fail(ErrorKind::validation, "process.law: unknown law '" + law + "'");
  try {
    w.validate();
  } catch (const Error& e) {
    fail(ErrorKind::validation, "process.law: " + e.detail());
  }
  return w;
}

inline ProcessSpec parse_process(const Config& cfg) {
  ProcessSpec p;
  const auto kind = cfg.get_string("process.kind");
  p.dimension = static_cast<int>(cfg.get_int("process.dimension", 1));
  require(p.dimension >= 1 && p.dimension <= 8, ErrorKind::validation, "process.dimension: must lie in [1, 8]");
  p.horizon = cfg.get_real("process.horizon", 1.0);
  require(p.horizon > 0, ErrorKind::validation, "process.horizon: must be positive");
  p.radius_scaling = cfg.get_bool("process.radius_scaling", false);
  if (kind == "brownian" || kind == "stable") {
    p.kind = kind == "brownian" ? ProcessSpec::Kind::brownian : ProcessSpec::Kind::stable;
    if (p.kind == ProcessSpec::Kind::stable) {
      p.alpha = cfg.get_real("process.alpha");
      require(p.alpha > 0 && p.alpha < 2, ErrorKind::validation, "process.alpha: must lie in (0, 2)");
    }
    p.time_step = cfg.get_real("process.time_step", 1e-3);
    require(p.time_step > 0, ErrorKind::validation, "process.time_step: must be positive");
    require(p.time_step <= p.horizon / 100.0 * (1 + 1e-12), ErrorKind::validation,
            "process.time_step: must be <= process.horizon / 100");
    p.step_policy = cfg.get_string("process.step_policy", "uniform");
    require(p.step_policy == "uniform" || p.step_policy == "far_field" || p.step_policy == "geometric",
            ErrorKind::validation, "process.step_policy: expected uniform, far_field or geometric");
    p.far_field_factor = cfg.get_real("process.far_field_factor", 0.2);
    p.max_step = cfg.get_real("process.max_step", 1.0);
    p.relative_step = cfg.get_real("process.relative_step", 1e-3);
    p.min_step = cfg.get_real("process.min_step", 1e-6);
    require(p.far_field_factor > 0 && p.max_step > 0 && p.relative_step > 0 && p.min_step > 0, ErrorKind::validation,
            "process.step_policy: step parameters must be positive");
    const auto monitoring = cfg.get_string("process.exit_monitoring", "grid");
    require(monitoring == "grid" || monitoring == "bridge", ErrorKind::validation,
            "process.exit_monitoring: expected grid or bridge");
    require(monitoring == "grid" || p.kind == ProcessSpec::Kind::brownian, ErrorKind::validation,
            "process.exit_monitoring: bridge needs process.kind = brownian");
    p.bridge_exit = monitoring == "bridge";
  } else if (kind == "lattice") {
    p.kind = ProcessSpec::Kind::lattice;
    const auto model = cfg.get_string("process.model", "percolation");
    if (model == "percolation") {
      const double prob = cfg.get_real("process.p", 1.0);
      require(prob >= 0 && prob <= 1, ErrorKind::validation, "process.p: must lie in [0, 1]");
      p.model = Percolation{prob};
    } else if (model == "unbounded") {
      p.model = Unbounded{parse_law(cfg)};
    } else if (model == "stable_like") {
      p.alpha = cfg.get_real("process.alpha");
      require(p.alpha > 0 && p.alpha < 2, ErrorKind::validation, "process.alpha: must lie in (0, 2)");
      const auto law = parse_law(cfg);
      require(std::isfinite(law.upper_bound()), ErrorKind::validation,
              "process.law: stable_like needs a bounded weight law");
      p.model = StableLike{p.alpha, law};
    } else {
      fail(ErrorKind::validation, "process.model: unknown model '" + model + "'");
    }
    const auto walk = cfg.get_string("process.walk", "vsrw");
    require(walk == "vsrw" || walk == "csrw", ErrorKind::validation, "process.walk: expected vsrw or csrw");
    p.walk = walk == "vsrw" ? Walk::vsrw : Walk::csrw;
    p.box_radius = static_cast<int>(cfg.get_int("process.box_radius"));
    require(p.box_radius >= 1, ErrorKind::validation, "process.box_radius: must be >= 1");
    p.retries = static_cast<int>(cfg.get_int("process.retries", 1000));
  } else {
    fail(ErrorKind::validation, "process.kind: unknown kind '" + kind + "'");
  }
  p.scaling_exponent = cfg.get_real("process.scaling_exponent", p.kind == ProcessSpec::Kind::brownian ? 2.0
                                                                 : p.long_range()                    ? p.alpha
                                                                 : p.lattice()                       ? 2.0
                                                                                                      : p.alpha);
  return p;
}

inline StepPolicy make_step_policy(const ProcessSpec& p, double radius, double base_dt) {
  const Coord o(static_cast<std::size_t>(p.dimension), 0.0);
  if (p.step_policy == "far_field") return far_field_step_policy(o, radius, base_dt, p.far_field_factor, p.max_step);
  if (p.step_policy == "geometric") return geometric_time_policy(p.relative_step, p.min_step);
  return {};
}

// A lattice environment: the field plus the origin's cluster when the model
// can disconnect it.
struct Environment {
  std::shared_ptr<const ConductanceField> field;
  std::shared_ptr<const std::vector<bool>> cluster;  // null: every site
  std::uint64_t field_seed = 0;
  int retries = 0;
  std::size_t cluster_sites = 0;

  const LatticeBox& box() const { return field->box(); }
};

inline Environment make_environment(const ProcessSpec& p, std::uint64_t seed) {
  Environment env;
  const LatticeBox box(p.dimension, p.box_radius);
  if (const auto* perc = std::get_if<Percolation>(&p.model); perc && perc->p < 1.0) {
    auto draw = percolation_with_cluster(perc->p, box, seed, p.retries);
    env.field = std::make_shared<ConductanceField>(std::move(draw.field));
    env.cluster = draw.cluster.mask;
    env.field_seed = draw.seed_used;
    env.retries = draw.retries;
    env.cluster_sites = draw.cluster.sites.size();
    return env;
  }
  env.field = std::make_shared<ConductanceField>(generate_field(p.model, box, seed));
  env.field_seed = seed;
  env.cluster_sites = static_cast<std::size_t>(box.size());
  return env;
}

// Re q(xi) = sum_y eta_{xy} (1 - cos(xi . (y - x))) of the walk's generator
// at the origin.
inline std::function<double(std::span<const double>)> lattice_symbol(const Environment& env) {
  const auto& box = env.box();
  const SiteIndex o = box.origin();
  auto offsets = std::make_shared<std::vector<std::pair<std::vector<int>, double>>>();
  env.field->for_each_neighbor(o, [&](SiteIndex y, double w) { offsets->push_back({box.coords(y), w}); });
  return [offsets](std::span<const double> xi) {
    double s = 0.0;
    for (const auto& [z, w] : *offsets) {
      double dot = 0.0;
      for (std::size_t k = 0; k < z.size(); ++k) dot += xi[k] * z[k];
      s += w * (1.0 - std::cos(dot));
    }
    return s;
  };
}

inline ScaleFunction make_scale(const Config& cfg, const ProcessSpec& p, const Environment* env) {
  const auto kind = cfg.get_string("scale.kind", "power");
  if (kind == "power") {
    const double c = cfg.get_real("scale.c", 1.0), e = cfg.get_real("scale.exponent", p.scaling_exponent);
    require(c > 0 && e > 0, ErrorKind::validation, "scale.c: power scale needs c > 0 and exponent > 0");
    return ScaleFunction::power(c, e);
  }
  if (kind == "tabulated") {
    const auto file = cfg.get_string("scale.file");
    std::ifstream in(file);
    require(static_cast<bool>(in), ErrorKind::io, "scale.file: cannot open " + file);
    std::vector<std::pair<double, double>> rows;
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || std::isalpha(static_cast<unsigned char>(line[0]))) continue;
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream is(line);
      is.imbue(std::locale::classic());
      double r = 0, v = 0;
      require(static_cast<bool>(is >> r >> v), ErrorKind::validation, "scale.file: malformed row '" + line + "'");
      rows.push_back({r, v});
    }
    try {
      return ScaleFunction::tabulated(rows);
    } catch (const Error& e) {
      fail(ErrorKind::validation, "scale.file: " + e.detail());
    }
  }
  if (kind == "process_symbol") {
    if (!p.lattice()) {
      // |xi|^alpha, or |xi|^2 / 2 for generator (1/2) Laplacian
      const double a = p.kind == ProcessSpec::Kind::brownian ? 2.0 : p.alpha;
      const double c = p.kind == ProcessSpec::Kind::brownian ? 0.5 : 1.0;
      return ScaleFunction::levy_exponent([a, c](double rho) { return c * std::pow(rho, a); });
    }
    require(env != nullptr, ErrorKind::validation, "scale.kind: process_symbol needs a lattice environment");
    auto q = lattice_symbol(*env);
    if (p.dimension == 1)
      return ScaleFunction::levy_exponent([q](double rho) { return q(std::span<const double>(&rho, 1)); }, 1.0, 1e12);
    return ScaleFunction::symbol(q, p.dimension, Coord(static_cast<std::size_t>(p.dimension), 0.0), 1.0, 1e12);
  }
  fail(ErrorKind::validation, "scale.kind: unknown kind '" + kind + "'");
}

}  // namespace occlab
