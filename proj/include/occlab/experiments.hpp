#pragma once

// Experiment orchestration: one config in, one output directory out.
// Replicas run on the worker pool; everything written to disk is merged in
// replica order, so outputs do not depend on the worker count.

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "occlab/continuum.hpp"
#include "occlab/estimators.hpp"
#include "occlab/geometry.hpp"
#include "occlab/io.hpp"
#include "occlab/lattice.hpp"
#include "occlab/oracles.hpp"
#include "occlab/parallel.hpp"
#include "occlab/scale.hpp"
#include "occlab/setup.hpp"
#include "occlab/stats.hpp"

namespace occlab {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct RunOptions {
  unsigned workers = 1;
  std::filesystem::path output_root = "runs";
};

struct RunResult {
  std::filesystem::path dir;
  Json manifest;
  Json summary;

  bool all_pass() const {
    for (const auto& c : summary["checks"])
      if (!c["pass"].get<bool>()) return false;
    return true;
  }
};

namespace detail {

struct Context {
  explicit Context(const Config& c) : cfg(c) {}

  const Config& cfg;
  ProcessSpec proc;
  std::uint64_t seed = 0;
  std::size_t replicas = 0;
  unsigned workers = 1;
  std::filesystem::path dir;
  std::vector<std::string> files;
  Json censoring = Json::object();
  Json summary = Json::object();
  std::optional<Environment> env;

  std::filesystem::path output(const std::string& name) {
    files.push_back(name);
    return dir / name;
  }

  void check(const std::string& name, bool pass, Json detail = Json::object()) {
    Json c = Json::object();
    c["name"] = name;
    c["pass"] = pass;
    for (auto& [k, v] : detail.items()) c[k] = v;
    summary["checks"].push_back(std::move(c));
  }

  const Environment& environment() {
    require(proc.lattice(), ErrorKind::validation, "process.kind: this check needs a lattice process");
    if (!env) env = make_environment(proc, seed);
    return *env;
  }

  Coord origin() const { return Coord(static_cast<std::size_t>(proc.dimension), 0.0); }
};

struct ExitDraw {
  double tau = 0.0;
  bool exited = false;
};

// First exit from the open ball B(0, r): Euclidean for continuum processes,
// l1 with exit once |X|_1 >= r on the lattice.
inline std::vector<ExitDraw> sample_exits(Context& cx, double r, std::size_t radius_index) {
  const std::uint64_t base = static_cast<std::uint64_t>(radius_index) * cx.replicas;
  if (!cx.proc.lattice()) {
    const auto c = cx.proc.continuum(cx.seed, r);
    const Coord o = cx.origin();
    auto draws = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
      const auto e = exit_time_streaming(c, o, base + i, o, r);
      return ExitDraw{e.time, e.exited};
    });
    // off by default: paths are large
    const auto dump = static_cast<std::uint64_t>(std::max<std::int64_t>(0, cx.cfg.get_int("process.dump_paths", 0)));
    for (std::uint64_t i = 0; i < std::min<std::uint64_t>(dump, cx.replicas); ++i) {
      std::filesystem::create_directories(cx.dir / "paths");
      const auto path = simulate(c, o, base + i);
      std::vector<std::string> header{"t"};
      for (int a = 1; a <= c.dimension; ++a) header.push_back("x" + std::to_string(a));
      CsvWriter w(cx.output("paths/r" + std::to_string(radius_index) + "_" + std::to_string(base + i) + ".csv"), header);
      for (std::size_t k = 0; k < path.size() && path.times[k] <= draws[i].tau; ++k) {
        std::vector<std::string> row{cell(path.times[k])};
        for (double x : path.position(k)) row.push_back(cell(x));
        w.row(row);
      }
    }
    return draws;
  }
  const auto& env = cx.environment();
  const auto& box = env.box();
  const double horizon = cx.proc.horizon * cx.proc.radius_factor(r);
  const auto kind = cx.proc.walk;
  return map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
    CounterRng rng(cx.seed, base + i, stream::path);
    ExitDraw d{horizon, false};
    walk(*env.field, kind, box.origin(), horizon, rng, [&](SiteIndex x, double t0, double) {
      if (box.l1_norm(x) >= r) {
        if (!d.exited) d = {t0, true};
        return false;
      }
      return true;
    });
    return d;
  });
}

class ExitCache {
 public:
  explicit ExitCache(Context& cx) : cx_(cx) {}

  const std::vector<double>& radii() {
    if (radii_.empty()) radii_ = radius_grid(cx_.cfg);
    return radii_;
  }

  const std::vector<ExitDraw>& draws(std::size_t k) {
    radii();
    auto it = cache_.find(k);
    if (it == cache_.end()) it = cache_.emplace(k, sample_exits(cx_, radii_[k], k)).first;
    return it->second;
  }

  ExitSample sample(std::size_t k) {
    ExitSample s;
    s.radius = radii()[k];
    for (const auto& d : draws(k)) {
      if (d.exited) s.taus.push_back(d.tau);
      else ++s.censored;
    }
    return s;
  }

  void write_csv() {
    if (written_) return;
    written_ = true;
    radii();
    CsvWriter csv(cx_.output("exits.csv"), {"radius", "replica", "tau", "exited"});
    Json censored = Json::array();
    for (std::size_t k = 0; k < radii_.size(); ++k) {
      const auto& d = draws(k);
      Json ids = Json::array();
      for (std::size_t i = 0; i < d.size(); ++i) {
        csv.row({cell(radii_[k]), cell(static_cast<std::uint64_t>(i)), cell(d[i].tau), cell(d[i].exited)});
        if (!d[i].exited) ids.push_back(i);
      }
      censored.push_back({{"radius", radii_[k]}, {"censored", ids.size()}, {"replicas", d.size()}, {"ids", ids}});
    }
    cx_.censoring["exits"] = censored;
  }

 private:
  Context& cx_;
  std::vector<double> radii_;
  std::map<std::size_t, std::vector<ExitDraw>> cache_;
  bool written_ = false;
};

inline std::optional<double> exit_oracle(const ProcessSpec& p, double r) {
  if (p.kind == ProcessSpec::Kind::brownian) return getoor_mean_exit(2.0, p.dimension, r);
  if (p.kind == ProcessSpec::Kind::stable) return getoor_mean_exit(p.alpha, p.dimension, r);
  return std::nullopt;
}

inline void check_comparability(Context& cx, ExitCache& exits, const ScaleFunction& phi) {
  const double lambda_max = cx.cfg.get_real("check.lambda_max", 5.0);
  const double z_max = cx.cfg.get_real("check.z_max", 3.0);
  exits.write_csv();
  JsonlWriter out(cx.output("comparability.jsonl"));
  bool z_ok = true;
  std::vector<ExitSample> samples;
  for (std::size_t k = 0; k < exits.radii().size(); ++k) {
    auto s = exits.sample(k);
    const double r = s.radius;
    Json rec = Json::object();
    rec["record"] = "radius";
    rec["radius"] = r;
    rec["exits"] = s.taus.size();
    rec["censored"] = s.censored;
    const double m = s.taus.empty() ? kInf : stats::mean(s.taus);
    const double se = s.taus.size() < 2 ? kInf : stats::standard_error(s.taus);
    rec["mean"] = json_real(m);
    rec["se"] = json_real(se);
    rec["phi"] = phi(r);
    rec["ratio"] = json_real(m / phi(r));
    if (const auto o = exit_oracle(cx.proc, r)) {
      const double z = (m - *o) / se;
      rec["oracle"] = *o;
      rec["z"] = json_real(z);
      z_ok = z_ok && std::abs(z) <= z_max;
    } else {
      rec["oracle"] = nullptr;
      rec["z"] = nullptr;
    }
    out.write(rec);
    samples.push_back(std::move(s));
  }
  Json sum = Json::object();
  sum["record"] = "summary";
  bool lambda_ok = true;
  try {
    const auto rep = mean_exit_comparability(samples, [&](double r) { return phi(r); });
    sum["lambda_hat"] = rep.lambda_hat;
    sum["ratios"] = json_reals(rep.ratios);
    lambda_ok = rep.lambda_hat <= lambda_max;
  } catch (const Error& e) {
    // per-radius records above still carry the means
    sum["lambda_hat"] = nullptr;
    sum["error"] = e.what();
    lambda_ok = samples.size() < 3 && e.kind() == ErrorKind::insufficient_data;
  }
  sum["lambda_max"] = lambda_max;
  sum["z_max"] = z_max;
  sum["oracle_within_z"] = z_ok;
  sum["pass"] = z_ok && lambda_ok;
  out.write(sum);
  cx.check("comparability", z_ok && lambda_ok, {{"lambda_hat", sum["lambda_hat"]}});
}

inline Json tail_record(const ExitTailFit& f) {
  Json j = Json::object();
  j["slope"] = f.slope;
  j["slope_lower"] = f.slope_lower;
  j["slope_upper"] = f.slope_upper;
  j["c4"] = json_real(f.c4);
  j["c6"] = json_real(f.c6);
  j["r_squared"] = f.r_squared;
  j["tail_ratio"] = json_real(f.tail_ratio);
  j["envelope_spread"] = json_real(f.envelope_spread);
  j["n_max"] = f.n_max;
  j["samples"] = f.samples;
  j["sp_violation"] = f.sp_violation;
  j["survival"] = json_reals(f.survival);
  return j;
}

inline void check_exit_tail(Context& cx, ExitCache& exits, const ScaleFunction& phi) {
  const double min_r2 = cx.cfg.get_real("check.min_r_squared", 0.95);
  exits.write_csv();
  JsonlWriter out(cx.output("exit_tail.jsonl"));
  bool ok = true;
  for (std::size_t k = 0; k < exits.radii().size(); ++k) {
    const auto s = exits.sample(k);
    Json rec = Json::object();
    rec["record"] = "radius";
    rec["radius"] = s.radius;
    rec["scale_value"] = phi(s.radius);
    rec["censored"] = s.censored;
    try {
      const auto f = exit_tail_fit(s.taus, phi(s.radius), s.censored);
      rec.update(tail_record(f));
      const bool pass = f.r_squared > min_r2 && !f.sp_violation && std::isfinite(f.c4) && std::isfinite(f.c6) &&
                        f.c4 > 0 && f.slope_lower <= f.slope_upper;
      rec["pass"] = pass;
      ok = ok && pass;
    } catch (const Error& e) {
      rec["error"] = e.what();
      rec["pass"] = false;
      ok = false;
    }
    out.write(rec);
  }

  if (cx.cfg.get_bool("check.controls", true)) {
    // Synthetic exit laws with known answers: Exponential(1) has slope 1;
    // Pareto(1.5) has no exponential tail and must be flagged.
    const std::size_t n = 10000;
    std::vector<double> expo(n), pareto(n);
    for (std::size_t i = 0; i < n; ++i) {
      CounterRng rng(cx.seed, i, stream::synthetic);
      expo[i] = rng.exponential(1.0);
      pareto[i] = std::pow(rng.uniform(), -1.0 / 1.5);
    }
    const auto fe = exit_tail_fit(expo, 1.0);
    const auto fp = exit_tail_fit(pareto, 1.0);
    Json re = {{"record", "control"}, {"control", "exponential"}}, rp = {{"record", "control"}, {"control", "pareto_1.5"}};
    re.update(tail_record(fe));
    rp.update(tail_record(fp));
    re["pass"] = std::abs(fe.slope - 1.0) <= 0.05;
    rp["pass"] = fp.sp_violation;
    out.write(re);
    out.write(rp);
    cx.check("exit_tail_exponential_control", std::abs(fe.slope - 1.0) <= 0.05, {{"slope", fe.slope}});
    cx.check("exit_tail_pareto_control", fp.sp_violation, {{"r_squared", fp.r_squared}});
  }
  cx.check("exit_tail", ok);
}

inline void check_heat_kernel(Context& cx, const ScaleFunction& phi) {
  const auto& env = cx.environment();
  const auto& box = env.box();
  const SiteIndex o = box.origin();
  const double eta = cx.cfg.get_real("check.eta", 0.5);
  require(eta > 0 && eta < 1, ErrorKind::validation, "check.eta: must lie in (0, 1)");
  const auto radii = cx.cfg.has("check.ndl_radii") ? radius_grid(cx.cfg, "check.ndl_radii") : radius_grid(cx.cfg);
  JsonlWriter out(cx.output("heat_kernel.jsonl"));

  // near-diagonal lower bound in killed balls
  std::vector<double> cl;
  for (double r : radii) {
    UniformizedChain chain(*env.field, cx.proc.walk, LatticeBall{o, r});
    const double t = phi(eta * r);
    const auto sources = l1_ball_sites(box, o, eta * eta * r);
    require(!sources.empty(), ErrorKind::validation, "check.ndl_radii: eta^2 r must exceed 0");
    std::vector<std::int32_t> local;
    for (auto s : sources) local.push_back(chain.local_index(s));
    const auto mins = parallel_map(sources.size(), cx.workers, [&](std::size_t i) {
      const auto slice = chain.propagate(sources[i], {t}).front();
      double m = kInf;
      for (auto l : local) m = std::min(m, slice.mass[static_cast<std::size_t>(l)]);
      return m;
    });
    const double m = *std::min_element(mins.begin(), mins.end());
    const double vol = static_cast<double>(chain.sites().size());
    cl.push_back(m * vol);
    out.write({{"record", "ndl"},
               {"radius", r},
               {"time", t},
               {"volume", vol},
               {"sources", sources.size()},
               {"min_kernel", m},
               {"c_l", m * vol}});
  }
  const double cmin = *std::min_element(cl.begin(), cl.end()), cmax = *std::max_element(cl.begin(), cl.end());
  const bool ndl = cmin > 0 && cmax <= 2.0 * cmin;
  out.write({{"record", "ndl_summary"}, {"c_l_min", cmin}, {"c_l_max", cmax}, {"stability", json_real(cmax / cmin)},
             {"pass", ndl}});
  cx.check("ndl", ndl, {{"stability", json_real(cmax / cmin)}});

  // on-diagonal upper bound from the global kernel
  std::vector<double> times;
  if (cx.cfg.has("grid.times") || cx.cfg.has("grid.t_min")) times = time_grid(cx.cfg);
  else times = log_spaced(phi(radii.front()), phi(radii.back()), 9);
  UniformizedChain global(*env.field, cx.proc.walk, std::nullopt);
  const auto slices = global.propagate(o, times);
  CsvWriter csv(cx.output("ndu.csv"), {"time", "radius", "kernel", "volume", "product"});
  const VolumeModel vol = VolumeModel::lattice(box, env.cluster);
  const Coord oc = cx.origin();
  std::vector<double> prod;
  for (const auto& s : slices) {
    const double rad = phi.inverse(s.time);
    const double p = s.mass[static_cast<std::size_t>(global.local_index(o))];
    const double v = vol(oc, rad);
    prod.push_back(p * v);
    csv.row({cell(s.time), cell(rad), cell(p), cell(v), cell(p * v)});
  }
  const double pmin = *std::min_element(prod.begin(), prod.end()), pmax = *std::max_element(prod.begin(), prod.end());
  const bool ndu = pmin > 0 && pmax <= 2.0 * pmin;
  out.write({{"record", "ndu_summary"}, {"product_min", pmin}, {"product_max", pmax},
             {"max_over_min", json_real(pmax / pmin)}, {"pass", ndu}});
  cx.check("ndu", ndu, {{"max_over_min", json_real(pmax / pmin)}});

  // slice at the last time, for plotting
  CsvWriter sl(cx.output("heat_kernel_slice.csv"), [&] {
    std::vector<std::string> h;
    for (int k = 1; k <= box.dimension(); ++k) h.push_back("x" + std::to_string(k));
    h.push_back("mass");
    return h;
  }());
  const auto& last = slices.back();
  for (std::size_t i = 0; i < last.sites.size(); ++i) {
    if (last.mass[i] < 1e-300) continue;
    std::vector<std::string> row;
    for (int k = 0; k < box.dimension(); ++k) row.push_back(cell(box.coord(last.sites[i], k)));
    row.push_back(cell(last.mass[i]));
    sl.row(row);
  }
}

inline void check_vrd(Context& cx) {
  const auto radii = radius_grid(cx.cfg, "check.vrd_radii");
  const auto n_centers = static_cast<std::size_t>(cx.cfg.get_int("check.vrd_centers", 16));
  std::vector<Coord> centers{cx.origin()};
  std::optional<Space> space;
  std::optional<VolumeModel> model;
  if (cx.proc.lattice()) {
    const auto& env = cx.environment();
    const auto& box = env.box();
    space = Space::lattice(cx.proc.dimension, box.radius());
    model = VolumeModel::lattice(box, env.cluster);
    // centres in the cluster, inside the inner half of the box
    for (std::uint64_t i = 0; centers.size() < n_centers && i < 1000 * n_centers; ++i) {
      CounterRng rng(cx.seed, i, stream::synthetic);
      std::vector<int> c(static_cast<std::size_t>(cx.proc.dimension));
      for (auto& v : c) v = static_cast<int>(std::floor((rng.uniform() - 0.5) * box.radius()));
      const SiteIndex s = box.index(c);
      if (env.cluster && !(*env.cluster)[static_cast<std::size_t>(s)]) continue;
      centers.emplace_back(c.begin(), c.end());
    }
  } else {
    space = Space::euclidean(cx.proc.dimension);
    model = VolumeModel::euclidean(cx.proc.dimension);
    for (std::uint64_t i = 1; i < n_centers; ++i) {
      CounterRng rng(cx.seed, i, stream::synthetic);
      Coord c(static_cast<std::size_t>(cx.proc.dimension));
      for (auto& v : c) v = 20.0 * (rng.uniform() - 0.5);
      centers.push_back(std::move(c));
    }
  }
  const auto fit = vrd_fit(*space, *model, centers, radii);
  JsonlWriter out(cx.output("vrd.jsonl"));
  out.write({{"d1", fit.d1},
             {"d2", fit.d2},
             {"c_mu", fit.c_mu},
             {"C_mu", fit.C_mu},
             {"central_exponent", fit.central_exponent},
             {"c0", fit.c0},
             {"centers", centers.size()},
             {"pairs", fit.pairs},
             {"violations", fit.violations},
             {"pass", fit.pass}});
  cx.check("vrd", fit.pass, {{"d1", fit.d1}, {"d2", fit.d2}});
}

inline void check_jump_law(Context& cx) {
  const auto& env = cx.environment();
  const auto& box = env.box();
  const auto& field = *env.field;
  const SiteIndex o = box.origin();
  const auto jumps = static_cast<std::size_t>(cx.cfg.get_int("check.jumps", 100000));
  const auto bins = static_cast<std::size_t>(cx.cfg.get_int("check.jump_bins", 40));
  require(jumps >= 1000 && bins >= 2, ErrorKind::validation, "check.jumps: need >= 1000 jumps and >= 2 bins");
  // log-spaced bins in the Euclidean jump length
  const double lmax = std::sqrt(static_cast<double>(box.dimension())) * 2.0 * box.radius() + 1.0;
  const auto edges = log_spaced(1.0, lmax, static_cast<std::int64_t>(bins) + 1);
  auto bin_of = [&](double len) {
    const auto b = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), len) - edges.begin());
    return std::min(b == 0 ? 0 : b - 1, bins - 1);
  };
  std::vector<double> probs(bins, 0.0);
  const double nu = field.nu(o);
  field.for_each_neighbor(o, [&](SiteIndex y, double w) { probs[bin_of(box.euclidean_distance(o, y))] += w / nu; });
  const auto to = map_replicas(jumps, cx.workers, [&](std::size_t i) {
    CounterRng rng(cx.seed, i, stream::synthetic);
    return field.sample_jump(o, rng);
  });
  std::vector<double> observed(bins, 0.0);
  for (auto y : to) observed[bin_of(box.euclidean_distance(o, y))] += 1.0;
  const auto chi = stats::chi_square_gof(observed, probs, 0.01);
  JsonlWriter out(cx.output("jump_law.jsonl"));
  out.write({{"jumps", jumps},
             {"bins", bins},
             {"statistic", chi.statistic},
             {"dof", chi.dof},
             {"p_value", chi.p_value},
             {"alpha", 0.01},
             {"observed", observed},
             {"expected", json_reals(probs)},
             {"pass", chi.pass}});
  cx.check("jump_law", chi.pass, {{"p_value", chi.p_value}});
}

inline void check_tail_condition(Context& cx) {
  const auto& env = cx.environment();
  const auto& box = env.box();
  const auto& field = *env.field;
  require(cx.proc.long_range(), ErrorKind::validation, "process.model: tail_condition needs a stable_like field");
  const auto radii = radius_grid(cx.cfg, "check.tail_radii");
  const auto n_sites = static_cast<std::size_t>(cx.cfg.get_int("check.tail_sites", 16));
  std::vector<SiteIndex> sites{box.origin()};
  for (std::uint64_t i = 1; i < n_sites; ++i) {
    CounterRng rng(cx.seed, i, stream::synthetic);
    std::vector<int> c(static_cast<std::size_t>(box.dimension()));
    for (auto& v : c) v = static_cast<int>(std::floor((2.0 * rng.uniform() - 1.0) * box.radius()));
    sites.push_back(box.index(c));
  }
  const double alpha = cx.proc.alpha;
  const auto rows = parallel_map(sites.size(), cx.workers, [&](std::size_t i) {
    std::vector<double> v;
    for (double r : radii) v.push_back(field.tail_sum(sites[i], r));
    return v;
  });
  JsonlWriter out(cx.output("tail_condition.jsonl"));
  std::vector<double> c3;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    double m = 0.0;
    for (const auto& row : rows) m = std::max(m, row[k] * std::pow(radii[k], alpha));
    c3.push_back(m);
    out.write({{"record", "radius"}, {"radius", radii[k]}, {"c3", m}});
  }
  const double lo = *std::min_element(c3.begin(), c3.end()), hi = *std::max_element(c3.begin(), c3.end());
  const bool pass = lo > 0 && std::isfinite(hi) && hi <= 2.0 * lo;
  out.write({{"record", "summary"}, {"alpha", alpha}, {"sites", sites.size()}, {"c3_min", lo}, {"c3_max", hi},
             {"stability", json_real(hi / lo)}, {"pass", pass}});
  cx.check("tail_condition", pass, {{"stability", json_real(hi / lo)}});
}

inline void run_verify(Context& cx) {
  const auto kinds = cx.cfg.get_strings("check.kinds");
  require(!kinds.empty(), ErrorKind::validation, "check.kinds: need at least one check");
  std::optional<ScaleFunction> phi;
  auto scale = [&]() -> const ScaleFunction& {
    if (!phi) phi = make_scale(cx.cfg, cx.proc, cx.proc.lattice() ? &cx.environment() : nullptr);
    return *phi;
  };
  ExitCache exits(cx);
  for (const auto& k : kinds) {
    if (k == "comparability") check_comparability(cx, exits, scale());
    else if (k == "exit_tail") check_exit_tail(cx, exits, scale());
    else if (k == "heat_kernel") check_heat_kernel(cx, scale());
    else if (k == "vrd") check_vrd(cx);
    else if (k == "jump_law") check_jump_law(cx);
    else if (k == "tail_condition") check_tail_condition(cx);
    else fail(ErrorKind::validation, "check.kinds: unknown check '" + k + "'");
  }
  if (cx.env) {
    cx.censoring["field_seed"] = cx.env->field_seed;
    cx.censoring["percolation_retries"] = cx.env->retries;
  }
}

inline void run_total_occupation(Context& cx) {
  const double r = cx.cfg.get_real("check.radius", 1.0);
  require(r > 0, ErrorKind::validation, "check.radius: must be positive");
  struct Row {
    double u = 0.0;
    bool censored = false;
    std::size_t steps = 0;
  };
  std::vector<Row> rows;
  if (!cx.proc.lattice()) {
    auto c = cx.proc.continuum(cx.seed);
    c.step_policy = make_step_policy(cx.proc, r, c.time_step);
    const Coord o = cx.origin();
    rows = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
      const auto res = occupation_streaming(c, o, i, o, r, c.horizon);
      return Row{res.occupation, res.censored, res.steps};
    });
  } else {
    const auto& env = cx.environment();
    const auto& box = env.box();
    rows = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
      CounterRng rng(cx.seed, i, stream::path);
      Row row;
      const auto end = walk(*env.field, cx.proc.walk, box.origin(), cx.proc.horizon, rng, [&](SiteIndex x, double t0, double t1) {
        ++row.steps;
        if (box.l1_norm(x) < r) row.u += t1 - t0;
        return true;
      });
      row.censored = end == WalkEnd::censored;
      return row;
    });
  }
  CsvWriter csv(cx.output("occupation.csv"), {"replica", "occupation", "censored", "steps"});
  std::vector<double> u;
  Json ids = Json::array();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    csv.row({cell(static_cast<std::uint64_t>(i)), cell(rows[i].u), cell(rows[i].censored),
             cell(static_cast<std::uint64_t>(rows[i].steps))});
    if (rows[i].censored) ids.push_back(i);
    else u.push_back(rows[i].u);
  }
  cx.censoring["occupation"] = {{"censored", ids.size()}, {"replicas", rows.size()}, {"ids", ids}};
  require(!u.empty(), ErrorKind::censoring, "every occupation replica was censored");
  const double m = stats::mean(u), se = u.size() > 1 ? stats::standard_error(u) : kInf;
  Json rec = {{"radius", r}, {"horizon", cx.proc.horizon}, {"replicas", u.size()}, {"mean", m}, {"se", json_real(se)}};
  const bool bm = cx.proc.kind == ProcessSpec::Kind::brownian && cx.proc.dimension >= 3;
  bool pass = static_cast<double>(ids.size()) <= 0.01 * static_cast<double>(rows.size());
  if (bm) {
    const double oracle = bm_total_occupation_mean(cx.proc.dimension, r);
    const double bound = bm_occupation_truncation_bound(cx.proc.dimension, r, cx.proc.horizon);
    const double rel = m / oracle - 1.0;
    rec["oracle"] = oracle;
    rec["truncation_bound"] = bound;
    rec["relative_error"] = rel;
    rec["relative_error_debiased"] = (m + bound) / oracle - 1.0;
    rec["tolerance"] = 0.05;
    pass = pass && std::abs(rel) <= 0.05;
  } else {
    rec["oracle"] = nullptr;
  }
  rec["pass"] = pass;
  JsonlWriter(cx.output("occupation.jsonl")).write(rec);
  cx.check("total_occupation", pass, {{"mean", m}});
}

inline void write_curve(Context& cx, const std::string& name, const LimsupCurve& c) {
  CsvWriter csv(cx.output(name), {"kappa", "raw", "projected", "ci_lo", "ci_hi"});
  for (std::size_t k = 0; k < c.kappas.size(); ++k)
    csv.row({cell(c.kappas[k]), cell(c.raw[k]), cell(c.projected[k]), cell(c.ci_lo[k]), cell(c.ci_hi[k])});
}

inline void run_limsup(Context& cx, Regime regime) {
  const auto radii = radius_grid(cx.cfg);
  const auto kappas = kappa_grid(cx.cfg);
  const Environment* env = cx.proc.lattice() ? &cx.environment() : nullptr;
  const auto phi = make_scale(cx.cfg, cx.proc, env);
  // base rate phi * L and the double log L per radius
  std::vector<double> base, loglog;
  if (regime == Regime::infinity) {
    const auto reg = regularize(phi);
    for (double r : radii) {
      base.push_back(rate_infinity(reg, 1.0, r));
      loglog.push_back(base.back() / reg(r));
    }
  } else {
    for (double r : radii) {
      base.push_back(rate_zero(phi, 1.0, r));
      loglog.push_back(base.back() / phi(r));
    }
  }
  struct Variant {
    std::string name, file;
    double power;  // rate = kappa * phi * L^power
  };
  std::vector<Variant> variants{{"rate", "curve.csv", 1.0}};
  if (cx.cfg.get_bool("check.probes", true)) {
    variants.push_back({"div_loglog", "curve_div_loglog.csv", 0.0});
    variants.push_back({"mul_loglog", "curve_mul_loglog.csv", 2.0});
  }
  std::vector<std::vector<double>> rates(variants.size());
  double max_window = 0.0;
  for (std::size_t v = 0; v < variants.size(); ++v)
    for (std::size_t n = 0; n < radii.size(); ++n) {
      rates[v].push_back(base[n] / loglog[n] * std::pow(loglog[n], variants[v].power));
      max_window = std::max(max_window, kappas.back() * rates[v].back());
    }
  const double horizon = cx.cfg.has("process.horizon") ? cx.proc.horizon : max_window;

  struct ReplicaOut {
    std::vector<OccupationGrid> grids;
    bool censored = false;
  };
  auto make_accs = [&] {
    std::vector<NestedOccupation> accs;
    for (std::size_t v = 0; v < variants.size(); ++v) accs.emplace_back(radii, rates[v], kappas, horizon);
    return accs;
  };
  std::vector<ReplicaOut> reps;
  if (env) {
    const auto& box = env->box();
    reps = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
      auto accs = make_accs();
      CounterRng rng(cx.seed, i, stream::path);
      const auto end = walk(*env->field, cx.proc.walk, box.origin(), horizon, rng, [&](SiteIndex x, double t0, double t1) {
        const double d = box.l1_norm(x);
        for (auto& a : accs) a.add(t0, t1, d);
        return true;
      });
      ReplicaOut out;
      out.censored = end == WalkEnd::censored;
      for (auto& a : accs) out.grids.push_back(std::move(a).finish());
      return out;
    });
  } else {
    ContinuumConfig c = cx.proc.continuum(cx.seed);
    c.horizon = horizon;
    c.time_step = std::min(cx.proc.time_step, horizon / 100.0);
    c.step_policy = make_step_policy(cx.proc, radii.back(), c.time_step);
    const Coord o = cx.origin();
    reps = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
      auto accs = make_accs();
      // left-point rule, as for occupation_time
      run_path(c, o, i, [&](double t0, std::span<const double> x0, double t1, std::span<const double>) {
        const double d = euclidean_norm(x0);
        for (auto& a : accs) a.add(t0, t1, d);
        return true;
      });
      ReplicaOut out;
      for (auto& a : accs) out.grids.push_back(std::move(a).finish());
      return out;
    });
  }

  Json excluded = Json::array();
  std::size_t censored = 0;
  for (const auto& r : reps) {
    excluded.push_back(r.grids.front().excluded_count());
    censored += r.censored;
  }
  cx.censoring["limsup"] = {{"censored_replicas", censored}, {"replicas", reps.size()}, {"excluded_windows", excluded}};

  LimsupOptions opt;
  opt.bootstrap_seed = cx.seed;
  JsonlWriter out(cx.output("limsup.jsonl"));
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<OccupationGrid> samples;
    for (auto& r : reps) samples.push_back(std::move(r.grids[v]));
    const auto curve = limsup_curve(samples, regime, opt);
    write_curve(cx, variants[v].file, curve);
    Json rec = Json::object();
    rec["variant"] = variants[v].name;
    rec["regime"] = to_string(regime);
    rec["replicas"] = curve.replicas;
    rec["radii"] = json_reals(radii);
    rec["rates"] = json_reals(rates[v]);
    rec["horizon"] = horizon;
    rec["kappas"] = json_reals(curve.kappas);
    rec["raw"] = json_reals(curve.raw);
    rec["projected"] = json_reals(curve.projected);
    rec["ci_lo"] = json_reals(curve.ci_lo);
    rec["ci_hi"] = json_reals(curve.ci_hi);
    rec["displacement"] = curve.displacement();
    rec["excluded_windows"] = curve.excluded_windows;
    rec["total_windows"] = curve.total_windows;
    const double rate =
        curve.total_windows ? static_cast<double>(curve.excluded_windows) / static_cast<double>(curve.total_windows) : 0.0;
    rec["exclusion_rate"] = rate;
    if (v == 0 && regime == Regime::infinity) {
      try {
        const auto k1 = kappa1_estimate(curve);
        rec["kappa1"] = {{"value", k1.value}, {"spread", k1.spread}, {"plateau", json_reals(k1.plateau)}};
      } catch (const Error& e) {
        rec["kappa1"] = {{"error", e.what()}};
      }
    }
    out.write(rec);
    if (v == 0) {
      cx.check("exclusion_rate", rate < 0.01, {{"exclusion_rate", rate}});
      cx.check("monotone_projection", curve.displacement() < 0.02, {{"displacement", curve.displacement()}});
    }
  }
}

inline void run_occupation_theta(Context& cx) {
  const auto& env = cx.environment();
  const auto& box = env.box();
  const int dim = box.dimension();
  const auto h = static_cast<int>(cx.cfg.get_int("check.block_half_width", 1));
  require(h >= 0 && h < box.radius(), ErrorKind::validation, "check.block_half_width: must lie in [0, box_radius)");
  const auto times = time_grid(cx.cfg);
  const double f_l1 = std::pow(2.0 * h + 1.0, dim);
  const double r0 = cx.cfg.get_real("check.r0", 1.0);
  const auto phi = make_scale(cx.cfg, cx.proc, &env);

  // Theta on the lattice with its own large volume box, so the tail grid of
  // the recurrence classification is not cut off by the walk's box.
  const int vol_radius = dim <= 2 ? 1'000'000 : 10'000;
  ThetaOptions topt;
  topt.tail_s_max = std::min(1e12, phi(vol_radius));
  const VolumeModel vol =
      env.cluster ? VolumeModel::lattice(box, env.cluster) : VolumeModel::lattice(LatticeBox(dim, vol_radius));
  const ThetaFunction<ScaleFunction> theta(vol, phi, cx.origin(), r0, topt);

  auto in_block = [&](SiteIndex x) {
    for (int k = 0; k < dim; ++k)
      if (std::abs(box.coord(x, k)) > h) return false;
    return true;
  };
  const double horizon = times.back();
  const auto paths = map_replicas(cx.replicas, cx.workers, [&](std::size_t i) {
    CounterRng rng(cx.seed, i, stream::path);
    std::vector<double> u(times.size(), kNaN);
    double acc = 0.0;
    std::size_t k = 0;
    walk(*env.field, cx.proc.walk, box.origin(), horizon, rng, [&](SiteIndex x, double t0, double t1) {
      const bool in = in_block(x);
      double a = t0;
      while (k < times.size() && times[k] <= t1) {
        if (in) acc += times[k] - a;
        a = times[k];
        u[k++] = acc;
      }
      if (in) acc += t1 - a;
      return true;
    });
    return u;
  });

  // Theta and the occupation rate on the grid
  std::vector<double> th, rate;
  std::optional<std::string> rate_error;
  for (double t : times) {
    th.push_back(theta.theta(t));
    try {
      rate.push_back(rate_occupation(theta, t));
    } catch (const Error& e) {
      rate.push_back(kNaN);
      if (!rate_error) rate_error = e.what();
    }
  }

  std::vector<double> mean_u(times.size()), se_u(times.size());
  Json censored_ids = Json::array();
  std::vector<const std::vector<double>*> complete;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    if (std::isnan(paths[i].back())) censored_ids.push_back(i);
    else complete.push_back(&paths[i]);
  }
  cx.censoring["occupation_theta"] = {{"censored", censored_ids.size()}, {"replicas", paths.size()}, {"ids", censored_ids}};
  require(!complete.empty(), ErrorKind::censoring, "every replica was censored before the last time");
  for (std::size_t k = 0; k < times.size(); ++k) {
    std::vector<double> col;
    for (auto* p : complete) col.push_back((*p)[k]);
    mean_u[k] = stats::mean(col);
    se_u[k] = col.size() > 1 ? stats::standard_error(col) : kInf;
  }

  // per-trajectory running max of U / (|F|_1 rate)
  std::vector<double> slopes, maxima;
  if (!rate_error) {
    for (auto* p : complete) {
      std::vector<double> ratio;
      for (std::size_t k = 0; k < times.size(); ++k) ratio.push_back((*p)[k] / (f_l1 * rate[k]));
      try {
        const auto d = running_max_drift(times, ratio);
        slopes.push_back(d.slope);
        maxima.push_back(d.running_max.back());
      } catch (const Error&) {
        // path never entered F on the grid
      }
    }
  }

  CsvWriter csv(cx.output("theta.csv"), {"t", "theta", "rate", "mean_u", "se_u", "mean_ratio"});
  for (std::size_t k = 0; k < times.size(); ++k)
    csv.row({cell(times[k]), cell(th[k]), cell(rate[k]), cell(mean_u[k]), cell(se_u[k]),
             cell(mean_u[k] / (f_l1 * rate[k]))});

  JsonlWriter out(cx.output("theta.jsonl"));
  for (std::size_t k = 0; k < times.size(); ++k) {
    Json rec = {{"record", "t"}, {"t", times[k]}, {"theta", th[k]}, {"rate", json_real(rate[k])}, {"mean_u", mean_u[k]}};
    out.write(rec);
  }
  Json sum = Json::object();
  sum["record"] = "summary";
  sum["f_l1"] = f_l1;
  sum["r0"] = r0;
  sum["replicas_used"] = complete.size();
  sum["rate_defined"] = !rate_error.has_value();
  if (rate_error) sum["rate_error"] = *rate_error;
  bool drift_ok = false;
  if (!slopes.empty()) {
    const double s = stats::median(slopes), m = stats::median(maxima);
    std::size_t inside = 0;
    for (double v : slopes) inside += v >= -0.1 && v <= 0.1;
    sum["drift_slope_median"] = s;
    sum["running_max_median"] = m;
    sum["drift_fraction_in_bracket"] = static_cast<double>(inside) / static_cast<double>(slopes.size());
    drift_ok = std::isfinite(m) && m > 0 && s >= -0.1 && s <= 0.1;
  }
  sum["drift_pass"] = drift_ok;

  const auto mb = occupation_mean_bound(times, mean_u, theta, f_l1);
  sum["k0_hat"] = mb.k0_hat;
  sum["mean_ratios"] = json_reals(mb.ratios);
  sum["last_decade_slope"] = mb.last_decade_slope;
  sum["mean_bound_pass"] = mb.pass;

  const auto lattice_tail = theta.classify_tail();
  sum["lattice_recurrence"] = to_string(lattice_tail.verdict);
  sum["lattice_tail_exponent"] = lattice_tail.tail_exponent;
  const ThetaFunction<ScaleFunction> s2(VolumeModel::power(1, 2), ScaleFunction::power(1, 2), {0.0}, 1.0);
  const ThetaFunction<ScaleFunction> s3(VolumeModel::power(1, 3), ScaleFunction::power(1, 2), {0.0}, 1.0);
  const auto v2 = recurrence_test(s2), v3 = recurrence_test(s3);
  sum["profile_v2_phi2"] = to_string(v2);
  sum["profile_v3_phi2"] = to_string(v3);
  sum["test_function_compact"] = test_function_class_check({}, 2.0, 2.0);
  out.write(sum);

  cx.check("theta_rate_drift", drift_ok, {{"rate_defined", !rate_error.has_value()}});
  cx.check("occupation_mean_bound", mb.pass, {{"k0_hat", mb.k0_hat}});
  cx.check("recurrence_profiles", v2 == Recurrence::recurrent && v3 == Recurrence::transient);
}

inline void run_oracle(Context& cx) {
  JsonlWriter out(cx.output("oracle.jsonl"));
  const auto& c = cx.cfg;
  auto list = [&](const std::string& key, std::vector<double> dflt) { return c.has(key) ? c.get_reals(key) : dflt; };
  for (double nu : list("oracle.bessel_nu", {0.0, 0.5, 1.0}))
    out.write({{"oracle", "bessel_first_zero"}, {"nu", nu}, {"value", bessel_first_zero(nu)}});
  for (double d : list("oracle.ct_dimensions", {3, 4, 5}))
    out.write({{"oracle", "ct_constant"}, {"d", static_cast<int>(d)}, {"value", ct_constant(static_cast<int>(d))}});
  const auto ga = list("oracle.getoor_alpha", {1.0, 2.0}), gd = list("oracle.getoor_d", {1, 2, 3}),
             gr = list("oracle.getoor_r", {1.0, 2.0});
  for (double a : ga)
    for (double d : gd)
      for (double r : gr)
        out.write({{"oracle", "getoor_mean_exit"}, {"alpha", a}, {"d", static_cast<int>(d)}, {"r", r},
                   {"value", getoor_mean_exit(a, static_cast<int>(d), r)}});
  for (double d : list("oracle.bm_d", {3}))
    for (double r : list("oracle.bm_r", {1.0}))
      out.write({{"oracle", "bm_total_occupation_mean"}, {"d", static_cast<int>(d)}, {"r", r},
                 {"value", bm_total_occupation_mean(static_cast<int>(d), r)}});
}

}  // namespace detail

// Parses and validates everything the experiment needs; throws on the
// first offending key.
inline std::string experiment_of(const Config& cfg) {
  cfg.check_known(known_keys());
  const auto e = cfg.get_string("experiment");
  static const std::set<std::string> kinds{"limsup_zero", "limsup_infinity", "total_occupation",
                                           "occupation_theta", "verify_assumptions", "oracle"};
  require(kinds.count(e) > 0, ErrorKind::validation, "experiment: unknown experiment '" + e + "'");
  return e;
}

inline RunResult run(const Config& cfg, const RunOptions& opt = {}) {
  const auto t_start = std::chrono::steady_clock::now();
  const auto experiment = experiment_of(cfg);
  detail::Context cx(cfg);
  cx.seed = cfg.get_uint("seed");
  if (experiment != "oracle") {
    const auto replicas = cfg.get_int("replicas");
    require(replicas >= 1, ErrorKind::validation, "replicas: must be >= 1");
    cx.replicas = static_cast<std::size_t>(replicas);
    cx.proc = parse_process(cfg);
  }
  require(opt.workers >= 1, ErrorKind::validation, "workers: must be >= 1");
  cx.workers = opt.workers;
  cx.summary["experiment"] = experiment;
  cx.summary["checks"] = Json::array();

  const auto digest = cfg.digest();
  cx.dir = opt.output_root / digest.substr(0, 12);
  std::error_code ec;
  std::filesystem::create_directories(cx.dir, ec);
  require(!ec, ErrorKind::io, "cannot create " + cx.dir.string() + ": " + ec.message());
  std::filesystem::remove(cx.dir / "manifest.json", ec);

  {
    std::ofstream os(cx.output("config.toml"), std::ios::binary);
    os << cfg.canonical(false);
  }

  if (experiment == "verify_assumptions") detail::run_verify(cx);
  else if (experiment == "total_occupation") detail::run_total_occupation(cx);
  else if (experiment == "limsup_infinity") detail::run_limsup(cx, Regime::infinity);
  else if (experiment == "limsup_zero") detail::run_limsup(cx, Regime::zero);
  else if (experiment == "occupation_theta") detail::run_occupation_theta(cx);
  else detail::run_oracle(cx);

  {
    std::ofstream os(cx.output("summary.json"), std::ios::binary);
    os << cx.summary.dump(2) << "\n";
  }

  RunResult res;
  res.dir = cx.dir;
  res.summary = cx.summary;
  Json m = Json::object();
  m["config_digest"] = digest;
  m["artifact_version"] = kArtifactVersion;
  m["experiment"] = experiment;
  m["seed"] = cx.seed;
  m["replicas"] = cx.replicas;
  m["workers"] = cx.workers;
  m["wall_time_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  m["censoring"] = cx.censoring;
  m["files"] = cx.files;
  {
    const auto tmp = cx.dir / "manifest.json.tmp";
    std::ofstream os(tmp, std::ios::binary);
    os << m.dump(2) << "\n";
    os.close();
    std::filesystem::rename(tmp, cx.dir / "manifest.json");
  }
  res.manifest = std::move(m);
  return res;
}

}  // namespace occlab
