// occlab run|verify|oracle

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "occlab/config.hpp"
#include "occlab/error.hpp"
#include "occlab/experiments.hpp"
#include "occlab/oracles.hpp"

namespace {

constexpr int kOk = 0, kCheckFailed = 1, kUsage = 2, kRuntime = 3;

unsigned default_workers(const occlab::Config& cfg) {
  if (cfg.has("workers")) {
    const auto w = cfg.get_int("workers");
    occlab::require(w >= 1, occlab::ErrorKind::validation, "workers: must be >= 1");
    return static_cast<unsigned>(w);
  }
  if (const char* env = std::getenv("OCCLAB_WORKERS")) {
    try {
      const long w = std::stol(env);
      occlab::require(w >= 1, occlab::ErrorKind::validation, "OCCLAB_WORKERS: must be >= 1");
      return static_cast<unsigned>(w);
    } catch (const std::logic_error&) {
      occlab::fail(occlab::ErrorKind::validation, std::string("OCCLAB_WORKERS: not an integer: ") + env);
    }
  }
  return 1;
}

int run_config(const std::string& path, int workers, const std::string& output, bool verify) {
  occlab::Config cfg;
  try {
    cfg = occlab::Config::load(path);
  } catch (const occlab::Error& e) {
    // an unreadable --config is a usage error
    throw occlab::Error(occlab::ErrorKind::validation, e.detail());
  }
  occlab::RunOptions opt;
  opt.workers = workers > 0 ? static_cast<unsigned>(workers) : default_workers(cfg);
  opt.output_root = !output.empty() ? output : cfg.get_string("output_dir", "runs");
  const auto res = occlab::run(cfg, opt);
  std::cout << res.dir.string() << "\n";
  for (const auto& c : res.summary["checks"])
    std::cout << (c["pass"].get<bool>() ? "PASS " : "FAIL ") << c["name"].get<std::string>() << "\n";
  return verify && !res.all_pass() ? kCheckFailed : kOk;
}

void print(double v, const std::string& note) { std::cout << occlab::format_real(v) << "  # " << note << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"occupation-time experiments"};
  app.require_subcommand(1);

  std::string config, output;
  int workers = 0;
  auto add_run_options = [&](CLI::App* sub) {
    sub->add_option("--config", config, "experiment config file")->required();
    sub->add_option("--workers", workers, "worker threads (default: config, OCCLAB_WORKERS, 1)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--output", output, "output root directory (default: config output_dir, ./runs)");
  };
  auto* run = app.add_subcommand("run", "run an experiment");
  add_run_options(run);
  auto* verify = app.add_subcommand("verify", "run an experiment; exit 1 if a check fails");
  add_run_options(verify);

  auto* oracle = app.add_subcommand("oracle", "closed-form reference values");
  oracle->require_subcommand(1);
  double nu = 0, alpha = 2, r = 1;
  int d = 3;
  auto* bessel = oracle->add_subcommand("bessel-zero", "first positive zero of J_nu");
  bessel->add_option("--nu", nu)->required();
  auto* ct = oracle->add_subcommand("ct-constant", "Ciesielski-Taylor constant 2/p_d^2");
  ct->add_option("--d", d)->required();
  auto* getoor = oracle->add_subcommand("getoor", "mean exit time of B(0,r)");
  getoor->add_option("--alpha", alpha)->required();
  getoor->add_option("--d", d)->required();
  getoor->add_option("--r", r)->required();
  auto* bmocc = oracle->add_subcommand("bm-occupation", "Brownian mean total occupation of B(0,r)");
  bmocc->add_option("--d", d)->required();
  bmocc->add_option("--r", r)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  const bool is_oracle = oracle->parsed();
  try {
    if (run->parsed()) return run_config(config, workers, output, false);
    if (verify->parsed()) return run_config(config, workers, output, true);
    if (bessel->parsed()) {
      print(occlab::bessel_first_zero(nu), "first positive zero of J_nu, bisection on the ascending series");
    } else if (ct->parsed()) {
      print(occlab::ct_constant(d), "2 / p^2, p the first positive zero of J_{d/2-2}");
    } else if (getoor->parsed()) {
      print(occlab::getoor_mean_exit(alpha, d, r),
            alpha == 2 ? "r^2 / d, generator (1/2) Laplacian"
                       : "Getoor: r^a Gamma(d/2) / (2^a Gamma(1+a/2) Gamma((d+a)/2)), exponent |xi|^a");
    } else if (bmocc->parsed()) {
      print(occlab::bm_total_occupation_mean(d, r), "r^2 / (d - 2), Green function of (1/2) Laplacian");
    }
    return kOk;
  } catch (const occlab::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return is_oracle || e.is_usage() ? kUsage : kRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
