#include <gtest/gtest.h>
#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result sh(const std::string& args) {
  const std::string cmd = std::string(OCCLAB_CLI) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("occlab_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path only_run_dir(const fs::path& root) {
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) dirs.push_back(e.path());
  EXPECT_EQ(dirs.size(), 1u);
  return dirs.empty() ? root : dirs.front();
}

const std::string kSmoke = std::string(OCCLAB_CONFIGS) + "/bm_exit.toml";

std::string with_override(const std::string& from, const std::string& to) {
  auto text = slurp(kSmoke);
  const auto at = text.find(from);
  EXPECT_NE(at, std::string::npos);
  return text.replace(at, from.size(), to);
}

}  // namespace

TEST(Cli, SmokeRunWritesManifestExitsAndComparability) {
  const auto root = scratch("smoke");
  const auto r = sh("run --config " + kSmoke + " --output " + root.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto dir = only_run_dir(root);
  for (const char* f : {"manifest.json", "exits.csv", "comparability.jsonl"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(slurp(dir / "exits.csv").substr(0, 25), "radius,replica,tau,exited");
}

TEST(Cli, OutputsIndependentOfWorkerCount) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  ASSERT_EQ(sh("run --config " + kSmoke + " --workers 1 --output " + a.string()).code, 0);
  ASSERT_EQ(sh("run --config " + kSmoke + " --workers 3 --output " + b.string()).code, 0);
  const auto da = only_run_dir(a), db = only_run_dir(b);
  EXPECT_EQ(da.filename(), db.filename());
  for (const char* f : {"exits.csv", "comparability.jsonl", "summary.json", "config.toml"})
    EXPECT_EQ(slurp(da / f), slurp(db / f)) << f;
}

TEST(Cli, RepeatedRunIsByteIdentical) {
  const auto a = scratch("rep");
  ASSERT_EQ(sh("run --config " + kSmoke + " --output " + a.string()).code, 0);
  const auto dir = only_run_dir(a);
  const auto first = slurp(dir / "exits.csv");
  ASSERT_EQ(sh("run --config " + kSmoke + " --output " + a.string()).code, 0);
  EXPECT_EQ(slurp(dir / "exits.csv"), first);
}

TEST(Cli, PathDumpEndsAtTheRecordedExit) {
  const auto dir = scratch("dump");
  const auto cfg = dir / "dump.toml";
  std::ofstream(cfg) << with_override("radius_scaling = true", "radius_scaling = true\ndump_paths = 2");
  ASSERT_EQ(sh("run --config " + cfg.string() + " --output " + (dir / "runs").string()).code, 0);
  const auto run = only_run_dir(dir / "runs");
  ASSERT_TRUE(fs::exists(run / "paths" / "r0_1.csv"));
  EXPECT_FALSE(fs::exists(run / "paths" / "r0_2.csv"));
  std::istringstream path(slurp(run / "paths" / "r0_0.csv")), exits(slurp(run / "exits.csv"));
  std::string line, last;
  std::getline(path, line);
  EXPECT_EQ(line, "t,x1,x2\r");
  while (std::getline(path, line)) last = line;
  std::getline(exits, line);
  std::getline(exits, line);  // radius 0.5, replica 0
  const auto tau = line.substr(line.find(',', line.find(',') + 1) + 1);
  EXPECT_EQ(last.substr(0, last.find(',')), tau.substr(0, tau.find(',')));
}

TEST(Cli, ZeroReplicasIsAValidationError) {
  const auto dir = scratch("zero");
  const auto cfg = dir / "zero.toml";
  std::ofstream(cfg) << with_override("replicas = 1000", "replicas = 0");
  const auto r = sh("run --config " + cfg.string() + " --output " + (dir / "runs").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("replicas"), std::string::npos) << r.out;
}

TEST(Cli, UnknownKeyIsNamed) {
  const auto dir = scratch("unknown");
  const auto cfg = dir / "typo.toml";
  std::ofstream(cfg) << with_override("[grid]", "[grid]\nradius = 2");
  const auto r = sh("run --config " + cfg.string() + " --output " + (dir / "runs").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("grid.radius: unknown key"), std::string::npos) << r.out;
}

TEST(Cli, MissingConfigAndBadArgumentsAreUsageErrors) {
  EXPECT_EQ(sh("run --config /nonexistent/file.toml").code, 2);
  EXPECT_EQ(sh("run").code, 2);
  EXPECT_EQ(sh("frobnicate").code, 2);
  EXPECT_EQ(sh("--help").code, 0);
}

TEST(Cli, VerifyFailsWhenACheckFails) {
  const auto dir = scratch("verify");
  const auto cfg = dir / "bad_scale.toml";
  std::ofstream(cfg) << with_override("c = 0.5", "c = 50.0");  // lambda_hat near 100
  const auto r = sh("verify --config " + cfg.string() + " --output " + (dir / "runs").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("FAIL comparability"), std::string::npos);
  EXPECT_EQ(sh("run --config " + cfg.string() + " --output " + (dir / "runs").string()).code, 0);
}

TEST(Cli, OracleValues) {
  auto value = [](const std::string& out) { return std::stod(out.substr(0, out.find(' '))); };
  const auto ct = sh("oracle ct-constant --d 3");
  ASSERT_EQ(ct.code, 0);
  EXPECT_EQ(ct.out.substr(0, 12), "0.8105694691");
  const auto g = sh("oracle getoor --alpha 2 --d 1 --r 1");
  ASSERT_EQ(g.code, 0);
  EXPECT_EQ(value(g.out), 1.0);
  const auto b = sh("oracle bessel-zero --nu 0.5");
  ASSERT_EQ(b.code, 0);
  EXPECT_EQ(b.out.substr(0, 10), "3.14159265");
  const auto m = sh("oracle bm-occupation --d 3 --r 1");
  ASSERT_EQ(m.code, 0);
  EXPECT_EQ(value(m.out), 1.0);
  EXPECT_NE(ct.out.find('#'), std::string::npos);  // provenance note
}

TEST(Cli, OracleDomainErrorsExitTwo) {
  EXPECT_EQ(sh("oracle ct-constant --d 2").code, 2);
  EXPECT_EQ(sh("oracle getoor --alpha 3 --d 1 --r 1").code, 2);
}
