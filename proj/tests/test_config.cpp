#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "occlab/config.hpp"
#include "occlab/io.hpp"

using namespace occlab;

namespace {
const char* kSample = R"(# exit times
experiment = "verify_assumptions"
seed = 18446744073709551615
replicas = 1000
workers = 4

[process]
kind = "brownian"   # generator (1/2) Laplacian
dimension = 2
time_step = 1e-3
horizon = 40.0

[grid]
radii = [1, 2, 4.5]
names = ["a#b", "c"]
)";

std::string message_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}
}  // namespace

TEST(Config, ParsesTypedValues) {
  const auto c = Config::parse(kSample);
  EXPECT_EQ(c.get_string("experiment"), "verify_assumptions");
  EXPECT_EQ(c.get_uint("seed"), 18446744073709551615ull);
  EXPECT_EQ(c.get_int("replicas"), 1000);
  EXPECT_EQ(c.get_string("process.kind"), "brownian");
  EXPECT_DOUBLE_EQ(c.get_real("process.time_step"), 1e-3);
  EXPECT_DOUBLE_EQ(c.get_real("process.dimension"), 2.0);
  EXPECT_EQ(c.get_reals("grid.radii"), (std::vector<double>{1, 2, 4.5}));
  EXPECT_EQ(c.get_strings("grid.names"), (std::vector<std::string>{"a#b", "c"}));
  EXPECT_EQ(c.get_real("process.alpha", 1.5), 1.5);
  EXPECT_FALSE(c.get_bool("process.dump_paths", false));
}

TEST(Config, ErrorsNameTheKey) {
  const auto c = Config::parse(kSample);
  EXPECT_NE(message_of([&] { c.get_int("process.kind"); }).find("process.kind"), std::string::npos);
  EXPECT_NE(message_of([&] { c.get_int("process.time_step"); }).find("process.time_step"), std::string::npos);
  EXPECT_NE(message_of([&] { c.get_string("scale.kind"); }).find("scale.kind: missing"), std::string::npos);
  EXPECT_NE(message_of([] { Config::parse("a = 1\na = 2\n"); }).find("a: duplicate"), std::string::npos);
  EXPECT_NE(message_of([] { Config::parse("[s]\nx = 1.2.3\n"); }).find("s.x"), std::string::npos);
  EXPECT_NE(message_of([&] { c.check_known({"experiment", "seed"}); }).find("unknown key"), std::string::npos);
  try {
    Config::parse("x = \"open\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_TRUE(e.is_usage());
  }
}

TEST(Config, CanonicalRoundTrip) {
  const auto c = Config::parse(kSample);
  const auto text = c.canonical();
  const auto again = Config::parse(text);
  EXPECT_EQ(again.canonical(), text);
  EXPECT_EQ(again.digest(), c.digest());
  EXPECT_NE(text.find("time_step = 0.001"), std::string::npos);
  EXPECT_NE(text.find("horizon = 40.0"), std::string::npos);
}

TEST(Config, DigestIgnoresOrderAndExecutionKeys) {
  const auto a = Config::parse("seed = 1\nreplicas = 5\n[p]\nx = 1\ny = \"s\"\n");
  const auto b = Config::parse("replicas = 5\nworkers = 7\nseed = 1\n[p]\ny = \"s\"\nx = 1\n");
  EXPECT_EQ(a.digest(), b.digest());
  EXPECT_EQ(a.digest().size(), 64u);
  auto c = a;
  c.set("p.x", "2");
  EXPECT_NE(c.digest(), a.digest());
  c = a;
  c.set("p.z", "true");
  EXPECT_NE(c.digest(), a.digest());
  // SHA-256 of the empty string
  EXPECT_EQ(Config::parse("").digest(), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Config, DigestSeesEveryField) {
  const auto base = Config::parse(kSample);
  for (const auto& key : base.keys()) {
    if (Config::execution_keys.count(key)) continue;
    auto c = base;
    c.set(key, "\"changed\"");
    EXPECT_NE(c.digest(), base.digest()) << key;
  }
}

TEST(Io, CsvQuotingAndNumbers) {
  const auto path = std::filesystem::temp_directory_path() / "occlab_test.csv";
  {
    CsvWriter w(path, {"a", "b"});
    w.row({cell(0.1), csv_field("x,\"y\"") == "\"x,\"\"y\"\"\"" ? "ok" : "bad"});
    w.row({cell(1e300), "plain"});
  }
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), "a,b\r\n0.1,ok\r\n1e+300,plain\r\n");
  std::filesystem::remove(path);
}

TEST(Io, JsonNonFinite) {
  EXPECT_EQ(json_real(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_EQ(json_real(0.25), 0.25);
}
