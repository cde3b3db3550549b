#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "polymerlab/config.hpp"
#include "polymerlab/report.hpp"

namespace polymerlab {
namespace {

namespace fs = std::filesystem;

TEST(Config, EmptyFileGivesDefaults) {
  const auto parsed = parse_config_text("");
  EXPECT_EQ(parsed.config, ExperimentConfig{});
  EXPECT_TRUE(parsed.keys.empty());
  const auto echoed = emit_config(parsed.config);
  for (const char* key : {"dim", "law", "beta", "n_grid", "m_grid", "samples", "seed", "u_grid", "big_a", "alpha",
                          "k_horizon", "pi_tmax", "overlap_n", "overlap_samples", "llt_probes"}) {
    EXPECT_NE(echoed.find(std::string(key) + " = "), std::string::npos) << key;
  }
}

TEST(Config, RoundTrip) {
  const auto parsed = parse_config_text(
      "# experiment\n dim = 2\nlaw = uniform\nbeta = 0.125\nn_grid = 4, 8 ,12\nm_grid=0,1,2\n"
      "samples = 300\nseed = 18446744073709551615\nu_grid = 0.1,0.3\nalpha = 0.25\nbig_a = 3.5\n");
  EXPECT_EQ(parsed.config.dim, 2);
  EXPECT_EQ(parsed.config.law.kind, LawKind::Uniform);
  EXPECT_EQ(parsed.config.n_grid, (std::vector<int>{4, 8, 12}));
  EXPECT_EQ(parsed.config.seed, ~std::uint64_t{0});
  const auto again = parse_config_text(emit_config(parsed.config));
  EXPECT_EQ(again.config, parsed.config);
  EXPECT_EQ(emit_config(again.config), emit_config(parsed.config));
  EXPECT_EQ(parse_config_text(emit_config(ExperimentConfig{})).config, ExperimentConfig{});
}

void expect_rejected(const std::string& text, const std::string& needle) {
  try {
    parse_config_text(text);
    ADD_FAILURE() << "accepted: " << text;
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

TEST(Config, Rejections) {
  expect_rejected("alpha = 0.6\n", "0 < alpha < 1/2");
  expect_rejected("alpha = 0\n", "alpha");
  expect_rejected("samples = 99\n", "samples");
  expect_rejected("u_grid = 1, 0.5\n", "u_grid");
  expect_rejected("u_grid = -1\n", "u_grid");
  expect_rejected("colour = blue\n", "unknown key 'colour'");
  expect_rejected("dim = 3\ndim = 2\n", "dim");
  expect_rejected("dim = 7\n", "dim");
  expect_rejected("law = cauchy\n", "law");
  expect_rejected("beta = -1\n", "beta");
  expect_rejected("n_grid = 4,x\n", "n_grid");
  expect_rejected("just words\n", "line 1");
}

TEST(Report, CsvHeaderAndRows) {
  SuiteResult s{"x", SuiteStatus::Passed, {}, {}, 0.0};
  ExperimentRecord r;
  r.experiment = "demo";
  r.dim = 3;
  r.law = "gaussian";
  r.beta = 0.5;
  r.n = 8;
  r.statistic = 0.25;
  r.std_error = 0.125;
  r.threshold = 1.0;
  r.pass = true;
  s.records.push_back(r);
  std::ostringstream out;
  write_records_csv(out, {s});
  EXPECT_EQ(out.str(),
            "experiment,dim,law,beta,N,M,u,statistic,std_error,threshold,pass,seconds\n"
            "demo,3,gaussian,0.5,8,,,0.25,0.125,1,true,0\n");
}

TEST(Report, ManifestHash) {
  RunManifest a{"", ExperimentConfig{}, {"qn"}, "out"};
  RunManifest b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(a.hash(), b.hash());
  b.config.seed = 99;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

// ---------------------------------------------------------------------------
// The command-line tool

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + " " + POLYMERLAB_CLI + " " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  std::array<char, 4096> buf{};
  while (pipe && fgets(buf.data(), buf.size(), pipe)) r.out += buf.data();
  const int status = pipe ? pclose(pipe) : -1;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("polymerlab_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string out(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

TEST_F(Cli, PiPrintsTheInterval) {
  const auto r = run_cli("pi --dim 3 --out " + out("pi"));
  EXPECT_NE(r.out.find("pi_3 = 0.3405"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("interval ["), std::string::npos);
  const auto csv = slurp(out("pi") + "/records.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "experiment,dim,law,beta,N,M,u,statistic,std_error,threshold,pass,seconds");
}

TEST_F(Cli, L2CheckAtZeroBeta) {
  const auto r = run_cli("l2check --dim 3 --law gaussian --beta 0.0 --out " + out("l2"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("l2check    pass"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("margin = 1.06"), std::string::npos) << r.out;
}

TEST_F(Cli, RecurrentDimensionSkipsL2Suites) {
  const auto r = run_cli("all --dim 1 --samples 100 --out " + out("all"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("(recurrent)"), std::string::npos);
  for (const char* s : {"martingale", "conc", "qn ", "qnm", "llt", "diffusion"}) {
    EXPECT_NE(r.out.find(std::string(s) + std::string(10 - std::string(s).size(), ' ') + " skipped: hypothesis failed"),
              std::string::npos)
        << s << "\n" << r.out;
  }
  const auto summary = nlohmann::json::parse(slurp(out("all") + "/summary.json"));
  EXPECT_EQ(summary["status"], "pass");
  EXPECT_EQ(summary["pi"]["recurrent"], true);
  EXPECT_EQ(summary["manifest_hash"].get<std::string>().size(), 16u);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("qn --alpha 0.6 --out " + out("a")).code, 2);
  EXPECT_EQ(run_cli("qn --law cauchy --out " + out("a")).code, 2);
  EXPECT_EQ(run_cli("nosuch").code, 2);
  EXPECT_EQ(run_cli("qn --dim 4 --n 400 --samples 100 --out " + out("a")).code, 3);
  const auto fail = run_cli("martingale --dim 3 --beta 0.3 --n 2 --samples 100 --umax 2 --out " + out("b"));
  EXPECT_EQ(fail.code, 0) << fail.out;
}

TEST_F(Cli, ConfigFileWinsOverFlags) {
  {
    std::ofstream cfg(out("run.cfg"));
    cfg << "samples = 150\nn_grid = 4\nbeta = 0.3\n";
  }
  const auto r = run_cli("martingale --config " + out("run.cfg") + " --samples 500 --seed 4 --out " + out("c"));
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("warning: flag for 'samples' conflicts"), std::string::npos) << r.out;
  const auto summary = nlohmann::json::parse(slurp(out("c") + "/summary.json"));
  const auto text = summary["config"].get<std::string>();
  EXPECT_NE(text.find("samples = 150"), std::string::npos);
  EXPECT_NE(text.find("seed = 4"), std::string::npos);
}

TEST_F(Cli, RecordsAreByteIdenticalAcrossThreadCounts) {
  const std::string args = "all --dim 3 --beta 0.3 --n 4,6 --khorizon 8 --samples 120 ";
  const auto a = run_cli(args + "--threads 1 --out " + out("t1"));
  const auto b = run_cli(args + "--threads 4 --out " + out("t4"));
  const auto c = run_cli(args + "--out " + out("env"), "POLYMERLAB_THREADS=2");
  const auto ref = slurp(out("t1") + "/records.csv");
  EXPECT_GT(ref.size(), 1000u);
  EXPECT_EQ(ref, slurp(out("t4") + "/records.csv"));
  EXPECT_EQ(ref, slurp(out("env") + "/records.csv"));
  const auto h1 = nlohmann::json::parse(slurp(out("t1") + "/summary.json"))["manifest_hash"];
  const auto h4 = nlohmann::json::parse(slurp(out("t4") + "/summary.json"))["manifest_hash"];
  EXPECT_EQ(h1, h4);
  (void)a;
  (void)b;
  (void)c;
}

}  // namespace
}  // namespace polymerlab
