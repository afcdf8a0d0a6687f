#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code = -1;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("shmm_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  CliResult run(const std::string& args) const {
    const auto err = path("stderr.txt");
    const std::string cmd = std::string(SEPSIS_HMM_CLI) + " " + args + " > " + path("stdout.txt") +
                            " 2> " + err;
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.err = slurp(err);
    return r;
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, SimulateTwiceIsIdentical) {
  ASSERT_EQ(run("simulate --seed 7 --patients 40 --out " + path("a.csv") + " --states " + path("as.csv")).code, 0);
  ASSERT_EQ(run("simulate --seed 7 --patients 40 --out " + path("b.csv") + " --states " + path("bs.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  EXPECT_EQ(slurp(path("as.csv")), slurp(path("bs.csv")));
  ASSERT_EQ(run("simulate --seed 8 --patients 40 --out " + path("c.csv")).code, 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
}

TEST_F(Cli, FitOnEmptyEpisodeFileIsInputError) {
  std::ofstream(path("empty.csv")) << "episode_id,interval_index,sbp,dbp,hr,rr,temp,age_z,laps2_z,cops2_z,outcome\n";
  const auto r = run("fit --episodes " + path("empty.csv") + " --out " + path("post.txt"));
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "input");
  std::ofstream(path("zero.csv")).flush();
  EXPECT_EQ(run("fit --episodes " + path("zero.csv") + " --out " + path("post.txt")).code, 3);
}

TEST_F(Cli, UsageErrors) {
  const auto r = run("simulate --bogus --out " + path("a.csv"));
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(nlohmann::json::parse(r.err)["error"], "usage");
  EXPECT_EQ(run("fit --out " + path("p.txt")).code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("decode --episodes " + path("missing.csv") + " --params x --out y").code, 2);
}

TEST_F(Cli, ConfigFileAndOverrides) {
  std::ofstream(path("cfg.json")) << R"({"cohort": {"n_patients": 3, "seed": 4}})";
  ASSERT_EQ(run("simulate --config " + path("cfg.json") + " --out " + path("a.csv")).code, 0);
  ASSERT_EQ(run("simulate --seed 4 --patients 3 --out " + path("b.csv")).code, 0);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  ASSERT_EQ(run("simulate --config " + path("cfg.json") + " --patients 5 --out " + path("c.csv")).code, 0);
  EXPECT_NE(slurp(path("a.csv")), slurp(path("c.csv")));
  std::ofstream(path("bad.json")) << R"({"cohort": {"patients": 3}})";
  EXPECT_EQ(run("simulate --config " + path("bad.json") + " --out " + path("d.csv")).code, 4);
}

TEST_F(Cli, FullPipelineEmitsNamedJsdValues) {
  const auto eps = path("eps.csv");
  ASSERT_EQ(run("simulate --seed 3 --patients 150 --out " + eps).code, 0);
  ASSERT_EQ(run("fit --seed 3 --sweeps 150 --keep 50 --no-timestamp --episodes " + eps + " --out " +
                path("post.txt"))
                .code,
            0);
  ASSERT_EQ(run("map-estimate --posterior " + path("post.txt") + " --out " + path("map.json")).code, 0);
  ASSERT_EQ(run("criteria --episodes " + eps + " --out " + path("flags.csv")).code, 0);
  ASSERT_EQ(run("decode --seed 3 --sweeps 60 --keep 40 --episodes " + eps + " --params " +
                path("map.json") + " --out " + path("traj.csv"))
                .code,
            0);
  ASSERT_EQ(run("analyze --no-timestamp --trajectories " + path("traj.csv") + " --out " + path("report.json")).code,
            0);
  const auto rep = nlohmann::json::parse(slurp(path("report.json")));
  for (const char* k : {"sepsis1", "qsofa", "s3"}) {
    ASSERT_TRUE(rep["jsd"].contains(k)) << k;
    const double v = rep["jsd"][k];
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, std::log(2.0) + 1e-12);
  }
  EXPECT_FALSE(rep.contains("created"));
  EXPECT_NE(slurp(path("stdout.txt")).find("jsd_s3 "), std::string::npos);
}

TEST_F(Cli, FitAndDecodeDoNotDependOnThreadCount) {
  const auto eps = path("eps.csv");
  ASSERT_EQ(run("simulate --seed 5 --patients 60 --out " + eps).code, 0);
  const std::string fit = "fit --seed 2 --sweeps 40 --keep 20 --no-timestamp --episodes " + eps;
  ASSERT_EQ(run(fit + " --threads 1 --out " + path("p1.txt")).code, 0);
  ASSERT_EQ(run(fit + " --threads 3 --out " + path("p3.txt")).code, 0);
  ASSERT_EQ(run(fit + " --threads 1 --out " + path("p1b.txt")).code, 0);
  EXPECT_EQ(slurp(path("p1.txt")), slurp(path("p3.txt")));
  EXPECT_EQ(slurp(path("p1.txt")), slurp(path("p1b.txt")));

  const std::string dec = "decode --seed 9 --sweeps 30 --keep 20 --episodes " + eps + " --params ";
  ASSERT_EQ(run("map-estimate --posterior " + path("p1.txt") + " --out " + path("m.json")).code, 0);
  ASSERT_EQ(run(dec + path("m.json") + " --threads 1 --out " + path("t1.csv")).code, 0);
  ASSERT_EQ(run(dec + path("m.json") + " --threads 4 --out " + path("t4.csv")).code, 0);
  EXPECT_EQ(slurp(path("t1.csv")), slurp(path("t4.csv")));
}

TEST_F(Cli, ResumeMatchesUninterruptedRun) {
  const auto eps = path("eps.csv");
  ASSERT_EQ(run("simulate --seed 6 --patients 50 --out " + eps).code, 0);
  const std::string fit = "fit --seed 4 --sweeps 60 --keep 30 --no-timestamp --episodes " + eps;
  ASSERT_EQ(run(fit + " --out " + path("full.txt")).code, 0);
  ASSERT_EQ(run(fit + " --checkpoint " + path("ck.json") + " --stop-after 45 --out " + path("part.txt")).code, 0);
  EXPECT_FALSE(fs::exists(path("part.txt")));
  EXPECT_TRUE(fs::exists(path("ck.json")));
  ASSERT_EQ(run("fit --resume --checkpoint " + path("ck.json") + " --episodes " + eps +
                " --no-timestamp --out " + path("part.txt"))
                .code,
            0);
  EXPECT_EQ(slurp(path("full.txt")), slurp(path("part.txt")));
  EXPECT_FALSE(fs::exists(path("ck.json")));
}

TEST_F(Cli, TimestampPresentUnlessSuppressed) {
  const auto eps = path("eps.csv");
  ASSERT_EQ(run("simulate --seed 2 --patients 10 --out " + eps).code, 0);
  ASSERT_EQ(run("fit --sweeps 12 --keep 10 --episodes " + eps + " --out " + path("p.txt")).code, 0);
  const auto text = slurp(path("p.txt"));
  EXPECT_NE(text.substr(0, text.find('\n')).find("\"created\""), std::string::npos);
}
