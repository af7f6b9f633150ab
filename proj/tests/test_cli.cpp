#include "d2c/cli.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace d2c;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "d2c");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

constexpr const char* kTinyConfig =
    "epochs = 1\nprior_epochs = 1\ndata_count = 300\nholdout = 120\nhidden = 32\npredictor_hidden = 32\n"
    "predictor_blocks = 1\npredictor_embed = 8\nlatent_dim = 6\nproj_dim = 8\ndiffusion_steps = 100\n"
    "image_height = 8\nimage_width = 8\nprobe_labels = 20\nbatch_size = 32\n";

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new d2c::testing::TempDir("cli");
    io::write_text(*dir_ / "tiny.cfg", kTinyConfig);
    Result r = run_cli({"train", "--config", (*dir_ / "tiny.cfg").string(), "--seed", "7", "--out",
                        (*dir_ / "run1").string()});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static void TearDownTestSuite() { delete dir_; }
  static std::string path(const std::string& name) { return (*dir_ / name).string(); }
  static std::string ckpt() { return path("run1/model.ckpt"); }
  static d2c::testing::TempDir* dir_;
};
d2c::testing::TempDir* CliPipeline::dir_ = nullptr;

}  // namespace

TEST(Cli, PriorholeSweep) {
  d2c::testing::TempDir dir("ph");
  Result r = run_cli({"priorhole", "--delta", "0.49", "--n", "1,2,4,8", "--out", (dir / "r").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = read_csv(dir / "r" / "priorhole.csv");
  ASSERT_EQ(rows.size(), 5u);
  ASSERT_EQ(rows[0][6], "kl");
  ASSERT_EQ(rows[0][7], "w2");
  double prev = 1e9;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_NEAR(std::stod(rows[i][6]), 0.6793, 1e-4);
    const double w2 = std::stod(rows[i][7]);
    EXPECT_LT(w2, prev);
    prev = w2;
  }
  EXPECT_NE(r.out.find("delta,n,d,alpha"), std::string::npos);
}

TEST(Cli, PriorholeNoisedColumns) {
  d2c::testing::TempDir dir("ph");
  Result r = run_cli({"priorhole", "--n", "4", "--alpha", "1,0.9,0.5,0.1", "--out", (dir / "r").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = read_csv(dir / "r" / "priorhole.csv");
  ASSERT_EQ(rows.size(), 5u);
  double prev = 1e9;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double kl = std::stod(rows[i][9]);
    EXPECT_LT(kl, prev);
    prev = kl;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Cli, ExitCodes) {
  d2c::testing::TempDir dir("codes");
  EXPECT_EQ(run_cli({}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
  EXPECT_EQ(run_cli({"bogus"}).code, 2);
  EXPECT_EQ(run_cli({"priorhole"}).code, 2);  // --out is required
  EXPECT_EQ(run_cli({"priorhole", "--out", (dir / "x").string(), "--dim", "3"}).code, 2);

  Result bad = run_cli({"priorhole", "--delta", "0.6", "--out", (dir / "bad").string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("priorhole"), std::string::npos);
  EXPECT_NE(bad.err.find("invalid-parameter"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "bad"));

  EXPECT_EQ(run_cli({"priorhole", "--n", "1", "--alpha", "0", "--out", (dir / "a").string()}).code, 2);
  EXPECT_EQ(run_cli({"sample", "--ckpt", (dir / "missing.ckpt").string(), "--out", (dir / "s").string()}).code, 2);

  const std::string out = (dir / "twice").string();
  EXPECT_EQ(run_cli({"priorhole", "--n", "1", "--out", out}).code, 0);
  Result again = run_cli({"priorhole", "--n", "1", "--out", out});
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  EXPECT_EQ(run_cli({"priorhole", "--n", "1", "--out", out, "--force"}).code, 0);
}

TEST(Cli, CorruptCheckpointIsRuntimeError) {
  d2c::testing::TempDir dir("corrupt");
  io::write_text(dir / "bad.ckpt", "not a checkpoint");
  Result r = run_cli({"sample", "--ckpt", (dir / "bad.ckpt").string(), "--out", (dir / "s").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("d2c: error:"), std::string::npos);
}

TEST(Cli, GenData) {
  d2c::testing::TempDir dir("gen");
  io::write_text(dir / "c.cfg", kTinyConfig);
  Result r = run_cli({"gen-data", "--config", (dir / "c.cfg").string(), "--n", "40", "--out", (dir / "g").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  TensorArchive a = load_archive(dir / "g" / "data.d2cd");
  EXPECT_EQ(a.count(), 40);
  EXPECT_EQ(a.shape, (ImageShape{8, 8, 3}));
  EXPECT_TRUE(fs::exists(dir / "g" / "preview.ppm"));
}

TEST_F(CliPipeline, TrainOutputsAndDeterminism) {
  for (const char* f : {"config.cfg", "metrics.csv", "prior_metrics.csv", "model.ckpt", "samples.ppm"})
    EXPECT_TRUE(fs::exists(*dir_ / "run1" / f)) << f;
  Result r = run_cli({"train", "--config", path("tiny.cfg"), "--seed", "7", "--out", path("run2")});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(io::read_text(*dir_ / "run1" / "metrics.csv"), io::read_text(*dir_ / "run2" / "metrics.csv"));
  EXPECT_EQ(io::read_file(*dir_ / "run1" / "model.ckpt"), io::read_file(*dir_ / "run2" / "model.ckpt"));
  EXPECT_EQ(load_checkpoint(ckpt()).config().seed, 7u);
  EXPECT_EQ(read_csv(*dir_ / "run1" / "metrics.csv")[0][0], "epoch");
}

TEST_F(CliPipeline, Sample) {
  Result r = run_cli({"sample", "--ckpt", ckpt(), "--n", "12", "--steps", "5", "--out", path("sample")});
  ASSERT_EQ(r.code, 0) << r.err;
  TensorArchive a = load_archive(*dir_ / "sample" / "samples.d2cd");
  EXPECT_EQ(a.count(), 12);
  Result ddpm = run_cli({"sample", "--ckpt", ckpt(), "--n", "4", "--sampler", "ddpm", "--out", path("ddpm")});
  EXPECT_EQ(ddpm.code, 0) << ddpm.err;
  EXPECT_EQ(run_cli({"sample", "--ckpt", ckpt(), "--sampler", "euler", "--out", path("x")}).code, 2);
}

TEST_F(CliPipeline, Invert) {
  Result r = run_cli({"invert", "--ckpt", ckpt(), "--n", "6", "--steps", "10", "--out", path("inv")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = read_csv(*dir_ / "inv" / "invert.csv");
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"index", "noise_norm", "roundtrip_rel_error"}));
  EXPECT_TRUE(fs::exists(*dir_ / "inv" / "roundtrip.ppm"));
}

TEST_F(CliPipeline, ConditionAndManipulate) {
  Result c = run_cli({"condition", "--ckpt", ckpt(), "--label", "hue=warm", "--n", "10", "--steps", "5", "--shots",
                      "20", "--out", path("cond")});
  ASSERT_EQ(c.code, 0) << c.err;
  EXPECT_NE(c.out.find("purity"), std::string::npos);
  EXPECT_EQ(load_archive(*dir_ / "cond" / "samples.d2cd").count(), 10);
  EXPECT_TRUE(fs::exists(*dir_ / "cond" / "classifier.tbl"));

  Result m = run_cli({"manipulate", "--ckpt", ckpt(), "--label", "hue=warm", "--n", "5", "--out", path("man")});
  ASSERT_EQ(m.code, 0) << m.err;
  auto rows = read_csv(*dir_ / "man" / "manipulate.csv");
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0][0], "index");

  Result alpha = run_cli({"manipulate", "--ckpt", ckpt(), "--label", "hue=warm", "--alpha", "0.3", "--out",
                          path("man2")});
  EXPECT_EQ(alpha.code, 1);
  EXPECT_NE(alpha.err.find("invalid-range"), std::string::npos);
  EXPECT_EQ(run_cli({"condition", "--ckpt", ckpt(), "--out", path("nolabel")}).code, 2);
}

TEST_F(CliPipeline, Eval) {
  Result r = run_cli({"eval", "--ckpt", ckpt(), "--steps", "2,10", "--n", "100", "--out", path("eval")});
  ASSERT_EQ(r.code, 0) << r.err;
  auto rows = read_csv(*dir_ / "eval" / "eval.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1][0], "2");
  auto summary = read_csv(*dir_ / "eval" / "summary.csv");
  ASSERT_EQ(summary.size(), 5u);
  EXPECT_EQ(summary[1][0], "noise_floor");
  EXPECT_EQ(run_cli({"eval", "--ckpt", ckpt(), "--n", "50", "--out", path("eval2")}).code, 2);
}
