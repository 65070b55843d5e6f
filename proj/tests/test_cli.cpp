#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "npgd/cli.hpp"
#include "npgd/error.hpp"

using namespace npgd;
using namespace npgd::cli;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("npgd_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.cfg";
  std::ofstream(p) << text;
  return p;
}

int run_cmd(const std::string& cmd, const fs::path& cfg, const fs::path& out) {
  std::ostringstream log, err;
  Overrides o;
  o.out = out;
  return run(cmd, cfg, o, log, err);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

const char* kTiny =
    "size = 8\n"
    "num_images = 4\n"
    "test_count = 2\n"
    "features = 4\n"
    "iterations = 2\n"
    "max_steps = 2\n"
    "cs_iterations = 5\n"
    "cs_levels = 1\n"
    "cs_grid_points = 2\n"
    "cs_tune_images = 1\n"
    "mask_center = 0\n"
    "mask_rate = 0.5\n";

}  // namespace

TEST(Config, DefaultsAndValues) {
  const ExperimentConfig c = parse_config("size = 32\nlr = 0.01 # comment\n\n# full line\ntask = sr\n");
  EXPECT_EQ(c.height, 32u);
  EXPECT_EQ(c.width, 32u);
  EXPECT_EQ(c.train.learning_rate, 0.01);
  EXPECT_EQ(c.task, Task::sr);
  EXPECT_FLOAT_EQ(c.unroll.alpha_init, 0.5f);
  EXPECT_FLOAT_EQ(parse_config("").unroll.alpha_init, 1.0f);
  EXPECT_EQ(parse_config("").out_dir, fs::path("out"));
}

TEST(Config, ErrorsNameTheKey) {
  auto message = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("bogus = 1\n").find("bogus"), std::string::npos);
  EXPECT_NE(message("lr = 1\nlr = 2\n").find("lr"), std::string::npos);
  EXPECT_NE(message("features = many\n").find("features"), std::string::npos);
  EXPECT_NE(message("size = 48\n").find("height"), std::string::npos);
  EXPECT_NE(message("num_images = 0\n").find("num_images"), std::string::npos);
  EXPECT_NE(message("task = ct\n").find("task"), std::string::npos);
  EXPECT_FALSE(message("just text\n").empty());
}

TEST(Config, SeedAndOutputPrecedence) {
  const ExperimentConfig a = parse_config("seed = 5\nmask_seed = 9\n");
  EXPECT_EQ(a.mask.seed, 9u);
  EXPECT_EQ(a.phantom.seed, 5u);
  EXPECT_EQ(a.net_seed, 5u);
  EXPECT_EQ(a.train.seed, 5u);
  Overrides o;
  o.seed = 11;
  const ExperimentConfig b = parse_config("seed = 5\n", o);
  EXPECT_EQ(b.phantom.seed, 11u);
  EXPECT_EQ(parse_config("out_dir = x\n", {}, "from_env").out_dir, fs::path("from_env"));
  o.out = "from_flag";
  EXPECT_EQ(parse_config("out_dir = x\n", o, "from_env").out_dir, fs::path("from_flag"));
  EXPECT_EQ(parse_config("arch = chain\n").net.chain_layers, 2);
}

TEST(Config, EveryDocumentedKeyParses) {
  for (const auto& [key, doc] : config_keys()) EXPECT_FALSE(doc.empty()) << key;
  EXPECT_TRUE(config_keys().count("mask_rate"));
  EXPECT_EQ(command_names().size(), 7u);
}

TEST(Cli, GenmaskPopcount) {
  const fs::path dir = fresh_dir("genmask");
  const fs::path cfg = write_config(dir, "size = 64\nmask_rate = 0.2\n");
  ASSERT_EQ(run_cmd("genmask", cfg, dir / "out"), 0);
  EXPECT_EQ(read_mask_bits(dir / "out" / "mask.bits").count(), 819u);
  EXPECT_EQ(read_mask_pgm(dir / "out" / "mask.pgm").count(), 819u);
  fs::remove_all(dir);
}

TEST(Cli, GendataIsByteIdentical) {
  const fs::path dir = fresh_dir("gendata");
  const fs::path cfg = write_config(dir, "size = 16\nnum_images = 10\nseed = 7\n");
  ASSERT_EQ(run_cmd("gendata", cfg, dir / "a"), 0);
  ASSERT_EQ(run_cmd("gendata", cfg, dir / "b"), 0);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir / "a" / "data")) {
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / "data" / e.path().filename())) << e.path();
    ++files;
  }
  EXPECT_EQ(files, 20u);
  fs::remove_all(dir);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = fresh_dir("exit");
  EXPECT_EQ(run_cmd("gendata", write_config(dir, "num_images = 0\n"), dir / "o"), 2);
  EXPECT_EQ(run_cmd("gendata", write_config(dir, "unknown_key = 3\n"), dir / "o"), 2);
  EXPECT_EQ(run_cmd("nonsense", write_config(dir, ""), dir / "o"), 2);
  EXPECT_EQ(run_cmd("reconstruct", write_config(dir, kTiny), dir / "nothing_here"), 1);
  fs::remove_all(dir);
}

TEST(Cli, TinyPipeline) {
  const fs::path dir = fresh_dir("pipeline");
  const fs::path out = dir / "o";
  const fs::path cfg = write_config(dir, std::string(kTiny) + "normalization = none\n");
  ASSERT_EQ(run_cmd("train", cfg, out), 0);
  EXPECT_TRUE(fs::exists(out / "model.npgd"));
  EXPECT_TRUE(fs::exists(out / "loss.csv"));
  ASSERT_EQ(run_cmd("reconstruct", cfg, out), 0);
  EXPECT_TRUE(fs::exists(out / "recon" / "img_0000_xT_re.pgm"));
  EXPECT_TRUE(fs::exists(out / "recon" / "img_0001_zf_im.pgm"));
  EXPECT_EQ(slurp(out / "metrics.csv").substr(0, 30), "image,method,snr_db,ssim,nrmse");
  ASSERT_EQ(run_cmd("baseline", cfg, out), 0);
  EXPECT_TRUE(fs::exists(out / "baseline" / "lambda.csv"));
  EXPECT_TRUE(fs::exists(out / "baseline" / "objective_0000.csv"));
  ASSERT_EQ(run_cmd("analyze", cfg, out), 0);
  EXPECT_TRUE(fs::exists(out / "analysis" / "aggregate.csv"));
  EXPECT_TRUE(fs::exists(out / "analysis" / "trace_0001.csv"));

  // a checkpoint trained for another image size is rejected by name
  const fs::path other = write_config(dir, std::string(kTiny) + "normalization = none\nwidth = 16\n");
  std::ostringstream log, err;
  Overrides o;
  o.out = out;
  EXPECT_EQ(run("reconstruct", other, o, log, err), 2);
  EXPECT_NE(err.str().find("width"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, AnalyzeRejectsNormalizedCheckpoint) {
  const fs::path dir = fresh_dir("analyze_norm");
  const fs::path cfg = write_config(dir, kTiny);
  ASSERT_EQ(run_cmd("train", cfg, dir / "o"), 0);
  std::ostringstream log, err;
  Overrides o;
  o.out = dir / "o";
  EXPECT_EQ(run("analyze", cfg, o, log, err), 2);
  EXPECT_NE(err.str().find("normalization"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Cli, SweepWritesOneRowPerCell) {
  const fs::path dir = fresh_dir("sweep");
  const fs::path cfg = write_config(dir, std::string(kTiny) + "sweep_iterations = 1,2\nsweep_blocks = 1\n");
  ASSERT_EQ(run_cmd("sweep", cfg, dir / "o"), 0);
  std::istringstream rows(slurp(dir / "o" / "sweep.csv"));
  std::string line;
  std::getline(rows, line);
  EXPECT_EQ(line, "T,RBs,train_seconds,infer_seconds_per_image,snr_mean,ssim_mean");
  int n = 0;
  while (std::getline(rows, line)) ++n;
  EXPECT_EQ(n, 2);
  fs::remove_all(dir);
}
