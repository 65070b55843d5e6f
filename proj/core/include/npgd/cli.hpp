#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "npgd/baselines.hpp"
#include "npgd/data.hpp"
#include "npgd/operators.hpp"
#include "npgd/proximal.hpp"
#include "npgd/sampling.hpp"
#include "npgd/unroll.hpp"

namespace npgd::cli {

enum class Task { mri, sr };
std::string to_string(Task t);

// Everything a command needs, resolved from a flat key = value file.
struct ExperimentConfig {
  Task task = Task::mri;
  std::size_t height = 64;
  std::size_t width = 64;

  // Empty data_dir means synthetic phantoms.
  std::filesystem::path data_dir;
  std::size_t num_images = 200;
  std::size_t test_count = 20;
  PhantomSpec phantom;

  VarDensParams mask;
  // Optional precomputed mask (.pgm or NPGDMASK bits).
  std::filesystem::path mask_file;

  ProximalConfig net;
  std::uint64_t net_seed = 1;
  UnrollConfig unroll;
  TrainConfig train;
  // cs.lambda == 0 picks lambda by grid search on training images.
  CsConfig cs;
  int cs_grid_points = 8;
  std::size_t cs_tune_images = 5;

  std::vector<int> sweep_iterations{1, 3};
  std::vector<int> sweep_blocks{1};

  int debias_iters = 500;
  double debias_tol = 1e-6;

  std::filesystem::path checkpoint;  // defaults to <out>/model.npgd
  std::filesystem::path out_dir = "out";
  // Worker threads for independent per-image work.
  int threads = 1;

  // Throws ConfigError naming the offending key.
  void validate() const;
};

// Keys accepted in a config file, with a one-line description each.
const std::map<std::string, std::string>& config_keys();

struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};

// Parses "key = value" lines; '#' starts a comment. Unknown keys and
// malformed values raise ConfigError. `seed` seeds every stage unless a
// stage-specific seed key is given; a seed override replaces `seed`.
// The output directory is taken from --out, else NPGD_OUT (env_out), else
// the out_dir key. The result is validated.
ExperimentConfig parse_config(const std::string& text, const Overrides& o = {}, const char* env_out = nullptr);
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& o = {},
                             const char* env_out = nullptr);

struct Dataset {
  std::vector<ComplexImage> train;
  std::vector<ComplexImage> test;
};

Dataset load_dataset(const ExperimentConfig& cfg);
SamplingMask load_or_generate_mask(const ExperimentConfig& cfg);
std::shared_ptr<const LinearOperator> make_operator(const ExperimentConfig& cfg);

struct SweepRow {
  int iterations = 0;
  int blocks = 0;
  double train_seconds = 0.0;
  double infer_seconds_per_image = 0.0;
  double snr_mean = 0.0;
  double ssim_mean = 0.0;
};

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);

int cmd_genmask(const ExperimentConfig& cfg, std::ostream& log);
int cmd_gendata(const ExperimentConfig& cfg, std::ostream& log);
int cmd_train(const ExperimentConfig& cfg, std::ostream& log);
int cmd_reconstruct(const ExperimentConfig& cfg, std::ostream& log);
int cmd_baseline(const ExperimentConfig& cfg, std::ostream& log);
int cmd_analyze(const ExperimentConfig& cfg, std::ostream& log);
int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log);

const std::vector<std::string>& command_names();

// Runs one command and maps failures to exit codes: 0 success, 1 runtime or
// numeric failure, 2 configuration or contract violation.
int run(const std::string& command, const std::optional<std::filesystem::path>& config_path, const Overrides& o,
        std::ostream& log, std::ostream& err);

}  // namespace npgd::cli
