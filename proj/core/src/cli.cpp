#include "npgd/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>
#include <thread>

#include "npgd/contraction.hpp"
#include "npgd/error.hpp"
#include "npgd/fft.hpp"
#include "npgd/metrics.hpp"
#include "npgd/rng.hpp"

namespace npgd::cli {

namespace fs = std::filesystem;

std::string to_string(Task t) { return t == Task::mri ? "mri" : "sr"; }

const std::map<std::string, std::string>& config_keys() {
  static const std::map<std::string, std::string> keys = {
      {"task", "mri (masked Fourier) or sr (2x2 box downsampling)"},
      {"size", "sets height and width"},
      {"height", "image height, power of two"},
      {"width", "image width, power of two"},
      {"data_dir", "directory of .pgm images; empty for synthetic phantoms"},
      {"num_images", "number of synthetic phantoms"},
      {"test_count", "images held out at the end of the dataset"},
      {"phantom_min_ellipses", "fewest ellipses per phantom"},
      {"phantom_max_ellipses", "most ellipses per phantom"},
      {"phantom_intensity_lo", "lowest ellipse intensity"},
      {"phantom_intensity_hi", "highest ellipse intensity"},
      {"phantom_phase", "true for a random smooth phase"},
      {"seed", "default for every *_seed key"},
      {"data_seed", "phantom stream seed"},
      {"mask_rate", "sampled fraction of k-space"},
      {"mask_center", "fraction of k-space in the fully sampled center square"},
      {"mask_decay", "density exponent"},
      {"mask_seed", "mask seed"},
      {"mask_file", "precomputed mask (.pgm or NPGDMASK bits)"},
      {"arch", "resnet or chain"},
      {"res_blocks", "residual blocks (resnet)"},
      {"features", "feature maps"},
      {"chain_layers", "convolution layers (chain)"},
      {"chain_kernel", "odd kernel size (chain)"},
      {"activation", "relu or swish"},
      {"normalization", "instance or none"},
      {"net_seed", "weight initialization seed"},
      {"iterations", "unrolled iterations T"},
      {"alpha_init", "initial gradient step size"},
      {"beta", "weight of the terminal loss"},
      {"loss", "l2 or l1"},
      {"lr", "Adam learning rate"},
      {"lr_period", "steps between learning-rate halvings"},
      {"adam_beta1", "Adam first-moment decay"},
      {"adam_beta2", "Adam second-moment decay"},
      {"adam_eps", "Adam epsilon"},
      {"batch_size", "samples per step"},
      {"epochs", "passes over the training set"},
      {"max_steps", "optimizer step budget, 0 for none"},
      {"train_seed", "data order and noise seed"},
      {"noise_sigma", "measurement noise standard deviation"},
      {"checkpoint_every", "steps between intermediate checkpoints, 0 for none"},
      {"cs_lambda", "l1 weight; 0 selects it by grid search"},
      {"cs_iterations", "ISTA/FISTA iterations"},
      {"cs_solver", "ista or fista"},
      {"cs_levels", "Haar decomposition levels"},
      {"cs_grid_points", "lambda grid size for the search"},
      {"cs_tune_images", "training images used for the search"},
      {"sweep_iterations", "comma separated T values"},
      {"sweep_blocks", "comma separated residual block counts"},
      {"debias_iters", "fixed-point iterations for debiasing"},
      {"debias_tol", "relative step tolerance for debiasing"},
      {"checkpoint", "model file, default <out_dir>/model.npgd"},
      {"out_dir", "output directory"},
      {"threads", "worker threads for per-image work"},
  };
  return keys;
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

class Values {
 public:
  explicit Values(std::map<std::string, std::string> kv) : kv_(std::move(kv)) {}

  bool has(const std::string& k) const { return kv_.count(k) > 0; }

  template <typename T>
  void get(const std::string& k, T& out) const {
    const auto it = kv_.find(k);
    if (it == kv_.end()) return;
    const std::string& v = it->second;
    if constexpr (std::is_same_v<T, std::string>) {
      out = v;
    } else if constexpr (std::is_same_v<T, fs::path>) {
      out = v;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (v == "true" || v == "1" || v == "yes") {
        out = true;
      } else if (v == "false" || v == "0" || v == "no") {
        out = false;
      } else {
        throw ConfigError(k + ": expected true or false, got '" + v + "'");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      try {
        out = T(std::stod(v, &used));
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != v.size() || v.empty()) throw ConfigError(k + ": expected a number, got '" + v + "'");
    } else {
      if (!v.empty() && v[0] == '-' && std::is_unsigned_v<T>) {
        throw ConfigError(k + ": expected a non-negative integer, got '" + v + "'");
      }
      const auto r = std::from_chars(v.data(), v.data() + v.size(), out);
      if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ConfigError(k + ": expected an integer, got '" + v + "'");
      }
    }
  }

  std::vector<int> get_list(const std::string& k, std::vector<int> fallback) const {
    const auto it = kv_.find(k);
    if (it == kv_.end()) return fallback;
    std::vector<int> out;
    std::stringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = trim(item);
      int v = 0;
      const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
      if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) {
        throw ConfigError(k + ": expected comma separated integers, got '" + it->second + "'");
      }
      out.push_back(v);
    }
    if (out.empty()) throw ConfigError(k + ": empty list");
    return out;
  }

  template <typename E, typename Parse>
  void get_enum(const std::string& k, E& out, Parse parse) const {
    const auto it = kv_.find(k);
    if (it != kv_.end()) out = parse(it->second);
  }

 private:
  std::map<std::string, std::string> kv_;
};

std::map<std::string, std::string> parse_lines(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (!config_keys().count(key)) throw ConfigError(key + ": unknown config key (line " + std::to_string(lineno) + ")");
    if (kv.count(key)) throw ConfigError(key + ": given twice (line " + std::to_string(lineno) + ")");
    kv[key] = value;
  }
  return kv;
}

Task parse_task(std::string_view s) {
  if (s == "mri") return Task::mri;
  if (s == "sr") return Task::sr;
  throw ConfigError("task: unknown value '" + std::string(s) + "' (mri|sr)");
}

bool pow2(std::size_t n) { return n >= 8 && is_power_of_two(n); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string() + ": cannot create directory (" + ec.message() + ")");
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  return f;
}

std::string indexed(const char* prefix, std::size_t k) {
  std::ostringstream s;
  s << prefix << std::setw(4) << std::setfill('0') << k;
  return s.str();
}

fs::path checkpoint_path(const ExperimentConfig& cfg) {
  return cfg.checkpoint.empty() ? cfg.out_dir / "model.npgd" : cfg.checkpoint;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; callers write to
// disjoint slots so results do not depend on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(std::max(threads, 1), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// Noisy (or noiseless) measurements of the test images.
std::vector<ComplexImage> measure(const ExperimentConfig& cfg, const LinearOperator& op,
                                  const std::vector<ComplexImage>& images) {
  Xorshift64Star rng(cfg.train.seed ^ 0x7465737453ULL);
  std::vector<ComplexImage> ys;
  for (const auto& x : images) {
    ComplexImage y = op.apply(x);
    if (cfg.train.noise_sigma > 0.0) {
      for (auto& v : y.planes().data()) v += float(cfg.train.noise_sigma * rng.normal());
    }
    ys.push_back(std::move(y));
  }
  return ys;
}

// Phi^H y scaled by 1 / ||Phi||^2: zero filling for Fourier sampling and
// nearest-neighbour upsampling for the box operator.
ComplexImage direct_inverse(const LinearOperator& op, const ComplexImage& y, double norm_sq) {
  return (1.0f / float(norm_sq)) * op.adjoint(y);
}

void check_checkpoint(const Checkpoint& ck, const ExperimentConfig& cfg) {
  auto expect = [&](const char* key, const std::string& want, const char* field) {
    const auto it = ck.meta.find(key);
    if (it != ck.meta.end() && it->second != want) {
      throw ConfigError(std::string(field) + ": checkpoint was trained with " + it->second + ", config has " + want);
    }
  };
  expect("data.task", to_string(cfg.task), "task");
  expect("data.height", std::to_string(cfg.height), "height");
  expect("data.width", std::to_string(cfg.width), "width");
}

void write_metrics_header(std::ostream& os) { os << "image,method,snr_db,ssim,nrmse\n" << std::setprecision(10); }

void write_metrics_row(std::ostream& os, std::size_t image, const char* method, const MetricReport& m) {
  os << image << ',' << method << ',' << m.snr_db << ',' << m.ssim << ',' << m.nrmse << '\n';
}

TrainResult train_model(const ExperimentConfig& cfg, const Dataset& data, const ProximalConfig& net_cfg,
                        const UnrollConfig& unroll, std::ostream& log) {
  const auto op = make_operator(cfg);
  const ProximalNet init = ProximalNet::build(net_cfg, cfg.net_seed);
  log << "training " << to_string(net_cfg.arch) << " (" << init.parameter_count() << " parameters), T = "
      << unroll.iterations << ", " << data.train.size() << " images\n";
  const std::size_t every = 50;
  TrainConfig tc = cfg.train;
  if (tc.checkpoint_every > 0) tc.checkpoint_path = checkpoint_path(cfg);
  TrainResult r = train(data.train, [&](std::size_t) { return op; }, init, unroll, tc, [&](const LossRecord& rec) {
    if (rec.step % every == 0) {
      log << "  step " << rec.step << " epoch " << rec.epoch << " loss " << rec.loss_total << " alpha " << rec.alpha
          << '\n';
    }
  });
  r.checkpoint.meta["data.task"] = to_string(cfg.task);
  r.checkpoint.meta["data.height"] = std::to_string(cfg.height);
  r.checkpoint.meta["data.width"] = std::to_string(cfg.width);
  return r;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (!pow2(height)) throw ConfigError("height: must be a power of two >= 8");
  if (!pow2(width)) throw ConfigError("width: must be a power of two >= 8");
  if (data_dir.empty() && num_images == 0) throw ConfigError("num_images: empty dataset (0 images)");
  if (test_count == 0) throw ConfigError("test_count: must be >= 1");
  phantom.validate();
  if (task == Task::mri && mask_file.empty()) {
    if (!(mask.rate > 0.0 && mask.rate <= 1.0)) throw ConfigError("mask_rate: must lie in (0, 1]");
    if (!(mask.center_fraction >= 0.0 && mask.center_fraction < mask.rate)) {
      throw ConfigError("mask_center: must lie in [0, mask_rate)");
    }
    if (!(mask.decay >= 0.0)) throw ConfigError("mask_decay: must be non-negative");
  }
  net.validate();
  unroll.validate();
  train.validate();
  if (cs.lambda < 0.0) throw ConfigError("cs_lambda: must be non-negative");
  if (cs.iterations < 1) throw ConfigError("cs_iterations: must be >= 1");
  if (cs.levels < 1 || (height >> cs.levels) == 0 || (width >> cs.levels) == 0) {
    throw ConfigError("cs_levels: must be >= 1 and fit the image size");
  }
  if (task == Task::sr && ((height / 2) >> cs.levels) == 0) throw ConfigError("cs_levels: too many for sr");
  if (cs_grid_points < 1) throw ConfigError("cs_grid_points: must be >= 1");
  if (cs_tune_images < 1) throw ConfigError("cs_tune_images: must be >= 1");
  for (int t : sweep_iterations)
    if (t < 1) throw ConfigError("sweep_iterations: values must be >= 1");
  for (int b : sweep_blocks)
    if (b < 1) throw ConfigError("sweep_blocks: values must be >= 1");
  if (debias_iters < 1) throw ConfigError("debias_iters: must be >= 1");
  if (!(debias_tol > 0.0)) throw ConfigError("debias_tol: must be positive");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
}

ExperimentConfig parse_config(const std::string& text, const Overrides& o, const char* env_out) {
  const Values v(parse_lines(text));
  ExperimentConfig c;

  v.get_enum("task", c.task, parse_task);
  std::size_t size = 0;
  v.get("size", size);
  if (size) c.height = c.width = size;
  v.get("height", c.height);
  v.get("width", c.width);

  v.get("data_dir", c.data_dir);
  v.get("num_images", c.num_images);
  v.get("test_count", c.test_count);
  v.get("phantom_min_ellipses", c.phantom.min_ellipses);
  v.get("phantom_max_ellipses", c.phantom.max_ellipses);
  v.get("phantom_intensity_lo", c.phantom.intensity_lo);
  v.get("phantom_intensity_hi", c.phantom.intensity_hi);
  v.get("phantom_phase", c.phantom.smooth_phase);

  std::uint64_t seed = 1;
  v.get("seed", seed);
  if (o.seed) seed = *o.seed;
  c.phantom.seed = c.mask.seed = c.net_seed = c.train.seed = seed;
  v.get("data_seed", c.phantom.seed);
  v.get("mask_seed", c.mask.seed);
  v.get("net_seed", c.net_seed);
  v.get("train_seed", c.train.seed);

  v.get("mask_rate", c.mask.rate);
  v.get("mask_center", c.mask.center_fraction);
  v.get("mask_decay", c.mask.decay);
  v.get("mask_file", c.mask_file);

  v.get_enum("arch", c.net.arch, parse_arch);
  if (c.net.arch == Arch::chain) c.net = ProximalConfig::desk_chain();
  v.get("res_blocks", c.net.num_res_blocks);
  v.get("features", c.net.feature_maps);
  v.get("chain_layers", c.net.chain_layers);
  v.get("chain_kernel", c.net.chain_kernel);
  v.get_enum("activation", c.net.activation, parse_activation);
  v.get_enum("normalization", c.net.normalization, parse_normalization);

  c.unroll.alpha_init = c.task == Task::mri ? 1.0f : 0.5f;
  v.get("iterations", c.unroll.iterations);
  v.get("alpha_init", c.unroll.alpha_init);
  v.get("beta", c.unroll.beta);
  v.get_enum("loss", c.unroll.loss, parse_loss);

  v.get("lr", c.train.learning_rate);
  v.get("lr_period", c.train.halving_period);
  v.get("adam_beta1", c.train.adam_beta1);
  v.get("adam_beta2", c.train.adam_beta2);
  v.get("adam_eps", c.train.adam_eps);
  v.get("batch_size", c.train.batch_size);
  v.get("epochs", c.train.epochs);
  v.get("max_steps", c.train.max_steps);
  v.get("noise_sigma", c.train.noise_sigma);
  v.get("checkpoint_every", c.train.checkpoint_every);

  c.cs.lambda = 0.0;
  v.get("cs_lambda", c.cs.lambda);
  v.get("cs_iterations", c.cs.iterations);
  v.get_enum("cs_solver", c.cs.solver, parse_cs_solver);
  v.get("cs_levels", c.cs.levels);
  v.get("cs_grid_points", c.cs_grid_points);
  v.get("cs_tune_images", c.cs_tune_images);

  c.sweep_iterations = v.get_list("sweep_iterations", c.sweep_iterations);
  c.sweep_blocks = v.get_list("sweep_blocks", c.sweep_blocks);
  v.get("debias_iters", c.debias_iters);
  v.get("debias_tol", c.debias_tol);
  v.get("checkpoint", c.checkpoint);
  v.get("out_dir", c.out_dir);
  v.get("threads", c.threads);

  if (env_out && *env_out) c.out_dir = env_out;
  if (o.out) c.out_dir = *o.out;
  if (o.threads) c.threads = *o.threads;
  c.validate();
  return c;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& o, const char* env_out) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), o, env_out);
}

Dataset load_dataset(const ExperimentConfig& cfg) {
  std::vector<ComplexImage> all = cfg.data_dir.empty()
                                      ? make_phantoms(cfg.num_images, cfg.height, cfg.width, cfg.phantom)
                                      : read_dataset(cfg.data_dir, cfg.height, cfg.width);
  if (all.size() <= cfg.test_count) {
    throw ConfigError("test_count: dataset has only " + std::to_string(all.size()) + " images");
  }
  Dataset d;
  const auto split = all.begin() + std::ptrdiff_t(all.size() - cfg.test_count);
  d.train.assign(all.begin(), split);
  d.test.assign(split, all.end());
  return d;
}

SamplingMask load_or_generate_mask(const ExperimentConfig& cfg) {
  if (cfg.mask_file.empty()) return generate_vardens_mask(cfg.height, cfg.width, cfg.mask);
  SamplingMask m = cfg.mask_file.extension() == ".pgm" ? read_mask_pgm(cfg.mask_file) : read_mask_bits(cfg.mask_file);
  if (m.height() != cfg.height || m.width() != cfg.width) {
    throw ConfigError("mask_file: mask is " + std::to_string(m.height()) + "x" + std::to_string(m.width()) +
                      ", images are " + std::to_string(cfg.height) + "x" + std::to_string(cfg.width));
  }
  return m;
}

std::shared_ptr<const LinearOperator> make_operator(const ExperimentConfig& cfg) {
  if (cfg.task == Task::sr) return std::make_shared<BoxDownsampleOperator>(cfg.height, cfg.width);
  return std::make_shared<MaskedFourierOperator>(load_or_generate_mask(cfg));
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "T,RBs,train_seconds,infer_seconds_per_image,snr_mean,ssim_mean\n" << std::setprecision(10);
  for (const auto& r : rows) {
    os << r.iterations << ',' << r.blocks << ',' << r.train_seconds << ',' << r.infer_seconds_per_image << ','
       << r.snr_mean << ',' << r.ssim_mean << '\n';
  }
}

int cmd_genmask(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out_dir);
  const SamplingMask m = load_or_generate_mask(cfg);
  write_mask_pgm(m, cfg.out_dir / "mask.pgm");
  write_mask_bits(m, cfg.out_dir / "mask.bits");
  log << "mask " << m.height() << "x" << m.width() << ": " << m.count() << " samples -> " << cfg.out_dir.string()
      << '\n';
  return 0;
}

int cmd_gendata(const ExperimentConfig& cfg, std::ostream& log) {
  const auto images = make_phantoms(cfg.num_images, cfg.height, cfg.width, cfg.phantom);
  write_dataset(images, cfg.out_dir / "data");
  log << images.size() << " phantoms -> " << (cfg.out_dir / "data").string() << '\n';
  return 0;
}

int cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  ensure_dir(cfg.out_dir);
  const Dataset data = load_dataset(cfg);
  const TrainResult r = train_model(cfg, data, cfg.net, cfg.unroll, log);
  save_checkpoint(r.checkpoint, checkpoint_path(cfg));
  auto f = open_out(cfg.out_dir / "loss.csv");
  write_loss_csv(f, r.trace);
  log << r.trace.size() << " steps, checkpoint -> " << checkpoint_path(cfg).string() << '\n';
  return 0;
}

int cmd_reconstruct(const ExperimentConfig& cfg, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(cfg));
  check_checkpoint(ck, cfg);
  const Dataset data = load_dataset(cfg);
  const auto op = make_operator(cfg);
  const auto ys = measure(cfg, *op, data.test);
  const double norm_sq = operator_norm_squared(*op);
  const fs::path dir = cfg.out_dir / "recon";
  ensure_dir(dir);

  std::vector<MetricReport> net(data.test.size()), zf(data.test.size());
  parallel_for(data.test.size(), cfg.threads, [&](std::size_t k) {
    const Reconstruction r = reconstruct(ck, ys[k], *op);
    const ComplexImage z = direct_inverse(*op, ys[k], norm_sq);
    net[k] = evaluate(r.image, data.test[k]);
    zf[k] = evaluate(z, data.test[k]);
    const std::string base = indexed("img_", k);
    write_complex_pgm(r.image, dir / (base + "_xT"));
    write_complex_pgm(z, dir / (base + "_zf"));
    write_complex_pgm(data.test[k], dir / (base + "_gt"));
  });

  auto f = open_out(cfg.out_dir / "metrics.csv");
  write_metrics_header(f);
  double snr = 0.0, snr_zf = 0.0;
  for (std::size_t k = 0; k < net.size(); ++k) {
    write_metrics_row(f, k, "npgd", net[k]);
    write_metrics_row(f, k, "zero_filled", zf[k]);
    snr += net[k].snr_db;
    snr_zf += zf[k].snr_db;
  }
  log << "mean SNR " << snr / double(net.size()) << " dB (zero-filled " << snr_zf / double(net.size())
      << " dB) over " << net.size() << " images\n";
  return 0;
}

int cmd_baseline(const ExperimentConfig& cfg, std::ostream& log) {
  const Dataset data = load_dataset(cfg);
  const auto op = make_operator(cfg);
  const fs::path dir = cfg.out_dir / "baseline";
  ensure_dir(dir);

  CsConfig cs = cfg.cs;
  if (cs.lambda == 0.0) {
    std::vector<CsProblem> val;
    const std::size_t n = std::min(cfg.cs_tune_images, data.train.size());
    const auto ys = measure(cfg, *op, std::vector<ComplexImage>(data.train.begin(), data.train.begin() + std::ptrdiff_t(n)));
    for (std::size_t k = 0; k < n; ++k) val.push_back({data.train[k], ys[k], op.get()});
    const LambdaTuning tuning =
        tune_lambda(val, default_lambda_grid(peak_coefficient(val, cs.levels), cfg.cs_grid_points), cs);
    cs.lambda = tuning.best_lambda;
    auto f = open_out(dir / "lambda.csv");
    f << "lambda,mean_snr_db\n" << std::setprecision(10);
    for (const auto& row : tuning.table) f << row.lambda << ',' << row.mean_snr_db << '\n';
    log << "lambda " << cs.lambda << " selected from " << tuning.table.size() << " candidates\n";
  }

  const auto ys = measure(cfg, *op, data.test);
  const double norm_sq = operator_norm_squared(*op);
  std::vector<MetricReport> res(data.test.size()), zf(data.test.size());
  parallel_for(data.test.size(), cfg.threads, [&](std::size_t k) {
    const CsResult r = solve_cs(ys[k], *op, cs);
    res[k] = evaluate(r.image, data.test[k]);
    zf[k] = evaluate(direct_inverse(*op, ys[k], norm_sq), data.test[k]);
    const std::string base = indexed("img_", k);
    write_complex_pgm(r.image, dir / (base + "_cs"));
    auto f = open_out(dir / (indexed("objective_", k) + ".csv"));
    write_objective_csv(f, r.trace);
  });

  auto f = open_out(dir / "metrics.csv");
  write_metrics_header(f);
  double snr = 0.0;
  for (std::size_t k = 0; k < res.size(); ++k) {
    write_metrics_row(f, k, to_string(cs.solver).c_str(), res[k]);
    write_metrics_row(f, k, "zero_filled", zf[k]);
    snr += res[k].snr_db;
  }
  log << to_string(cs.solver) << "-haar mean SNR " << snr / double(res.size()) << " dB\n";
  return 0;
}

int cmd_analyze(const ExperimentConfig& cfg, std::ostream& log) {
  const Checkpoint ck = load_checkpoint(checkpoint_path(cfg));
  check_checkpoint(ck, cfg);
  if (ck.net.config().normalization != Normalization::none) {
    throw UnsupportedConfigError("analyze: checkpoint uses " + to_string(ck.net.config().normalization) +
                                 " normalization; contraction analysis needs normalization=none");
  }
  const UnrollConfig u = load_unroll(ck);
  const Dataset data = load_dataset(cfg);
  const auto op = make_operator(cfg);
  const fs::path dir = cfg.out_dir / "analysis";
  ensure_dir(dir);

  std::vector<SampleAnalysis> samples(data.test.size());
  parallel_for(data.test.size(), cfg.threads, [&](std::size_t k) {
    samples[k] = analyze_sample(ck.net, *op, ck.alpha, u.iterations, data.test[k]);
  });

  std::vector<ContractionTrace> traces;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    auto f = open_out(dir / (indexed("trace_", k) + ".csv"));
    write_trace_csv(f, samples[k].trace);
    traces.push_back(samples[k].trace);
  }
  const auto agg = aggregate(traces);
  auto fa = open_out(dir / "aggregate.csv");
  write_aggregate_csv(fa, agg);

  auto fd = open_out(dir / "debias.csv");
  fd << "image,converged,non_contractive,iterations,residual_final,residual_debiased\n" << std::setprecision(10);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& s = samples[k];
    fd << k << ',' << int(s.debiased.converged) << ',' << int(s.debiased.non_contractive) << ','
       << s.debiased.iterations << ',' << s.residual_final << ',' << s.residual_debiased << '\n';
  }
  if (!agg.empty()) {
    log << "nrmse t=1 " << agg.front().nrmse_mean << " -> t=" << agg.back().t << ' ' << agg.back().nrmse_mean
        << "; eta1 " << agg.back().eta1_mean << ", eta2 " << agg.back().eta2_mean << " at t=" << agg.back().t << '\n';
  }
  return 0;
}

int cmd_sweep(const ExperimentConfig& cfg, std::ostream& log) {
  using clock = std::chrono::steady_clock;
  ensure_dir(cfg.out_dir);
  const Dataset data = load_dataset(cfg);
  const auto op = make_operator(cfg);
  const auto ys = measure(cfg, *op, data.test);

  std::vector<SweepRow> rows;
  for (int blocks : cfg.sweep_blocks) {
    for (int t : cfg.sweep_iterations) {
      ProximalConfig net = cfg.net;
      net.num_res_blocks = blocks;
      UnrollConfig unroll = cfg.unroll;
      unroll.iterations = t;
      SweepRow row;
      row.iterations = t;
      row.blocks = blocks;
      const auto t0 = clock::now();
      const TrainResult r = train_model(cfg, data, net, unroll, log);
      const auto t1 = clock::now();
      std::vector<ComplexImage> outs;
      for (const auto& y : ys) outs.push_back(reconstruct(r.checkpoint, y, *op).image);
      const auto t2 = clock::now();
      row.train_seconds = std::chrono::duration<double>(t1 - t0).count();
      row.infer_seconds_per_image = std::chrono::duration<double>(t2 - t1).count() / double(ys.size());
      for (std::size_t k = 0; k < outs.size(); ++k) {
        const MetricReport m = evaluate(outs[k], data.test[k]);
        row.snr_mean += m.snr_db;
        row.ssim_mean += m.ssim;
      }
      row.snr_mean /= double(outs.size());
      row.ssim_mean /= double(outs.size());
      log << "T=" << t << " RBs=" << blocks << ": SNR " << row.snr_mean << " dB, SSIM " << row.ssim_mean << '\n';
      rows.push_back(row);
    }
  }
  auto f = open_out(cfg.out_dir / "sweep.csv");
  write_sweep_csv(f, rows);
  return 0;
}

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"genmask", "gendata", "train", "reconstruct",
                                                 "baseline", "analyze", "sweep"};
  return names;
}

int run(const std::string& command, const std::optional<fs::path>& config_path, const Overrides& o, std::ostream& log,
        std::ostream& err) {
  static const std::map<std::string, int (*)(const ExperimentConfig&, std::ostream&)> table = {
      {"genmask", cmd_genmask}, {"gendata", cmd_gendata},   {"train", cmd_train}, {"reconstruct", cmd_reconstruct},
      {"baseline", cmd_baseline}, {"analyze", cmd_analyze}, {"sweep", cmd_sweep}};
  try {
    const auto it = table.find(command);
    if (it == table.end()) throw ConfigError("unknown command '" + command + "'");
    const char* env_out = std::getenv("NPGD_OUT");
    const ExperimentConfig cfg = config_path ? load_config(*config_path, o, env_out) : parse_config("", o, env_out);
    return it->second(cfg, log);
  } catch (const ContractError& e) {
    err << "npgd " << command << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "npgd " << command << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace npgd::cli
