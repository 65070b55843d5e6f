// Desk-scale acceptance run: one PASS/FAIL line per criterion.
//
//   npgd_acceptance [--only N[,N...]] [--keep DIR]
//
// Exit status is 0 only when every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "npgd/baselines.hpp"
#include "npgd/contraction.hpp"
#include "npgd/data.hpp"
#include "npgd/error.hpp"
#include "npgd/fft.hpp"
#include "npgd/metrics.hpp"
#include "npgd/operators.hpp"
#include "npgd/proximal.hpp"
#include "npgd/sampling.hpp"
#include "npgd/unroll.hpp"

using namespace npgd;
using namespace npgd::testing;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Training schedules of the two trained models.
constexpr double kMriLearningRate = 1e-2;
constexpr std::size_t kMriHalvingPeriod = 400;
constexpr std::size_t kMriSteps = 1500;
constexpr std::size_t kSweepSteps = 1500;
constexpr double kSrLearningRate = 3e-3;
constexpr std::size_t kSrHalvingPeriod = 1000;
constexpr std::size_t kSrSteps = 3000;
constexpr std::size_t kSrImages = 200;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / double(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double adjoint_mismatch(const LinearOperator& op, Xorshift64Star& rng) {
  const auto in = op.input_shape(), out = op.output_shape();
  const ComplexImage x = random_image(rng, in.height, in.width);
  const ComplexImage y = random_image(rng, out.height, out.width);
  const ComplexImage px = op.apply(x);
  return std::abs(dot(px, y) - dot(x, op.adjoint(y))) / (norm(px) * norm(y) + 1e-30);
}

// 1. adjoint identities, Parseval and FFT round trip.
void operators(Outcome& o) {
  const auto t0 = Clock::now();
  Xorshift64Star rng(101);
  double fourier = 0.0, box = 0.0, parseval = 0.0, roundtrip = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t h = std::size_t(8) << rng.below(3), w = std::size_t(8) << rng.below(3);
    fourier = std::max(fourier, adjoint_mismatch(MaskedFourierOperator(random_mask(rng, h, w, 0.3)), rng));
    box = std::max(box, adjoint_mismatch(BoxDownsampleOperator(h, w), rng));
    const ComplexImage x = random_image(rng, h, w);
    const ComplexImage f = fft2(x);
    parseval = std::max(parseval, std::abs(norm(f) - norm(x)) / norm(x));
    roundtrip = std::max(roundtrip, norm(ifft2(f) - x) / norm(x));
  }
  const double secs = seconds_since(t0);
  o.detail << "fourier adjoint " << fourier << ", box adjoint " << box << ", parseval " << parseval
           << ", round trip " << roundtrip << ", " << secs << " s";
  o.require(fourier < 1e-5, "fourier adjoint");
  o.require(box < 1e-5, "box adjoint");
  o.require(parseval < 1e-5, "parseval");
  o.require(roundtrip < 1e-5, "round trip");
  o.require(secs < 5.0, "runtime");
}

// 2. finite-difference gradient checks, 100 random instances per primitive.
void autograd(Outcome& o) {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    for (const auto& c : primitive_checks(1000 + 100 * seed)) {
      if (c.rel_error >= worst) {
        worst = c.rel_error;
        worst_name = c.name;
      }
    }
  }
  const ChainCheck chain = unrolled_loss_check(203);
  const double secs = seconds_since(t0);
  o.detail << "worst primitive " << worst_name << " " << worst << ", unrolled loss params " << chain.params_rel_error
           << " alpha " << chain.alpha_rel_error << ", " << secs << " s";
  o.require(worst < 1e-3, "primitive gradients");
  o.require(chain.params_rel_error < 1e-2 && chain.alpha_rel_error < 1e-2, "unrolled loss gradient");
  o.require(secs < 60.0, "runtime");
}

// Scalar prox of lambda |v| by brute force over a refined grid.
double brute_prox(double v, double lambda) {
  double best = 0.0, lo = -std::abs(v) - 1.0, hi = std::abs(v) + 1.0;
  for (int round = 0; round < 6; ++round) {
    double best_f = 1e300;
    const int n = 2000;
    for (int i = 0; i <= n; ++i) {
      const double u = lo + (hi - lo) * i / n;
      const double f = 0.5 * (u - v) * (u - v) + lambda * std::abs(u);
      if (f < best_f) {
        best_f = f;
        best = u;
      }
    }
    const double step = (hi - lo) / n;
    lo = best - 2 * step;
    hi = best + 2 * step;
  }
  return best;
}

// 3. soft threshold, Haar, ISTA monotonicity and FISTA vs ISTA.
void baselines(Outcome& o) {
  Xorshift64Star rng(303);
  double prox = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const float v = float(3.0 * rng.normal()), lambda = float(2.0 * rng.uniform());
    const Tensor got = soft_threshold(Tensor({1}, v), lambda);
    prox = std::max(prox, std::abs(double(got[0]) - brute_prox(v, lambda)));
  }

  double haar = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = std::size_t(8) << rng.below(3);
    const int levels = 1 + int(rng.below(3));
    const ComplexImage x = random_image(rng, n, n);
    const ComplexImage c = haar2_forward(x, levels);
    haar = std::max(haar, std::abs(norm(c) - norm(x)) / norm(x));
    haar = std::max(haar, norm(haar2_inverse(c, levels) - x) / norm(x));
  }

  int non_monotone = 0, fista_worse = 0;
  for (int k = 0; k < 20; ++k) {
    const MaskedFourierOperator op(random_mask(rng, 16, 16, 0.4));
    const ComplexImage y = op.apply(random_image(rng, 16, 16));
    CsConfig cfg;
    cfg.lambda = 0.05;
    cfg.iterations = 50;
    cfg.levels = 2;
    cfg.solver = CsSolver::ista;
    const CsResult is = solve_cs(y, op, cfg);
    cfg.solver = CsSolver::fista;
    const CsResult fi = solve_cs(y, op, cfg);
    for (std::size_t i = 1; i < is.trace.size(); ++i) {
      if (is.trace[i].objective > is.trace[i - 1].objective * (1.0 + 1e-6)) {
        ++non_monotone;
        break;
      }
    }
    if (fi.trace.back().objective > is.trace.back().objective) ++fista_worse;
  }
  o.detail << "prox " << prox << ", haar " << haar << ", ista non-monotone " << non_monotone
           << "/20, fista worse " << fista_worse << "/20";
  o.require(prox < 1e-4, "soft threshold");
  o.require(haar < 1e-5, "haar");
  o.require(non_monotone == 0, "ista monotone");
  o.require(fista_worse == 0, "fista <= ista");
}

// Shared settings of the reconstruction-trend run.
struct MriSetup {
  std::vector<ComplexImage> train, test;
  std::shared_ptr<const LinearOperator> op;
  std::vector<ComplexImage> ys;
};

MriSetup mri_setup() {
  PhantomSpec spec;
  spec.seed = 1;
  const auto all = make_phantoms(200, 64, 64, spec);
  MriSetup s;
  s.train.assign(all.begin(), all.end() - 20);
  s.test.assign(all.end() - 20, all.end());
  VarDensParams mask;
  mask.rate = 0.2;
  mask.center_fraction = 0.04;
  mask.seed = 1;
  s.op = std::make_shared<MaskedFourierOperator>(generate_vardens_mask(64, 64, mask));
  for (const auto& x : s.test) s.ys.push_back(s.op->apply(x));
  return s;
}

TrainConfig mri_training(std::size_t steps) {
  TrainConfig t;
  t.learning_rate = kMriLearningRate;
  t.halving_period = kMriHalvingPeriod;
  t.batch_size = 2;
  t.epochs = 1000;
  t.max_steps = steps;
  t.seed = 1;
  return t;
}

double mean_snr(const Checkpoint& ck, const MriSetup& s) {
  std::vector<double> v;
  for (std::size_t k = 0; k < s.test.size(); ++k) v.push_back(snr_db(reconstruct(ck, s.ys[k], *s.op).image, s.test[k]));
  return mean(v);
}

Checkpoint train_mri(const MriSetup& s, int iterations, std::size_t steps) {
  ProximalConfig net;  // resnet, 1 RB, 32 features
  net.normalization = Normalization::none;
  UnrollConfig u;
  u.iterations = iterations;
  const OperatorFactory ops = [&](std::size_t) { return s.op; };
  return train(s.train, ops, ProximalNet::build(net, 1), u, mri_training(steps)).checkpoint;
}

// 4. trained NPGD against zero-filled and tuned FISTA-Haar, plus the T sweep.
void reconstruction_trend(Outcome& o) {
  const auto t0 = Clock::now();
  const MriSetup s = mri_setup();

  std::vector<double> zf;
  for (std::size_t k = 0; k < s.test.size(); ++k) zf.push_back(snr_db(s.op->adjoint(s.ys[k]), s.test[k]));

  CsConfig cs;
  cs.iterations = 300;
  cs.solver = CsSolver::fista;
  std::vector<CsProblem> val;
  for (std::size_t k = 0; k < 5; ++k) val.push_back({s.train[k], s.op->apply(s.train[k]), s.op.get()});
  cs.lambda = tune_lambda(val, default_lambda_grid(peak_coefficient(val, cs.levels), 8), cs).best_lambda;
  std::vector<double> fista_snr;
  for (std::size_t k = 0; k < s.test.size(); ++k) fista_snr.push_back(snr_db(solve_cs(s.ys[k], *s.op, cs).image, s.test[k]));
  const double baseline_secs = seconds_since(t0);

  const double npgd = mean_snr(train_mri(s, 10, kMriSteps), s);
  const double npgd_secs = seconds_since(t0) - baseline_secs;
  const double t1 = mean_snr(train_mri(s, 1, kSweepSteps), s);
  const double t3 = mean_snr(train_mri(s, 3, kSweepSteps), s);
  const double secs = seconds_since(t0);

  o.detail << "zero-filled " << mean(zf) << " dB, fista-haar " << mean(fista_snr) << " dB (lambda " << cs.lambda
           << "), npgd T=10 " << npgd << " dB; sweep T=1 " << t1 << " dB, T=3 " << t3 << " dB; baselines "
           << baseline_secs << " s, T=10 training " << npgd_secs << " s, total " << secs << " s";
  o.require(npgd >= mean(zf) + 6.0, "6 dB over zero-filled");
  o.require(npgd >= mean(fista_snr) + 0.5, "0.5 dB over fista-haar");
  o.require(t3 > t1, "T=3 over T=1");
  o.require(secs <= 45.0 * 60.0, "runtime");
}

struct SrModel {
  Checkpoint ck;
  std::vector<ComplexImage> test;
  std::shared_ptr<const LinearOperator> op;
};

SrModel train_sr() {
  PhantomSpec spec;
  spec.seed = 2;
  const auto all = make_phantoms(kSrImages, 32, 32, spec);
  const std::vector<ComplexImage> train_set(all.begin(), all.end() - 20);
  SrModel m;
  m.test.assign(all.end() - 20, all.end());
  m.op = std::make_shared<BoxDownsampleOperator>(32, 32);
  ProximalNet init = ProximalNet::build(ProximalConfig::desk_chain(), 1);
  UnrollConfig u;
  u.iterations = 10;
  u.alpha_init = 0.5f;
  TrainConfig t;
  t.learning_rate = kSrLearningRate;
  t.halving_period = kSrHalvingPeriod;
  t.epochs = 1000;
  t.max_steps = kSrSteps;
  t.seed = 1;
  const OperatorFactory ops = [&](std::size_t) { return m.op; };
  m.ck = train(train_set, ops, init, u, t).checkpoint;
  return m;
}

// 5. decomposition, bound, NRMSE trend and eta ordering on the SR chain.
void contraction(Outcome& o, const SrModel& m, const AnalysisResult& a, double train_secs) {
  const auto t0 = Clock::now();
  double worst_resid = 0.0, worst_slack = 0.0;
  int improved = 0;
  const std::size_t steps = a.samples.front().trace.size();
  for (std::size_t k = 0; k < a.samples.size(); ++k) {
    const auto& tr = a.samples[k].trace;
    // record t describes the step into x_t; its error and delta are those of x_t and x_{t-1}
    for (std::size_t t = 0; t < tr.size(); ++t) {
      const double next_err = tr[t].nrmse * norm(m.test[k]);
      const double delta = t == 0 ? norm(m.test[k]) : tr[t - 1].nrmse * norm(m.test[k]);
      worst_resid = std::max(worst_resid, tr[t].decomp_residual / (next_err + 1.0));
      if (delta > 0.0) worst_slack = std::min(worst_slack, tr[t].bound_slack / delta);
    }
    if (tr.back().nrmse < tr.front().nrmse) ++improved;
  }
  bool ordered = true;
  double worst_ratio = 1e300;
  for (std::size_t t = 1; t < steps; ++t) {
    std::vector<double> e1, e2;
    for (const auto& s : a.samples) {
      e1.push_back(s.trace[t].eta1);
      e2.push_back(s.trace[t].eta2);
    }
    const double m1 = median(e1), m2 = median(e2);
    if (m1 < m2) ordered = false;
    worst_ratio = std::min(worst_ratio, m2 > 0.0 ? m1 / m2 : 1e300);
  }
  const double frac = double(improved) / double(a.samples.size());
  const double secs = train_secs + seconds_since(t0);
  o.detail << "max residual/(err+1) " << worst_resid << ", min slack/||delta|| " << worst_slack
           << ", improved " << improved << "/" << a.samples.size() << ", min median eta1/eta2 " << worst_ratio
           << ", " << secs << " s";
  o.require(worst_resid <= 1e-4, "decomposition identity");
  o.require(worst_slack >= -1e-5, "bound slack");
  o.require(frac >= 0.9, "nrmse trend");
  o.require(ordered, "median eta1 >= eta2");
  o.require(secs <= 600.0, "runtime");
}

// 6. bit-identical traces and masks, byte-identical checkpoints, corruption.
void determinism(Outcome& o, const fs::path& dir) {
  PhantomSpec spec;
  const auto data = make_phantoms(8, 16, 16, spec);
  VarDensParams mp;
  mp.rate = 0.3;
  const SamplingMask m1 = generate_vardens_mask(16, 16, mp), m2 = generate_vardens_mask(16, 16, mp);
  const auto op = std::make_shared<MaskedFourierOperator>(m1);
  ProximalConfig net;
  net.feature_maps = 8;
  UnrollConfig u;
  u.iterations = 3;
  TrainConfig t;
  t.learning_rate = 1e-2;
  t.epochs = 3;
  t.seed = 7;
  const OperatorFactory ops = [&](std::size_t) { return op; };
  const TrainResult a = train(data, ops, ProximalNet::build(net, 3), u, t);
  const TrainResult b = train(data, ops, ProximalNet::build(net, 3), u, t);

  const fs::path p1 = dir / "a.npgd", p2 = dir / "b.npgd";
  save_checkpoint(a.checkpoint, p1);
  save_checkpoint(load_checkpoint(p1), p2);
  auto bytes = [](const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), {});
  };
  const std::string raw = bytes(p1);
  const bool round_trip = raw == bytes(p2) && raw == serialize_checkpoint(b.checkpoint);

  std::string bad = raw;
  bad[bad.size() / 2] = char(bad[bad.size() / 2] ^ 0x10);
  {
    std::ofstream f(dir / "bad.npgd", std::ios::binary);
    f << bad;
  }
  bool rejected = false;
  try {
    load_checkpoint(dir / "bad.npgd");
  } catch (const Error&) {
    rejected = true;
  }
  o.detail << a.trace.size() << " steps, traces " << (a.trace == b.trace ? "identical" : "differ") << ", masks "
           << (m1 == m2 ? "identical" : "differ") << ", round trip " << (round_trip ? "byte-identical" : "differs")
           << ", corrupted checkpoint " << (rejected ? "rejected" : "accepted");
  o.require(a.trace == b.trace && !a.trace.empty(), "loss traces");
  o.require(m1 == m2, "masks");
  o.require(round_trip, "checkpoint round trip");
  o.require(rejected, "corruption");
}

// 7. de-biasing on the trained chain.
void debiasing(Outcome& o, const AnalysisResult& a) {
  int converged = 0, flagged = 0, stuck = 0, worse = 0;
  for (const auto& s : a.samples) {
    if (s.debiased.converged) {
      ++converged;
      if (s.residual_debiased > s.residual_final * (1.0 + 1e-6)) ++worse;
    } else if (s.debiased.non_contractive) {
      ++flagged;
    } else {
      ++stuck;
    }
  }
  o.detail << "converged " << converged << ", flagged " << flagged << ", neither " << stuck
           << ", residual increased " << worse;
  o.require(stuck == 0, "converge or flag");
  o.require(worse == 0, "residual");
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path keep;
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (arg == "--keep" && i + 1 < argc) {
      keep = argv[++i];
    } else {
      std::cerr << "usage: npgd_acceptance [--only N[,N...]] [--keep DIR]\n";
      return 2;
    }
  }
  auto selected = [&](int n) { return only.empty() || only.count(n) > 0; };
  const fs::path dir = keep.empty() ? fs::temp_directory_path() / "npgd_acceptance" : keep;
  fs::create_directories(dir);

  bool all = true;
  auto report = [&](int n, const char* title, const std::function<void(Outcome&)>& body) {
    Outcome o;
    try {
      body(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    all = all && o.pass;
    std::printf("criterion %d %-28s %s  %s\n", n, title, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
  };

  if (selected(1)) report(1, "operator correctness", operators);
  if (selected(2)) report(2, "autograd", autograd);
  if (selected(3)) report(3, "baseline properties", baselines);
  if (selected(4)) report(4, "reconstruction trend", reconstruction_trend);

  SrModel sr;
  AnalysisResult analysis;
  double sr_secs = 0.0;
  std::string sr_failure;
  if (selected(5) || selected(7)) {
    try {
      const auto t0 = Clock::now();
      sr = train_sr();
      analysis = analyze_trajectory(sr.ck, *sr.op, sr.test);
      sr_secs = seconds_since(t0);
      if (!keep.empty()) save_checkpoint(sr.ck, dir / "sr_chain.npgd");
    } catch (const std::exception& e) {
      sr_failure = e.what();
    }
  }
  auto with_sr = [&](const std::function<void(Outcome&)>& body) {
    return [&, body](Outcome& o) {
      if (!sr_failure.empty()) throw Error("sr chain training: " + sr_failure);
      body(o);
    };
  };
  if (selected(5)) report(5, "contraction", with_sr([&](Outcome& o) { contraction(o, sr, analysis, sr_secs); }));
  if (selected(6)) report(6, "determinism and persistence", [&](Outcome& o) { determinism(o, dir); });
  if (selected(7)) report(7, "de-biasing", with_sr([&](Outcome& o) { debiasing(o, analysis); }));

  if (keep.empty()) fs::remove_all(dir);
  return all ? 0 : 1;
}
