#include <benchmark/benchmark.h>

#include "npgd/autograd.hpp"
#include "npgd/baselines.hpp"
#include "npgd/fft.hpp"
#include "npgd/operators.hpp"
#include "npgd/proximal.hpp"
#include "npgd/rng.hpp"
#include "npgd/sampling.hpp"
#include "npgd/unroll.hpp"

using namespace npgd;

namespace {

ComplexImage noise_image(std::size_t n, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  ComplexImage x(n, n);
  for (auto& v : x.planes().data()) v = float(rng.normal());
  return x;
}

Tensor noise(Shape s, std::uint64_t seed) {
  Xorshift64Star rng(seed);
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = float(rng.normal());
  return t;
}

ProximalNet desk_net() {
  ProximalConfig c;
  c.feature_maps = 32;
  return ProximalNet::build(c, 1);
}

}  // namespace

static void BM_Fft2(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  const ComplexImage x = noise_image(n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fft2(x));
}
BENCHMARK(BM_Fft2)->Arg(32)->Arg(64)->Arg(128);

static void BM_Conv3x3(benchmark::State& state) {
  const auto f = std::size_t(state.range(0));
  const Tensor x = noise({f, 64, 64}, 2), k = noise({f, f, 3, 3}, 3), b = noise({f}, 4);
  for (auto _ : state) {
    ag::Tape tape(false);
    benchmark::DoNotOptimize(ag::conv2d(tape.constant(x), tape.constant(k), tape.constant(b), 1, 1).value());
  }
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32);

static void BM_Conv3x3Backward(benchmark::State& state) {
  const auto f = std::size_t(state.range(0));
  const Tensor x = noise({f, 64, 64}, 2);
  ag::Parameter k("k", noise({f, f, 3, 3}, 3)), b("b", noise({f}, 4));
  for (auto _ : state) {
    k.zero_grad();
    b.zero_grad();
    ag::Tape tape;
    tape.backward(ag::sum_squares(ag::conv2d(tape.input(x), tape.parameter(k), tape.parameter(b), 1, 1)));
  }
}
BENCHMARK(BM_Conv3x3Backward)->Arg(16)->Arg(32);

static void BM_UnrolledInference(benchmark::State& state) {
  const ProximalNet net = desk_net();
  VarDensParams p;
  const MaskedFourierOperator op(generate_vardens_mask(64, 64, p));
  const ComplexImage y = op.apply(noise_image(64, 5));
  const int t = int(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(unrolled_forward(net, op, y, 1.0f, t).final());
}
BENCHMARK(BM_UnrolledInference)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

static void BM_TrainingStep(benchmark::State& state) {
  ProximalNet net = desk_net();
  VarDensParams p;
  const MaskedFourierOperator op(generate_vardens_mask(64, 64, p));
  const ComplexImage truth = noise_image(64, 6), y = op.apply(truth);
  ag::Parameter alpha("alpha", Tensor({1}, 1.0f));
  for (auto _ : state) {
    net.zero_grad();
    alpha.zero_grad();
    ag::Tape tape;
    const TapeTrajectory tr = unrolled_forward(net, op, y, tape.parameter(alpha), 10);
    tape.backward(loss_p1(tr, truth, y, op, 0.75).total);
  }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

static void BM_Fista300(benchmark::State& state) {
  VarDensParams p;
  const MaskedFourierOperator op(generate_vardens_mask(64, 64, p));
  const ComplexImage y = op.apply(noise_image(64, 7));
  CsConfig cfg;
  cfg.lambda = 1e-3;
  for (auto _ : state) benchmark::DoNotOptimize(fista(y, op, cfg).image);
}
BENCHMARK(BM_Fista300)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
