#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "npgd/autograd.hpp"
#include "npgd/operators.hpp"
#include "npgd/proximal.hpp"
#include "npgd/tensor.hpp"

namespace npgd {

enum class LossKind { l2, l1 };
std::string to_string(LossKind k);
LossKind parse_loss(std::string_view s);

inline constexpr float kAlphaFloor = 1e-4f;

struct UnrollConfig {
  int iterations = 10;
  float alpha_init = 1.0f;
  double beta = 0.75;
  LossKind loss = LossKind::l2;

  void validate() const;
};

// States s_1..s_T and proximal outputs x_1..x_T of the recursion
// s_{t+1} = g(x_t; y), x_{t+1} = P(s_{t+1}) from x_0 = 0.
struct Trajectory {
  std::vector<ComplexImage> states;
  std::vector<ComplexImage> outputs;

  const ComplexImage& final() const { return outputs.back(); }
  std::size_t size() const { return outputs.size(); }
};

struct TapeTrajectory {
  std::vector<ag::Var> states;
  std::vector<ag::Var> outputs;
};

Trajectory unrolled_forward(const ProximalNet& net, const LinearOperator& op, const ComplexImage& y, float alpha,
                            int iterations);

// Differentiable trajectory with weights shared across iterations.
TapeTrajectory unrolled_forward(ProximalNet& net, const LinearOperator& op, const ComplexImage& y, ag::Var alpha,
                                int iterations);

struct LossTerms {
  ag::Var total;
  double terminal = 0.0;
  double consistency = 0.0;
};

// beta * loss(x_true, x_T) + (1 - beta) * sum_t ||y - Phi x_t||^2.
LossTerms loss_p1(const TapeTrajectory& traj, const ComplexImage& x_true, const ComplexImage& y,
                  const LinearOperator& op, double beta, LossKind loss = LossKind::l2);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t halving_period = 10000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_size = 2;
  std::size_t epochs = 1;
  // Stop after this many optimizer steps when non-zero.
  std::size_t max_steps = 0;
  std::uint64_t seed = 1;
  // Additive white Gaussian noise on the simulated measurements.
  double noise_sigma = 0.0;
  // Write a checkpoint every N steps (0 = never) to checkpoint_path.
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_path;

  void validate() const;
  // lr(step) = lr0 * 0.5^floor(step / period)
  double lr_at(std::size_t step) const;

  static TrainConfig paper_preset();
};

struct LossRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_total = 0.0;
  double loss_terminal = 0.0;
  double loss_consistency = 0.0;
  double alpha = 0.0;
  double grad_norm = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& trace);

// Returns the operator for a training sample; may return the same instance
// for every index (shared acquisition protocol).
using OperatorFactory = std::function<std::shared_ptr<const LinearOperator>(std::size_t sample)>;

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<LossRecord> trace;
};

// Mini-batch Adam on the unrolled objective. Throws NumericError on a
// non-finite loss.
TrainResult train(const std::vector<ComplexImage>& dataset, const OperatorFactory& ops, const ProximalNet& init,
                  const UnrollConfig& unroll, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step = {});

// Unroll settings stored in checkpoint metadata.
void store_unroll(Checkpoint& ck, const UnrollConfig& u);
UnrollConfig load_unroll(const Checkpoint& ck);

struct Reconstruction {
  ComplexImage image;
  // ||y - Phi x_t|| for t = 1..T.
  std::vector<double> residuals;
  Trajectory trajectory;
};

Reconstruction reconstruct(const Checkpoint& ckpt, const ComplexImage& y, const LinearOperator& op);

}  // namespace npgd
