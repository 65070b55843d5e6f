#include "npgd/unroll.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "npgd/error.hpp"
#include "npgd/rng.hpp"

namespace npgd {

std::string to_string(LossKind k) { return k == LossKind::l2 ? "l2" : "l1"; }

LossKind parse_loss(std::string_view s) {
  if (s == "l2") return LossKind::l2;
  if (s == "l1") return LossKind::l1;
  throw ConfigError("loss: unknown value '" + std::string(s) + "' (l2|l1)");
}

void UnrollConfig::validate() const {
  if (iterations < 1) throw ConfigError("iterations: T must be >= 1");
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta: must lie in [0, 1]");
  if (!(alpha_init > 0.0f)) throw ConfigError("alpha_init: must be positive");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("lr: must be positive");
  if (halving_period == 0) throw ConfigError("lr_period: must be positive");
  if (!(adam_beta1 > 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1: must lie in (0, 1)");
  if (!(adam_beta2 > 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2: must lie in (0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps: must be positive");
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  if (epochs == 0) throw ConfigError("epochs: must be positive");
  if (noise_sigma < 0.0) throw ConfigError("noise_sigma: must be non-negative");
}

double TrainConfig::lr_at(std::size_t step) const {
  return learning_rate * std::pow(0.5, double(step / halving_period));
}

TrainConfig TrainConfig::paper_preset() {
  TrainConfig c;
  c.learning_rate = 1e-5;
  c.halving_period = 10000;
  c.batch_size = 2;
  return c;
}

Trajectory unrolled_forward(const ProximalNet& net, const LinearOperator& op, const ComplexImage& y, float alpha,
                            int iterations) {
  if (iterations < 1) throw ContractError("unrolled_forward: T must be >= 1");
  const auto s = op.input_shape();
  Trajectory traj;
  ComplexImage x(s.height, s.width);
  for (int t = 0; t < iterations; ++t) {
    traj.states.push_back(gradient_step(x, y, alpha, op));
    x = net.forward(traj.states.back());
    traj.outputs.push_back(x);
  }
  return traj;
}

TapeTrajectory unrolled_forward(ProximalNet& net, const LinearOperator& op, const ComplexImage& y, ag::Var alpha,
                                int iterations) {
  if (iterations < 1) throw ContractError("unrolled_forward: T must be >= 1");
  ag::Tape& tape = *alpha.tape();
  const auto s = op.input_shape();
  TapeTrajectory traj;
  ag::Var x = tape.constant(ComplexImage(s.height, s.width).planes());
  for (int t = 0; t < iterations; ++t) {
    traj.states.push_back(gradient_step(x, y, alpha, op));
    x = net.forward(traj.states.back());
    traj.outputs.push_back(x);
  }
  return traj;
}

LossTerms loss_p1(const TapeTrajectory& traj, const ComplexImage& x_true, const ComplexImage& y,
                  const LinearOperator& op, double beta, LossKind loss) {
  if (traj.outputs.empty()) throw ContractError("loss_p1: empty trajectory");
  const ag::Var xt = traj.outputs.back();
  const ag::Var terminal = loss == LossKind::l2 ? ag::mse_loss(xt, x_true.planes())
                                                : ag::smooth_l1_loss(xt, x_true.planes());
  ag::Var consistency = ag::mse_loss(apply_operator(traj.outputs[0], op), y.planes());
  for (std::size_t t = 1; t < traj.outputs.size(); ++t) {
    consistency = ag::add(consistency, ag::mse_loss(apply_operator(traj.outputs[t], op), y.planes()));
  }
  LossTerms out;
  out.terminal = terminal.value()[0];
  out.consistency = consistency.value()[0];
  out.total = ag::add(ag::scale(terminal, float(beta)), ag::scale(consistency, float(1.0 - beta)));
  return out;
}

void write_loss_csv(std::ostream& os, const std::vector<LossRecord>& trace) {
  os << "step,epoch,lr,loss_total,loss_terminal,loss_consistency,alpha,grad_norm\n";
  os << std::setprecision(9);
  for (const auto& r : trace) {
    os << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss_total << ',' << r.loss_terminal << ','
       << r.loss_consistency << ',' << r.alpha << ',' << r.grad_norm << '\n';
  }
}

void store_unroll(Checkpoint& ck, const UnrollConfig& u) {
  ck.meta["unroll.iterations"] = std::to_string(u.iterations);
  std::ostringstream b;
  b << std::setprecision(17) << u.beta;
  ck.meta["unroll.beta"] = b.str();
  ck.meta["unroll.loss"] = to_string(u.loss);
}

UnrollConfig load_unroll(const Checkpoint& ck) {
  UnrollConfig u;
  u.alpha_init = ck.alpha;
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = ck.meta.find(k);
    if (it == ck.meta.end()) throw FormatError("checkpoint lacks " + k);
    return it->second;
  };
  u.iterations = std::stoi(get("unroll.iterations"));
  u.beta = std::stod(get("unroll.beta"));
  u.loss = parse_loss(get("unroll.loss"));
  return u;
}

namespace {

class Adam {
 public:
  Adam(const TrainConfig& cfg, std::vector<ag::Parameter*> params) : cfg_(cfg), params_(std::move(params)) {
    for (auto* p : params_) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }

  void step(double lr) {
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = *params_[k];
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i];
        m_[k][i] = float(b1 * m_[k][i] + (1.0 - b1) * g);
        v_[k][i] = float(b2 * v_[k][i] + (1.0 - b2) * g * g);
        const double mh = m_[k][i] / c1, vh = v_[k][i] / c2;
        p.value[i] = float(p.value[i] - lr * mh / (std::sqrt(vh) + cfg_.adam_eps));
      }
    }
  }

  AdamState state() const { return {t_, m_, v_}; }

 private:
  const TrainConfig& cfg_;
  std::vector<ag::Parameter*> params_;
  std::vector<Tensor> m_, v_;
  std::uint64_t t_ = 0;
};

}  // namespace

TrainResult train(const std::vector<ComplexImage>& dataset, const OperatorFactory& ops, const ProximalNet& init,
                  const UnrollConfig& unroll, const TrainConfig& cfg,
                  const std::function<void(const LossRecord&)>& on_step) {
  unroll.validate();
  cfg.validate();
  if (dataset.empty()) throw ContractError("train: empty dataset");

  std::vector<std::shared_ptr<const LinearOperator>> sample_ops;
  std::vector<ComplexImage> measurements;
  Xorshift64Star noise(cfg.seed ^ 0x6E6F697365ULL);
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    sample_ops.push_back(ops(i));
    ComplexImage y = sample_ops.back()->apply(dataset[i]);
    if (cfg.noise_sigma > 0.0) {
      for (auto& v : y.planes().data()) v += float(cfg.noise_sigma * noise.normal());
    }
    measurements.push_back(std::move(y));
  }

  ProximalNet net = init;
  ag::Parameter alpha("alpha", Tensor({1}, unroll.alpha_init));
  std::vector<ag::Parameter*> params;
  for (auto& p : net.parameters()) params.push_back(&p);
  params.push_back(&alpha);
  Adam adam(cfg, params);

  auto snapshot = [&](std::size_t epoch) {
    Checkpoint ck;
    ck.net = net;
    ck.alpha = alpha.value[0];
    store_unroll(ck, unroll);
    ck.meta["train.seed"] = std::to_string(cfg.seed);
    ck.meta["train.epoch"] = std::to_string(epoch);
    ck.optimizer = adam.state();
    return ck;
  };

  TrainResult result;
  Xorshift64Star order_rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  std::size_t step = 0;
  bool stop = false;
  for (std::size_t epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      for (auto* p : params) p->zero_grad();
      LossRecord rec;
      rec.step = step;
      rec.epoch = epoch;
      rec.lr = cfg.lr_at(step);
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t b = start; b < end; ++b) {
        const std::size_t idx = order[b];
        const LinearOperator& op = *sample_ops[idx];
        ag::Tape tape;
        const ag::Var a = tape.parameter(alpha);
        const TapeTrajectory traj = unrolled_forward(net, op, measurements[idx], a, unroll.iterations);
        const LossTerms loss = loss_p1(traj, dataset[idx], measurements[idx], op, unroll.beta, unroll.loss);
        rec.loss_total += loss.total.value()[0];
        rec.loss_terminal += loss.terminal;
        rec.loss_consistency += loss.consistency;
        tape.backward(loss.total);
      }
      double g2 = 0.0;
      for (auto* p : params) g2 += dot(p->grad, p->grad);
      rec.grad_norm = std::sqrt(g2);
      if (!std::isfinite(rec.loss_total) || !std::isfinite(rec.grad_norm)) {
        std::ostringstream msg;
        msg << "non-finite training loss at step " << step << " (lr " << rec.lr << ", grad-norm " << rec.grad_norm
            << ")";
        throw NumericError(msg.str());
      }
      adam.step(rec.lr);
      alpha.value[0] = std::max(alpha.value[0], kAlphaFloor);
      rec.alpha = alpha.value[0];
      result.trace.push_back(rec);
      if (on_step) on_step(rec);
      ++step;
      if (cfg.checkpoint_every > 0 && step % cfg.checkpoint_every == 0 && !cfg.checkpoint_path.empty()) {
        save_checkpoint(snapshot(epoch), cfg.checkpoint_path);
      }
      if (cfg.max_steps > 0 && step >= cfg.max_steps) stop = true;
    }
  }
  const std::size_t last_epoch = result.trace.empty() ? 0 : result.trace.back().epoch;
  result.checkpoint = snapshot(last_epoch);
  return result;
}

Reconstruction reconstruct(const Checkpoint& ckpt, const ComplexImage& y, const LinearOperator& op) {
  const UnrollConfig u = load_unroll(ckpt);
  if (y.height() != op.output_shape().height || y.width() != op.output_shape().width) {
    throw ShapeError("reconstruct: measurement shape does not match the operator");
  }
  Reconstruction r;
  r.trajectory = unrolled_forward(ckpt.net, op, y, ckpt.alpha, u.iterations);
  for (const auto& x : r.trajectory.outputs) r.residuals.push_back(norm(y - op.apply(x)));
  r.image = r.trajectory.final();
  return r;
}

}  // namespace npgd
