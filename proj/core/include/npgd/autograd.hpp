#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "npgd/tensor.hpp"

namespace npgd::ag {

// Trainable tensor living outside any tape. Tapes bind to it through
// Tape::parameter() and accumulate into `grad` on backward. The caller
// zeroes gradients between optimizer steps.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad();
};

class Tape;

// Handle to a node of a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records primitive operations in execution order (which is a topological
// order) and replays their vector-Jacobian products in reverse.
class Tape {
 public:
  // Accumulates the incoming gradient of one node into its parents.
  using BackwardFn = std::function<void(Tape& tape, const Tensor& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that never receives a gradient.
  Var constant(Tensor value);
  // Leaf whose gradient is retained and readable through grad().
  Var input(Tensor value);
  // Leaf bound to a parameter; backward adds into p.grad. With gradients
  // disabled this degenerates to a constant.
  Var parameter(Parameter& p);

  // Reverse pass from a scalar root. May be called once per tape.
  void backward(Var root);

  // Gradient of a node after backward(); zeros if nothing flowed into it.
  Tensor grad(Var v) const;

  bool grad_enabled() const { return grad_enabled_; }
  bool requires_grad(Var v) const { return nodes_.at(v.id_).requires_grad; }
  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_.at(v.id_).value; }

  // For primitive implementations. `parents` only need gradients when
  // requires_grad(parent) is true; `fn` is dropped when no parent needs one.
  Var record(Tensor value, std::vector<Var> parents, BackwardFn fn);
  void accumulate(Var v, const Tensor& g);
  void accumulate(Var v, Tensor&& g);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  Var push(Node node);
  void check_owned(Var v) const;

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool backward_done_ = false;
};

// --- primitives ------------------------------------------------------------

// Cross-correlation of a C_in x H x W input with a C_out x C_in x k x k
// kernel plus per-channel bias. k must be odd.
Var conv2d(Var input, Var kernel, Var bias, int stride, int padding);

Var relu(Var x);
Var swish(Var x);
// Elementwise product with a fixed tensor (a frozen activation gate).
Var gate(Var x, const Tensor& mask);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, float s);
// s * a for a trainable scalar s of shape [1].
Var scale_by(Var s, Var a);

// Sum of squared differences (no averaging).
Var mse_loss(Var a, const Tensor& target);
// Sum of sqrt((a - b)^2 + 1e-8).
Var smooth_l1_loss(Var a, const Tensor& target);
Var sum_squares(Var a);

// Per-channel normalization of a C x H x W tensor with affine gamma/beta [C].
Var instance_norm(Var x, Var gamma, Var beta, float eps = 1e-5f);

// Zero-extends a C x H x W tensor to `channels` channels.
Var pad_channels(Var x, std::size_t channels);

// Applies a linear map given together with its adjoint.
using LinearFn = std::function<Tensor(const Tensor&)>;
Var linear_map(Var x, LinearFn forward, LinearFn adjoint);

}  // namespace npgd::ag
