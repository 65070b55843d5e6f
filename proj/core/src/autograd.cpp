#include "npgd/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "npgd/error.hpp"

namespace npgd::ag {

namespace {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_scalar(const Tensor& t, const char* what) {
  if (t.size() != 1) throw ContractError(std::string(what) + ": expected a scalar, got " + shape_string(t.shape()));
}

float sigmoidf(float z) { return 1.0f / (1.0f + std::exp(-z)); }

}  // namespace

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) grad = Tensor(value.shape());
  else grad.fill(0.0f);
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound variable");
  return tape_->value(*this);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) throw ContractError("variable does not belong to this tape");
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  return push(std::move(n));
}

Var Tape::parameter(Parameter& p) {
  Node n;
  n.value = p.value;
  if (grad_enabled_) {
    n.param = &p;
    n.requires_grad = true;
  }
  return push(std::move(n));
}

Var Tape::record(Tensor value, std::vector<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) {
    check_owned(p);
    needs = needs || nodes_[p.id_].requires_grad;
  }
  if (needs && grad_enabled_) {
    n.requires_grad = true;
    n.backward = std::move(fn);
  }
  return push(std::move(n));
}

void Tape::accumulate(Var v, const Tensor& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad = g;
  } else {
    float* dst = n.grad.raw();
    const float* src = g.raw();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
  }
}

void Tape::accumulate(Var v, Tensor&& g) {
  Node& n = nodes_[v.id_];
  if (!n.requires_grad) return;
  if (n.grad.empty()) n.grad = std::move(g);
  else accumulate(v, static_cast<const Tensor&>(g));
}

void Tape::backward(Var root) {
  check_owned(root);
  require_scalar(nodes_[root.id_].value, "backward");
  if (backward_done_) throw ContractError("backward already ran on this tape");
  backward_done_ = true;
  if (!nodes_[root.id_].requires_grad) return;

  nodes_[root.id_].grad = Tensor(nodes_[root.id_].value.shape(), 1.0f);
  for (std::size_t i = root.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      Parameter& p = *n.param;
      if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
      float* dst = p.grad.raw();
      for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const Node& n = nodes_[v.id_];
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

// --- conv2d ----------------------------------------------------------------

namespace {

struct ConvGeom {
  std::size_t cin, h, w, cout, k, oh, ow;
  int stride, pad;
};

void im2col(const float* in, const ConvGeom& g, float* cols) {
  const std::size_t npix = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        float* row = cols + ((c * g.k + ki) * g.k + kj) * npix;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = long(oy) * g.stride - g.pad + long(ki);
          float* dst = row + oy * g.ow;
          if (iy < 0 || iy >= long(g.h)) {
            std::fill(dst, dst + g.ow, 0.0f);
            continue;
          }
          const float* src = in + (c * g.h + std::size_t(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = long(ox) * g.stride - g.pad + long(kj);
            dst[ox] = (ix < 0 || ix >= long(g.w)) ? 0.0f : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const float* cols, const ConvGeom& g, float* out) {
  const std::size_t npix = g.oh * g.ow;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const float* row = cols + ((c * g.k + ki) * g.k + kj) * npix;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = long(oy) * g.stride - g.pad + long(ki);
          if (iy < 0 || iy >= long(g.h)) continue;
          float* dst = out + (c * g.h + std::size_t(iy)) * g.w;
          const float* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = long(ox) * g.stride - g.pad + long(kj);
            if (ix >= 0 && ix < long(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeom& g) { return g.k == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

Var conv2d(Var input, Var kernel, Var bias, int stride, int padding) {
  const Tensor& x = input.value();
  const Tensor& kt = kernel.value();
  const Tensor& b = bias.value();
  if (x.rank() != 3) throw ShapeError("conv2d: input must be C x H x W, got " + shape_string(x.shape()));
  if (kt.rank() != 4 || kt.dim(2) != kt.dim(3)) {
    throw ShapeError("conv2d: kernel must be Cout x Cin x k x k, got " + shape_string(kt.shape()));
  }
  if (kt.dim(1) != x.dim(0)) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kt.dim(1)) + " input channels, input has " +
                     std::to_string(x.dim(0)));
  }
  if (kt.dim(2) % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (b.rank() != 1 || b.dim(0) != kt.dim(0)) throw ShapeError("conv2d: bias must have Cout entries");
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");

  ConvGeom g{};
  g.cin = x.dim(0);
  g.h = x.dim(1);
  g.w = x.dim(2);
  g.cout = kt.dim(0);
  g.k = kt.dim(2);
  g.stride = stride;
  g.pad = padding;
  const long oh = (long(g.h) + 2 * padding - long(g.k)) / stride + 1;
  const long ow = (long(g.w) + 2 * padding - long(g.k)) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: kernel larger than padded input");
  g.oh = std::size_t(oh);
  g.ow = std::size_t(ow);
  const std::size_t npix = g.oh * g.ow;
  const std::size_t ckk = g.cin * g.k * g.k;

  Tensor out({g.cout, g.oh, g.ow});
  {
    std::vector<float> colbuf;
    const float* cols = x.raw();
    if (!is_pointwise(g)) {
      colbuf.resize(ckk * npix);
      im2col(x.raw(), g, colbuf.data());
      cols = colbuf.data();
    }
    MapMat o(out.raw(), g.cout, npix);
    o.noalias() = ConstMapMat(kt.raw(), g.cout, ckk) * ConstMapMat(cols, ckk, npix);
    for (std::size_t c = 0; c < g.cout; ++c) o.row(c).array() += b[c];
  }

  return input.tape()->record(std::move(out), {input, kernel, bias},
                              [input, kernel, bias, g, npix, ckk](Tape& tape, const Tensor& gout) {
    const Tensor& xv = tape.value(input);
    const Tensor& kv = tape.value(kernel);
    ConstMapMat go(gout.raw(), g.cout, npix);

    std::vector<float> colbuf;
    const float* cols = xv.raw();
    const bool pointwise = is_pointwise(g);
    if (!pointwise && tape.requires_grad(kernel)) {
      colbuf.resize(ckk * npix);
      im2col(xv.raw(), g, colbuf.data());
      cols = colbuf.data();
    }
    if (tape.requires_grad(kernel)) {
      Tensor gk(kv.shape());
      MapMat(gk.raw(), g.cout, ckk).noalias() = go * ConstMapMat(cols, ckk, npix).transpose();
      tape.accumulate(kernel, std::move(gk));
    }
    if (tape.requires_grad(bias)) {
      Tensor gb({g.cout});
      for (std::size_t c = 0; c < g.cout; ++c) {
        double s = 0.0;
        const float* row = gout.raw() + c * npix;
        for (std::size_t i = 0; i < npix; ++i) s += row[i];
        gb[c] = float(s);
      }
      tape.accumulate(bias, std::move(gb));
    }
    if (tape.requires_grad(input)) {
      Tensor gi(xv.shape());
      if (pointwise) {
        MapMat(gi.raw(), ckk, npix).noalias() = ConstMapMat(kv.raw(), g.cout, ckk).transpose() * go;
      } else {
        RowMat gcols = ConstMapMat(kv.raw(), g.cout, ckk).transpose() * go;
        col2im(gcols.data(), g, gi.raw());
      }
      tape.accumulate(input, std::move(gi));
    }
  });
}

// --- elementwise -------------------------------------------------------------

Var relu(Var x) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0f ? v[i] : 0.0f;
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& z = tape.value(x);
    Tensor gi(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) gi[i] = z[i] > 0.0f ? g[i] : 0.0f;
    tape.accumulate(x, std::move(gi));
  });
}

Var swish(Var x) {
  const Tensor& v = x.value();
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * sigmoidf(v[i]);
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& z = tape.value(x);
    Tensor gi(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const float s = sigmoidf(z[i]);
      gi[i] = g[i] * (s + z[i] * s * (1.0f - s));
    }
    tape.accumulate(x, std::move(gi));
  });
}

Var gate(Var x, const Tensor& mask) {
  const Tensor& v = x.value();
  require_same_shape(v, mask, "gate");
  Tensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * mask[i];
  return x.tape()->record(std::move(out), {x}, [x, mask](Tape& tape, const Tensor& g) {
    Tensor gi(mask.shape());
    for (std::size_t i = 0; i < mask.size(); ++i) gi[i] = g[i] * mask[i];
    tape.accumulate(x, std::move(gi));
  });
}

Var add(Var a, Var b) {
  Tensor out = a.value() + b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tensor out = a.value() - b.value();
  return a.tape()->record(std::move(out), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, -1.0f * g);
  });
}

Var scale(Var a, float s) {
  return a.tape()->record(s * a.value(), {a}, [a, s](Tape& tape, const Tensor& g) { tape.accumulate(a, s * g); });
}

Var scale_by(Var s, Var a) {
  require_scalar(s.value(), "scale_by");
  const float sv = s.value()[0];
  return a.tape()->record(sv * a.value(), {s, a}, [s, a](Tape& tape, const Tensor& g) {
    const float scalar = tape.value(s)[0];
    if (tape.requires_grad(s)) tape.accumulate(s, Tensor({1}, float(dot(g, tape.value(a)))));
    tape.accumulate(a, scalar * g);
  });
}

Var mse_loss(Var a, const Tensor& target) {
  require_same_shape(a.value(), target, "mse_loss");
  double s = 0.0;
  const Tensor& v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = double(v[i]) - target[i];
    s += d * d;
  }
  return a.tape()->record(Tensor({1}, float(s)), {a}, [a, target](Tape& tape, const Tensor& g) {
    const Tensor& v = tape.value(a);
    Tensor gi(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) gi[i] = 2.0f * g[0] * (v[i] - target[i]);
    tape.accumulate(a, std::move(gi));
  });
}

Var smooth_l1_loss(Var a, const Tensor& target) {
  constexpr double kEps = 1e-8;
  require_same_shape(a.value(), target, "smooth_l1_loss");
  double s = 0.0;
  const Tensor& v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = double(v[i]) - target[i];
    s += std::sqrt(d * d + kEps);
  }
  return a.tape()->record(Tensor({1}, float(s)), {a}, [a, target](Tape& tape, const Tensor& g) {
    const Tensor& v = tape.value(a);
    Tensor gi(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double d = double(v[i]) - target[i];
      gi[i] = float(g[0] * d / std::sqrt(d * d + kEps));
    }
    tape.accumulate(a, std::move(gi));
  });
}

Var sum_squares(Var a) {
  double s = 0.0;
  for (float v : a.value().data()) s += double(v) * v;
  return a.tape()->record(Tensor({1}, float(s)), {a}, [a](Tape& tape, const Tensor& g) {
    tape.accumulate(a, (2.0f * g[0]) * tape.value(a));
  });
}

// --- normalization -------------------------------------------------------

Var instance_norm(Var x, Var gamma, Var beta, float eps) {
  const Tensor& v = x.value();
  if (v.rank() != 3) throw ShapeError("instance_norm: input must be C x H x W");
  const std::size_t c = v.dim(0), n = v.dim(1) * v.dim(2);
  if (gamma.value().shape() != Shape{c} || beta.value().shape() != Shape{c}) {
    throw ShapeError("instance_norm: affine parameters must have C entries");
  }
  Tensor out(v.shape());
  Tensor xhat(v.shape());
  std::vector<float> inv_std(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const float* src = v.raw() + ch * n;
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += src[i];
    mean /= double(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (src[i] - mean) * (src[i] - mean);
    var /= double(n);
    inv_std[ch] = float(1.0 / std::sqrt(var + eps));
    const float gm = gamma.value()[ch], bt = beta.value()[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const float xh = float((src[i] - mean) * inv_std[ch]);
      xhat.raw()[ch * n + i] = xh;
      out.raw()[ch * n + i] = gm * xh + bt;
    }
  }
  return x.tape()->record(std::move(out), {x, gamma, beta},
                          [x, gamma, beta, xhat, inv_std, c, n](Tape& tape, const Tensor& g) {
    Tensor gg({c}), gb({c}), gx(xhat.shape());
    const Tensor& gm = tape.value(gamma);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const float* gy = g.raw() + ch * n;
      const float* xh = xhat.raw() + ch * n;
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum_g += gy[i];
        sum_gx += double(gy[i]) * xh[i];
      }
      gg[ch] = float(sum_gx);
      gb[ch] = float(sum_g);
      const double k = double(gm[ch]) * inv_std[ch] / double(n);
      for (std::size_t i = 0; i < n; ++i) {
        gx.raw()[ch * n + i] = float(k * (double(n) * gy[i] - sum_g - xh[i] * sum_gx));
      }
    }
    tape.accumulate(gamma, std::move(gg));
    tape.accumulate(beta, std::move(gb));
    tape.accumulate(x, std::move(gx));
  });
}

// --- structural ------------------------------------------------------------

Var pad_channels(Var x, std::size_t channels) {
  const Tensor& v = x.value();
  if (v.rank() != 3 || v.dim(0) > channels) throw ShapeError("pad_channels: cannot shrink channel count");
  Tensor out({channels, v.dim(1), v.dim(2)});
  std::copy(v.raw(), v.raw() + v.size(), out.raw());
  return x.tape()->record(std::move(out), {x}, [x](Tape& tape, const Tensor& g) {
    const Tensor& v = tape.value(x);
    Tensor gi(v.shape());
    std::copy(g.raw(), g.raw() + gi.size(), gi.raw());
    tape.accumulate(x, std::move(gi));
  });
}

Var linear_map(Var x, LinearFn forward, LinearFn adjoint) {
  Tensor out = forward(x.value());
  return x.tape()->record(std::move(out), {x},
                          [x, adjoint = std::move(adjoint)](Tape& tape, const Tensor& g) {
    tape.accumulate(x, adjoint(g));
  });
}

}  // namespace npgd::ag
