#include "npgd/operators.hpp"

#include "npgd/error.hpp"
#include "npgd/fft.hpp"
#include "npgd/rng.hpp"

namespace npgd {

namespace {

std::string dims(std::size_t h, std::size_t w) { return std::to_string(h) + "x" + std::to_string(w); }

}  // namespace

void LinearOperator::check_input(const ComplexImage& x, const char* what) const {
  const auto s = input_shape();
  if (x.height() != s.height || x.width() != s.width) {
    throw ShapeError(name() + "." + what + ": expected " + dims(s.height, s.width) + " input, got " +
                     dims(x.height(), x.width()));
  }
}

void LinearOperator::check_output(const ComplexImage& y, const char* what) const {
  const auto s = output_shape();
  if (y.height() != s.height || y.width() != s.width) {
    throw ShapeError(name() + "." + what + ": expected " + dims(s.height, s.width) + " measurement, got " +
                     dims(y.height(), y.width()));
  }
}

ComplexImage IdentityOperator::apply(const ComplexImage& x) const {
  check_input(x, "apply");
  return x;
}

ComplexImage IdentityOperator::adjoint(const ComplexImage& y) const {
  check_output(y, "adjoint");
  return y;
}

MaskedFourierOperator::MaskedFourierOperator(SamplingMask mask) : mask_(std::move(mask)) {
  if (!is_power_of_two(mask_.height()) || !is_power_of_two(mask_.width())) {
    throw DimensionError("masked Fourier operator needs power-of-two mask dimensions");
  }
}

void MaskedFourierOperator::apply_mask(ComplexImage& k) const {
  for (std::size_t i = 0; i < k.height(); ++i) {
    for (std::size_t j = 0; j < k.width(); ++j) {
      if (!mask_.sampled(i, j)) {
        k.re(i, j) = 0.0f;
        k.im(i, j) = 0.0f;
      }
    }
  }
}

ComplexImage MaskedFourierOperator::apply(const ComplexImage& x) const {
  check_input(x, "apply");
  ComplexImage k = fft2(x);
  apply_mask(k);
  return k;
}

ComplexImage MaskedFourierOperator::adjoint(const ComplexImage& y) const {
  check_output(y, "adjoint");
  ComplexImage k = y;
  apply_mask(k);
  return ifft2(k);
}

BoxDownsampleOperator::BoxDownsampleOperator(std::size_t height, std::size_t width)
    : height_(height), width_(width) {
  if (height % 2 || width % 2 || height == 0 || width == 0) {
    throw DimensionError("box downsampling needs even dimensions, got " + dims(height, width));
  }
}

ComplexImage BoxDownsampleOperator::apply(const ComplexImage& x) const {
  check_input(x, "apply");
  ComplexImage y(height_ / 2, width_ / 2);
  const Tensor& in = x.planes();
  Tensor& out = y.planes();
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < height_ / 2; ++i) {
      for (std::size_t j = 0; j < width_ / 2; ++j) {
        out.at(c, i, j) = 0.25f * (in.at(c, 2 * i, 2 * j) + in.at(c, 2 * i, 2 * j + 1) +
                                   in.at(c, 2 * i + 1, 2 * j) + in.at(c, 2 * i + 1, 2 * j + 1));
      }
    }
  }
  return y;
}

ComplexImage BoxDownsampleOperator::adjoint(const ComplexImage& y) const {
  check_output(y, "adjoint");
  ComplexImage x(height_, width_);
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t i = 0; i < height_; ++i) {
      for (std::size_t j = 0; j < width_; ++j) x.planes().at(c, i, j) = 0.25f * y.planes().at(c, i / 2, j / 2);
    }
  }
  return x;
}

ComplexImage gradient_step(const ComplexImage& x, const ComplexImage& y, float alpha, const LinearOperator& op) {
  const ComplexImage r = y - op.apply(x);
  return axpy(alpha, op.adjoint(r), x);
}

ComplexImage data_consistency_map(const ComplexImage& d, float alpha, const LinearOperator& op) {
  return axpy(-alpha, op.adjoint(op.apply(d)), d);
}

ag::Var apply_operator(ag::Var x, const LinearOperator& op) {
  return ag::linear_map(
      x, [&op](const Tensor& t) { return op.apply(ComplexImage(t)).planes(); },
      [&op](const Tensor& t) { return op.adjoint(ComplexImage(t)).planes(); });
}

ag::Var gradient_step(ag::Var x, const ComplexImage& y, ag::Var alpha, const LinearOperator& op) {
  ag::Tape& tape = *x.tape();
  const ag::Var residual = ag::sub(tape.constant(y.planes()), apply_operator(x, op));
  const ag::Var back = ag::linear_map(
      residual, [&op](const Tensor& t) { return op.adjoint(ComplexImage(t)).planes(); },
      [&op](const Tensor& t) { return op.apply(ComplexImage(t)).planes(); });
  return ag::add(x, ag::scale_by(alpha, back));
}

double operator_norm_squared(const LinearOperator& op, int iterations, std::uint64_t seed) {
  const auto s = op.input_shape();
  ComplexImage v(s.height, s.width);
  Xorshift64Star rng(seed);
  for (auto& e : v.planes().data()) e = float(rng.normal());
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const double n = norm(v);
    if (n == 0.0) return 0.0;
    v = float(1.0 / n) * v;
    ComplexImage w = op.adjoint(op.apply(v));
    lambda = dot(v, w);
    v = std::move(w);
  }
  return lambda;
}

}  // namespace npgd
