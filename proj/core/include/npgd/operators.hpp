#pragma once

#include <cstddef>
#include <memory>
#include <string>

#include "npgd/autograd.hpp"
#include "npgd/sampling.hpp"
#include "npgd/tensor.hpp"

namespace npgd {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// Measurement map Phi acting on complex images, together with its adjoint
// under the real inner product on stacked (re, im).
class LinearOperator {
 public:
  virtual ~LinearOperator() = default;

  virtual ImageShape input_shape() const = 0;
  virtual ImageShape output_shape() const = 0;
  virtual ComplexImage apply(const ComplexImage& x) const = 0;
  virtual ComplexImage adjoint(const ComplexImage& y) const = 0;
  virtual std::string name() const = 0;

 protected:
  void check_input(const ComplexImage& x, const char* what) const;
  void check_output(const ComplexImage& y, const char* what) const;
};

class IdentityOperator final : public LinearOperator {
 public:
  IdentityOperator(std::size_t height, std::size_t width) : shape_{height, width} {}

  ImageShape input_shape() const override { return shape_; }
  ImageShape output_shape() const override { return shape_; }
  ComplexImage apply(const ComplexImage& x) const override;
  ComplexImage adjoint(const ComplexImage& y) const override;
  std::string name() const override { return "identity"; }

 private:
  ImageShape shape_;
};

// Phi = mask (.) F with unitary F; Phi^H = F^-1 (.) mask (zero filling).
class MaskedFourierOperator final : public LinearOperator {
 public:
  explicit MaskedFourierOperator(SamplingMask mask);

  const SamplingMask& mask() const { return mask_; }
  ImageShape input_shape() const override { return {mask_.height(), mask_.width()}; }
  ImageShape output_shape() const override { return input_shape(); }
  ComplexImage apply(const ComplexImage& x) const override;
  ComplexImage adjoint(const ComplexImage& y) const override;
  std::string name() const override { return "masked_fourier"; }

 private:
  void apply_mask(ComplexImage& k) const;

  SamplingMask mask_;
};

// Non-overlapping 2x2 block means, H x W -> H/2 x W/2.
class BoxDownsampleOperator final : public LinearOperator {
 public:
  BoxDownsampleOperator(std::size_t height, std::size_t width);

  ImageShape input_shape() const override { return {height_, width_}; }
  ImageShape output_shape() const override { return {height_ / 2, width_ / 2}; }
  ComplexImage apply(const ComplexImage& x) const override;
  ComplexImage adjoint(const ComplexImage& y) const override;
  std::string name() const override { return "box_downsample"; }

 private:
  std::size_t height_;
  std::size_t width_;
};

// g(x; y) = x + alpha * Phi^H (y - Phi x).
ComplexImage gradient_step(const ComplexImage& x, const ComplexImage& y, float alpha, const LinearOperator& op);

// (I - alpha Phi^H Phi) d.
ComplexImage data_consistency_map(const ComplexImage& d, float alpha, const LinearOperator& op);

// Differentiable versions; `x` carries 2 x H x W planes.
ag::Var apply_operator(ag::Var x, const LinearOperator& op);
ag::Var gradient_step(ag::Var x, const ComplexImage& y, ag::Var alpha, const LinearOperator& op);

// Largest eigenvalue of Phi^H Phi by power iteration.
double operator_norm_squared(const LinearOperator& op, int iterations = 50, std::uint64_t seed = 7);

}  // namespace npgd
