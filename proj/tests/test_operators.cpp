#include <gtest/gtest.h>

#include "npgd/error.hpp"
#include "npgd/fft.hpp"
#include "npgd/operators.hpp"
#include "test_util.hpp"

using namespace npgd;
using namespace npgd::testing;

namespace {

// <Phi x, y> vs <x, Phi^H y>, relative to ||Phi x|| ||y||.
double adjoint_mismatch(const LinearOperator& op, Xorshift64Star& rng) {
  const auto in = op.input_shape(), out = op.output_shape();
  const ComplexImage x = random_image(rng, in.height, in.width);
  const ComplexImage y = random_image(rng, out.height, out.width);
  const ComplexImage px = op.apply(x);
  return std::abs(dot(px, y) - dot(x, op.adjoint(y))) / (norm(px) * norm(y) + 1e-30);
}

}  // namespace

TEST(Operators, MaskedFourierAdjointIdentity) {
  Xorshift64Star rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const MaskedFourierOperator op(random_mask(rng, 16, 8, 0.3));
    EXPECT_LT(adjoint_mismatch(op, rng), 1e-5);
  }
}

TEST(Operators, BoxDownsampleAdjointIdentity) {
  Xorshift64Star rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const BoxDownsampleOperator op(2 * (1 + rng.below(8)), 2 * (1 + rng.below(8)));
    EXPECT_LT(adjoint_mismatch(op, rng), 1e-5);
  }
}

TEST(Operators, FullMaskIsUnitaryFft) {
  Xorshift64Star rng(23);
  const MaskedFourierOperator op(SamplingMask(8, 8, true));
  const ComplexImage x = random_image(rng, 8, 8);
  EXPECT_EQ(op.apply(x), fft2(x));
  EXPECT_LT(max_abs_diff(op.adjoint(op.apply(x)), x), 1e-5);
}

TEST(Operators, EmptyMaskAnnihilates) {
  Xorshift64Star rng(24);
  const MaskedFourierOperator op(SamplingMask(8, 8, false));
  EXPECT_EQ(norm(op.apply(random_image(rng, 8, 8))), 0.0);
}

TEST(Operators, BoxMeansAndReplicates) {
  ComplexImage x(2, 4);
  float v = 1.0f;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 4; ++j) x.re(i, j) = v++;
  const BoxDownsampleOperator op(2, 4);
  const ComplexImage y = op.apply(x);
  EXPECT_FLOAT_EQ(y.re(0, 0), (1 + 2 + 5 + 6) / 4.0f);
  EXPECT_FLOAT_EQ(y.re(0, 1), (3 + 4 + 7 + 8) / 4.0f);
  const ComplexImage back = op.adjoint(y);
  EXPECT_FLOAT_EQ(back.re(1, 1), y.re(0, 0) / 4.0f);
  EXPECT_THROW(BoxDownsampleOperator(3, 4), DimensionError);
}

TEST(Operators, ShapeMismatchIsShapeError) {
  const BoxDownsampleOperator op(8, 8);
  EXPECT_THROW(op.apply(ComplexImage(4, 4)), ShapeError);
  EXPECT_THROW(op.adjoint(ComplexImage(8, 8)), ShapeError);
  const MaskedFourierOperator f(SamplingMask(8, 8, true));
  EXPECT_THROW(f.apply(ComplexImage(8, 16)), ShapeError);
}

TEST(Operators, OperatorNorms) {
  Xorshift64Star rng(25);
  EXPECT_NEAR(operator_norm_squared(MaskedFourierOperator(SamplingMask(16, 16, true))), 1.0, 1e-4);
  EXPECT_NEAR(operator_norm_squared(MaskedFourierOperator(random_mask(rng, 16, 16, 0.3))), 1.0, 1e-4);
  // 2x2 mean: Phi Phi^H = I / 4
  EXPECT_NEAR(operator_norm_squared(BoxDownsampleOperator(16, 16)), 0.25, 1e-4);
}

TEST(Operators, GradientStepFormula) {
  Xorshift64Star rng(26);
  const MaskedFourierOperator op(random_mask(rng, 8, 8, 0.5));
  const ComplexImage x = random_image(rng, 8, 8), y = random_image(rng, 8, 8);
  const ComplexImage want = x + 0.7f * op.adjoint(y - op.apply(x));
  EXPECT_LT(max_abs_diff(gradient_step(x, y, 0.7f, op), want), 1e-6);
  // from x = 0: s_1 = alpha Phi^H y
  EXPECT_LT(max_abs_diff(gradient_step(ComplexImage(8, 8), y, 0.7f, op), 0.7f * op.adjoint(y)), 1e-6);
  // full sampling, alpha = 1: one step lands on Phi^H y = F^-1 y
  const MaskedFourierOperator full(SamplingMask(8, 8, true));
  EXPECT_LT(max_abs_diff(gradient_step(x, y, 1.0f, full), ifft2(y)), 1e-5);
}

TEST(Operators, DifferentiableVersionsMatch) {
  Xorshift64Star rng(27);
  const MaskedFourierOperator op(random_mask(rng, 8, 8, 0.5));
  const ComplexImage x = random_image(rng, 8, 8), y = random_image(rng, 8, 8);
  ag::Tape tape;
  ag::Parameter alpha("alpha", Tensor({1}, 0.6f));
  alpha.zero_grad();
  const ag::Var xv = tape.input(x.planes());
  const ag::Var s = gradient_step(xv, y, tape.parameter(alpha), op);
  EXPECT_LT(max_abs_diff(ComplexImage(s.value()), gradient_step(x, y, 0.6f, op)), 1e-6);
  tape.backward(ag::sum_squares(s));
  // d/dalpha ||x + alpha r||^2 = 2 <x + alpha r, r>, r = Phi^H (y - Phi x)
  const ComplexImage r = op.adjoint(y - op.apply(x));
  EXPECT_NEAR(alpha.grad[0], 2.0 * dot(gradient_step(x, y, 0.6f, op), r), 1e-3 * std::abs(alpha.grad[0]));
}
