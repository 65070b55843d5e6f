#pragma once

#include <complex>
#include <cstddef>
#include <span>

#include "npgd/tensor.hpp"

namespace npgd {

bool is_power_of_two(std::size_t n);

// In-place radix-2 transform of a power-of-two length sequence, no scaling.
// sign = -1 forward, +1 inverse.
void fft1d(std::span<std::complex<double>> data, int sign);

// Unitary 2D DFT (scale 1/sqrt(HW)). Both dimensions must be powers of two.
ComplexImage fft2(const ComplexImage& img);
ComplexImage ifft2(const ComplexImage& img);

}  // namespace npgd
