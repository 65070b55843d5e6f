#include "npgd/fft.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "npgd/error.hpp"

namespace npgd {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft1d(std::span<std::complex<double>> a, int sign) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw DimensionError("fft length " + std::to_string(n) + " is not a power of two");

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }

  std::vector<std::complex<double>> twiddle(n / 2);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / double(len);
    const std::size_t half = len / 2;
    // direct evaluation rather than a recurrence keeps the error independent of len
    for (std::size_t k = 0; k < half; ++k) twiddle[k] = std::polar(1.0, ang * double(k));
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + half] * twiddle[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

namespace {

void check_dims(const ComplexImage& img) {
  if (!is_power_of_two(img.height())) {
    throw DimensionError("fft2: height " + std::to_string(img.height()) + " is not a power of two");
  }
  if (!is_power_of_two(img.width())) {
    throw DimensionError("fft2: width " + std::to_string(img.width()) + " is not a power of two");
  }
}

ComplexImage transform(const ComplexImage& img, int sign) {
  check_dims(img);
  const std::size_t h = img.height(), w = img.width();
  std::vector<std::complex<double>> buf(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) buf[i * w + j] = {img.re(i, j), img.im(i, j)};

  for (std::size_t i = 0; i < h; ++i) fft1d(std::span(buf).subspan(i * w, w), sign);

  std::vector<std::complex<double>> col(h);
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < h; ++i) col[i] = buf[i * w + j];
    fft1d(col, sign);
    for (std::size_t i = 0; i < h; ++i) buf[i * w + j] = col[i];
  }

  const double scale = 1.0 / std::sqrt(double(h * w));
  ComplexImage out(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out.re(i, j) = float(buf[i * w + j].real() * scale);
      out.im(i, j) = float(buf[i * w + j].imag() * scale);
    }
  }
  return out;
}

}  // namespace

ComplexImage fft2(const ComplexImage& img) { return transform(img, -1); }
ComplexImage ifft2(const ComplexImage& img) { return transform(img, +1); }

}  // namespace npgd
