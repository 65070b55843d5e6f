#include "npgd/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "npgd/error.hpp"

namespace npgd {

double snr_db(const ComplexImage& x, const ComplexImage& ref) {
  const double s = norm(ref);
  if (s == 0.0) throw UndefinedMetricError("snr: reference image is zero");
  const double e = norm(x - ref);
  if (e < 1e-10 * s) return kSnrCapDb;
  return std::min(kSnrCapDb, 20.0 * std::log10(s / e));
}

double nrmse(const ComplexImage& x, const ComplexImage& ref) {
  const double s = norm(ref);
  if (s == 0.0) throw UndefinedMetricError("nrmse: reference image is zero");
  return norm(x - ref) / s;
}

namespace {

constexpr int kWin = 7;

std::array<double, kWin * kWin> gaussian_window() {
  std::array<double, kWin * kWin> w{};
  double sum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    for (int j = 0; j < kWin; ++j) {
      const double di = i - kWin / 2, dj = j - kWin / 2;
      w[i * kWin + j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      sum += w[i * kWin + j];
    }
  }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

double ssim(const Tensor& x, const Tensor& ref, std::optional<double> dynamic_range) {
  require_same_shape(x, ref, "ssim");
  if (ref.rank() != 2) throw ShapeError("ssim: expects H x W images");
  const std::size_t h = ref.dim(0), w = ref.dim(1);
  if (h < kWin || w < kWin) throw ShapeError("ssim: images must be at least 7x7");

  double range;
  if (dynamic_range) {
    range = *dynamic_range;
  } else {
    const auto [lo, hi] = std::minmax_element(ref.data().begin(), ref.data().end());
    range = double(*hi) - double(*lo);
  }
  if (!(range > 0.0)) throw UndefinedMetricError("ssim: reference has zero dynamic range");
  const double c1 = (0.01 * range) * (0.01 * range);
  const double c2 = (0.03 * range) * (0.03 * range);

  static const auto win = gaussian_window();
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + kWin <= h; ++i) {
    for (std::size_t j = 0; j + kWin <= w; ++j) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int a = 0; a < kWin; ++a) {
        for (int b = 0; b < kWin; ++b) {
          const double g = win[a * kWin + b];
          const double xv = x.at(i + a, j + b), yv = ref.at(i + a, j + b);
          mx += g * xv;
          my += g * yv;
          sxx += g * xv * xv;
          syy += g * yv * yv;
          sxy += g * xv * yv;
        }
      }
      const double vx = sxx - mx * mx, vy = syy - my * my;
      const double cov = sxy - mx * my;
      total += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  }
  return total / double(count);
}

double ssim(const ComplexImage& x, const ComplexImage& ref) {
  require_same_shape(x, ref, "ssim");
  return ssim(x.magnitude(), ref.magnitude());
}

MetricReport evaluate(const ComplexImage& x, const ComplexImage& ref) {
  return {snr_db(x, ref), ssim(x, ref), nrmse(x, ref)};
}

}  // namespace npgd
