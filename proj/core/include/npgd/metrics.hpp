#pragma once

#include <optional>

#include "npgd/tensor.hpp"

namespace npgd {

inline constexpr double kSnrCapDb = 100.0;

struct MetricReport {
  double snr_db = 0.0;
  double ssim = 0.0;
  double nrmse = 0.0;
};

// 20 log10(||ref|| / ||x - ref||) on the stacked (re, im) vector, capped at
// 100 dB when the error is below 1e-10 ||ref||.
double snr_db(const ComplexImage& x, const ComplexImage& ref);

// ||x - ref|| / ||ref||.
double nrmse(const ComplexImage& x, const ComplexImage& ref);

// Mean SSIM over valid 7x7 Gaussian windows (sigma 1.5), K1 = 0.01,
// K2 = 0.03. The dynamic range defaults to max(ref) - min(ref).
double ssim(const Tensor& x, const Tensor& ref, std::optional<double> dynamic_range = std::nullopt);
// SSIM of the per-pixel magnitudes.
double ssim(const ComplexImage& x, const ComplexImage& ref);

MetricReport evaluate(const ComplexImage& x, const ComplexImage& ref);

}  // namespace npgd
