#include "npgd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "npgd/error.hpp"

namespace npgd {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimension must be positive: " + shape_string(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

void Tensor::fill(float v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) +
                     " vs " + shape_string(b.shape()));
  }
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

double norm(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += double(v) * double(v);
  return std::sqrt(s);
}

Tensor axpy(float alpha, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "axpy");
  Tensor out = b;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += alpha * a[i];
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return axpy(1.0f, a, b); }

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "subtract");
  Tensor out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(float s, const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - b[i]));
  return m;
}

ComplexImage::ComplexImage(std::size_t height, std::size_t width)
    : planes_({2, height, width}), height_(height), width_(width) {}

ComplexImage::ComplexImage(Tensor planes) : planes_(std::move(planes)) {
  if (planes_.rank() != 3 || planes_.dim(0) != 2) {
    throw ShapeError("complex image needs a 2xHxW tensor, got " + shape_string(planes_.shape()));
  }
  height_ = planes_.dim(1);
  width_ = planes_.dim(2);
}

ComplexImage ComplexImage::from_parts(const Tensor& re, const Tensor& im) {
  require_same_shape(re, im, "complex image parts");
  if (re.rank() != 2) throw ShapeError("complex image parts must be HxW");
  ComplexImage z(re.dim(0), re.dim(1));
  std::copy(re.data().begin(), re.data().end(), z.planes_.raw());
  std::copy(im.data().begin(), im.data().end(), z.planes_.raw() + z.pixels());
  return z;
}

ComplexImage ComplexImage::from_real(const Tensor& re) {
  return from_parts(re, Tensor(re.shape(), 0.0f));
}

Tensor ComplexImage::real_part() const {
  Tensor t({height_, width_});
  std::copy(planes_.raw(), planes_.raw() + pixels(), t.raw());
  return t;
}

Tensor ComplexImage::imag_part() const {
  Tensor t({height_, width_});
  std::copy(planes_.raw() + pixels(), planes_.raw() + 2 * pixels(), t.raw());
  return t;
}

Tensor ComplexImage::magnitude() const {
  Tensor t({height_, width_});
  const float* r = planes_.raw();
  const float* m = planes_.raw() + pixels();
  for (std::size_t i = 0; i < pixels(); ++i) t[i] = std::hypot(r[i], m[i]);
  return t;
}

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": image shape mismatch " + std::to_string(a.height()) +
                     "x" + std::to_string(a.width()) + " vs " + std::to_string(b.height()) + "x" +
                     std::to_string(b.width()));
  }
}

double dot(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "dot");
  return dot(a.planes(), b.planes());
}

double norm(const ComplexImage& a) { return norm(a.planes()); }

ComplexImage axpy(float alpha, const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "axpy");
  return ComplexImage(axpy(alpha, a.planes(), b.planes()));
}

ComplexImage operator+(const ComplexImage& a, const ComplexImage& b) { return axpy(1.0f, a, b); }

ComplexImage operator-(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "subtract");
  return ComplexImage(a.planes() - b.planes());
}

ComplexImage operator*(float s, const ComplexImage& a) { return ComplexImage(s * a.planes()); }

double max_abs_diff(const ComplexImage& a, const ComplexImage& b) {
  require_same_shape(a, b, "max_abs_diff");
  return max_abs_diff(a.planes(), b.planes());
}

}  // namespace npgd
