#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace npgd {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major float32 array. Value type; copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  float& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  float at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  float& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  float at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  void fill(float v);
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<float> data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Euclidean inner product and 2-norm, accumulated in double.
double dot(const Tensor& a, const Tensor& b);
double norm(const Tensor& a);
// alpha * a + b
Tensor axpy(float alpha, const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(float s, const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Complex image stored as a 2 x H x W tensor: plane 0 real, plane 1 imaginary.
// The planar layout is exactly the two-channel network input.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width);
  explicit ComplexImage(Tensor planes);
  static ComplexImage from_parts(const Tensor& re, const Tensor& im);
  static ComplexImage from_real(const Tensor& re);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return height_ * width_; }

  float& re(std::size_t i, std::size_t j) { return planes_.at(0, i, j); }
  float re(std::size_t i, std::size_t j) const { return planes_.at(0, i, j); }
  float& im(std::size_t i, std::size_t j) { return planes_.at(1, i, j); }
  float im(std::size_t i, std::size_t j) const { return planes_.at(1, i, j); }

  Tensor real_part() const;
  Tensor imag_part() const;
  // Per-pixel modulus as an H x W tensor.
  Tensor magnitude() const;

  const Tensor& planes() const { return planes_; }
  Tensor& planes() { return planes_; }

  bool same_shape(const ComplexImage& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  friend bool operator==(const ComplexImage& a, const ComplexImage& b) {
    return a.planes_ == b.planes_;
  }

 private:
  Tensor planes_;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
};

void require_same_shape(const ComplexImage& a, const ComplexImage& b, const char* what);

// Real inner product on the stacked (re, im) vector of length 2HW.
double dot(const ComplexImage& a, const ComplexImage& b);
double norm(const ComplexImage& a);
ComplexImage axpy(float alpha, const ComplexImage& a, const ComplexImage& b);
ComplexImage operator+(const ComplexImage& a, const ComplexImage& b);
ComplexImage operator-(const ComplexImage& a, const ComplexImage& b);
ComplexImage operator*(float s, const ComplexImage& a);
double max_abs_diff(const ComplexImage& a, const ComplexImage& b);

}  // namespace npgd
