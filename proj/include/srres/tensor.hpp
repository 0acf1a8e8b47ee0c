#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "srres/image.hpp"

namespace srres::nn {

/// Dense N x C x H x W array of doubles. Lower-rank values (weights,
/// vectors, scalars) use the same type with trailing unit dimensions.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, double fill = 0.0);

  static Tensor scalar(double v) { return Tensor(1, 1, 1, 1, v); }
  static Tensor like(const Tensor& t, double fill = 0.0) { return Tensor(t.n_, t.c_, t.h_, t.w_, fill); }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }
  std::array<int, 4> shape() const { return {n_, c_, h_, w_}; }
  std::size_t size() const { return data_.size(); }
  std::size_t sample_size() const { return static_cast<std::size_t>(c_) * h_ * w_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return shape() == o.shape(); }
  std::string shape_string() const;

  double& operator()(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  double operator()(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x];
  }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* sample(int n) { return data_.data() + n * sample_size(); }
  const double* sample(int n) const { return data_.data() + n * sample_size(); }

  double item() const;
  void fill(double v);
  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);
  void reshape(int n, int c, int h, int w);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  AlignedBuffer data_;
};

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Stacks equally shaped images into a batch.
Tensor stack(const std::vector<Image>& images);
Image unstack(const Tensor& t, int n);
std::vector<Image> unstack(const Tensor& t);

}  // namespace srres::nn
