#include "srres/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace srres::nn {

Tensor::Tensor(int n, int c, int h, int w, double fill) : n_(n), c_(c), h_(h), w_(w) {
  if (n < 1 || c < 1 || h < 1 || w < 1) {
    std::ostringstream os;
    os << "invalid tensor shape " << n << "x" << c << "x" << h << "x" << w;
    throw std::invalid_argument(os.str());
  }
  data_.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << n_ << "x" << c_ << "x" << h_ << "x" << w_;
  return os.str();
}

double Tensor::item() const {
  if (data_.size() != 1) throw std::logic_error("item() on tensor of shape " + shape_string());
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  require_same_shape(*this, o, "tensor addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void Tensor::reshape(int n, int c, int h, int w) {
  if (static_cast<std::size_t>(n) * c * h * w != data_.size()) {
    throw std::invalid_argument("reshape: element count mismatch for " + shape_string());
  }
  n_ = n;
  c_ = c;
  h_ = h;
  w_ = w;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

Tensor stack(const std::vector<Image>& images) {
  if (images.empty()) throw std::invalid_argument("stack: no images");
  const Image& first = images.front();
  Tensor t(static_cast<int>(images.size()), first.channels(), first.height(), first.width());
  for (std::size_t i = 0; i < images.size(); ++i) {
    srres::require_same_shape(first, images[i], "stack");
    std::copy(images[i].data().begin(), images[i].data().end(), t.sample(static_cast<int>(i)));
  }
  return t;
}

Image unstack(const Tensor& t, int n) {
  Image img(t.c(), t.h(), t.w());
  std::copy(t.sample(n), t.sample(n) + t.sample_size(), img.data().begin());
  return img;
}

std::vector<Image> unstack(const Tensor& t) {
  std::vector<Image> out;
  out.reserve(t.n());
  for (int i = 0; i < t.n(); ++i) out.push_back(unstack(t, i));
  return out;
}

}  // namespace srres::nn
