#include "srres/image.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace srres {

Image::Image(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 1 || height < 1 || width < 1) {
    std::ostringstream os;
    os << "invalid image shape " << channels << "x" << height << "x" << width;
    throw std::invalid_argument(os.str());
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

std::span<double> Image::plane(int c) {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return std::span<double>(data_).subspan(c * n, n);
}

std::span<const double> Image::plane(int c) const {
  const std::size_t n = static_cast<std::size_t>(height_) * width_;
  return std::span<const double>(data_).subspan(c * n, n);
}

std::string Image::shape_string() const {
  std::ostringstream os;
  os << channels_ << "x" << height_ << "x" << width_;
  return os.str();
}

Image& Image::operator+=(const Image& other) {
  require_same_shape(*this, other, "image addition");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Image& Image::operator-=(const Image& other) {
  require_same_shape(*this, other, "image subtraction");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Image& Image::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

double dot(const Image& a, const Image& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) acc += da[i] * db[i];
  return acc;
}

double norm(const Image& a) { return std::sqrt(dot(a, a)); }

double max_abs_diff(const Image& a, const Image& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto da = a.data();
  auto db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) m = std::max(m, std::abs(da[i] - db[i]));
  return m;
}

bool all_finite(const Image& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

Image clipped(Image img) {
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape_string() +
                                " vs " + b.shape_string());
  }
}

void DegradationSpec::validate() const {
  if (scale != 1 && scale != 2 && scale != 4) {
    throw std::invalid_argument("degradation scale must be 1, 2 or 4, got " +
                                std::to_string(scale));
  }
  if (!(noise_sigma >= 0.0 && noise_sigma < 1.0)) {
    throw std::invalid_argument("noise sigma must lie in [0, 1)");
  }
}

}  // namespace srres
