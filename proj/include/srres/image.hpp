#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace srres {

/// Fixed 64-byte alignment: vectorized reductions then sum in the same
/// order on every run, which keeps training bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <class U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) {
    return true;
  }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// C x H x W raster of real intensities, nominally in [0, 1].
///
/// Storage is planar (channel-major, then row-major), which is also the
/// layout of a single sample in nn::Tensor.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, double fill = 0.0);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double operator()(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> plane(int c);
  std::span<const double> plane(int c) const;

  bool same_shape(const Image& other) const {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  std::string shape_string() const;

  Image& operator+=(const Image& other);
  Image& operator-=(const Image& other);
  Image& operator*=(double s);

  friend Image operator+(Image a, const Image& b) { return a += b; }
  friend Image operator-(Image a, const Image& b) { return a -= b; }
  friend Image operator*(Image a, double s) { return a *= s; }
  friend Image operator*(double s, Image a) { return a *= s; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  AlignedBuffer data_;
};

double dot(const Image& a, const Image& b);
double norm(const Image& a);
double max_abs_diff(const Image& a, const Image& b);
bool all_finite(const Image& a);

/// Pointwise clamp to [0, 1].
Image clipped(Image img);

/// Throws std::invalid_argument naming `what` if shapes differ.
void require_same_shape(const Image& a, const Image& b, const char* what);

/// Parameters of the observation model Y = H X + noise.
struct DegradationSpec {
  int scale = 4;
  double noise_sigma = 0.0;  ///< [0,1] intensity units
  std::uint64_t seed = 0;

  void validate() const;
};

struct SamplePair {
  Image lr;
  Image hr;
};

}  // namespace srres
