#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "srres/image.hpp"

namespace srres {

/// Y = B(X) + n: bicubic downscale by 1/s, then (for sigma > 0) seeded
/// Gaussian noise and a clip to [0,1]. With sigma == 0 the result is the
/// plain linear downscale.
Image degrade(const Image& img, const DegradationSpec& spec);

/// Noise level estimator signature; any callable of this shape can replace
/// the default.
using NoiseEstimator = std::function<double(const Image&)>;

/// Median absolute deviation of the finest diagonal Haar detail band,
/// scaled by 1/0.6745. Requires H, W >= 8.
double estimate_noise_sigma(const Image& img);

/// Separable normalized Gaussian blur with mirrored borders. Linear, so it
/// carries an exact adjoint for backpropagation.
class GaussianBlur {
 public:
  GaussianBlur(int kernel_size = 5, double sigma = 1.5);

  int kernel_size() const { return static_cast<int>(taps_.size()); }
  double sigma() const { return sigma_; }
  const std::vector<double>& taps() const { return taps_; }

  void apply_plane(const double* in, double* out, int height, int width) const;
  void adjoint_plane(const double* in, double* out, int height, int width) const;

  Image apply(const Image& img) const;
  Image adjoint(const Image& img) const;

 private:
  double sigma_;
  std::vector<double> taps_;
};

struct FrequencyBands {
  Image low;
  Image high;
};

/// low = Gaussian blur, high = img - low.
FrequencyBands frequency_split(const Image& img, int kernel_size = 5, double sigma_blur = 1.5);

/// Element t of the dihedral group D4: rotate t%4 quarter turns
/// counter-clockwise, then mirror left-right when t >= 4.
Image flip_rotate(const Image& img, int t);
int d4_inverse(int t);

SamplePair mixup(const SamplePair& a, const SamplePair& b, double lam);

struct PatchPosition {
  int y;
  int x;
};

std::vector<PatchPosition> patch_positions(int height, int width, int size, int count,
                                           std::uint64_t seed);
Image crop(const Image& img, int y, int x, int height, int width);
std::vector<Image> extract_patches(const Image& img, int size, int count, std::uint64_t seed);

/// Mirror index used for reflection padding (edge sample not repeated).
int reflect_index(int i, int n);

}  // namespace srres
