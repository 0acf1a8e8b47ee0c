#pragma once

#include <vector>

#include "srres/image.hpp"

namespace srres {

enum class ResampleKernel { bicubic, bilinear };

/// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x);
double triangle_kernel(double x);

/// Sparse one-dimensional resampling matrix: out[i] = sum_j w_ij in[j].
///
/// Follows the usual image-toolbox convention: sample centres are aligned
/// (in = (out + 0.5) / factor - 0.5), borders are mirrored (half-sample
/// symmetric) and, when `antialias` is set and the factor is below one, the
/// kernel is widened by 1/factor. Each row of weights sums to one.
class AxisResampler {
 public:
  struct Tap {
    int index;
    double weight;
  };

  AxisResampler() = default;
  AxisResampler(int in_size, int out_size, double factor, ResampleKernel kernel, bool antialias);

  int in_size() const { return in_size_; }
  int out_size() const { return static_cast<int>(rows_.size()); }
  const std::vector<Tap>& row(int i) const { return rows_[i]; }

 private:
  int in_size_ = 0;
  std::vector<std::vector<Tap>> rows_;
};

/// Separable linear resampling operator between two raster sizes, with an
/// exact adjoint (the transpose of its matrix form).
class Resampler {
 public:
  Resampler() = default;
  Resampler(int in_height, int in_width, double factor, ResampleKernel kernel,
            bool antialias = true);

  int in_height() const { return rows_.in_size(); }
  int in_width() const { return cols_.in_size(); }
  int out_height() const { return rows_.out_size(); }
  int out_width() const { return cols_.out_size(); }

  /// Resamples one H x W plane. `out` must hold out_height*out_width values.
  void apply_plane(const double* in, double* out) const;
  /// Transpose of apply_plane; `out` receives in_height*in_width values.
  void adjoint_plane(const double* in, double* out) const;

  Image apply(const Image& img) const;
  Image adjoint(const Image& img) const;

 private:
  AxisResampler rows_;
  AxisResampler cols_;
};

/// Output size for a resize by `factor`: round(size * factor), at least 1.
int resized_extent(int size, double factor);

/// Bicubic resize (a = -0.5, anti-aliased when shrinking).
Image bicubic_resize(const Image& img, double factor);

/// Bilinear resize with aligned sample centres, no anti-aliasing.
Image bilinear_resize(const Image& img, double factor);

}  // namespace srres
