#include "srres/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace srres {
namespace {

// Half-sample symmetric mirror: ... 1 0 | 0 1 ... n-1 | n-1 n-2 ...
int mirror_index(int j, int n) {
  const int period = 2 * n;
  int m = j % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

double cubic_kernel(double x) {
  constexpr double a = -0.5;
  const double ax = std::abs(x);
  const double ax2 = ax * ax;
  const double ax3 = ax2 * ax;
  if (ax <= 1.0) return (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0;
  if (ax < 2.0) return a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a;
  return 0.0;
}

double triangle_kernel(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 1.0 - ax : 0.0;
}

AxisResampler::AxisResampler(int in_size, int out_size, double factor, ResampleKernel kernel,
                             bool antialias)
    : in_size_(in_size) {
  if (in_size < 1 || out_size < 1) throw std::invalid_argument("resample: empty axis");
  if (!(factor > 0.0)) throw std::invalid_argument("resample: factor must be positive");

  const double support = kernel == ResampleKernel::bicubic ? 4.0 : 2.0;
  const bool widen = antialias && factor < 1.0;
  const double width = widen ? support / factor : support;
  auto h = [&](double x) {
    const double t = widen ? factor * x : x;
    const double k = kernel == ResampleKernel::bicubic ? cubic_kernel(t) : triangle_kernel(t);
    return widen ? factor * k : k;
  };

  rows_.resize(out_size);
  const int taps = static_cast<int>(std::ceil(width)) + 2;
  std::vector<double> weights(taps);
  for (int i = 0; i < out_size; ++i) {
    const double u = (i + 0.5) / factor - 0.5;
    const int left = static_cast<int>(std::floor(u - width / 2.0));
    double sum = 0.0;
    for (int p = 0; p < taps; ++p) {
      weights[p] = h(u - (left + p));
      sum += weights[p];
    }
    auto& row = rows_[i];
    for (int p = 0; p < taps; ++p) {
      const double w = weights[p] / sum;
      if (w == 0.0) continue;
      const int j = mirror_index(left + p, in_size);
      auto it = std::find_if(row.begin(), row.end(), [j](const Tap& t) { return t.index == j; });
      if (it == row.end()) {
        row.push_back({j, w});
      } else {
        it->weight += w;
      }
    }
  }
}

int resized_extent(int size, double factor) {
  return std::max(1, static_cast<int>(std::lround(size * factor)));
}

Resampler::Resampler(int in_height, int in_width, double factor, ResampleKernel kernel,
                     bool antialias)
    : rows_(in_height, resized_extent(in_height, factor), factor, kernel, antialias),
      cols_(in_width, resized_extent(in_width, factor), factor, kernel, antialias) {}

void Resampler::apply_plane(const double* in, double* out) const {
  const int ih = in_height(), iw = in_width(), oh = out_height(), ow = out_width();
  // Columns first into an ih x ow buffer, then rows.
  std::vector<double> tmp(static_cast<std::size_t>(ih) * ow, 0.0);
  for (int y = 0; y < ih; ++y) {
    const double* src = in + static_cast<std::size_t>(y) * iw;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (const auto& t : cols_.row(x)) acc += t.weight * src[t.index];
      dst[x] = acc;
    }
  }
  for (int y = 0; y < oh; ++y) {
    double* dst = out + static_cast<std::size_t>(y) * ow;
    std::fill(dst, dst + ow, 0.0);
    for (const auto& t : rows_.row(y)) {
      const double* src = tmp.data() + static_cast<std::size_t>(t.index) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += t.weight * src[x];
    }
  }
}

void Resampler::adjoint_plane(const double* in, double* out) const {
  const int ih = in_height(), iw = in_width(), oh = out_height(), ow = out_width();
  std::vector<double> tmp(static_cast<std::size_t>(ih) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    const double* src = in + static_cast<std::size_t>(y) * ow;
    for (const auto& t : rows_.row(y)) {
      double* dst = tmp.data() + static_cast<std::size_t>(t.index) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += t.weight * src[x];
    }
  }
  std::fill(out, out + static_cast<std::size_t>(ih) * iw, 0.0);
  for (int y = 0; y < ih; ++y) {
    const double* src = tmp.data() + static_cast<std::size_t>(y) * ow;
    double* dst = out + static_cast<std::size_t>(y) * iw;
    for (int x = 0; x < ow; ++x) {
      for (const auto& t : cols_.row(x)) dst[t.index] += t.weight * src[x];
    }
  }
}

Image Resampler::apply(const Image& img) const {
  if (img.height() != in_height() || img.width() != in_width()) {
    throw std::invalid_argument("resample: expected " + std::to_string(in_height()) + "x" +
                                std::to_string(in_width()) + " input, got " + img.shape_string());
  }
  Image out(img.channels(), out_height(), out_width());
  for (int c = 0; c < img.channels(); ++c) apply_plane(img.plane(c).data(), out.plane(c).data());
  return out;
}

Image Resampler::adjoint(const Image& img) const {
  if (img.height() != out_height() || img.width() != out_width()) {
    throw std::invalid_argument("resample adjoint: expected " + std::to_string(out_height()) +
                                "x" + std::to_string(out_width()) + " input, got " +
                                img.shape_string());
  }
  Image out(img.channels(), in_height(), in_width());
  for (int c = 0; c < img.channels(); ++c) adjoint_plane(img.plane(c).data(), out.plane(c).data());
  return out;
}

Image bicubic_resize(const Image& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("bicubic_resize: factor must be positive");
  return Resampler(img.height(), img.width(), factor, ResampleKernel::bicubic, true).apply(img);
}

Image bilinear_resize(const Image& img, double factor) {
  if (!(factor > 0.0)) throw std::invalid_argument("bilinear_resize: factor must be positive");
  return Resampler(img.height(), img.width(), factor, ResampleKernel::bilinear, false).apply(img);
}

}  // namespace srres
