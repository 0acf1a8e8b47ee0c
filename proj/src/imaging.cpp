#include "srres/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "srres/resample.hpp"
#include "srres/rng.hpp"

namespace srres {

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * n - 2;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - m;
}

Image degrade(const Image& img, const DegradationSpec& spec) {
  spec.validate();
  if (img.height() % spec.scale != 0 || img.width() % spec.scale != 0) {
    throw std::invalid_argument("degrade: image " + img.shape_string() +
                                " is not divisible by scale " + std::to_string(spec.scale));
  }
  Image out = spec.scale == 1 ? img : bicubic_resize(img, 1.0 / spec.scale);
  if (spec.noise_sigma > 0.0) {
    Rng rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (double& v : out.data()) v = std::clamp(v + noise(rng), 0.0, 1.0);
  }
  return out;
}

double estimate_noise_sigma(const Image& img) {
  if (img.height() < 8 || img.width() < 8) {
    throw std::invalid_argument("estimate_noise_sigma: image " + img.shape_string() +
                                " is smaller than 8x8");
  }
  const int bh = img.height() / 2;
  const int bw = img.width() / 2;
  std::vector<double> detail;
  detail.reserve(static_cast<std::size_t>(img.channels()) * bh * bw);
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < bh; ++y) {
      for (int x = 0; x < bw; ++x) {
        const double a = img(c, 2 * y, 2 * x);
        const double b = img(c, 2 * y, 2 * x + 1);
        const double d = img(c, 2 * y + 1, 2 * x);
        const double e = img(c, 2 * y + 1, 2 * x + 1);
        detail.push_back(std::abs(a - b - d + e) / 2.0);
      }
    }
  }
  const std::size_t n = detail.size();
  auto mid = detail.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(detail.begin(), mid, detail.end());
  double median = *mid;
  if (n % 2 == 0) {
    const double lower = *std::max_element(detail.begin(), mid);
    median = 0.5 * (median + lower);
  }
  return median / 0.6745;
}

GaussianBlur::GaussianBlur(int kernel_size, double sigma) : sigma_(sigma) {
  if (kernel_size < 3) throw std::invalid_argument("GaussianBlur: kernel size must be >= 3");
  if (kernel_size % 2 == 0) throw std::invalid_argument("GaussianBlur: kernel size must be odd");
  if (!(sigma > 0.0)) throw std::invalid_argument("GaussianBlur: sigma must be positive");
  const int r = kernel_size / 2;
  taps_.resize(kernel_size);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    taps_[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    sum += taps_[i + r];
  }
  for (double& t : taps_) t /= sum;
}

void GaussianBlur::apply_plane(const double* in, double* out, int height, int width) const {
  const int r = kernel_size() / 2;
  std::vector<double> tmp(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps_[k + r] * in[y * width + reflect_index(x + k, width)];
      tmp[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k) acc += taps_[k + r] * tmp[reflect_index(y + k, height) * width + x];
      out[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
}

void GaussianBlur::adjoint_plane(const double* in, double* out, int height, int width) const {
  const int r = kernel_size() / 2;
  std::vector<double> tmp(static_cast<std::size_t>(height) * width, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double g = in[static_cast<std::size_t>(y) * width + x];
      for (int k = -r; k <= r; ++k) tmp[reflect_index(y + k, height) * width + x] += taps_[k + r] * g;
    }
  }
  std::fill(out, out + static_cast<std::size_t>(height) * width, 0.0);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double g = tmp[static_cast<std::size_t>(y) * width + x];
      for (int k = -r; k <= r; ++k) out[y * width + reflect_index(x + k, width)] += taps_[k + r] * g;
    }
  }
}

Image GaussianBlur::apply(const Image& img) const {
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    apply_plane(img.plane(c).data(), out.plane(c).data(), img.height(), img.width());
  }
  return out;
}

Image GaussianBlur::adjoint(const Image& img) const {
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    adjoint_plane(img.plane(c).data(), out.plane(c).data(), img.height(), img.width());
  }
  return out;
}

FrequencyBands frequency_split(const Image& img, int kernel_size, double sigma_blur) {
  const GaussianBlur blur(kernel_size, sigma_blur);
  FrequencyBands bands{blur.apply(img), img};
  bands.high -= bands.low;
  return bands;
}

namespace {

Image rotate90_ccw(const Image& img) {
  Image out(img.channels(), img.width(), img.height());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out(c, y, x) = img(c, x, img.width() - 1 - y);
    }
  }
  return out;
}

Image mirror_lr(const Image& img) {
  Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) out(c, y, x) = img(c, y, img.width() - 1 - x);
    }
  }
  return out;
}

}  // namespace

Image flip_rotate(const Image& img, int t) {
  if (t < 0 || t > 7) throw std::invalid_argument("flip_rotate: transform index must be in 0..7");
  Image out = img;
  for (int k = 0; k < t % 4; ++k) out = rotate90_ccw(out);
  if (t >= 4) out = mirror_lr(out);
  return out;
}

int d4_inverse(int t) {
  if (t < 0 || t > 7) throw std::invalid_argument("d4_inverse: transform index must be in 0..7");
  // Mirrored elements are involutions; rotations invert to the opposite turn.
  return t >= 4 ? t : (4 - t) % 4;
}

SamplePair mixup(const SamplePair& a, const SamplePair& b, double lam) {
  require_same_shape(a.lr, b.lr, "mixup lr");
  require_same_shape(a.hr, b.hr, "mixup hr");
  if (!(lam >= 0.0 && lam <= 1.0)) throw std::invalid_argument("mixup: lambda must lie in [0,1]");
  if (lam == 1.0) return a;
  if (lam == 0.0) return b;
  // b + lam (a - b) keeps mixup(a, a, lam) == a exactly.
  return {(a.lr - b.lr) * lam + b.lr, (a.hr - b.hr) * lam + b.hr};
}

std::vector<PatchPosition> patch_positions(int height, int width, int size, int count,
                                           std::uint64_t seed) {
  if (size < 1 || size > height || size > width) {
    throw std::invalid_argument("patch size " + std::to_string(size) + " does not fit a " +
                                std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  Rng rng(seed);
  std::vector<PatchPosition> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int y = uniform_int(rng, 0, height - size);
    const int x = uniform_int(rng, 0, width - size);
    out.push_back({y, x});
  }
  return out;
}

Image crop(const Image& img, int y, int x, int height, int width) {
  if (y < 0 || x < 0 || y + height > img.height() || x + width > img.width()) {
    throw std::invalid_argument("crop window outside image " + img.shape_string());
  }
  Image out(img.channels(), height, width);
  for (int c = 0; c < img.channels(); ++c) {
    for (int r = 0; r < height; ++r) {
      for (int q = 0; q < width; ++q) out(c, r, q) = img(c, y + r, x + q);
    }
  }
  return out;
}

std::vector<Image> extract_patches(const Image& img, int size, int count, std::uint64_t seed) {
  std::vector<Image> patches;
  for (const auto& p : patch_positions(img.height(), img.width(), size, count, seed)) {
    patches.push_back(crop(img, p.y, p.x, size, size));
  }
  return patches;
}

}  // namespace srres
