#pragma once

#include <vector>

#include "srres/autodiff.hpp"
#include "srres/imaging.hpp"
#include "srres/resample.hpp"

namespace srres::nn {

enum class Padding { zero, reflect };

struct ConvGeometry {
  int stride = 1;
  int pad = 0;
  Padding padding = Padding::zero;
};

/// Padding that keeps H x W for an odd kernel at stride 1.
inline ConvGeometry same_reflect(int kernel) { return {1, kernel / 2, Padding::reflect}; }

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
/// a * s for a one-element s.
Var scale(Var a, Var s);

/// Cross-correlation of x (N x C x H x W) with w (K x C x k x k). `bias`
/// may be a default-constructed Var (no bias) or hold K values.
Var conv2d(Var x, Var w, Var bias, ConvGeometry geom);

/// Exact adjoint of conv2d (without bias) with respect to its input: maps
/// N x K x H' x W' back to N x C x out_h x out_w.
Var conv2d_adjoint(Var x, Var w, ConvGeometry geom, int out_h, int out_w);

/// max(x,0) + a*min(x,0) with a shared (1 value) or per-channel slope.
Var prelu(Var x, Var slope);
Var leaky_relu(Var x, double slope);
Var relu(Var x);
Var sigmoid(Var x);
/// Pointwise clamp to [0,1]; gradient passes inside the closed interval.
Var clip01(Var x);

/// y = x W^T + b with x flattened per sample; w stored as out x in x 1 x 1.
Var linear(Var x, Var w, Var bias);

/// Batch statistics, updating running averages (unbiased variance).
Var batch_norm_train(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                     double momentum = 0.1, double eps = 1e-5);
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps = 1e-5);

/// Per-plane linear resampling; r must match the input spatial size.
Var resample(Var x, const Resampler& r);
Var upsample_bilinear(Var x, int scale);
Var blur(Var x, const GaussianBlur& b);
Var highpass(Var x, const GaussianBlur& b);

/// Per-sample Euclidean projection onto the ball of radius
/// exp(alpha) * sigma_n * sqrt(C*H*W - 1). `sigmas` holds one value per
/// sample or a single shared value.
Var project_ball(Var z, Var alpha, const std::vector<double>& sigmas);

/// Per-kernel centring and unit-norm scaling of a K x C x k x k array.
/// Throws std::domain_error for a kernel that is constant.
Var normalize_filters(Var raw);
Tensor normalize_filters(const Tensor& raw);

Var sum(Var x);
Var mean(Var x);

}  // namespace srres::nn
