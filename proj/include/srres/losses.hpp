#pragma once

#include <vector>

#include "srres/autodiff.hpp"
#include "srres/feature_extractor.hpp"
#include "srres/imaging.hpp"

namespace srres::nn {

struct LossWeights {
  // SR stage.
  double per = 1.0;
  double gan = 1.0;
  double tv = 1.0;
  double l1 = 10.0;
  // Domain stage.
  double color = 1.0;
  double tex = 0.005;
  double per_domain = 0.01;
  /// Feed the SR discriminator high-pass filtered images.
  bool highpass_gan = false;

  void validate() const;
};

/// Log arguments below this are clamped.
inline constexpr double kLogClamp = 1e-12;

/// Mean absolute difference over all elements.
Var l1_loss(Var a, Var b);
/// mean|dx(sr) - dx(hr)| + mean|dy(sr) - dy(hr)| with forward differences,
/// each term averaged over its own element count.
Var tv_loss(Var sr, Var hr);
/// Average over the extractor's taps of the per-tap l1_loss.
Var perceptual_loss(const FeatureExtractor& ext, Var sr, Var hr);
/// l1_loss of the Gaussian low-pass bands.
Var color_loss(Var a, Var b, const GaussianBlur& blur_op);

/// -E_r[log(1 - D(r, mean f))] - E_f[log D(f, mean r)], D = sigmoid of the
/// difference; every element of each tensor is one score.
Var ragan_generator_loss(Var real_scores, Var fake_scores);
/// -E_r[log D(r, mean f)] - E_f[log(1 - D(f, mean r))].
Var ragan_discriminator_loss(Var real_scores, Var fake_scores);

double l1_loss(const Tensor& a, const Tensor& b);
double tv_loss(const Tensor& sr, const Tensor& hr);
double perceptual_loss(const FeatureExtractor& ext, const Tensor& sr, const Tensor& hr);
double color_loss(const Tensor& a, const Tensor& b, const GaussianBlur& blur_op);
double ragan_generator_loss(const std::vector<double>& real_scores, const std::vector<double>& fake_scores);
double ragan_discriminator_loss(const std::vector<double>& real_scores,
                                const std::vector<double>& fake_scores);

struct SrLossTerms {
  double per = 0.0;
  double gan = 0.0;
  double tv = 0.0;
  double l1 = 0.0;
};

struct DomainLossTerms {
  double color = 0.0;
  double tex = 0.0;
  double per = 0.0;
};

/// Weighted sums. Throw std::domain_error naming a non-finite term.
double sr_composite_loss(const LossWeights& w, const SrLossTerms& t);
double domain_composite_loss(const LossWeights& w, const DomainLossTerms& t);

/// Tape versions; a term whose weight is zero may be left unset.
struct SrLossVars {
  Var per, gan, tv, l1;
};
struct DomainLossVars {
  Var color, tex, per;
};
Var sr_composite_loss(const LossWeights& w, const SrLossVars& t);
Var domain_composite_loss(const LossWeights& w, const DomainLossVars& t);

}  // namespace srres::nn
