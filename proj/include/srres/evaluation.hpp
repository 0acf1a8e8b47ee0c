#pragma once

#include <functional>
#include <string>
#include <vector>

#include "srres/config.hpp"
#include "srres/feature_extractor.hpp"
#include "srres/image.hpp"
#include "srres/networks.hpp"

namespace srres {

/// Reported for zero mean squared error.
inline constexpr double kPsnrCap = 100.0;
/// Guards the channel normalization of LPIPS features.
inline constexpr double kLpipsEps = 1e-10;

/// 10 log10(1 / MSE) for intensities in [0,1], capped at kPsnrCap.
double psnr(const Image& a, const Image& b);

/// Mean local SSIM over the valid 11x11 Gaussian windows (sigma 1.5,
/// K1 = 0.01, K2 = 0.03, range 1), averaged over channels. Needs H, W >= 11.
double ssim(const Image& a, const Image& b);

/// Sum over extractor taps of the spatial mean of squared differences
/// between channel-normalized features.
double lpips_distance(const nn::FeatureExtractor& ext, const Image& a, const Image& b);

/// Removes `border` pixels from every side.
Image crop_border(const Image& img, int border);

using ModelFn = std::function<Image(const Image&)>;

/// Mean over the eight dihedral transforms t of t^-1(model(t(lr))).
Image self_ensemble(const ModelFn& model, const Image& lr);

struct MetricRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  /// Non-empty when this pair could not be scored.
  std::string error;

  bool ok() const { return error.empty(); }
};

struct MetricReport {
  std::vector<MetricRow> rows;
  /// Means over the rows that scored.
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_lpips = 0.0;
  int scored = 0;

  /// `id,psnr,ssim,lpips` rows plus a trailing `mean` row. Failed rows
  /// carry `nan` metrics.
  std::string csv() const;
  std::string json() const;
};

/// Fills the aggregate fields from `rows`.
MetricReport summarize(std::vector<MetricRow> rows);

struct EvalItem {
  std::string id;
  Image lr;
  Image hr;
};

/// Runs `model` (wrapped in self_ensemble when cfg.ensemble is set) on
/// every item, crops cfg.effective_crop() pixels and scores against the
/// HR image. Rows keep the input order; per-item failures are recorded in
/// the row.
MetricReport evaluate_dataset(const ModelFn& model, const std::vector<EvalItem>& items, const EvalConfig& cfg,
                              const nn::FeatureExtractor& ext);

/// Same, with the generator's own noise estimate as its sigma input.
MetricReport evaluate_dataset(const nn::GeneratorSR& g, const std::vector<EvalItem>& items,
                              const EvalConfig& cfg, const nn::FeatureExtractor& ext);

}  // namespace srres
