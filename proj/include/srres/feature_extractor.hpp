#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "srres/archive.hpp"
#include "srres/autodiff.hpp"

namespace srres::nn {

/// Fixed convolutional feature map used by the perceptual loss and the
/// LPIPS-style metric. Each stage is a 3x3 reflect-padded convolution
/// followed by ReLU. `taps` selects which stage outputs are returned;
/// tap 0 is the input itself, tap i the output of stage i.
///
/// Weight files are archives with the string "kind", the string "taps"
/// (comma-separated), the string "channels", and per stage i the arrays
/// "stage<i>.w" (out x in x 3 x 3), "stage<i>.b" (1 x out x 1 x 1) and the
/// scalar "stage<i>.stride".
class FeatureExtractor {
 public:
  struct Stage {
    Tensor weight;
    Tensor bias;
    int stride = 1;
  };

  FeatureExtractor(std::string kind, int channels, std::vector<Stage> stages, std::vector<int> taps);

  /// Deterministic 3-stage stack: channels->16 (stride 1), 16->32 (2),
  /// 32->64 (2), He-scaled weights from a fixed seed, all stages tapped.
  static FeatureExtractor builtin(int channels = 3);
  /// No stages; returns the input unchanged.
  static FeatureExtractor identity(int channels = 3);

  static FeatureExtractor from_archive(const Archive& a);
  Archive to_archive() const;
  static FeatureExtractor load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// Resolves "builtin", "identity" or a weight-file path.
  static FeatureExtractor named(const std::string& spec, int channels = 3);

  const std::string& kind() const { return kind_; }
  int channels() const { return channels_; }
  const std::vector<int>& taps() const { return taps_; }
  const std::vector<Stage>& stages() const { return stages_; }

  std::vector<Var> features(Tape& tape, Var x) const;
  std::vector<Tensor> features(const Tensor& x) const;

 private:
  std::string kind_;
  int channels_;
  std::vector<Stage> stages_;
  std::vector<int> taps_;
};

}  // namespace srres::nn
