#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srres/losses.hpp"
#include "srres/networks.hpp"
#include "srres/optim.hpp"

namespace srres {

/// Unknown key or unparseable value; the message names the key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Stage { domain, sr };

const char* stage_name(Stage s);

struct TrainConfig {
  Stage stage = Stage::sr;
  std::uint64_t seed = 0;
  int scale = 4;
  int channels = 3;
  int batch_size = 16;
  /// Domain: source crop size (target crops are scale x larger).
  /// SR: LR patch size.
  int patch_size = 32;
  /// Domain: epochs. SR: iterations.
  long total = 51000;
  /// Domain only; 0 means one pass over the target images per epoch.
  int steps_per_epoch = 0;
  /// Domain only: epoch at which the linear decay begins.
  int decay_start = 150;
  double base_lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  nn::LossWeights weights;
  bool flips = true;
  bool rot90 = true;
  bool mixup = true;
  double mixup_alpha = 0.2;
  double mixup_prob = 0.5;
  int features = 64;
  int kernel = 5;
  int res_blocks = 5;
  int res_kernel = 3;
  double alpha_init = 2.0;
  int disc_base = 64;
  int disc_hidden = 100;
  /// Domain only: feed D_x high-pass filtered images.
  bool highpass_dx = false;
  int blur_kernel = 5;
  double blur_sigma = 1.5;
  long checkpoint_every = 1000;
  int keep_checkpoints = 3;
  std::string extractor = "builtin";

  void validate() const;
  nn::AdamConfig adam() const { return {adam_beta1, adam_beta2, adam_eps}; }
  nn::GeneratorSRConfig generator_sr() const;
  nn::DomainGeneratorConfig domain_generator() const;
  nn::HrDiscriminatorConfig hr_discriminator() const;
  nn::PatchDiscriminatorConfig patch_discriminator() const;
};

/// Full-scale defaults for a stage (the `full` preset).
TrainConfig default_config(Stage stage);

/// SR stage scaled for a desk: 200 iterations, batch 4, LR patch 16,
/// 2 residual blocks.
TrainConfig desk_preset();

struct EvalConfig {
  int scale = 4;
  /// Pixels removed from each border before metrics; -1 means `scale`.
  int crop_border = -1;
  bool ensemble = false;
  bool json = false;
  std::string extractor = "builtin";

  int effective_crop() const { return crop_border < 0 ? scale : crop_border; }
  void validate() const;
};

using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Parses `key=value` lines; `#` starts a comment, blank lines are skipped.
Overrides parse_config_file(const std::filesystem::path& path);
/// Splits "key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);
void apply_setting(EvalConfig& cfg, const std::string& key, const std::string& value);

/// defaults <- file <- overrides. An empty path skips the file.
TrainConfig resolve_config(TrainConfig defaults, const std::filesystem::path& file,
                           const Overrides& overrides);
EvalConfig resolve_config(EvalConfig defaults, const std::filesystem::path& file,
                          const Overrides& overrides);

/// Every key as `key=value`, one per line, values printed exactly; feeding
/// the text back through resolve_config reproduces the configuration.
std::string echo_config(const TrainConfig& cfg);
std::string echo_config(const EvalConfig& cfg);

/// Parses echo_config output (for configs stored in checkpoints).
TrainConfig parse_train_echo(const std::string& text);

}  // namespace srres
