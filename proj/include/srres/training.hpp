#pragma once

#include <filesystem>
#include <functional>
#include <stdexcept>
#include <vector>

#include "srres/archive.hpp"
#include "srres/config.hpp"
#include "srres/feature_extractor.hpp"
#include "srres/imaging.hpp"
#include "srres/networks.hpp"
#include "srres/optim.hpp"
#include "srres/rng.hpp"

namespace srres {

/// base_lr * 0.5^(number of {5000, 10000, 20000, 30000} <= iteration).
double lr_schedule_sr(double base_lr, long iteration);
/// base_lr before decay_start, then linear to zero at `total`.
double lr_schedule_domain(double base_lr, long epoch, long total, long decay_start = 150);

struct SrStepRecord {
  long iteration = 0;  // 1-based
  double lr = 0.0;
  nn::SrLossTerms terms;
  double total = 0.0;
  double d_loss = 0.0;
};

struct DomainStepRecord {
  long iteration = 0;  // 1-based, across epochs
  long epoch = 0;
  double lr = 0.0;
  nn::DomainLossTerms terms;
  double total = 0.0;
  double d_loss = 0.0;
};

/// Thrown when a loss turns non-finite; carries the state before the
/// failing iteration.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, Archive last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const Archive& last_good() const { return last_good_; }

 private:
  Archive last_good_;
};

struct TrainOptions {
  /// Receives periodic checkpoints, the loss trace and the resolved config;
  /// empty keeps everything in memory.
  std::filesystem::path out_dir;
  /// Stop once this many iterations are done (<= 0: run to the end).
  long stop_after = 0;
  /// Domain stage: never update the discriminator.
  bool freeze_discriminator = false;
  std::function<void(const SrStepRecord&, const nn::GeneratorSR&)> on_sr_step;
  std::function<void(const DomainStepRecord&, const nn::DomainGenerator&)> on_domain_step;
};

/// SR stage: alternating D_y / G_SR updates on LR/HR patch pairs.
class SrTrainer {
 public:
  SrTrainer(const TrainConfig& cfg, std::vector<SamplePair> pairs, nn::FeatureExtractor extractor);
  /// Continues from a checkpoint written by checkpoint().
  SrTrainer(const Archive& checkpoint, std::vector<SamplePair> pairs, nn::FeatureExtractor extractor);

  /// One iteration (discriminator step, then generator step).
  SrStepRecord step();
  /// Iterates until `until` iterations are done or the configured total.
  void run(long until, const TrainOptions& opts = {});

  long iteration() const { return iteration_; }
  bool finished() const { return iteration_ >= cfg_.total; }
  const TrainConfig& config() const { return cfg_; }
  const nn::GeneratorSR& generator() const { return g_; }
  const nn::HrDiscriminator& discriminator() const { return d_; }
  const std::vector<SrStepRecord>& trace() const { return trace_; }

  Archive checkpoint() const;

 private:
  struct Batch {
    nn::Tensor lr;
    nn::Tensor hr;
    std::vector<double> sigmas;
  };

  Batch sample_batch();
  void check_pairs() const;

  TrainConfig cfg_;
  std::vector<SamplePair> pairs_;
  nn::FeatureExtractor extractor_;
  GaussianBlur blur_;
  nn::GeneratorSR g_;
  nn::HrDiscriminator d_;
  nn::Adam opt_g_, opt_d_;
  Rng rng_;
  long iteration_ = 0;
  std::vector<SrStepRecord> trace_;
};

/// Domain stage: G_d maps bicubic downscales of target images toward the
/// source domain, judged by D_x against source crops.
class DomainTrainer {
 public:
  DomainTrainer(const TrainConfig& cfg, std::vector<Image> source, std::vector<Image> target,
                nn::FeatureExtractor extractor);
  DomainTrainer(const Archive& checkpoint, std::vector<Image> source, std::vector<Image> target,
                nn::FeatureExtractor extractor);

  DomainStepRecord step(bool update_discriminator = true);
  void run(long until, const TrainOptions& opts = {});

  long iteration() const { return iteration_; }
  long steps_per_epoch() const { return steps_per_epoch_; }
  long total_iterations() const { return steps_per_epoch_ * cfg_.total; }
  const TrainConfig& config() const { return cfg_; }
  const nn::DomainGenerator& generator() const { return g_; }
  const nn::PatchDiscriminator& discriminator() const { return d_; }
  const std::vector<DomainStepRecord>& trace() const { return trace_; }

  Archive checkpoint() const;

 private:
  void check_images() const;

  TrainConfig cfg_;
  std::vector<Image> source_, target_;
  nn::FeatureExtractor extractor_;
  GaussianBlur blur_;
  nn::DomainGenerator g_;
  nn::PatchDiscriminator d_;
  nn::Adam opt_g_, opt_d_;
  Rng rng_;
  long iteration_ = 0;
  long steps_per_epoch_ = 1;
  std::vector<DomainStepRecord> trace_;
};

struct SrTrainResult {
  Archive checkpoint;
  nn::GeneratorSR generator;
  std::vector<SrStepRecord> trace;
};

struct DomainTrainResult {
  Archive checkpoint;
  nn::DomainGenerator generator;
  std::vector<DomainStepRecord> trace;
};

SrTrainResult train_sr(const TrainConfig& cfg, const std::vector<SamplePair>& pairs,
                       const TrainOptions& opts = {});
SrTrainResult resume_sr(const Archive& checkpoint, const std::vector<SamplePair>& pairs,
                        const TrainOptions& opts = {});
DomainTrainResult train_domain(const TrainConfig& cfg, const std::vector<Image>& source,
                               const std::vector<Image>& target, const TrainOptions& opts = {});

/// x_hat = G_d(bicubic(y, 1/scale)) paired with y.
std::vector<SamplePair> generate_lr_dataset(const nn::DomainGenerator& gd,
                                            const std::vector<Image>& hr_images, int scale);

/// Network reconstruction from a training checkpoint.
TrainConfig checkpoint_config(const Archive& checkpoint);
nn::GeneratorSR load_generator(const Archive& checkpoint);
nn::DomainGenerator load_domain_generator(const Archive& checkpoint);

void save_checkpoint(const Archive& checkpoint, const std::filesystem::path& path);
Archive load_checkpoint(const std::filesystem::path& path);

/// Copies parameters into / out of an archive under `prefix`.
void store_params(Archive& a, const std::string& prefix, const nn::ParamStore& params);
void restore_params(const Archive& a, const std::string& prefix, nn::ParamStore& params);

}  // namespace srres
