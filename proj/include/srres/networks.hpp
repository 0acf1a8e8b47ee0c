#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "srres/autodiff.hpp"
#include "srres/image.hpp"
#include "srres/ops.hpp"
#include "srres/variational.hpp"

namespace srres::nn {

enum class Phase { train, eval };

/// Threshold e^alpha * sigma * sqrt(C*H*W - 1) of the projection layer.
double projection_threshold(double alpha, double sigma, int channels, int height, int width);

/// Euclidean projection onto the ball of radius projection_threshold.
Image project(const Image& z, double alpha, double sigma);

/// Pointwise clamp to [0,1].
Image clip_intensities(const Image& img);

/// sigmoid(score_a - mean_score_b).
double relativistic_prob(double score_a, double mean_score_b);

/// Centres and unit-normalizes each raw kernel (K x C x k x k).
FilterBank parametrize_filters(const Tensor& raw);
Tensor to_tensor(const FilterBank& bank);

/// Orthogonal rows (or columns, whichever is shorter) of an out x fan_in
/// matrix, scaled by `gain`, reshaped to out x c x k x k.
Tensor orthogonal_init(int out, int c, int k, double gain, std::uint64_t seed);

struct GeneratorSRConfig {
  int scale = 4;
  int channels = 3;
  int features = 64;
  int kernel = 5;
  int res_blocks = 5;
  int res_kernel = 3;
  bool analytic_mode = false;
  double alpha_init = 2.0;

  void validate() const;
};

/// SR generator. Full mode:
///   u = bilinear(lr), r = P_alpha,sigma(step * Dec(Res(Enc(u)))),
///   out = clip(u - r)
/// with Enc/Dec built from constrained (zero-mean, unit-norm) kernels and
/// Dec the adjoint of a reflect-padded convolution. `step` is a trainable
/// gain starting at one.
///
/// Analytic mode mirrors one proximal step on the variational energy:
///   out = clip(P_alpha,sigma(u - alpha * Enc^T PReLU(Enc u))).
class GeneratorSR {
 public:
  GeneratorSR() = default;
  GeneratorSR(const GeneratorSRConfig& cfg, std::uint64_t seed);

  const GeneratorSRConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Differentiable forward; parameters are bound to the tape for training.
  Var forward(Tape& tape, Var lr, const std::vector<double>& sigmas);
  /// Forward with frozen parameters.
  Var forward_frozen(Tape& tape, Var lr, const std::vector<double>& sigmas) const;

  Tensor infer(const Tensor& lr, const std::vector<double>& sigmas) const;
  Image infer(const Image& lr, double sigma) const;

  FilterBank encoder_bank() const;
  /// Decoder kernels (the encoder's in analytic mode).
  FilterBank decoder_bank() const;

  /// Sets the analytic-mode weights: bank, PReLU slope and alpha.
  void set_analytic(const FilterBank& bank, double slope, double alpha);

 private:
  Var run(Tape& tape, Var lr, const std::vector<double>& sigmas, ParamStore* trainable) const;

  GeneratorSRConfig cfg_;
  ParamStore params_;
};

Image gsr_forward(const GeneratorSR& g, const Image& lr, double sigma);

struct DomainGeneratorConfig {
  int channels = 3;
  int features = 64;
  int res_blocks = 8;
  int kernel = 3;

  void validate() const;
};

/// Domain generator: out = sigmoid(logit(z) + Tail(Res(Head(z)))). The
/// tail starts at zero, so an untrained generator is the identity (up to
/// the clamp of z away from 0 and 1 before the logit).
class DomainGenerator {
 public:
  DomainGenerator() = default;
  DomainGenerator(const DomainGeneratorConfig& cfg, std::uint64_t seed);

  const DomainGeneratorConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  Var forward(Tape& tape, Var z);
  Var forward_frozen(Tape& tape, Var z) const;
  Image infer(const Image& z) const;

 private:
  Var run(Tape& tape, Var z, ParamStore* trainable) const;

  DomainGeneratorConfig cfg_;
  ParamStore params_;
};

Image gd_forward(const DomainGenerator& g, const Image& z);

/// Discriminator with batch-norm buffers. Shared plumbing for both variants.
class Discriminator {
 public:
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::map<std::string, Tensor>& buffers() { return buffers_; }
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

 protected:
  void add_batch_norm(const std::string& name, int channels);
  Var apply_batch_norm(Tape& tape, Var x, const std::string& name, Phase phase,
                       ParamStore* trainable, std::map<std::string, Tensor>* running) const;

  ParamStore params_;
  std::map<std::string, Tensor> buffers_;
};

struct HrDiscriminatorConfig {
  int channels = 3;
  int base = 64;
  int patch = 128;
  int hidden = 100;

  void validate() const;
};

/// Ten convolutions alternating 3x3/1 and 4x4/2 (padding 1), widths
/// base * {1,1,2,2,4,4,8,8,8,8}, batch norm after all but the first,
/// leaky ReLU 0.2, then a dense head (-> hidden -> 1). Five strided layers
/// reduce patch to patch/32 before the head.
class HrDiscriminator : public Discriminator {
 public:
  HrDiscriminator() = default;
  HrDiscriminator(const HrDiscriminatorConfig& cfg, std::uint64_t seed);

  const HrDiscriminatorConfig& config() const { return cfg_; }

  /// Raw scores, N x 1 x 1 x 1. Training phase uses batch statistics and
  /// updates the running averages. With bind_params false the weights
  /// enter as constants (gradients flow to x only).
  Var forward(Tape& tape, Var x, Phase phase, bool bind_params = true);
  Var forward_frozen(Tape& tape, Var x) const;
  std::vector<double> score(const Tensor& x) const;

 private:
  Var run(Tape& tape, Var x, Phase phase, ParamStore* trainable,
          std::map<std::string, Tensor>* running) const;

  HrDiscriminatorConfig cfg_;
};

double dy_score(const HrDiscriminator& d, const Image& candidate);

struct PatchDiscriminatorConfig {
  int channels = 3;
  std::vector<int> widths{64, 128, 256};
  int kernel = 5;

  void validate() const;
  int receptive_field() const { return static_cast<int>(widths.size()) * (kernel - 1) + kernel; }
};

/// Valid (unpadded) stride-1 convolutions with batch norm and leaky ReLU,
/// then a convolution to one channel: a map of raw per-patch scores.
class PatchDiscriminator : public Discriminator {
 public:
  PatchDiscriminator() = default;
  PatchDiscriminator(const PatchDiscriminatorConfig& cfg, std::uint64_t seed);

  const PatchDiscriminatorConfig& config() const { return cfg_; }

  Var forward(Tape& tape, Var x, Phase phase, bool bind_params = true);
  Var forward_frozen(Tape& tape, Var x) const;
  Tensor score(const Tensor& x) const;

 private:
  Var run(Tape& tape, Var x, Phase phase, ParamStore* trainable,
          std::map<std::string, Tensor>* running) const;

  PatchDiscriminatorConfig cfg_;
};

/// One-channel score map, (H - rf + 1) x (W - rf + 1).
Image dx_score(const PatchDiscriminator& d, const Image& candidate);

/// Throws std::domain_error naming the first non-finite parameter.
void require_finite(const ParamStore& params, const char* network);

}  // namespace srres::nn
