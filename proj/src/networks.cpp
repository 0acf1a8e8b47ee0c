#include "srres/networks.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "srres/rng.hpp"

namespace srres::nn {

namespace {

Var bind_param(Tape& tape, const ParamStore& params, ParamStore* trainable, const std::string& name) {
  if (trainable) return tape.param(trainable->at(name));
  return tape.constant(params.at(name).value);
}

Tensor gaussian_tensor(int n, int c, int h, int w, Rng& rng) {
  Tensor t(n, c, h, w);
  for (double& v : t.values()) v = normal(rng);
  return t;
}

std::string block_name(int i, const char* leaf) { return "res" + std::to_string(i) + "." + leaf; }

void require_positive(int v, const char* what) {
  if (v < 1) throw std::invalid_argument(std::string(what) + " must be positive");
}

}  // namespace

double projection_threshold(double alpha, double sigma, int channels, int height, int width) {
  const double d = static_cast<double>(channels) * height * width;
  if (d < 2) throw std::invalid_argument("projection threshold needs C*H*W >= 2");
  return std::exp(alpha) * sigma * std::sqrt(d - 1.0);
}

Image project(const Image& z, double alpha, double sigma) {
  return prox_ball(z, {projection_threshold(alpha, sigma, z.channels(), z.height(), z.width())});
}

Image clip_intensities(const Image& img) { return clipped(img); }

double relativistic_prob(double score_a, double mean_score_b) {
  return 1.0 / (1.0 + std::exp(-(score_a - mean_score_b)));
}

FilterBank parametrize_filters(const Tensor& raw) {
  const Tensor w = normalize_filters(raw);
  if (w.h() != w.w()) throw std::invalid_argument("filter kernels must be square");
  FilterBank bank(w.n(), w.c(), w.h());
  std::copy(w.data(), w.data() + w.size(), bank.weights.begin());
  return bank;
}

Tensor to_tensor(const FilterBank& bank) {
  Tensor t(bank.count, bank.channels, bank.size, bank.size);
  std::copy(bank.weights.begin(), bank.weights.end(), t.data());
  return t;
}

Tensor orthogonal_init(int out, int c, int k, double gain, std::uint64_t seed) {
  const int fan = c * k * k;
  Rng rng(seed);
  Eigen::MatrixXd m(out, fan);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < fan; ++j) m(i, j) = normal(rng);
  }
  Eigen::MatrixXd q;
  if (out <= fan) {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m.transpose());
    q = (qr.householderQ() * Eigen::MatrixXd::Identity(fan, out)).transpose();
  } else {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
    q = qr.householderQ() * Eigen::MatrixXd::Identity(out, fan);
  }
  Tensor t(out, c, k, k);
  for (int i = 0; i < out; ++i) {
    for (int j = 0; j < fan; ++j) t[static_cast<std::size_t>(i) * fan + j] = gain * q(i, j);
  }
  return t;
}

void require_finite(const ParamStore& params, const char* network) {
  for (const auto& [name, p] : params.items()) {
    for (double v : p.value.values()) {
      if (!std::isfinite(v)) {
        throw std::domain_error(std::string(network) + ": parameter '" + name + "' is not finite");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// SR generator

void GeneratorSRConfig::validate() const {
  if (scale != 1 && scale != 2 && scale != 4) throw std::invalid_argument("scale must be 1, 2 or 4");
  if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  require_positive(features, "generator features");
  require_positive(res_blocks, "generator res_blocks");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("generator kernel must be odd");
  if (res_kernel < 1 || res_kernel % 2 == 0) throw std::invalid_argument("res_kernel must be odd");
  if (kernel * kernel * channels < 2) throw std::invalid_argument("generator kernels need >= 2 weights");
  if (!std::isfinite(alpha_init)) throw std::invalid_argument("alpha_init must be finite");
}

GeneratorSR::GeneratorSR(const GeneratorSRConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int f = cfg_.features, c = cfg_.channels, k = cfg_.kernel;
  params_.add("enc.raw", gaussian_tensor(f, c, k, k, rng));
  params_.add("proj.alpha", Tensor::scalar(cfg_.alpha_init));
  if (cfg_.analytic_mode) {
    params_.add("act", Tensor::scalar(0.25));
    return;
  }
  params_.add("dec.raw", gaussian_tensor(f, c, k, k, rng));
  params_.add("step", Tensor::scalar(1.0));
  const int rk = cfg_.res_kernel;
  for (int i = 0; i < cfg_.res_blocks; ++i) {
    params_.add(block_name(i, "act1"), Tensor(1, f, 1, 1, 0.25));
    params_.add(block_name(i, "conv1.w"), orthogonal_init(f, f, rk, 0.1, rng()));
    params_.add(block_name(i, "conv1.b"), Tensor(1, f, 1, 1));
    params_.add(block_name(i, "act2"), Tensor(1, f, 1, 1, 0.25));
    params_.add(block_name(i, "conv2.w"), orthogonal_init(f, f, rk, 0.1, rng()));
    params_.add(block_name(i, "conv2.b"), Tensor(1, f, 1, 1));
  }
}

Var GeneratorSR::run(Tape& tape, Var lr, const std::vector<double>& sigmas,
                     ParamStore* trainable) const {
  const Tensor& in = lr.value();
  if (in.c() != cfg_.channels) {
    throw std::invalid_argument("generator expects " + std::to_string(cfg_.channels) +
                                " channels, got " + std::to_string(in.c()));
  }
  const int h = in.h() * cfg_.scale, w = in.w() * cfg_.scale;
  if (h < cfg_.kernel || w < cfg_.kernel) {
    throw std::invalid_argument("input " + in.shape_string() +
                                " is smaller than the generator's receptive field");
  }
  require_finite(params_, "generator");
  auto p = [&](const std::string& name) { return bind_param(tape, params_, trainable, name); };

  const Var u = upsample_bilinear(lr, cfg_.scale);
  const Var enc = normalize_filters(p("enc.raw"));
  const ConvGeometry outer = same_reflect(cfg_.kernel);
  const Var alpha = p("proj.alpha");

  if (cfg_.analytic_mode) {
    const Var features = prelu(conv2d(u, enc, {}, outer), p("act"));
    const Var reg = conv2d_adjoint(features, enc, outer, h, w);
    return clip01(project_ball(sub(u, scale(reg, alpha)), alpha, sigmas));
  }

  const ConvGeometry inner = same_reflect(cfg_.res_kernel);
  Var x = conv2d(u, enc, {}, outer);
  for (int i = 0; i < cfg_.res_blocks; ++i) {
    Var t = prelu(x, p(block_name(i, "act1")));
    t = conv2d(t, p(block_name(i, "conv1.w")), p(block_name(i, "conv1.b")), inner);
    t = prelu(t, p(block_name(i, "act2")));
    t = conv2d(t, p(block_name(i, "conv2.w")), p(block_name(i, "conv2.b")), inner);
    x = add(x, t);
  }
  const Var decoded = conv2d_adjoint(x, normalize_filters(p("dec.raw")), outer, h, w);
  const Var residual = project_ball(scale(decoded, p("step")), alpha, sigmas);
  return clip01(sub(u, residual));
}

Var GeneratorSR::forward(Tape& tape, Var lr, const std::vector<double>& sigmas) {
  return run(tape, lr, sigmas, &params_);
}

Var GeneratorSR::forward_frozen(Tape& tape, Var lr, const std::vector<double>& sigmas) const {
  return run(tape, lr, sigmas, nullptr);
}

Tensor GeneratorSR::infer(const Tensor& lr, const std::vector<double>& sigmas) const {
  Tape tape;
  return forward_frozen(tape, tape.constant(lr), sigmas).value();
}

Image GeneratorSR::infer(const Image& lr, double sigma) const {
  return unstack(infer(stack({lr}), {sigma}), 0);
}

FilterBank GeneratorSR::encoder_bank() const { return parametrize_filters(params_.at("enc.raw").value); }

FilterBank GeneratorSR::decoder_bank() const {
  return parametrize_filters(params_.at(cfg_.analytic_mode ? "enc.raw" : "dec.raw").value);
}

void GeneratorSR::set_analytic(const FilterBank& bank, double slope, double alpha) {
  if (!cfg_.analytic_mode) throw std::logic_error("set_analytic requires analytic mode");
  if (bank.channels != cfg_.channels || bank.size != cfg_.kernel) {
    throw std::invalid_argument("filter bank shape does not match the generator");
  }
  params_.at("enc.raw").value = to_tensor(bank);
  params_.at("enc.raw").zero_grad();
  params_.at("act").value = Tensor::scalar(slope);
  params_.at("proj.alpha").value = Tensor::scalar(alpha);
}

Image gsr_forward(const GeneratorSR& g, const Image& lr, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
  return g.infer(lr, sigma);
}

// ---------------------------------------------------------------------------
// Domain generator

void DomainGeneratorConfig::validate() const {
  if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  require_positive(features, "domain generator features");
  require_positive(res_blocks, "domain generator res_blocks");
  if (kernel < 1 || kernel % 2 == 0) throw std::invalid_argument("domain generator kernel must be odd");
}

DomainGenerator::DomainGenerator(const DomainGeneratorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int f = cfg_.features, c = cfg_.channels, k = cfg_.kernel;
  params_.add("head.w", orthogonal_init(f, c, k, 0.1, rng()));
  params_.add("head.b", Tensor(1, f, 1, 1));
  for (int i = 0; i < cfg_.res_blocks; ++i) {
    params_.add(block_name(i, "conv1.w"), orthogonal_init(f, f, k, 0.1, rng()));
    params_.add(block_name(i, "conv1.b"), Tensor(1, f, 1, 1));
    params_.add(block_name(i, "act"), Tensor(1, f, 1, 1, 0.25));
    params_.add(block_name(i, "conv2.w"), orthogonal_init(f, f, k, 0.1, rng()));
    params_.add(block_name(i, "conv2.b"), Tensor(1, f, 1, 1));
  }
  params_.add("tail.w", Tensor(c, f, k, k));
  params_.add("tail.b", Tensor(1, c, 1, 1));
}

Var DomainGenerator::run(Tape& tape, Var z, ParamStore* trainable) const {
  const Tensor& in = z.value();
  if (in.c() != cfg_.channels) {
    throw std::invalid_argument("domain generator expects " + std::to_string(cfg_.channels) +
                                " channels, got " + std::to_string(in.c()));
  }
  require_finite(params_, "domain generator");
  auto p = [&](const std::string& name) { return bind_param(tape, params_, trainable, name); };

  Tensor skip = Tensor::like(in);
  for (std::size_t i = 0; i < skip.size(); ++i) {
    const double v = std::clamp(in[i], 1e-4, 1.0 - 1e-4);
    skip[i] = std::log(v / (1.0 - v));
  }
  const ConvGeometry geom = same_reflect(cfg_.kernel);
  Var x = conv2d(z, p("head.w"), p("head.b"), geom);
  for (int i = 0; i < cfg_.res_blocks; ++i) {
    Var t = conv2d(x, p(block_name(i, "conv1.w")), p(block_name(i, "conv1.b")), geom);
    t = prelu(t, p(block_name(i, "act")));
    t = conv2d(t, p(block_name(i, "conv2.w")), p(block_name(i, "conv2.b")), geom);
    x = add(x, t);
  }
  const Var tail = conv2d(x, p("tail.w"), p("tail.b"), geom);
  return sigmoid(add(tape.constant(std::move(skip)), tail));
}

Var DomainGenerator::forward(Tape& tape, Var z) { return run(tape, z, &params_); }
Var DomainGenerator::forward_frozen(Tape& tape, Var z) const { return run(tape, z, nullptr); }

Image DomainGenerator::infer(const Image& z) const {
  Tape tape;
  return unstack(forward_frozen(tape, tape.constant(stack({z}))).value(), 0);
}

Image gd_forward(const DomainGenerator& g, const Image& z) { return g.infer(z); }

// ---------------------------------------------------------------------------
// Discriminators

void Discriminator::add_batch_norm(const std::string& name, int channels) {
  params_.add(name + ".gamma", Tensor(1, channels, 1, 1, 1.0));
  params_.add(name + ".beta", Tensor(1, channels, 1, 1));
  buffers_[name + ".mean"] = Tensor(1, channels, 1, 1);
  buffers_[name + ".var"] = Tensor(1, channels, 1, 1, 1.0);
}

Var Discriminator::apply_batch_norm(Tape& tape, Var x, const std::string& name, Phase phase,
                                    ParamStore* trainable,
                                    std::map<std::string, Tensor>* running) const {
  const Var gamma = bind_param(tape, params_, trainable, name + ".gamma");
  const Var beta = bind_param(tape, params_, trainable, name + ".beta");
  if (phase == Phase::train) {
    if (!running) throw std::logic_error("training-phase batch norm needs mutable statistics");
    return batch_norm_train(x, gamma, beta, running->at(name + ".mean"), running->at(name + ".var"));
  }
  return batch_norm_eval(x, gamma, beta, buffers_.at(name + ".mean"), buffers_.at(name + ".var"));
}

namespace {

constexpr int kHrWidthMultipliers[10] = {1, 1, 2, 2, 4, 4, 8, 8, 8, 8};

}  // namespace

void HrDiscriminatorConfig::validate() const {
  if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  require_positive(base, "discriminator base width");
  require_positive(hidden, "discriminator hidden width");
  if (patch < 32 || patch % 32 != 0) {
    throw std::invalid_argument("HR discriminator patch must be a positive multiple of 32");
  }
}

HrDiscriminator::HrDiscriminator(const HrDiscriminatorConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int in = cfg_.channels;
  for (int i = 0; i < 10; ++i) {
    const int out = cfg_.base * kHrWidthMultipliers[i];
    const int k = i % 2 == 0 ? 3 : 4;
    const std::string name = "conv" + std::to_string(i);
    params_.add(name + ".w", orthogonal_init(out, in, k, 0.1, rng()));
    if (i == 0) {
      params_.add(name + ".b", Tensor(1, out, 1, 1));
    } else {
      add_batch_norm("bn" + std::to_string(i), out);
    }
    in = out;
  }
  const int side = cfg_.patch / 32;
  const int flat = in * side * side;
  params_.add("fc1.w", orthogonal_init(cfg_.hidden, flat, 1, 0.1, rng()));
  params_.add("fc1.b", Tensor(1, cfg_.hidden, 1, 1));
  params_.add("fc2.w", orthogonal_init(1, cfg_.hidden, 1, 0.1, rng()));
  params_.add("fc2.b", Tensor(1, 1, 1, 1));
}

Var HrDiscriminator::run(Tape& tape, Var x, Phase phase, ParamStore* trainable,
                         std::map<std::string, Tensor>* running) const {
  const Tensor& in = x.value();
  if (in.c() != cfg_.channels || in.h() != cfg_.patch || in.w() != cfg_.patch) {
    throw std::invalid_argument("HR discriminator expects " + std::to_string(cfg_.channels) + "x" +
                                std::to_string(cfg_.patch) + "x" + std::to_string(cfg_.patch) +
                                " inputs, got " + in.shape_string());
  }
  require_finite(params_, "HR discriminator");
  auto p = [&](const std::string& name) { return bind_param(tape, params_, trainable, name); };
  Var h = x;
  for (int i = 0; i < 10; ++i) {
    const std::string name = "conv" + std::to_string(i);
    const ConvGeometry geom{i % 2 == 0 ? 1 : 2, 1, Padding::zero};
    if (i == 0) {
      h = conv2d(h, p(name + ".w"), p(name + ".b"), geom);
    } else {
      h = conv2d(h, p(name + ".w"), {}, geom);
      h = apply_batch_norm(tape, h, "bn" + std::to_string(i), phase, trainable, running);
    }
    h = leaky_relu(h, 0.2);
  }
  h = leaky_relu(linear(h, p("fc1.w"), p("fc1.b")), 0.2);
  return linear(h, p("fc2.w"), p("fc2.b"));
}

Var HrDiscriminator::forward(Tape& tape, Var x, Phase phase, bool bind_params) {
  return run(tape, x, phase, bind_params ? &params_ : nullptr,
             phase == Phase::train ? &buffers_ : nullptr);
}

Var HrDiscriminator::forward_frozen(Tape& tape, Var x) const {
  return run(tape, x, Phase::eval, nullptr, nullptr);
}

std::vector<double> HrDiscriminator::score(const Tensor& x) const {
  Tape tape;
  const Tensor s = forward_frozen(tape, tape.constant(x)).value();
  return {s.data(), s.data() + s.size()};
}

double dy_score(const HrDiscriminator& d, const Image& candidate) {
  return d.score(stack({candidate})).front();
}

void PatchDiscriminatorConfig::validate() const {
  if (channels != 1 && channels != 3) throw std::invalid_argument("channels must be 1 or 3");
  if (widths.empty()) throw std::invalid_argument("patch discriminator needs at least one layer");
  for (int w : widths) require_positive(w, "patch discriminator width");
  if (kernel < 1) throw std::invalid_argument("patch discriminator kernel must be positive");
}

PatchDiscriminator::PatchDiscriminator(const PatchDiscriminatorConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  int in = cfg_.channels;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    const std::string name = "conv" + std::to_string(i);
    params_.add(name + ".w", orthogonal_init(cfg_.widths[i], in, cfg_.kernel, 0.1, rng()));
    add_batch_norm("bn" + std::to_string(i), cfg_.widths[i]);
    in = cfg_.widths[i];
  }
  params_.add("out.w", orthogonal_init(1, in, cfg_.kernel, 0.1, rng()));
  params_.add("out.b", Tensor(1, 1, 1, 1));
}

Var PatchDiscriminator::run(Tape& tape, Var x, Phase phase, ParamStore* trainable,
                            std::map<std::string, Tensor>* running) const {
  const Tensor& in = x.value();
  const int rf = cfg_.receptive_field();
  if (in.c() != cfg_.channels) {
    throw std::invalid_argument("patch discriminator expects " + std::to_string(cfg_.channels) +
                                " channels, got " + std::to_string(in.c()));
  }
  if (in.h() < rf || in.w() < rf) {
    throw std::invalid_argument("input " + in.shape_string() +
                                " is smaller than the receptive field " + std::to_string(rf));
  }
  require_finite(params_, "patch discriminator");
  auto p = [&](const std::string& name) { return bind_param(tape, params_, trainable, name); };
  const ConvGeometry valid{1, 0, Padding::zero};
  Var h = x;
  for (std::size_t i = 0; i < cfg_.widths.size(); ++i) {
    h = conv2d(h, p("conv" + std::to_string(i) + ".w"), {}, valid);
    h = apply_batch_norm(tape, h, "bn" + std::to_string(i), phase, trainable, running);
    h = leaky_relu(h, 0.2);
  }
  return conv2d(h, p("out.w"), p("out.b"), valid);
}

Var PatchDiscriminator::forward(Tape& tape, Var x, Phase phase, bool bind_params) {
  return run(tape, x, phase, bind_params ? &params_ : nullptr,
             phase == Phase::train ? &buffers_ : nullptr);
}

Var PatchDiscriminator::forward_frozen(Tape& tape, Var x) const {
  return run(tape, x, Phase::eval, nullptr, nullptr);
}

Tensor PatchDiscriminator::score(const Tensor& x) const {
  Tape tape;
  return forward_frozen(tape, tape.constant(x)).value();
}

Image dx_score(const PatchDiscriminator& d, const Image& candidate) {
  return unstack(d.score(stack({candidate})), 0);
}

}  // namespace srres::nn
