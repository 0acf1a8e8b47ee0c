#include "srres/training.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "srres/losses.hpp"
#include "srres/ops.hpp"
#include "srres/resample.hpp"

namespace srres {

using nn::Phase;
using nn::Tape;
using nn::Tensor;
using nn::Var;

double lr_schedule_sr(double base_lr, long iteration) {
  if (iteration < 0) throw std::invalid_argument("iteration must be >= 0");
  double lr = base_lr;
  for (long milestone : {5000L, 10000L, 20000L, 30000L}) {
    if (iteration >= milestone) lr *= 0.5;
  }
  return lr;
}

double lr_schedule_domain(double base_lr, long epoch, long total, long decay_start) {
  if (epoch < 0 || epoch > total) {
    throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(total) + "]");
  }
  if (decay_start >= total) throw std::invalid_argument("decay start must precede the last epoch");
  if (epoch < decay_start) return base_lr;
  return base_lr * (static_cast<double>(total - epoch) / static_cast<double>(total - decay_start));
}

namespace {

constexpr const char* kFormat = "srres-train";

int pick_transform(Rng& rng, bool flips, bool rot90) {
  if (flips && rot90) return uniform_int(rng, 0, 7);
  if (rot90) return uniform_int(rng, 0, 3);
  if (flips) {
    // identity, left-right, both, top-bottom
    static constexpr int kFlips[4] = {0, 4, 2, 6};
    return kFlips[uniform_int(rng, 0, 3)];
  }
  return 0;
}

std::vector<int> permutation(Rng& rng, int n) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[uniform_int(rng, 0, i)]);
  return p;
}

void renormalize_filters(nn::ParamStore& params) {
  for (const char* name : {"enc.raw", "dec.raw"}) {
    if (params.contains(name)) params.at(name).value = nn::normalize_filters(params.at(name).value);
  }
}

void store_buffers(Archive& a, const std::string& prefix, const std::map<std::string, Tensor>& buffers) {
  for (const auto& [name, t] : buffers) a.put(prefix + name, t);
}

void restore_buffers(const Archive& a, const std::string& prefix, std::map<std::string, Tensor>& buffers) {
  for (auto& [name, t] : buffers) {
    const Tensor& stored = a.tensor(prefix + name);
    if (!stored.same_shape(t)) throw std::runtime_error("checkpoint buffer '" + name + "' has the wrong shape");
    t = stored;
  }
}

void write_common(Archive& a, const TrainConfig& cfg, const Rng& rng, long iteration) {
  a.put_string("format", kFormat);
  a.put_string("stage", stage_name(cfg.stage));
  a.put_string("config", echo_config(cfg));
  a.put_string("rng", rng_state(rng));
  a.put_scalar("iteration", static_cast<double>(iteration));
}

TrainConfig read_config(const Archive& a, Stage expected) {
  TrainConfig cfg = checkpoint_config(a);
  if (cfg.stage != expected) {
    throw std::runtime_error(std::string("checkpoint is for the ") + stage_name(cfg.stage) + " stage, expected " +
                             stage_name(expected));
  }
  return cfg;
}

Image crop_and_transform(const Image& img, int y, int x, int size, int t) {
  return flip_rotate(crop(img, y, x, size, size), t);
}

// Periodic checkpoint files, keeping the newest `keep`.
class CheckpointRotation {
 public:
  CheckpointRotation(std::filesystem::path dir, int keep) : dir_(std::move(dir)), keep_(keep) {}

  void save(const Archive& a, long iteration) {
    std::ostringstream name;
    name << "checkpoint_" << std::setw(7) << std::setfill('0') << iteration << ".ckpt";
    const auto path = dir_ / name.str();
    a.save(path);
    kept_.push_back(path);
    while (static_cast<int>(kept_.size()) > keep_) {
      std::filesystem::remove(kept_.front());
      kept_.pop_front();
    }
  }

 private:
  std::filesystem::path dir_;
  int keep_;
  std::deque<std::filesystem::path> kept_;
};

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  os << text;
}

std::string sr_trace_csv(const std::vector<SrStepRecord>& trace) {
  std::ostringstream os;
  os << std::setprecision(17) << "iteration,per,gan,tv,l1,total,d_loss,lr\n";
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.terms.per << ',' << r.terms.gan << ',' << r.terms.tv << ',' << r.terms.l1 << ','
       << r.total << ',' << r.d_loss << ',' << r.lr << '\n';
  }
  return os.str();
}

std::string domain_trace_csv(const std::vector<DomainStepRecord>& trace) {
  std::ostringstream os;
  os << std::setprecision(17) << "iteration,epoch,color,tex,per,total,d_loss,lr\n";
  for (const auto& r : trace) {
    os << r.iteration << ',' << r.epoch << ',' << r.terms.color << ',' << r.terms.tex << ',' << r.terms.per << ','
       << r.total << ',' << r.d_loss << ',' << r.lr << '\n';
  }
  return os.str();
}

struct Seeds {
  std::uint64_t generator, discriminator, data;
};

Seeds derive_seeds(std::uint64_t seed) {
  Rng master(seed);
  Seeds s;
  s.generator = master();
  s.discriminator = master();
  s.data = master();
  return s;
}

}  // namespace

void store_params(Archive& a, const std::string& prefix, const nn::ParamStore& params) {
  for (const auto& [name, p] : params.items()) a.put(prefix + name, p.value);
}

void restore_params(const Archive& a, const std::string& prefix, nn::ParamStore& params) {
  for (auto& [name, p] : params.items()) {
    if (!a.has(prefix + name)) throw std::runtime_error("checkpoint lacks parameter '" + prefix + name + "'");
    const Tensor& stored = a.tensor(prefix + name);
    if (!stored.same_shape(p.value)) {
      throw std::runtime_error("checkpoint parameter '" + prefix + name + "' has shape " + stored.shape_string() +
                               ", expected " + p.value.shape_string());
    }
    p.value = stored;
    p.zero_grad();
  }
}

TrainConfig checkpoint_config(const Archive& a) {
  if (!a.has_string("format") || a.string("format") != kFormat) {
    throw std::runtime_error("archive is not a training checkpoint");
  }
  return parse_train_echo(a.string("config"));
}

nn::GeneratorSR load_generator(const Archive& a) {
  const TrainConfig cfg = read_config(a, Stage::sr);
  nn::GeneratorSR g(cfg.generator_sr(), 0);
  restore_params(a, "g/", g.params());
  return g;
}

nn::DomainGenerator load_domain_generator(const Archive& a) {
  const TrainConfig cfg = read_config(a, Stage::domain);
  nn::DomainGenerator g(cfg.domain_generator(), 0);
  restore_params(a, "g/", g.params());
  return g;
}

void save_checkpoint(const Archive& checkpoint, const std::filesystem::path& path) { checkpoint.save(path); }

Archive load_checkpoint(const std::filesystem::path& path) {
  Archive a = Archive::load(path);
  checkpoint_config(a);
  return a;
}

// ---------------------------------------------------------------------------
// SR stage

SrTrainer::SrTrainer(const TrainConfig& cfg, std::vector<SamplePair> pairs, nn::FeatureExtractor extractor)
    : cfg_(cfg),
      pairs_(std::move(pairs)),
      extractor_(std::move(extractor)),
      blur_(cfg.blur_kernel, cfg.blur_sigma) {
  if (cfg_.stage != Stage::sr) throw std::invalid_argument("SrTrainer needs an sr-stage config");
  cfg_.validate();
  check_pairs();
  const Seeds seeds = derive_seeds(cfg_.seed);
  g_ = nn::GeneratorSR(cfg_.generator_sr(), seeds.generator);
  d_ = nn::HrDiscriminator(cfg_.hr_discriminator(), seeds.discriminator);
  opt_g_ = nn::Adam(cfg_.adam());
  opt_d_ = nn::Adam(cfg_.adam());
  rng_ = Rng(seeds.data);
}

SrTrainer::SrTrainer(const Archive& a, std::vector<SamplePair> pairs, nn::FeatureExtractor extractor)
    : SrTrainer(read_config(a, Stage::sr), std::move(pairs), std::move(extractor)) {
  restore_params(a, "g/", g_.params());
  restore_params(a, "d/", d_.params());
  restore_buffers(a, "dbuf/", d_.buffers());
  opt_g_.load(a, "opt_g/");
  opt_d_.load(a, "opt_d/");
  rng_ = rng_from_state(a.string("rng"));
  iteration_ = static_cast<long>(a.scalar("iteration"));
}

void SrTrainer::check_pairs() const {
  if (pairs_.empty()) throw std::invalid_argument("train_sr: no training pairs");
  const int s = cfg_.scale, p = cfg_.patch_size;
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    const SamplePair& sp = pairs_[i];
    if (sp.hr.channels() != sp.lr.channels() || sp.hr.height() != s * sp.lr.height() ||
        sp.hr.width() != s * sp.lr.width()) {
      throw std::invalid_argument("pair " + std::to_string(i) + ": HR " + sp.hr.shape_string() +
                                  " is not the LR " + sp.lr.shape_string() + " times " + std::to_string(s));
    }
    if (sp.lr.channels() != cfg_.channels) {
      throw std::invalid_argument("pair " + std::to_string(i) + " has " + std::to_string(sp.lr.channels()) +
                                  " channels, config expects " + std::to_string(cfg_.channels));
    }
    if (sp.lr.height() < p || sp.lr.width() < p) {
      throw std::invalid_argument("pair " + std::to_string(i) + ": LR image smaller than patch size " +
                                  std::to_string(p));
    }
  }
}

SrTrainer::Batch SrTrainer::sample_batch() {
  const int p = cfg_.patch_size, s = cfg_.scale, n = cfg_.batch_size;
  std::vector<Image> lrs, hrs;
  for (int b = 0; b < n; ++b) {
    const SamplePair& sp = pairs_[uniform_int(rng_, 0, static_cast<int>(pairs_.size()) - 1)];
    const int y = uniform_int(rng_, 0, sp.lr.height() - p);
    const int x = uniform_int(rng_, 0, sp.lr.width() - p);
    const int t = pick_transform(rng_, cfg_.flips, cfg_.rot90);
    lrs.push_back(crop_and_transform(sp.lr, y, x, p, t));
    hrs.push_back(crop_and_transform(sp.hr, y * s, x * s, p * s, t));
  }
  if (cfg_.mixup && uniform01(rng_) < cfg_.mixup_prob) {
    const double lam = beta_sample(rng_, cfg_.mixup_alpha, cfg_.mixup_alpha);
    const std::vector<int> partner = permutation(rng_, n);
    std::vector<Image> lr_mixed, hr_mixed;
    for (int b = 0; b < n; ++b) {
      SamplePair m = mixup({lrs[b], hrs[b]}, {lrs[partner[b]], hrs[partner[b]]}, lam);
      lr_mixed.push_back(std::move(m.lr));
      hr_mixed.push_back(std::move(m.hr));
    }
    lrs = std::move(lr_mixed);
    hrs = std::move(hr_mixed);
  }
  Batch batch;
  for (const Image& l : lrs) batch.sigmas.push_back(estimate_noise_sigma(l));
  batch.lr = nn::stack(lrs);
  batch.hr = nn::stack(hrs);
  return batch;
}

SrStepRecord SrTrainer::step() {
  if (finished()) throw std::logic_error("SR training already reached its iteration budget");
  const std::string rng_before = rng_state(rng_);
  std::optional<nn::HrDiscriminator> d_before;
  std::optional<nn::Adam> opt_d_before;
  auto abort = [&](const std::string& why) {
    if (d_before) d_ = *d_before;
    if (opt_d_before) opt_d_ = *opt_d_before;
    rng_ = rng_from_state(rng_before);
    throw TrainingAborted("SR training aborted at iteration " + std::to_string(iteration_ + 1) + ": " + why,
                          checkpoint());
  };

  SrStepRecord rec;
  rec.iteration = iteration_ + 1;
  rec.lr = lr_schedule_sr(cfg_.base_lr, iteration_);
  const Batch batch = sample_batch();
  const bool adversarial = cfg_.weights.gan > 0.0;
  auto disc_input = [&](Var x) { return cfg_.weights.highpass_gan ? nn::highpass(x, blur_) : x; };

  // The adversary is skipped entirely when its loss carries no weight.
  if (adversarial) {
    d_before = d_;
    opt_d_before = opt_d_;
    Tape tape;
    const Tensor fake = g_.infer(batch.lr, batch.sigmas);
    d_.params().zero_grad();
    const Var real_scores = d_.forward(tape, disc_input(tape.constant(batch.hr)), Phase::train);
    const Var fake_scores = d_.forward(tape, disc_input(tape.constant(fake)), Phase::train);
    const Var loss = nn::ragan_discriminator_loss(real_scores, fake_scores);
    rec.d_loss = loss.value().item();
    if (!std::isfinite(rec.d_loss)) abort("discriminator loss is not finite");
    tape.backward(loss);
    opt_d_.step(d_.params(), rec.lr);
  }

  Tape tape;
  g_.params().zero_grad();
  nn::SrLossVars terms;
  try {
    const Var sr = g_.forward(tape, tape.constant(batch.lr), batch.sigmas);
    const Var hr = tape.constant(batch.hr);
    terms.l1 = nn::l1_loss(sr, hr);
    terms.tv = nn::tv_loss(sr, hr);
    terms.per = nn::perceptual_loss(extractor_, sr, hr);
    if (adversarial) {
      const Var real_scores = d_.forward(tape, disc_input(hr), Phase::train, false);
      const Var fake_scores = d_.forward(tape, disc_input(sr), Phase::train, false);
      terms.gan = nn::ragan_generator_loss(real_scores, fake_scores);
    }
    rec.terms.l1 = terms.l1.value().item();
    rec.terms.tv = terms.tv.value().item();
    rec.terms.per = terms.per.value().item();
    rec.terms.gan = adversarial ? terms.gan.value().item() : 0.0;
    rec.total = nn::sr_composite_loss(cfg_.weights, rec.terms);
  } catch (const std::domain_error& e) {
    abort(e.what());
  }
  const Var total = nn::sr_composite_loss(cfg_.weights, terms);
  tape.backward(total);
  const nn::ParamStore g_before = g_.params();
  const nn::Adam opt_g_before = opt_g_;
  opt_g_.step(g_.params(), rec.lr);
  try {
    nn::require_finite(g_.params(), "generator");
    renormalize_filters(g_.params());
  } catch (const std::domain_error& e) {
    g_.params() = g_before;
    opt_g_ = opt_g_before;
    abort(e.what());
  }

  ++iteration_;
  trace_.push_back(rec);
  return rec;
}

void SrTrainer::run(long until, const TrainOptions& opts) {
  const long end = until > 0 ? std::min(until, cfg_.total) : cfg_.total;
  std::optional<CheckpointRotation> rotation;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_text(opts.out_dir / "config.txt", echo_config(cfg_));
    rotation.emplace(opts.out_dir, cfg_.keep_checkpoints);
  }
  while (iteration_ < end) {
    SrStepRecord rec;
    try {
      rec = step();
    } catch (const TrainingAborted& e) {
      if (!opts.out_dir.empty()) {
        e.last_good().save(opts.out_dir / "last_good.ckpt");
        write_text(opts.out_dir / "trace.csv", sr_trace_csv(trace_));
      }
      throw;
    }
    if (opts.on_sr_step) opts.on_sr_step(rec, g_);
    if (rotation && iteration_ % cfg_.checkpoint_every == 0) rotation->save(checkpoint(), iteration_);
  }
  if (!opts.out_dir.empty()) {
    write_text(opts.out_dir / "trace.csv", sr_trace_csv(trace_));
    checkpoint().save(opts.out_dir / "final.ckpt");
  }
}

Archive SrTrainer::checkpoint() const {
  Archive a;
  write_common(a, cfg_, rng_, iteration_);
  store_params(a, "g/", g_.params());
  store_params(a, "d/", d_.params());
  store_buffers(a, "dbuf/", d_.buffers());
  opt_g_.save(a, "opt_g/");
  opt_d_.save(a, "opt_d/");
  return a;
}

SrTrainResult train_sr(const TrainConfig& cfg, const std::vector<SamplePair>& pairs, const TrainOptions& opts) {
  SrTrainer trainer(cfg, pairs, nn::FeatureExtractor::named(cfg.extractor, cfg.channels));
  trainer.run(opts.stop_after, opts);
  return {trainer.checkpoint(), trainer.generator(), trainer.trace()};
}

SrTrainResult resume_sr(const Archive& checkpoint, const std::vector<SamplePair>& pairs, const TrainOptions& opts) {
  const TrainConfig cfg = checkpoint_config(checkpoint);
  SrTrainer trainer(checkpoint, pairs, nn::FeatureExtractor::named(cfg.extractor, cfg.channels));
  trainer.run(opts.stop_after, opts);
  return {trainer.checkpoint(), trainer.generator(), trainer.trace()};
}

// ---------------------------------------------------------------------------
// Domain stage

DomainTrainer::DomainTrainer(const TrainConfig& cfg, std::vector<Image> source, std::vector<Image> target,
                             nn::FeatureExtractor extractor)
    : cfg_(cfg),
      source_(std::move(source)),
      target_(std::move(target)),
      extractor_(std::move(extractor)),
      blur_(cfg.blur_kernel, cfg.blur_sigma) {
  if (cfg_.stage != Stage::domain) throw std::invalid_argument("DomainTrainer needs a domain-stage config");
  cfg_.validate();
  check_images();
  const Seeds seeds = derive_seeds(cfg_.seed);
  g_ = nn::DomainGenerator(cfg_.domain_generator(), seeds.generator);
  d_ = nn::PatchDiscriminator(cfg_.patch_discriminator(), seeds.discriminator);
  opt_g_ = nn::Adam(cfg_.adam());
  opt_d_ = nn::Adam(cfg_.adam());
  rng_ = Rng(seeds.data);
  const long n = static_cast<long>(target_.size());
  steps_per_epoch_ = cfg_.steps_per_epoch > 0 ? cfg_.steps_per_epoch : (n + cfg_.batch_size - 1) / cfg_.batch_size;
}

DomainTrainer::DomainTrainer(const Archive& a, std::vector<Image> source, std::vector<Image> target,
                             nn::FeatureExtractor extractor)
    : DomainTrainer(read_config(a, Stage::domain), std::move(source), std::move(target), std::move(extractor)) {
  restore_params(a, "g/", g_.params());
  restore_params(a, "d/", d_.params());
  restore_buffers(a, "dbuf/", d_.buffers());
  opt_g_.load(a, "opt_g/");
  opt_d_.load(a, "opt_d/");
  rng_ = rng_from_state(a.string("rng"));
  iteration_ = static_cast<long>(a.scalar("iteration"));
}

void DomainTrainer::check_images() const {
  if (source_.empty() || target_.empty()) throw std::invalid_argument("train_domain: empty dataset");
  const int p = cfg_.patch_size, t = cfg_.patch_size * cfg_.scale;
  for (std::size_t i = 0; i < source_.size(); ++i) {
    if (source_[i].channels() != cfg_.channels || source_[i].height() < p || source_[i].width() < p) {
      throw std::invalid_argument("source image " + std::to_string(i) + " (" + source_[i].shape_string() +
                                  ") cannot supply " + std::to_string(p) + "x" + std::to_string(p) + " crops");
    }
  }
  for (std::size_t i = 0; i < target_.size(); ++i) {
    if (target_[i].channels() != cfg_.channels || target_[i].height() < t || target_[i].width() < t) {
      throw std::invalid_argument("target image " + std::to_string(i) + " (" + target_[i].shape_string() +
                                  ") cannot supply " + std::to_string(t) + "x" + std::to_string(t) + " crops");
    }
  }
}

DomainStepRecord DomainTrainer::step(bool update_discriminator) {
  if (iteration_ >= total_iterations()) throw std::logic_error("domain training already finished");
  const std::string rng_before = rng_state(rng_);
  std::optional<nn::PatchDiscriminator> d_before;
  std::optional<nn::Adam> opt_d_before;
  auto abort = [&](const std::string& why) {
    if (d_before) d_ = *d_before;
    if (opt_d_before) opt_d_ = *opt_d_before;
    rng_ = rng_from_state(rng_before);
    throw TrainingAborted("domain training aborted at iteration " + std::to_string(iteration_ + 1) + ": " + why,
                          checkpoint());
  };

  DomainStepRecord rec;
  rec.iteration = iteration_ + 1;
  rec.epoch = iteration_ / steps_per_epoch_;
  rec.lr = lr_schedule_domain(cfg_.base_lr, rec.epoch, cfg_.total, cfg_.decay_start);

  const int p = cfg_.patch_size, s = cfg_.scale, big = p * s;
  std::vector<Image> zs, xs;
  for (int b = 0; b < cfg_.batch_size; ++b) {
    const Image& y = target_[uniform_int(rng_, 0, static_cast<int>(target_.size()) - 1)];
    const int ty = uniform_int(rng_, 0, y.height() - big), tx = uniform_int(rng_, 0, y.width() - big);
    const Image crop_y = crop_and_transform(y, ty, tx, big, pick_transform(rng_, cfg_.flips, cfg_.rot90));
    zs.push_back(s == 1 ? crop_y : bicubic_resize(crop_y, 1.0 / s));
    const Image& x = source_[uniform_int(rng_, 0, static_cast<int>(source_.size()) - 1)];
    const int sy = uniform_int(rng_, 0, x.height() - p), sx = uniform_int(rng_, 0, x.width() - p);
    xs.push_back(crop_and_transform(x, sy, sx, p, pick_transform(rng_, cfg_.flips, cfg_.rot90)));
  }
  const Tensor z = nn::stack(zs), x = nn::stack(xs);

  const bool adversarial = cfg_.weights.tex > 0.0;
  const bool train_d = adversarial && update_discriminator;
  auto disc_input = [&](Var v) { return cfg_.highpass_dx ? nn::highpass(v, blur_) : v; };

  if (train_d) {
    d_before = d_;
    opt_d_before = opt_d_;
    Tape tape;
    const Tensor fake_batch = g_.forward_frozen(tape, tape.constant(z)).value();
    d_.params().zero_grad();
    const Var real_scores = d_.forward(tape, disc_input(tape.constant(x)), Phase::train);
    const Var fake_scores = d_.forward(tape, disc_input(tape.constant(fake_batch)), Phase::train);
    const Var loss = nn::ragan_discriminator_loss(real_scores, fake_scores);
    rec.d_loss = loss.value().item();
    if (!std::isfinite(rec.d_loss)) abort("discriminator loss is not finite");
    tape.backward(loss);
    opt_d_.step(d_.params(), rec.lr);
  }

  Tape tape;
  g_.params().zero_grad();
  const Var out = g_.forward(tape, tape.constant(z));
  const Var zc = tape.constant(z);
  nn::DomainLossVars terms;
  terms.color = nn::color_loss(out, zc, blur_);
  terms.per = nn::perceptual_loss(extractor_, out, zc);
  if (adversarial) {
    const Var xc = tape.constant(x);
    const bool frozen = !update_discriminator;
    const Var real_scores = frozen ? d_.forward_frozen(tape, disc_input(xc))
                                   : d_.forward(tape, disc_input(xc), Phase::train, false);
    const Var fake_scores = frozen ? d_.forward_frozen(tape, disc_input(out))
                                   : d_.forward(tape, disc_input(out), Phase::train, false);
    terms.tex = nn::ragan_generator_loss(real_scores, fake_scores);
  }
  rec.terms.color = terms.color.value().item();
  rec.terms.per = terms.per.value().item();
  rec.terms.tex = adversarial ? terms.tex.value().item() : 0.0;
  try {
    rec.total = nn::domain_composite_loss(cfg_.weights, rec.terms);
  } catch (const std::domain_error& e) {
    abort(e.what());
  }
  tape.backward(nn::domain_composite_loss(cfg_.weights, terms));
  const nn::ParamStore g_before = g_.params();
  const nn::Adam opt_g_before = opt_g_;
  opt_g_.step(g_.params(), rec.lr);
  try {
    nn::require_finite(g_.params(), "domain generator");
  } catch (const std::domain_error& e) {
    g_.params() = g_before;
    opt_g_ = opt_g_before;
    abort(e.what());
  }

  ++iteration_;
  trace_.push_back(rec);
  return rec;
}

void DomainTrainer::run(long until, const TrainOptions& opts) {
  const long end = until > 0 ? std::min(until, total_iterations()) : total_iterations();
  std::optional<CheckpointRotation> rotation;
  if (!opts.out_dir.empty()) {
    std::filesystem::create_directories(opts.out_dir);
    write_text(opts.out_dir / "config.txt", echo_config(cfg_));
    rotation.emplace(opts.out_dir, cfg_.keep_checkpoints);
  }
  while (iteration_ < end) {
    DomainStepRecord rec;
    try {
      rec = step(!opts.freeze_discriminator);
    } catch (const TrainingAborted& e) {
      if (!opts.out_dir.empty()) {
        e.last_good().save(opts.out_dir / "last_good.ckpt");
        write_text(opts.out_dir / "trace.csv", domain_trace_csv(trace_));
      }
      throw;
    }
    if (opts.on_domain_step) opts.on_domain_step(rec, g_);
    if (rotation && iteration_ % cfg_.checkpoint_every == 0) rotation->save(checkpoint(), iteration_);
  }
  if (!opts.out_dir.empty()) {
    write_text(opts.out_dir / "trace.csv", domain_trace_csv(trace_));
    checkpoint().save(opts.out_dir / "final.ckpt");
  }
}

Archive DomainTrainer::checkpoint() const {
  Archive a;
  write_common(a, cfg_, rng_, iteration_);
  store_params(a, "g/", g_.params());
  store_params(a, "d/", d_.params());
  store_buffers(a, "dbuf/", d_.buffers());
  opt_g_.save(a, "opt_g/");
  opt_d_.save(a, "opt_d/");
  return a;
}

DomainTrainResult train_domain(const TrainConfig& cfg, const std::vector<Image>& source,
                               const std::vector<Image>& target, const TrainOptions& opts) {
  DomainTrainer trainer(cfg, source, target, nn::FeatureExtractor::named(cfg.extractor, cfg.channels));
  trainer.run(opts.stop_after, opts);
  return {trainer.checkpoint(), trainer.generator(), trainer.trace()};
}

std::vector<SamplePair> generate_lr_dataset(const nn::DomainGenerator& gd, const std::vector<Image>& hr_images,
                                            int scale) {
  if (scale != 1 && scale != 2 && scale != 4) throw std::invalid_argument("scale must be 1, 2 or 4");
  std::vector<SamplePair> pairs;
  for (std::size_t i = 0; i < hr_images.size(); ++i) {
    const Image& hr = hr_images[i];
    if (hr.height() % scale != 0 || hr.width() % scale != 0) {
      throw std::invalid_argument("HR image " + std::to_string(i) + " (" + hr.shape_string() +
                                  ") is not divisible by scale " + std::to_string(scale));
    }
    const Image z = scale == 1 ? hr : bicubic_resize(hr, 1.0 / scale);
    pairs.push_back({gd.infer(z), hr});
  }
  return pairs;
}

}  // namespace srres
