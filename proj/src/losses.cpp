#include "srres/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "srres/ops.hpp"

namespace srres::nn {

void LossWeights::validate() const {
  const double all[] = {per, gan, tv, l1, color, tex, per_domain};
  for (double w : all) {
    if (!(std::isfinite(w) && w >= 0.0)) throw std::invalid_argument("loss weights must be finite and >= 0");
  }
}

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// log(max(sigmoid(x), kLogClamp)) and its derivative (zero where clamped).
struct ClampedLogSigmoid {
  double value;
  double grad;
};

ClampedLogSigmoid log_sigmoid(double x) {
  const double ls = x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
  static const double floor = std::log(kLogClamp);
  if (ls < floor) return {floor, 0.0};
  return {ls, 1.0 / (1.0 + std::exp(x))};  // d/dx log sigmoid(x) = sigmoid(-x)
}

// L = -mean_i log sig(sa * (r_i - mean f)) - mean_j log sig(sb * (f_j - mean r)).
Var ragan(Var real, Var fake, double sa, double sb) {
  const Tensor& rv = real.value();
  const Tensor& fv = fake.value();
  if (rv.size() == 0 || fv.size() == 0) throw std::invalid_argument("ragan loss: empty score batch");
  const double n = static_cast<double>(rv.size()), m = static_cast<double>(fv.size());
  double mr = 0.0, mf = 0.0;
  for (double v : rv.values()) mr += v;
  for (double v : fv.values()) mf += v;
  mr /= n;
  mf /= m;

  Tensor ga = Tensor::like(rv), gb = Tensor::like(fv);
  double loss = 0.0;
  for (std::size_t i = 0; i < rv.size(); ++i) {
    const auto t = log_sigmoid(sa * (rv[i] - mf));
    loss -= t.value / n;
    ga[i] = -sa * t.grad / n;
  }
  for (std::size_t j = 0; j < fv.size(); ++j) {
    const auto t = log_sigmoid(sb * (fv[j] - mr));
    loss -= t.value / m;
    gb[j] = -sb * t.grad / m;
  }
  return real.tape().record(Tensor::scalar(loss), {real, fake}, [real, fake, ga, gb](Tape& tape, const Tensor& g) {
    double sum_a = 0.0, sum_b = 0.0;
    for (double v : ga.values()) sum_a += v;
    for (double v : gb.values()) sum_b += v;
    // a_i = r_i - mean f, b_j = f_j - mean r.
    Tensor dr = ga, df = gb;
    for (std::size_t i = 0; i < dr.size(); ++i) dr[i] = g[0] * (ga[i] - sum_b / static_cast<double>(dr.size()));
    for (std::size_t j = 0; j < df.size(); ++j) df[j] = g[0] * (gb[j] - sum_a / static_cast<double>(df.size()));
    tape.accumulate(real, dr);
    tape.accumulate(fake, df);
  });
}

Tensor as_scores(const std::vector<double>& v) {
  if (v.empty()) throw std::invalid_argument("ragan loss: empty score batch");
  Tensor t(static_cast<int>(v.size()), 1, 1, 1);
  std::copy(v.begin(), v.end(), t.data());
  return t;
}

void require_finite_term(double v, const char* name) {
  if (!std::isfinite(v)) throw std::domain_error(std::string("loss term '") + name + "' is not finite");
}

struct WeightedTerm {
  double weight;
  Var var;
  const char* name;
};

Var weighted_sum(std::initializer_list<WeightedTerm> terms) {
  Tape* tape = nullptr;
  Var total;
  for (const WeightedTerm& t : terms) {
    if (t.var.valid()) tape = &t.var.tape();
    if (t.weight == 0.0) continue;
    if (!t.var.valid()) throw std::logic_error(std::string("loss term '") + t.name + "' has weight but no value");
    require_finite_term(t.var.value().item(), t.name);
    const Var w = scale(t.var, t.weight);
    total = total.valid() ? add(total, w) : w;
  }
  if (!total.valid()) {
    if (!tape) throw std::logic_error("composite loss without any term");
    total = tape->constant(Tensor::scalar(0.0));
  }
  return total;
}

}  // namespace

Var l1_loss(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "l1_loss");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  return a.tape().record(Tensor::scalar(s / n), {a, b}, [a, b, n](Tape& tape, const Tensor& g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    Tensor da = Tensor::like(av);
    for (std::size_t i = 0; i < av.size(); ++i) da[i] = g[0] * sign(av[i] - bv[i]) / n;
    tape.accumulate(a, da);
    if (b.requires_grad()) {
      da *= -1.0;
      tape.accumulate(b, da);
    }
  });
}

Var tv_loss(Var sr, Var hr) {
  require_same_shape(sr.value(), hr.value(), "tv_loss");
  const Tensor& sv = sr.value();
  const Tensor& hv = hr.value();
  const int N = sv.n(), C = sv.c(), H = sv.h(), W = sv.w();
  const double nh = static_cast<double>(N) * C * H * (W - 1);
  const double nv = static_cast<double>(N) * C * (H - 1) * W;
  // e = sr - hr; gradient discrepancies are differences of e.
  auto e = [&](int n, int c, int y, int x) { return sv(n, c, y, x) - hv(n, c, y, x); };
  double th = 0.0, tv = 0.0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (x + 1 < W) th += std::abs(e(n, c, y, x + 1) - e(n, c, y, x));
          if (y + 1 < H) tv += std::abs(e(n, c, y + 1, x) - e(n, c, y, x));
        }
      }
    }
  }
  const double value = (nh > 0 ? th / nh : 0.0) + (nv > 0 ? tv / nv : 0.0);
  return sr.tape().record(Tensor::scalar(value), {sr, hr}, [sr, hr, nh, nv](Tape& tape, const Tensor& g) {
    const Tensor& sv = sr.value();
    const Tensor& hv = hr.value();
    Tensor de = Tensor::like(sv);
    const int N = sv.n(), C = sv.c(), H = sv.h(), W = sv.w();
    auto e = [&](int n, int c, int y, int x) { return sv(n, c, y, x) - hv(n, c, y, x); };
    for (int n = 0; n < N; ++n) {
      for (int c = 0; c < C; ++c) {
        for (int y = 0; y < H; ++y) {
          for (int x = 0; x < W; ++x) {
            if (x + 1 < W) {
              const double s = g[0] * sign(e(n, c, y, x + 1) - e(n, c, y, x)) / nh;
              de(n, c, y, x + 1) += s;
              de(n, c, y, x) -= s;
            }
            if (y + 1 < H) {
              const double s = g[0] * sign(e(n, c, y + 1, x) - e(n, c, y, x)) / nv;
              de(n, c, y + 1, x) += s;
              de(n, c, y, x) -= s;
            }
          }
        }
      }
    }
    tape.accumulate(sr, de);
    if (hr.requires_grad()) {
      de *= -1.0;
      tape.accumulate(hr, de);
    }
  });
}

Var perceptual_loss(const FeatureExtractor& ext, Var sr, Var hr) {
  require_same_shape(sr.value(), hr.value(), "perceptual_loss");
  Tape& tape = sr.tape();
  const std::vector<Var> fs = ext.features(tape, sr);
  const std::vector<Var> fh = ext.features(tape, hr);
  Var total = l1_loss(fs[0], fh[0]);
  for (std::size_t i = 1; i < fs.size(); ++i) total = add(total, l1_loss(fs[i], fh[i]));
  return scale(total, 1.0 / static_cast<double>(fs.size()));
}

Var color_loss(Var a, Var b, const GaussianBlur& blur_op) {
  require_same_shape(a.value(), b.value(), "color_loss");
  return l1_loss(blur(a, blur_op), blur(b, blur_op));
}

Var ragan_generator_loss(Var real_scores, Var fake_scores) { return ragan(real_scores, fake_scores, -1.0, 1.0); }

Var ragan_discriminator_loss(Var real_scores, Var fake_scores) {
  return ragan(real_scores, fake_scores, 1.0, -1.0);
}

double l1_loss(const Tensor& a, const Tensor& b) {
  Tape t;
  return l1_loss(t.constant(a), t.constant(b)).value().item();
}

double tv_loss(const Tensor& sr, const Tensor& hr) {
  Tape t;
  return tv_loss(t.constant(sr), t.constant(hr)).value().item();
}

double perceptual_loss(const FeatureExtractor& ext, const Tensor& sr, const Tensor& hr) {
  Tape t;
  return perceptual_loss(ext, t.constant(sr), t.constant(hr)).value().item();
}

double color_loss(const Tensor& a, const Tensor& b, const GaussianBlur& blur_op) {
  Tape t;
  return color_loss(t.constant(a), t.constant(b), blur_op).value().item();
}

double ragan_generator_loss(const std::vector<double>& real_scores, const std::vector<double>& fake_scores) {
  Tape t;
  return ragan_generator_loss(t.constant(as_scores(real_scores)), t.constant(as_scores(fake_scores))).value().item();
}

double ragan_discriminator_loss(const std::vector<double>& real_scores,
                                const std::vector<double>& fake_scores) {
  Tape t;
  return ragan_discriminator_loss(t.constant(as_scores(real_scores)), t.constant(as_scores(fake_scores)))
      .value()
      .item();
}

double sr_composite_loss(const LossWeights& w, const SrLossTerms& t) {
  require_finite_term(t.per, "perceptual");
  require_finite_term(t.gan, "gan");
  require_finite_term(t.tv, "tv");
  require_finite_term(t.l1, "l1");
  return w.per * t.per + w.gan * t.gan + w.tv * t.tv + w.l1 * t.l1;
}

double domain_composite_loss(const LossWeights& w, const DomainLossTerms& t) {
  require_finite_term(t.color, "color");
  require_finite_term(t.tex, "texture");
  require_finite_term(t.per, "perceptual");
  return w.color * t.color + w.tex * t.tex + w.per_domain * t.per;
}

Var sr_composite_loss(const LossWeights& w, const SrLossVars& t) {
  return weighted_sum({{w.per, t.per, "perceptual"}, {w.gan, t.gan, "gan"}, {w.tv, t.tv, "tv"}, {w.l1, t.l1, "l1"}});
}

Var domain_composite_loss(const LossWeights& w, const DomainLossVars& t) {
  return weighted_sum({{w.color, t.color, "color"}, {w.tex, t.tex, "texture"}, {w.per_domain, t.per, "perceptual"}});
}

}  // namespace srres::nn
