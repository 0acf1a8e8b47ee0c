#include "srres/variational.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "srres/imaging.hpp"
#include "srres/rng.hpp"

namespace srres {

FilterBank::FilterBank(int count_, int channels_, int size_)
    : count(count_), channels(channels_), size(size_) {
  if (count < 1 || channels < 1 || size < 1) throw std::invalid_argument("FilterBank: empty shape");
  weights.assign(static_cast<std::size_t>(count) * kernel_volume(), 0.0);
}

double FilterBank::kernel_mean(int k) const {
  const std::size_t n = kernel_volume();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += weights[k * n + i];
  return s / static_cast<double>(n);
}

double FilterBank::kernel_norm(int k) const {
  const std::size_t n = kernel_volume();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += weights[k * n + i] * weights[k * n + i];
  return std::sqrt(s);
}

void FilterBank::check_constraints(double tol) const {
  for (int k = 0; k < count; ++k) {
    const double mean = kernel_mean(k);
    const double nrm = kernel_norm(k);
    if (std::abs(mean) > tol || std::abs(nrm - 1.0) > tol) {
      std::ostringstream os;
      os << "filter " << k << " violates constraints: mean " << mean << ", norm " << nrm;
      throw std::domain_error(os.str());
    }
  }
}

FilterBank derivative_filter_bank(int channels) {
  FilterBank bank(2 * channels, channels, 3);
  const double w = 1.0 / std::sqrt(2.0);
  for (int c = 0; c < channels; ++c) {
    bank.at(2 * c, c, 1, 1) = -w;
    bank.at(2 * c, c, 1, 2) = w;
    bank.at(2 * c + 1, c, 1, 1) = -w;
    bank.at(2 * c + 1, c, 2, 1) = w;
  }
  return bank;
}

FilterBank random_filter_bank(int count, int channels, int size, std::uint64_t seed) {
  FilterBank bank(count, channels, size);
  Rng rng(seed);
  for (double& w : bank.weights) w = normal(rng);
  const std::size_t n = bank.kernel_volume();
  for (int k = 0; k < count; ++k) {
    const double mean = bank.kernel_mean(k);
    for (std::size_t i = 0; i < n; ++i) bank.weights[k * n + i] -= mean;
    const double nrm = bank.kernel_norm(k);
    for (std::size_t i = 0; i < n; ++i) bank.weights[k * n + i] /= nrm;
  }
  return bank;
}

namespace {

void require_bank_matches(const FilterBank& bank, int channels) {
  if (bank.size % 2 == 0) throw std::invalid_argument("filter bank kernels must have odd size");
  if (bank.channels != channels) {
    throw std::invalid_argument("filter bank expects " + std::to_string(bank.channels) +
                                " channels, image has " + std::to_string(channels));
  }
}

}  // namespace

Image apply_filter_bank(const FilterBank& bank, const Image& img) {
  require_bank_matches(bank, img.channels());
  const int h = img.height(), w = img.width(), p = bank.size / 2;
  Image out(bank.count, h, w);
  for (int k = 0; k < bank.count; ++k) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int c = 0; c < bank.channels; ++c) {
          for (int i = 0; i < bank.size; ++i) {
            const int yy = reflect_index(y + i - p, h);
            for (int j = 0; j < bank.size; ++j) {
              acc += bank.at(k, c, i, j) * img(c, yy, reflect_index(x + j - p, w));
            }
          }
        }
        out(k, y, x) = acc;
      }
    }
  }
  return out;
}

Image apply_filter_bank_adjoint(const FilterBank& bank, const Image& features) {
  if (features.channels() != bank.count) {
    throw std::invalid_argument("filter bank adjoint: expected " + std::to_string(bank.count) +
                                " feature maps, got " + std::to_string(features.channels()));
  }
  const int h = features.height(), w = features.width(), p = bank.size / 2;
  Image out(bank.channels, h, w);
  for (int k = 0; k < bank.count; ++k) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double g = features(k, y, x);
        if (g == 0.0) continue;
        for (int c = 0; c < bank.channels; ++c) {
          for (int i = 0; i < bank.size; ++i) {
            const int yy = reflect_index(y + i - p, h);
            for (int j = 0; j < bank.size; ++j) {
              out(c, yy, reflect_index(x + j - p, w)) += bank.at(k, c, i, j) * g;
            }
          }
        }
      }
    }
  }
  return out;
}

void EnergyModel::validate() const {
  if (scale < 1) throw std::invalid_argument("energy model scale must be >= 1");
  if (!(std::isfinite(lam) && lam >= 0.0)) throw std::invalid_argument("lambda must be finite and >= 0");
  if (!(std::isfinite(step) && step >= 0.0)) throw std::invalid_argument("step must be finite and >= 0");
  if (bank.count < 1) throw std::invalid_argument("energy model needs a non-empty filter bank");
  if (phi.slopes.size() != 1 && static_cast<int>(phi.slopes.size()) != bank.count) {
    throw std::invalid_argument("potential slopes must be shared or one per kernel");
  }
}

ObservationOperator::ObservationOperator(int scale, int hr_height, int hr_width) : scale_(scale) {
  if (scale < 1) throw std::invalid_argument("observation scale must be >= 1");
  if (scale > 1) {
    resampler_ = Resampler(hr_height, hr_width, 1.0 / scale, ResampleKernel::bicubic, true);
  }
}

Image ObservationOperator::forward(const Image& x) const {
  return scale_ == 1 ? x : resampler_.apply(x);
}

Image ObservationOperator::adjoint(const Image& y) const {
  return scale_ == 1 ? y : resampler_.adjoint(y);
}

namespace {

void require_observation_dims(const EnergyModel& model, const Image& x, const Image& y) {
  if (x.channels() != y.channels() || x.height() != y.height() * model.scale ||
      x.width() != y.width() * model.scale) {
    throw std::invalid_argument("estimate " + x.shape_string() + " and observation " +
                                y.shape_string() + " do not match scale " +
                                std::to_string(model.scale));
  }
}

// sum_k L_k^T phi_k(L_k X)
Image regularizer_grad(const EnergyModel& model, const Image& x) {
  Image features = apply_filter_bank(model.bank, x);
  for (int k = 0; k < features.channels(); ++k) {
    for (double& v : features.plane(k)) v = model.phi.grad(v, k);
  }
  return apply_filter_bank_adjoint(model.bank, features);
}

}  // namespace

double energy(const EnergyModel& model, const Image& x, const Image& y) {
  model.validate();
  require_observation_dims(model, x, y);
  const ObservationOperator h(model.scale, x.height(), x.width());
  const Image residual = y - h.forward(x);
  double value = 0.5 * dot(residual, residual);
  if (model.lam != 0.0) {
    const Image features = apply_filter_bank(model.bank, x);
    double reg = 0.0;
    for (int k = 0; k < features.channels(); ++k) {
      for (double v : features.plane(k)) reg += model.phi.value(v, k);
    }
    value += model.lam * reg;
  }
  return value;
}

Image energy_grad(const EnergyModel& model, const Image& x, const Image& y) {
  model.validate();
  require_observation_dims(model, x, y);
  const ObservationOperator h(model.scale, x.height(), x.width());
  Image grad = h.adjoint(h.forward(x) - y);
  if (model.lam != 0.0) grad += regularizer_grad(model, x) * model.lam;
  return grad;
}

Image prox_ball(const Image& z, const BallConstraint& c) {
  if (!(c.epsilon >= 0.0)) throw std::invalid_argument("ball radius must be >= 0");
  const double nrm = norm(z);
  if (nrm <= c.epsilon) return z;
  return z * (c.epsilon / nrm);
}

Image pgm_step(const EnergyModel& model, const Image& x_prev, const Image& y,
               const BallConstraint& c) {
  return prox_ball(x_prev - energy_grad(model, x_prev, y) * model.step, c);
}

double estimate_lipschitz(const EnergyModel& model, int channels, int hr_height, int hr_width,
                          int iterations, std::uint64_t seed) {
  model.validate();
  const ObservationOperator h(model.scale, hr_height, hr_width);
  double max_slope = 1.0;
  for (double a : model.phi.slopes) max_slope = std::max(max_slope, std::abs(a));
  const double reg_weight = model.lam * max_slope;

  Rng rng(seed);
  Image v(channels, hr_height, hr_width);
  for (double& e : v.data()) e = normal(rng);
  v *= 1.0 / norm(v);
  double lambda_max = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Image w = h.adjoint(h.forward(v));
    if (reg_weight != 0.0) {
      w += apply_filter_bank_adjoint(model.bank, apply_filter_bank(model.bank, v)) * reg_weight;
    }
    lambda_max = norm(w);
    if (lambda_max == 0.0) break;
    v = w * (1.0 / lambda_max);
  }
  return lambda_max;
}

SolveResult pgm_solve(const EnergyModel& model, const Image& y, const BallConstraint& c,
                      int max_iters, double tol, const std::filesystem::path& trace_path) {
  if (max_iters < 1) throw std::invalid_argument("pgm_solve: max_iters must be >= 1");
  SolveResult result;
  result.x = Image(y.channels(), y.height() * model.scale, y.width() * model.scale);
  result.energies.push_back(energy(model, result.x, y));

  int rising = 0;
  for (int t = 1; t <= max_iters; ++t) {
    Image next = pgm_step(model, result.x, y, c);
    const double change = norm(next - result.x) / std::max(norm(result.x), 1e-300);
    result.x = std::move(next);
    result.iterations = t;
    const double e = energy(model, result.x, y);
    rising = e > result.energies.back() ? rising + 1 : 0;
    result.energies.push_back(e);
    if (rising >= 10) {
      throw std::runtime_error(
          "pgm_solve: energy increased for 10 consecutive steps; use a smaller step size");
    }
    if (change < tol) {
      result.converged = true;
      break;
    }
  }

  if (!trace_path.empty()) {
    std::ofstream trace(trace_path);
    if (!trace) throw std::runtime_error("cannot write solver trace '" + trace_path.string() + "'");
    trace << "iteration,energy\n";
    trace.precision(17);
    for (std::size_t i = 0; i < result.energies.size(); ++i) trace << i << ',' << result.energies[i] << '\n';
  }
  return result;
}

Image upsample_observation(const Image& y, int scale, UpsampleMode mode) {
  if (scale == 1) return y;
  if (mode == UpsampleMode::bilinear) return bilinear_resize(y, scale);
  return ObservationOperator(scale, y.height() * scale, y.width() * scale).adjoint(y);
}

Image one_step_inference(const EnergyModel& model, const Image& y, const BallConstraint& c,
                         double alpha, UpsampleMode mode) {
  model.validate();
  const Image u = upsample_observation(y, model.scale, mode);
  return prox_ball(u - regularizer_grad(model, u) * alpha, c);
}

}  // namespace srres
