#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <vector>

#include "srres/image.hpp"
#include "srres/resample.hpp"

namespace srres {

/// K convolution kernels of shape C x k x k acting as the regularization
/// operators. Weights are stored kernel-major.
struct FilterBank {
  int count = 0;
  int channels = 0;
  int size = 0;
  std::vector<double> weights;

  FilterBank() = default;
  FilterBank(int count, int channels, int size);

  std::size_t kernel_volume() const { return static_cast<std::size_t>(channels) * size * size; }
  double& at(int k, int c, int y, int x) {
    return weights[((static_cast<std::size_t>(k) * channels + c) * size + y) * size + x];
  }
  double at(int k, int c, int y, int x) const {
    return weights[((static_cast<std::size_t>(k) * channels + c) * size + y) * size + x];
  }

  double kernel_mean(int k) const;
  double kernel_norm(int k) const;
  /// Throws std::domain_error if any kernel violates zero mean / unit norm.
  void check_constraints(double tol = 1e-8) const;
};

/// Centred horizontal and vertical first differences, one pair per channel.
FilterBank derivative_filter_bank(int channels);
/// Seeded random kernels, centred and normalized.
FilterBank random_filter_bank(int count, int channels, int size, std::uint64_t seed);

/// Cross-correlation with every kernel under reflection padding.
/// Returns a K x H x W stack.
Image apply_filter_bank(const FilterBank& bank, const Image& img);
/// Exact adjoint of apply_filter_bank: maps K x H x W back to C x H x W.
Image apply_filter_bank_adjoint(const FilterBank& bank, const Image& features);

/// PReLU-family potential gradient: phi(t) = t for t >= 0, a_k t below.
/// The potential itself is its antiderivative, t^2/2 resp. a_k t^2/2.
struct Potential {
  std::vector<double> slopes{0.25};  ///< one shared slope or one per kernel

  double slope(int k) const { return slopes.size() == 1 ? slopes[0] : slopes[k]; }
  double grad(double t, int k) const { return t >= 0.0 ? t : slope(k) * t; }
  double value(double t, int k) const { return t >= 0.0 ? 0.5 * t * t : 0.5 * slope(k) * t * t; }
};

enum class UpsampleMode { adjoint, bilinear };

/// F(X) = 1/2 ||Y - H X||^2 + lam * sum_k sum_pixels rho_k(L_k X), with step
/// size `step` for the proximal gradient iteration.
struct EnergyModel {
  int scale = 1;
  double lam = 0.1;
  FilterBank bank;
  Potential phi;
  double step = 1.0;

  void validate() const;
};

/// Euclidean ball {X : ||X||_2 <= epsilon}.
struct BallConstraint {
  double epsilon = std::numeric_limits<double>::infinity();
};

/// Bicubic downscaling operator H for a fixed high-resolution raster, with
/// its adjoint. Scale 1 is the identity.
class ObservationOperator {
 public:
  ObservationOperator(int scale, int hr_height, int hr_width);

  Image forward(const Image& x) const;
  Image adjoint(const Image& y) const;

 private:
  int scale_;
  Resampler resampler_;
};

double energy(const EnergyModel& model, const Image& x, const Image& y);
Image energy_grad(const EnergyModel& model, const Image& x, const Image& y);

Image prox_ball(const Image& z, const BallConstraint& c);

/// prox(X - step * grad F(X)).
Image pgm_step(const EnergyModel& model, const Image& x_prev, const Image& y,
               const BallConstraint& c);

/// Largest eigenvalue of H^T H + lam * max(1, a) * sum_k L_k^T L_k, by power
/// iteration. Bounds the Lipschitz constant of grad F.
double estimate_lipschitz(const EnergyModel& model, int channels, int hr_height, int hr_width,
                          int iterations = 20, std::uint64_t seed = 7);

struct SolveResult {
  Image x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> energies;  ///< F at X^0, X^1, ...
};

/// Proximal gradient iteration from X^0 = 0, stopped when the relative
/// change ||X^t - X^{t-1}|| / ||X^{t-1}|| drops below `tol`. Throws
/// std::runtime_error if the energy rises for 10 consecutive steps. When
/// `trace_path` is non-empty an `iteration,energy` CSV is written.
SolveResult pgm_solve(const EnergyModel& model, const Image& y, const BallConstraint& c,
                      int max_iters = 500, double tol = 1e-6,
                      const std::filesystem::path& trace_path = {});

/// Upscaling used in place of H^T Y.
Image upsample_observation(const Image& y, int scale, UpsampleMode mode);

/// prox(U - alpha * sum_k L_k^T phi_k(L_k U)) with U = H^T Y realized per `mode`.
Image one_step_inference(const EnergyModel& model, const Image& y, const BallConstraint& c,
                         double alpha, UpsampleMode mode = UpsampleMode::adjoint);

}  // namespace srres
