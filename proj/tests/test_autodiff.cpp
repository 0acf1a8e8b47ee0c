#include <gtest/gtest.h>

#include <cmath>

#include "srres/ops.hpp"
#include "test_util.hpp"

namespace srres::nn {
namespace {

using srres::testing::gradient_check;
using srres::testing::probe_sum;
using srres::testing::random_tensor;
using srres::testing::relative_error;

constexpr double kTol = 1e-6;

void expect_gradients_match(const srres::testing::ScalarFn& f, const Tensor& x, double tol = kTol) {
  const auto g = gradient_check(f, x);
  EXPECT_LT(relative_error(g.analytic, g.numeric), tol);
}

TEST(Tape, SharedInputAccumulates) {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(3.0));
  tape.backward(add(x, scale(x, 2.0)));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 3.0);
}

TEST(Tape, ConstantsCarryNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::scalar(2.0));
  Var x = tape.leaf(Tensor::scalar(5.0));
  Var y = scale(x, c);
  EXPECT_FALSE(c.requires_grad());
  EXPECT_TRUE(y.requires_grad());
  EXPECT_FALSE(add(c, c).requires_grad());
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 2.0);
}

TEST(Tape, UnreachedLeafHasZeroGradient) {
  Tape tape;
  Var a = tape.leaf(Tensor(1, 2, 2, 2, 1.0));
  Var b = tape.leaf(Tensor::scalar(4.0));
  tape.backward(scale(b, 3.0));
  EXPECT_EQ(tape.grad(a), Tensor(1, 2, 2, 2));
}

TEST(Tape, ParamGradientsAccumulateAcrossTapes) {
  Param p{Tensor::scalar(2.0), Tensor::scalar(0.0)};
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    Var v = tape.param(p);
    tape.backward(scale(v, v));
  }
  EXPECT_DOUBLE_EQ(p.grad.item(), 8.0);
  p.zero_grad();
  EXPECT_DOUBLE_EQ(p.grad.item(), 0.0);
}

TEST(Tape, BackwardRequiresScalarRoot) {
  Tape tape;
  Var x = tape.leaf(Tensor(1, 1, 2, 2, 1.0));
  EXPECT_THROW(tape.backward(x), std::logic_error);
}

TEST(ParamStore, NamesAndCounts) {
  ParamStore s;
  s.add("b", Tensor(1, 2, 3, 3));
  s.add("a", Tensor::scalar(1.0));
  EXPECT_EQ(s.scalar_count(), 19u);
  EXPECT_EQ(s.items().begin()->first, "a");
  EXPECT_TRUE(s.contains("b"));
  EXPECT_THROW(s.at("missing"), std::out_of_range);
}

TEST(OpsGradient, Arithmetic) {
  const Tensor x = random_tensor(2, 2, 3, 3, 1);
  const Tensor other = random_tensor(2, 2, 3, 3, 2);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, add(v, t.constant(other))); }, x);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, sub(t.constant(other), v)); }, x);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, scale(v, -1.7)); }, x);
  const Tensor s = Tensor::scalar(0.6);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, scale(t.constant(x), v)); }, s);
  expect_gradients_match([](Tape&, Var v) { return sum(v); }, x);
  expect_gradients_match([](Tape&, Var v) { return mean(v); }, x);
}

TEST(OpsGradient, Activations) {
  const Tensor x = random_tensor(2, 3, 4, 4, 3);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, relu(v)); }, x);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, leaky_relu(v, 0.2)); }, x);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, sigmoid(scale(v, 3.0))); }, x);
  const Tensor wide = random_tensor(1, 2, 5, 5, 4, -0.5, 1.5);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, clip01(v)); }, wide);
}

TEST(OpsGradient, PReLUInputAndSlope) {
  const Tensor x = random_tensor(2, 3, 4, 4, 5);
  for (int k : {1, 3}) {
    const Tensor slope = random_tensor(1, k, 1, 1, 6, 0.05, 0.4);
    expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, prelu(v, t.constant(slope))); }, x);
    expect_gradients_match([&](Tape& t, Var a) { return probe_sum(t, prelu(t.constant(x), a)); }, slope);
  }
}

TEST(OpsGradient, ConvolutionAllArguments) {
  const Tensor x = random_tensor(2, 2, 6, 6, 7);
  const Tensor w = random_tensor(3, 2, 3, 3, 8);
  const Tensor b = random_tensor(1, 3, 1, 1, 9);
  for (const ConvGeometry g : {ConvGeometry{1, 1, Padding::zero}, ConvGeometry{2, 1, Padding::reflect},
                               ConvGeometry{1, 0, Padding::zero}}) {
    expect_gradients_match(
        [&](Tape& t, Var v) { return probe_sum(t, conv2d(v, t.constant(w), t.constant(b), g)); }, x);
    expect_gradients_match(
        [&](Tape& t, Var v) { return probe_sum(t, conv2d(t.constant(x), v, t.constant(b), g)); }, w);
    expect_gradients_match(
        [&](Tape& t, Var v) { return probe_sum(t, conv2d(t.constant(x), t.constant(w), v, g)); }, b);
  }
}

TEST(Conv, MatchesDirectLoop) {
  const Tensor x = random_tensor(1, 2, 5, 5, 10);
  const Tensor w = random_tensor(2, 2, 3, 3, 11);
  Tape tape;
  const Tensor y = conv2d(tape.constant(x), tape.constant(w), Var{}, {1, 1, Padding::zero}).value();
  ASSERT_EQ(y.shape(), (std::array<int, 4>{1, 2, 5, 5}));
  for (int k = 0; k < 2; ++k) {
    for (int i = 0; i < 5; ++i) {
      for (int j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (int c = 0; c < 2; ++c)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
              const int yi = i + a - 1, xj = j + b - 1;
              if (yi >= 0 && yi < 5 && xj >= 0 && xj < 5) acc += w(k, c, a, b) * x(0, c, yi, xj);
            }
        EXPECT_NEAR(y(0, k, i, j), acc, 1e-13);
      }
    }
  }
}

TEST(Conv, AdjointIdentityAndGradient) {
  const Tensor w = random_tensor(3, 2, 5, 5, 12);
  for (const ConvGeometry g : {same_reflect(5), ConvGeometry{2, 2, Padding::zero}}) {
    const Tensor x = random_tensor(2, 2, 8, 8, 13);
    Tape tape;
    const Tensor ax = conv2d(tape.constant(x), tape.constant(w), Var{}, g).value();
    const Tensor f = random_tensor(ax.n(), ax.c(), ax.h(), ax.w(), 14);
    const Tensor atf = conv2d_adjoint(tape.constant(f), tape.constant(w), g, 8, 8).value();
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax[i] * f[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * atf[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
    expect_gradients_match(
        [&](Tape& t, Var v) { return probe_sum(t, conv2d_adjoint(v, t.constant(w), g, 8, 8)); }, f);
    expect_gradients_match(
        [&](Tape& t, Var v) { return probe_sum(t, conv2d_adjoint(t.constant(f), v, g, 8, 8)); }, w);
  }
}

TEST(OpsGradient, Linear) {
  const Tensor x = random_tensor(3, 2, 2, 2, 15);
  const Tensor w = random_tensor(4, 8, 1, 1, 16);
  const Tensor b = random_tensor(1, 4, 1, 1, 17);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, linear(v, t.constant(w), t.constant(b))); }, x);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, linear(t.constant(x), v, t.constant(b))); }, w);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, linear(t.constant(x), t.constant(w), v)); }, b);
}

TEST(OpsGradient, BatchNormTrain) {
  const Tensor x = random_tensor(3, 2, 3, 3, 18);
  const Tensor gamma = random_tensor(1, 2, 1, 1, 19, 0.5, 1.5);
  const Tensor beta = random_tensor(1, 2, 1, 1, 20);
  auto bn = [&](Tape& t, Var xv, Var gv, Var bv) {
    Tensor rm = Tensor::like(gamma), rv = Tensor::like(gamma, 1.0);
    return probe_sum(t, batch_norm_train(xv, gv, bv, rm, rv));
  };
  expect_gradients_match([&](Tape& t, Var v) { return bn(t, v, t.constant(gamma), t.constant(beta)); }, x, 1e-5);
  expect_gradients_match([&](Tape& t, Var v) { return bn(t, t.constant(x), v, t.constant(beta)); }, gamma);
  expect_gradients_match([&](Tape& t, Var v) { return bn(t, t.constant(x), t.constant(gamma), v); }, beta);
}

TEST(BatchNorm, StatisticsAndRunningUpdate) {
  const Tensor x = random_tensor(4, 1, 2, 2, 21);
  Tensor rm = Tensor::scalar(0.0), rv = Tensor::scalar(1.0);
  Tape tape;
  const Tensor y = batch_norm_train(tape.constant(x), tape.constant(Tensor::scalar(1.0)),
                                    tape.constant(Tensor::scalar(0.0)), rm, rv, 0.1, 0.0)
                       .value();
  double m = 0.0, s = 0.0;
  for (double v : x.values()) m += v;
  m /= 16.0;
  for (double v : x.values()) s += (v - m) * (v - m);
  double ym = 0.0, yv = 0.0;
  for (double v : y.values()) ym += v;
  for (double v : y.values()) yv += v * v;
  EXPECT_NEAR(ym / 16.0, 0.0, 1e-12);
  EXPECT_NEAR(yv / 16.0, 1.0, 1e-12);
  EXPECT_NEAR(rm[0], 0.1 * m, 1e-14);
  EXPECT_NEAR(rv[0], 0.9 + 0.1 * s / 15.0, 1e-14);

  const Tensor e = batch_norm_eval(tape.constant(x), tape.constant(Tensor::scalar(2.0)),
                                   tape.constant(Tensor::scalar(0.5)), rm, rv, 0.0)
                       .value();
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(e[i], 2.0 * (x[i] - rm[0]) / std::sqrt(rv[0]) + 0.5, 1e-12);
}

TEST(OpsGradient, BatchNormEval) {
  const Tensor x = random_tensor(2, 2, 3, 3, 22);
  const Tensor rm = random_tensor(1, 2, 1, 1, 23), rv = random_tensor(1, 2, 1, 1, 24, 0.5, 2.0);
  const Tensor gamma = random_tensor(1, 2, 1, 1, 25), beta = random_tensor(1, 2, 1, 1, 26);
  expect_gradients_match(
      [&](Tape& t, Var v) {
        return probe_sum(t, batch_norm_eval(v, t.constant(gamma), t.constant(beta), rm, rv));
      },
      x);
  expect_gradients_match(
      [&](Tape& t, Var v) { return probe_sum(t, batch_norm_eval(t.constant(x), v, t.constant(beta), rm, rv)); },
      gamma);
}

TEST(OpsGradient, ResamplingAndFiltering) {
  const Tensor x = random_tensor(2, 2, 8, 8, 27);
  const Resampler down(8, 8, 0.5, ResampleKernel::bicubic);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, resample(v, down)); }, x);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, upsample_bilinear(v, 2)); }, x);
  const GaussianBlur g(5, 1.5);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, blur(v, g)); }, x);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, highpass(v, g)); }, x);
}

TEST(Resample, MatchesImageResize) {
  const Image img = srres::testing::random_image(3, 6, 6, 28);
  Tape tape;
  const Tensor up = upsample_bilinear(tape.constant(stack({img})), 4).value();
  EXPECT_LE(max_abs_diff(unstack(up, 0), bilinear_resize(img, 4.0)), 1e-14);
}

TEST(OpsGradient, ProjectBallBothArguments) {
  const Tensor z = random_tensor(3, 2, 4, 4, 29);
  // Mixed: sample 0 inside its ball, the others projected.
  const std::vector<double> sigmas{10.0, 0.05, 0.1};
  const Tensor alpha = Tensor::scalar(0.3);
  expect_gradients_match([&](Tape& t, Var v) { return probe_sum(t, project_ball(v, t.constant(alpha), sigmas)); },
                         z);
  expect_gradients_match([&](Tape& t, Var a) { return probe_sum(t, project_ball(t.constant(z), a, sigmas)); },
                         alpha);
}

TEST(ProjectBall, RadiusAndInteriorIdentity) {
  const Tensor z = random_tensor(2, 3, 8, 8, 30);
  Tape tape;
  const Tensor y = project_ball(tape.constant(z), tape.constant(Tensor::scalar(0.0)), {0.1, 100.0}).value();
  double n0 = 0.0;
  for (std::size_t i = 0; i < z.sample_size(); ++i) n0 += y.sample(0)[i] * y.sample(0)[i];
  EXPECT_NEAR(std::sqrt(n0), 0.1 * std::sqrt(191.0), 1e-12);
  for (std::size_t i = 0; i < z.sample_size(); ++i) EXPECT_EQ(y.sample(1)[i], z.sample(1)[i]);
  EXPECT_THROW(project_ball(tape.constant(z), tape.constant(Tensor::scalar(0.0)), {0.1, 0.1, 0.1}),
               std::invalid_argument);
  EXPECT_THROW(project_ball(tape.constant(z), tape.constant(Tensor::scalar(0.0)), {-0.1}), std::invalid_argument);
}

TEST(OpsGradient, NormalizeFilters) {
  const Tensor raw = random_tensor(3, 2, 3, 3, 31);
  expect_gradients_match([](Tape& t, Var v) { return probe_sum(t, normalize_filters(v)); }, raw);
}

TEST(NormalizeFilters, ConstraintsAndConstantKernel) {
  const Tensor n = normalize_filters(random_tensor(4, 3, 5, 5, 32));
  const std::size_t vol = n.sample_size();
  for (int k = 0; k < 4; ++k) {
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < vol; ++i) m += n.sample(k)[i];
    m /= static_cast<double>(vol);
    for (std::size_t i = 0; i < vol; ++i) s += n.sample(k)[i] * n.sample(k)[i];
    EXPECT_NEAR(m, 0.0, 1e-14);
    EXPECT_NEAR(std::sqrt(s), 1.0, 1e-14);
  }
  EXPECT_THROW(normalize_filters(Tensor(1, 1, 3, 3, 0.7)), std::domain_error);
}

}  // namespace
}  // namespace srres::nn
