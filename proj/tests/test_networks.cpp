#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "srres/networks.hpp"
#include "srres/rng.hpp"
#include "test_util.hpp"

namespace srres::nn {
namespace {

using srres::testing::gradient_check;
using srres::testing::probe_sum;
using srres::testing::random_image;
using srres::testing::random_tensor;
using srres::testing::relative_error;

// Tape gradient of probe_sum(net(x)) with respect to every entry of the named
// parameter, against central differences through the frozen forward.
template <class Net, class Fwd, class FwdFrozen>
void expect_param_gradient(Net& net, const std::string& name, Fwd forward, FwdFrozen frozen, double tol = 1e-5) {
  net.params().zero_grad();
  {
    Tape tape;
    tape.backward(probe_sum(tape, forward(tape)));
  }
  const Tensor analytic = net.params().at(name).grad;
  Tensor numeric = Tensor::like(analytic);
  Tensor& value = net.params().at(name).value;
  const double h = 1e-6;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double v0 = value[i];
    value[i] = v0 + h;
    double fp, fm;
    {
      Tape t;
      fp = probe_sum(t, frozen(t)).value().item();
    }
    value[i] = v0 - h;
    {
      Tape t;
      fm = probe_sum(t, frozen(t)).value().item();
    }
    value[i] = v0;
    numeric[i] = (fp - fm) / (2 * h);
  }
  EXPECT_LT(relative_error(analytic, numeric), tol) << name;
}

GeneratorSRConfig tiny_sr(bool analytic = false) {
  GeneratorSRConfig c;
  c.scale = 2;
  c.channels = 1;
  c.features = 4;
  c.kernel = 3;
  c.res_blocks = 1;
  c.analytic_mode = analytic;
  return c;
}

TEST(ProjectionThreshold, ClosedForm) {
  EXPECT_NEAR(projection_threshold(0.0, 0.1, 3, 8, 8), 0.1 * std::sqrt(191.0), 1e-12);
  EXPECT_NEAR(projection_threshold(std::log(2.0), 0.1, 3, 8, 8), 0.2 * std::sqrt(191.0), 1e-12);
  EXPECT_EQ(projection_threshold(1.0, 0.0, 1, 4, 4), 0.0);
  EXPECT_THROW(projection_threshold(0.0, 0.1, 1, 1, 1), std::invalid_argument);
}

TEST(Project, InteriorAndBoundary) {
  const Image z = random_image(3, 8, 8, 1, -1, 1);
  EXPECT_EQ(project(z, 5.0, 1.0), z);
  const Image p = project(z, 0.0, 0.01);
  EXPECT_NEAR(norm(p), 0.01 * std::sqrt(191.0), 1e-12);
  EXPECT_NEAR(dot(p, z) / (norm(p) * norm(z)), 1.0, 1e-12);
}

TEST(RelativisticProb, Values) {
  EXPECT_DOUBLE_EQ(relativistic_prob(0.7, 0.7), 0.5);
  EXPECT_NEAR(relativistic_prob(2.0, 0.0) + relativistic_prob(0.0, 2.0), 1.0, 1e-15);
}

TEST(ClipIntensities, Clamps) {
  Image img(1, 1, 3);
  img(0, 0, 0) = -0.5;
  img(0, 0, 1) = 0.25;
  img(0, 0, 2) = 1.5;
  const Image c = clip_intensities(img);
  EXPECT_EQ(c(0, 0, 0), 0.0);
  EXPECT_EQ(c(0, 0, 1), 0.25);
  EXPECT_EQ(c(0, 0, 2), 1.0);
}

TEST(ParametrizeFilters, ConstraintsAndRoundTrip) {
  const FilterBank bank = parametrize_filters(random_tensor(6, 3, 5, 5, 2));
  bank.check_constraints(1e-12);
  EXPECT_EQ(parametrize_filters(to_tensor(bank)).weights.size(), bank.weights.size());
  for (std::size_t i = 0; i < bank.weights.size(); ++i) {
    EXPECT_NEAR(parametrize_filters(to_tensor(bank)).weights[i], bank.weights[i], 1e-14);
  }
}

TEST(OrthogonalInit, RowsOrColumnsOrthonormal) {
  for (auto [out, c, k] : {std::tuple{4, 2, 3}, std::tuple{20, 1, 3}}) {
    const Tensor t = orthogonal_init(out, c, k, 0.5, 3);
    const int fan = c * k * k;
    Eigen::MatrixXd m(out, fan);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < fan; ++j) m(i, j) = t[static_cast<std::size_t>(i) * fan + j] / 0.5;
    const Eigen::MatrixXd g = out <= fan ? Eigen::MatrixXd(m * m.transpose()) : Eigen::MatrixXd(m.transpose() * m);
    EXPECT_LT((g - Eigen::MatrixXd::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(GeneratorSR, AnalyticModeMatchesOneStepInference) {
  Rng rng(42);
  for (int draw = 0; draw < 20; ++draw) {
    GeneratorSRConfig cfg;
    cfg.scale = 2;
    cfg.features = 8;
    cfg.analytic_mode = true;
    GeneratorSR g(cfg, draw);
    const FilterBank bank = random_filter_bank(cfg.features, 3, cfg.kernel, 100 + draw);
    const double slope = uniform01(rng) * 0.5;
    const double alpha = -1.0 + 2.0 * uniform01(rng);
    const double sigma = 0.2 * uniform01(rng);
    g.set_analytic(bank, slope, alpha);
    const Image lr = random_image(3, 8, 8, 200 + draw);

    EnergyModel m;
    m.scale = 2;
    m.bank = bank;
    m.phi.slopes = {slope};
    const BallConstraint ball{projection_threshold(alpha, sigma, 3, 16, 16)};
    const Image oracle = clipped(one_step_inference(m, lr, ball, alpha, UpsampleMode::bilinear));
    EXPECT_LE(max_abs_diff(gsr_forward(g, lr, sigma), oracle), 1e-5) << "draw " << draw;
  }
}

TEST(GeneratorSR, ShapeRangeAndConstraints) {
  GeneratorSRConfig cfg;
  cfg.features = 8;
  cfg.res_blocks = 2;
  const GeneratorSR g(cfg, 1);
  const Image out = gsr_forward(g, random_image(3, 8, 8, 3), 0.05);
  EXPECT_EQ(out.channels(), 3);
  EXPECT_EQ(out.height(), 32);
  EXPECT_EQ(out.width(), 32);
  for (double v : out.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  g.encoder_bank().check_constraints(1e-12);
  g.decoder_bank().check_constraints(1e-12);
}

TEST(GeneratorSR, ZeroSigmaReturnsUpsampledInput) {
  GeneratorSRConfig cfg = tiny_sr();
  cfg.channels = 3;
  const GeneratorSR g(cfg, 2);
  const Image lr = random_image(3, 6, 6, 4);
  EXPECT_LE(max_abs_diff(gsr_forward(g, lr, 0.0), clipped(bilinear_resize(lr, 2.0))), 1e-14);
}

TEST(GeneratorSR, SameSeedSameWeights) {
  const GeneratorSR a(tiny_sr(), 9), b(tiny_sr(), 9), c(tiny_sr(), 10);
  EXPECT_EQ(a.params().at("enc.raw").value, b.params().at("enc.raw").value);
  EXPECT_NE(a.params().at("enc.raw").value, c.params().at("enc.raw").value);
}

TEST(GeneratorSR, Errors) {
  GeneratorSRConfig bad = tiny_sr();
  bad.scale = 3;
  EXPECT_THROW(GeneratorSR(bad, 1), std::invalid_argument);
  bad = tiny_sr();
  bad.kernel = 4;
  EXPECT_THROW(GeneratorSR(bad, 1), std::invalid_argument);
  GeneratorSR g(tiny_sr(), 1);
  EXPECT_THROW(gsr_forward(g, random_image(3, 4, 4, 1), 0.1), std::invalid_argument);
  EXPECT_THROW(gsr_forward(g, random_image(1, 1, 1, 1), 0.1), std::invalid_argument);
  EXPECT_THROW(gsr_forward(g, random_image(1, 4, 4, 1), -0.1), std::invalid_argument);
  EXPECT_THROW(g.set_analytic(derivative_filter_bank(1), 0.2, 0.0), std::logic_error);
  g.params().at("step").value[0] = std::nan("");
  EXPECT_THROW(gsr_forward(g, random_image(1, 4, 4, 1), 0.1), std::domain_error);
}

class GeneratorGradient : public ::testing::TestWithParam<double> {};

TEST_P(GeneratorGradient, ParametersAndInput) {
  const double sigma = GetParam();
  for (bool analytic : {false, true}) {
    GeneratorSR g(tiny_sr(analytic), 5);
    const Tensor lr = random_tensor(2, 1, 4, 4, 6, 0.3, 0.7);
    const std::vector<double> sigmas{sigma, sigma};
    auto fwd = [&](Tape& t) { return g.forward(t, t.constant(lr), sigmas); };
    auto frozen = [&](Tape& t) { return g.forward_frozen(t, t.constant(lr), sigmas); };
    for (const auto& [name, p] : g.params().items()) expect_param_gradient(g, name, fwd, frozen);
    const auto gi = gradient_check([&](Tape& t, Var v) { return probe_sum(t, g.forward_frozen(t, v, sigmas)); }, lr);
    EXPECT_LT(relative_error(gi.analytic, gi.numeric), 1e-5);
  }
}

// 10.0 leaves the residual inside the ball; 0.01 makes the projection active.
INSTANTIATE_TEST_SUITE_P(Sigmas, GeneratorGradient, ::testing::Values(10.0, 0.01));

TEST(DomainGenerator, UntrainedIsIdentity) {
  DomainGeneratorConfig cfg;
  cfg.features = 8;
  cfg.res_blocks = 2;
  const DomainGenerator g(cfg, 1);
  const Image z = random_image(3, 10, 12, 2, 0.01, 0.99);
  EXPECT_LE(max_abs_diff(gd_forward(g, z), z), 1e-12);
  EXPECT_THROW(gd_forward(g, random_image(1, 10, 12, 2)), std::invalid_argument);
}

TEST(DomainGenerator, OutputInUnitIntervalAfterPerturbation) {
  DomainGeneratorConfig cfg;
  cfg.features = 4;
  cfg.res_blocks = 1;
  DomainGenerator g(cfg, 3);
  g.params().at("tail.w").value = random_tensor(3, 4, 3, 3, 4, -5, 5);
  const Image out = gd_forward(g, random_image(3, 8, 8, 5));
  for (double v : out.data()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(DomainGenerator, ParameterGradients) {
  DomainGeneratorConfig cfg;
  cfg.channels = 1;
  cfg.features = 3;
  cfg.res_blocks = 1;
  DomainGenerator g(cfg, 7);
  // O(1) weights keep pre-activations away from the PReLU kink.
  std::uint64_t seed = 8;
  for (auto& [name, p] : g.params().items()) p.value = random_tensor(p.value.n(), p.value.c(), p.value.h(), p.value.w(), seed++, -0.5, 0.5);
  const Tensor z = random_tensor(2, 1, 5, 5, 9, 0.1, 0.9);
  auto fwd = [&](Tape& t) { return g.forward(t, t.constant(z)); };
  auto frozen = [&](Tape& t) { return g.forward_frozen(t, t.constant(z)); };
  for (const auto& [name, p] : g.params().items()) expect_param_gradient(g, name, fwd, frozen);
}

HrDiscriminatorConfig tiny_dy() {
  HrDiscriminatorConfig c;
  c.base = 2;
  c.patch = 32;
  c.hidden = 5;
  return c;
}

TEST(HrDiscriminator, ShapeAndBatchNormPhases) {
  HrDiscriminator d(tiny_dy(), 1);
  const Tensor x = random_tensor(3, 3, 32, 32, 2, 0, 1);
  const auto before = d.buffers();
  Tape tape;
  const Var s = d.forward(tape, tape.constant(x), Phase::train);
  EXPECT_EQ(s.value().shape(), (std::array<int, 4>{3, 1, 1, 1}));
  EXPECT_NE(d.buffers(), before);
  const auto after = d.buffers();
  const std::vector<double> e1 = d.score(x);
  Tape t2;
  d.forward(t2, t2.constant(x), Phase::eval);
  EXPECT_EQ(d.buffers(), after);
  EXPECT_EQ(d.score(x), e1);
  EXPECT_NEAR(dy_score(d, unstack(x, 1)), e1[1], 1e-15);
}

TEST(HrDiscriminator, Errors) {
  HrDiscriminatorConfig bad = tiny_dy();
  bad.patch = 48;
  EXPECT_THROW(HrDiscriminator(bad, 1), std::invalid_argument);
  const HrDiscriminator d(tiny_dy(), 1);
  EXPECT_THROW(d.score(random_tensor(1, 3, 64, 64, 1)), std::invalid_argument);
}

TEST(HrDiscriminator, UnboundParametersReceiveNoGradient) {
  HrDiscriminator d(tiny_dy(), 2);
  d.params().zero_grad();
  Tape tape;
  Var x = tape.leaf(random_tensor(2, 3, 32, 32, 3, 0, 1));
  tape.backward(sum(d.forward(tape, x, Phase::train, false)));
  for (const auto& [name, p] : d.params().items()) {
    for (double v : p.grad.values()) EXPECT_EQ(v, 0.0) << name;
  }
  EXPECT_GT(norm(unstack(tape.grad(x), 0)), 0.0);
}

TEST(HrDiscriminator, GradientsInBothPhases) {
  HrDiscriminator d(tiny_dy(), 4);
  const Tensor x = random_tensor(3, 3, 32, 32, 5, 0, 1);
  // Variance-preserving weights and non-zero shifts keep the signal O(1)
  // through all ten layers and away from the leaky ReLU kink.
  std::uint64_t seed = 50;
  for (auto& [name, p] : d.params().items()) {
    const Tensor& v = p.value;
    double lo = -1, hi = 1;
    if (name.ends_with(".w")) hi = std::sqrt(3.0 / static_cast<double>(v.sample_size())), lo = -hi;
    if (name.ends_with(".gamma")) lo = 0.5, hi = 1.5;
    p.value = random_tensor(v.n(), v.c(), v.h(), v.w(), seed++, lo, hi);
  }
  for (Phase phase : {Phase::eval, Phase::train}) {
    const auto buffers = d.buffers();
    auto fwd = [&](Tape& t) {
      d.buffers() = buffers;
      return d.forward(t, t.constant(x), phase);
    };
    auto frozen = [&](Tape& t) {
      d.buffers() = buffers;
      return d.forward(t, t.constant(x), phase, false);
    };
    for (const char* name : {"conv0.w", "bn3.gamma", "bn9.beta", "fc1.w", "fc2.b"}) {
      SCOPED_TRACE(phase == Phase::train ? "train" : "eval");
      expect_param_gradient(d, name, fwd, frozen, 1e-4);
    }
    d.buffers() = buffers;
  }
}

TEST(PatchDiscriminator, ReceptiveFieldAndLocality) {
  PatchDiscriminatorConfig cfg;
  cfg.widths = {4, 4, 4};
  EXPECT_EQ(cfg.receptive_field(), 17);
  PatchDiscriminator d(cfg, 1);
  Image img = random_image(3, 24, 20, 2);
  const Image s = dx_score(d, img);
  EXPECT_EQ(s.channels(), 1);
  EXPECT_EQ(s.height(), 8);
  EXPECT_EQ(s.width(), 4);
  // A pixel at (20, 0) lies outside the window of every output row < 4.
  img(0, 20, 0) += 0.5;
  const Image s2 = dx_score(d, img);
  for (int i = 0; i < 8; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (i < 4) EXPECT_EQ(s2(0, i, j), s(0, i, j));
    }
  }
  EXPECT_NE(s2(0, 7, 0), s(0, 7, 0));
  EXPECT_THROW(dx_score(d, random_image(3, 16, 30, 2)), std::invalid_argument);
}

TEST(PatchDiscriminator, Gradients) {
  PatchDiscriminatorConfig cfg;
  cfg.channels = 1;
  cfg.widths = {3, 2};
  cfg.kernel = 3;
  PatchDiscriminator d(cfg, 3);
  const Tensor x = random_tensor(2, 1, 8, 8, 4, 0, 1);
  const auto buffers = d.buffers();
  auto fwd = [&](Tape& t) {
    d.buffers() = buffers;
    return d.forward(t, t.constant(x), Phase::train);
  };
  auto frozen = [&](Tape& t) {
    d.buffers() = buffers;
    return d.forward(t, t.constant(x), Phase::train, false);
  };
  for (const auto& [name, p] : d.params().items()) expect_param_gradient(d, name, fwd, frozen, 1e-4);
  const auto gi = gradient_check([&](Tape& t, Var v) { return probe_sum(t, d.forward_frozen(t, v)); }, x);
  EXPECT_LT(relative_error(gi.analytic, gi.numeric), 1e-5);
}

TEST(RequireFinite, NamesParameter) {
  ParamStore s;
  s.add("good", Tensor::scalar(1.0));
  s.add("bad", Tensor::scalar(INFINITY));
  try {
    require_finite(s, "net");
    FAIL() << "expected domain_error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("'bad'"), std::string::npos);
  }
}

}  // namespace
}  // namespace srres::nn
