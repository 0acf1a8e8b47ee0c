#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "json.hpp"
#include "srres/evaluation.hpp"
#include "srres/resample.hpp"
#include "test_util.hpp"

namespace srres {
namespace {

using nn::FeatureExtractor;
using testing::random_image;

// Direct per-window SSIM with an explicit 2D Gaussian.
double ssim_reference(const Image& a, const Image& b) {
  const int n = 11;
  double g[11][11], gs = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) gs += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / 4.5);
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y + n <= a.height(); ++y) {
      for (int x = 0; x + n <= a.width(); ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) {
            const double w = g[i][j] / gs, va = a(c, y + i, x + j), vb = b(c, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        saa -= ma * ma;
        sbb -= mb * mb;
        sab -= ma * mb;
        sum += (2 * ma * mb + c1) * (2 * sab + c2) / ((ma * ma + mb * mb + c1) * (saa + sbb + c2));
        ++count;
      }
    }
    total += sum / count;
  }
  return total / a.channels();
}

// Dihedral element as (transpose, mirror rows, mirror columns), applied in that order.
struct Dihedral {
  bool transpose, flip_y, flip_x;

  Image forward(const Image& img) const {
    const int h = transpose ? img.width() : img.height(), w = transpose ? img.height() : img.width();
    Image out(img.channels(), h, w);
    for (int c = 0; c < img.channels(); ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int yy = flip_y ? h - 1 - y : y, xx = flip_x ? w - 1 - x : x;
          out(c, y, x) = transpose ? img(c, xx, yy) : img(c, yy, xx);
        }
    return out;
  }
  Image inverse(const Image& img) const {
    const int h = transpose ? img.width() : img.height(), w = transpose ? img.height() : img.width();
    Image out(img.channels(), h, w);
    for (int c = 0; c < img.channels(); ++c)
      for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) {
          const int yy = flip_y ? img.height() - 1 - y : y, xx = flip_x ? img.width() - 1 - x : x;
          if (transpose) out(c, xx, yy) = img(c, y, x);
          else out(c, yy, xx) = img(c, y, x);
        }
    return out;
  }
};

// Deliberately not equivariant: weights pixels by position.
Image skewed_model(const Image& lr) {
  Image up = bicubic_resize(lr, 2.0);
  for (int c = 0; c < up.channels(); ++c)
    for (int y = 0; y < up.height(); ++y)
      for (int x = 0; x < up.width(); ++x) up(c, y, x) *= 1.0 + 0.01 * x + 0.003 * y * y;
  return up;
}

TEST(Psnr, KnownValuesAndCap) {
  const Image a(3, 8, 8, 0.5);
  EXPECT_NEAR(psnr(a, Image(3, 8, 8, 0.6)), 20.0, 1e-9);
  EXPECT_NEAR(psnr(a, Image(3, 8, 8, 0.51)), 40.0, 1e-9);
  EXPECT_EQ(psnr(a, a), kPsnrCap);
  const Image b = random_image(3, 8, 8, 1), c = random_image(3, 8, 8, 2);
  EXPECT_EQ(psnr(b, c), psnr(c, b));
  EXPECT_THROW(psnr(a, Image(3, 8, 9)), std::invalid_argument);
  EXPECT_THROW(psnr(Image(), Image()), std::invalid_argument);
}

TEST(Ssim, MatchesDirectWindowSum) {
  const Image a = random_image(3, 16, 19, 3), b = random_image(3, 16, 19, 4);
  EXPECT_NEAR(ssim(a, b), ssim_reference(a, b), 1e-12);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  EXPECT_EQ(ssim(a, b), ssim(b, a));
  const Image mix = 0.5 * a + 0.5 * b;
  EXPECT_NEAR(ssim(a, mix), ssim_reference(a, mix), 1e-12);
  EXPECT_GT(ssim(a, mix), ssim(a, b));
}

TEST(Ssim, InvertedBinaryImageIsNegative) {
  Image a(1, 12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) a(0, y, x) = ((x * 7 + y * 3) % 5) < 2 ? 1.0 : 0.0;
  Image inv = a;
  for (double& v : inv.data()) v = 1.0 - v;
  EXPECT_LT(ssim(a, inv), 0.0);
  EXPECT_NEAR(ssim(a, inv), ssim_reference(a, inv), 1e-12);
  EXPECT_THROW(ssim(Image(1, 10, 20), Image(1, 10, 20)), std::invalid_argument);
}

TEST(Lpips, ZeroOnIdenticalAndMonotone) {
  const auto ext = FeatureExtractor::builtin();
  const Image a = random_image(3, 24, 24, 5, 0.2, 0.8);
  const Image noise = random_image(3, 24, 24, 6, -1.0, 1.0);
  EXPECT_EQ(lpips_distance(ext, a, a), 0.0);
  double previous = 0.0;
  for (double delta : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    const double d = lpips_distance(ext, a, a + delta * noise);
    EXPECT_GT(d, previous) << delta;
    previous = d;
  }
  const Image b = random_image(3, 24, 24, 7);
  EXPECT_GE(lpips_distance(ext, a, b), 0.0);
  EXPECT_NEAR(lpips_distance(ext, a, b), lpips_distance(ext, b, a), 1e-12);
  EXPECT_THROW(lpips_distance(FeatureExtractor::builtin(1), a, b), std::invalid_argument);
  EXPECT_THROW(lpips_distance(ext, a, Image(3, 24, 23)), std::invalid_argument);
}

TEST(Lpips, IdentityExtractorIsNormalizedPixelDistance) {
  const Image a = random_image(3, 5, 4, 8, 0.1, 1.0), b = random_image(3, 5, 4, 9, 0.1, 1.0);
  double expected = 0.0;
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 4; ++x) {
      double na = 0, nb = 0;
      for (int c = 0; c < 3; ++c) {
        na += a(c, y, x) * a(c, y, x);
        nb += b(c, y, x) * b(c, y, x);
      }
      for (int c = 0; c < 3; ++c) {
        const double d = a(c, y, x) / (std::sqrt(na) + kLpipsEps) - b(c, y, x) / (std::sqrt(nb) + kLpipsEps);
        expected += d * d / 20.0;
      }
    }
  EXPECT_NEAR(lpips_distance(FeatureExtractor::identity(), a, b), expected, 1e-14);
}

TEST(SelfEnsemble, MatchesExplicitDihedralAverage) {
  const Image lr = random_image(3, 6, 9, 10);
  Image expected(3, 12, 18);
  for (int m = 0; m < 8; ++m) {
    const Dihedral d{(m & 4) != 0, (m & 2) != 0, (m & 1) != 0};
    expected += d.inverse(skewed_model(d.forward(lr)));
  }
  expected *= 1.0 / 8.0;
  EXPECT_LE(max_abs_diff(self_ensemble(skewed_model, lr), expected), 1e-12);
}

TEST(SelfEnsemble, EquivariantAndConstantModels) {
  const Image lr = random_image(3, 7, 7, 11);
  const ModelFn bicubic = [](const Image& x) { return bicubic_resize(x, 2.0); };
  EXPECT_LE(max_abs_diff(self_ensemble(bicubic, lr), bicubic(lr)), 1e-9);
  const Image k = random_image(3, 5, 5, 12);
  EXPECT_LE(max_abs_diff(self_ensemble([&](const Image&) { return k; }, lr),
                         (1.0 / 8.0) * [&] {
                           Image s(3, 5, 5);
                           for (int m = 0; m < 8; ++m) {
                             const Dihedral d{(m & 4) != 0, (m & 2) != 0, (m & 1) != 0};
                             s += d.inverse(k);
                           }
                           return s;
                         }()),
            1e-12);
  // Non-square outputs from a transposed input cannot be averaged.
  EXPECT_THROW(self_ensemble([](const Image& x) { return Image(3, 4, x.width() == 7 ? 5 : 6); }, lr),
               std::runtime_error);
}

TEST(CropBorder, Shapes) {
  const Image a = random_image(1, 10, 12, 13);
  const Image c = crop_border(a, 2);
  EXPECT_EQ(c.height(), 6);
  EXPECT_EQ(c.width(), 8);
  EXPECT_EQ(c(0, 0, 0), a(0, 2, 2));
  EXPECT_EQ(crop_border(a, 0), a);
  EXPECT_THROW(crop_border(a, 5), std::invalid_argument);
  EXPECT_THROW(crop_border(a, -1), std::invalid_argument);
}

std::vector<EvalItem> make_items() {
  std::vector<EvalItem> items;
  for (int i = 0; i < 5; ++i) {
    const Image lr = random_image(3, 12, 12, 20 + i, 0.2, 0.8);
    items.push_back({"img" + std::to_string(i), lr, bicubic_resize(lr, 2.0)});
  }
  return items;
}

TEST(EvaluateDataset, PerfectModelAndOrder) {
  EvalConfig cfg;
  cfg.scale = 2;
  const ModelFn bicubic = [](const Image& x) { return bicubic_resize(x, 2.0); };
  const MetricReport r = evaluate_dataset(bicubic, make_items(), cfg, FeatureExtractor::builtin());
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.scored, 5);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(r.rows[i].id, "img" + std::to_string(i));
    EXPECT_EQ(r.rows[i].psnr, kPsnrCap);
    EXPECT_NEAR(r.rows[i].ssim, 1.0, 1e-12);
    EXPECT_EQ(r.rows[i].lpips, 0.0);
  }
  EXPECT_EQ(r.mean_psnr, kPsnrCap);

  cfg.ensemble = true;
  const MetricReport e = evaluate_dataset(bicubic, make_items(), cfg, FeatureExtractor::builtin());
  EXPECT_GT(e.mean_psnr, 80.0);
}

TEST(EvaluateDataset, RowErrorsAndAggregates) {
  auto items = make_items();
  items[2].hr = Image(3, 20, 24);
  EvalConfig cfg;
  cfg.scale = 2;
  const ModelFn noisy = [](const Image& x) {
    Image up = bicubic_resize(x, 2.0);
    up(0, 5, 5) += 0.1;
    return up;
  };
  const MetricReport r = evaluate_dataset(noisy, items, cfg, FeatureExtractor::identity());
  EXPECT_EQ(r.scored, 4);
  EXPECT_FALSE(r.rows[2].ok());
  EXPECT_NE(r.rows[2].error.find("does not match"), std::string::npos);
  double sum = 0.0;
  for (int i : {0, 1, 3, 4}) {
    EXPECT_TRUE(r.rows[i].ok());
    const Image a = crop_border(noisy(items[i].lr), 2), b = crop_border(items[i].hr, 2);
    EXPECT_EQ(r.rows[i].psnr, psnr(a, b));
    EXPECT_EQ(r.rows[i].ssim, ssim(a, b));
    sum += r.rows[i].psnr;
  }
  EXPECT_NEAR(r.mean_psnr, sum / 4.0, 1e-12);

  std::istringstream csv(r.csv());
  std::vector<std::string> lines;
  for (std::string line; std::getline(csv, line);) lines.push_back(line);
  ASSERT_EQ(lines.size(), 7u);
  EXPECT_EQ(lines[0], "id,psnr,ssim,lpips");
  EXPECT_EQ(lines[3], "img2,nan,nan,nan");
  EXPECT_EQ(lines[6].substr(0, 5), "mean,");

  const auto j = nlohmann::json::parse(r.json());
  ASSERT_EQ(j["rows"].size(), 5u);
  EXPECT_TRUE(j["rows"][2].contains("error"));
  EXPECT_EQ(j["rows"][0]["psnr"].get<double>(), r.rows[0].psnr);
  EXPECT_EQ(j["mean"]["scored"].get<int>(), 4);
}

TEST(EvaluateDataset, Errors) {
  EvalConfig cfg;
  cfg.scale = 2;
  const ModelFn id = [](const Image& x) { return x; };
  EXPECT_THROW(evaluate_dataset(id, {}, cfg, FeatureExtractor::identity()), std::invalid_argument);
  nn::GeneratorSRConfig g;
  g.features = 4;
  g.res_blocks = 1;
  const nn::GeneratorSR gen(g, 1);
  EXPECT_THROW(evaluate_dataset(gen, make_items(), cfg, FeatureExtractor::identity()), std::invalid_argument);
  const MetricReport none = summarize({{"x", 0, 0, 0, "failed"}});
  EXPECT_EQ(none.scored, 0);
  EXPECT_TRUE(std::isnan(none.mean_psnr));
}

TEST(EvaluateDataset, GeneratorOverload) {
  nn::GeneratorSRConfig g;
  g.scale = 2;
  g.features = 4;
  g.res_blocks = 1;
  const nn::GeneratorSR gen(g, 1);
  EvalConfig cfg;
  cfg.scale = 2;
  const auto items = make_items();
  const MetricReport r = evaluate_dataset(gen, items, cfg, FeatureExtractor::identity());
  ASSERT_EQ(r.scored, 5);
  const Image out = gen.infer(items[1].lr, estimate_noise_sigma(items[1].lr));
  EXPECT_EQ(r.rows[1].psnr, psnr(crop_border(out, 2), crop_border(items[1].hr, 2)));
}

}  // namespace
}  // namespace srres
