#include "srres/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"

#include "srres/imaging.hpp"

namespace srres {

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw std::invalid_argument("psnr: empty images");
  double se = 0.0;
  const auto da = a.data(), db = b.data();
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = da[i] - db[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(da.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    w[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& in, int h, int w, const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * in[static_cast<std::size_t>(y) * w + x + i];
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < n; ++i) acc += k[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  const int h = a.height(), w = a.width();
  if (h < kSsimWindow || w < kSsimWindow) {
    throw std::invalid_argument("ssim: images must be at least 11x11, got " + a.shape_string());
  }
  const std::vector<double> k = gaussian_window();
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    const auto pa = a.plane(c), pb = b.plane(c);
    std::vector<double> va(pa.begin(), pa.end()), vb(pb.begin(), pb.end());
    std::vector<double> aa(plane), bb(plane), ab(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = va[i] * va[i];
      bb[i] = vb[i] * vb[i];
      ab[i] = va[i] * vb[i];
    }
    const auto mu_a = filter_valid(va, h, w, k), mu_b = filter_valid(vb, h, w, k);
    const auto e_aa = filter_valid(aa, h, w, k), e_bb = filter_valid(bb, h, w, k), e_ab = filter_valid(ab, h, w, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double s_aa = e_aa[i] - ma * ma, s_bb = e_bb[i] - mb * mb, s_ab = e_ab[i] - ma * mb;
      sum += ((2.0 * ma * mb + kC1) * (2.0 * s_ab + kC2)) / ((ma * ma + mb * mb + kC1) * (s_aa + s_bb + kC2));
    }
    total += sum / static_cast<double>(mu_a.size());
  }
  return total / a.channels();
}

double lpips_distance(const nn::FeatureExtractor& ext, const Image& a, const Image& b) {
  require_same_shape(a, b, "lpips");
  if (a.channels() != ext.channels()) {
    throw std::invalid_argument("lpips: extractor expects " + std::to_string(ext.channels()) +
                                " channels, images have " + std::to_string(a.channels()));
  }
  const auto fa = ext.features(nn::stack({a})), fb = ext.features(nn::stack({b}));
  double total = 0.0;
  for (std::size_t t = 0; t < fa.size(); ++t) {
    const nn::Tensor& x = fa[t];
    const nn::Tensor& y = fb[t];
    double layer = 0.0;
    for (int i = 0; i < x.h(); ++i) {
      for (int j = 0; j < x.w(); ++j) {
        double nx = 0.0, ny = 0.0;
        for (int c = 0; c < x.c(); ++c) {
          nx += x(0, c, i, j) * x(0, c, i, j);
          ny += y(0, c, i, j) * y(0, c, i, j);
        }
        nx = std::sqrt(nx) + kLpipsEps;
        ny = std::sqrt(ny) + kLpipsEps;
        for (int c = 0; c < x.c(); ++c) {
          const double d = x(0, c, i, j) / nx - y(0, c, i, j) / ny;
          layer += d * d;
        }
      }
    }
    total += layer / static_cast<double>(x.plane_size());
  }
  return total;
}

Image crop_border(const Image& img, int border) {
  if (border < 0) throw std::invalid_argument("crop_border: negative border");
  if (border == 0) return img;
  if (img.height() <= 2 * border || img.width() <= 2 * border) {
    throw std::invalid_argument("crop_border: " + img.shape_string() + " too small for border " +
                                std::to_string(border));
  }
  return crop(img, border, border, img.height() - 2 * border, img.width() - 2 * border);
}

Image self_ensemble(const ModelFn& model, const Image& lr) {
  Image sum;
  for (int t = 0; t < 8; ++t) {
    const Image out = flip_rotate(model(flip_rotate(lr, t)), d4_inverse(t));
    if (t == 0) {
      sum = out;
    } else if (!out.same_shape(sum)) {
      throw std::runtime_error("self_ensemble: transform " + std::to_string(t) + " produced " + out.shape_string() +
                               ", expected " + sum.shape_string());
    } else {
      sum += out;
    }
  }
  sum *= 1.0 / 8.0;
  return sum;
}

MetricReport summarize(std::vector<MetricRow> rows) {
  MetricReport r;
  r.rows = std::move(rows);
  for (const MetricRow& row : r.rows) {
    if (!row.ok()) continue;
    r.mean_psnr += row.psnr;
    r.mean_ssim += row.ssim;
    r.mean_lpips += row.lpips;
    ++r.scored;
  }
  if (r.scored > 0) {
    r.mean_psnr /= r.scored;
    r.mean_ssim /= r.scored;
    r.mean_lpips /= r.scored;
  } else {
    r.mean_psnr = r.mean_ssim = r.mean_lpips = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

std::string MetricReport::csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << "id,psnr,ssim,lpips\n";
  for (const MetricRow& row : rows) {
    if (row.ok()) {
      os << row.id << ',' << row.psnr << ',' << row.ssim << ',' << row.lpips << '\n';
    } else {
      os << row.id << ",nan,nan,nan\n";
    }
  }
  os << "mean," << mean_psnr << ',' << mean_ssim << ',' << mean_lpips << '\n';
  return os.str();
}

std::string MetricReport::json() const {
  nlohmann::json j;
  j["rows"] = nlohmann::json::array();
  for (const MetricRow& row : rows) {
    nlohmann::json r{{"id", row.id}};
    if (row.ok()) {
      r["psnr"] = row.psnr;
      r["ssim"] = row.ssim;
      r["lpips"] = row.lpips;
    } else {
      r["error"] = row.error;
    }
    j["rows"].push_back(std::move(r));
  }
  j["mean"] = {{"psnr", mean_psnr}, {"ssim", mean_ssim}, {"lpips", mean_lpips}, {"scored", scored}};
  return j.dump(2) + "\n";
}

MetricReport evaluate_dataset(const ModelFn& model, const std::vector<EvalItem>& items, const EvalConfig& cfg,
                              const nn::FeatureExtractor& ext) {
  if (items.empty()) throw std::invalid_argument("evaluate_dataset: no pairs");
  cfg.validate();
  std::vector<MetricRow> rows(items.size());
  auto score = [&](std::size_t i) {
    const EvalItem& item = items[i];
    MetricRow& row = rows[i];
    row.id = item.id;
    try {
      const Image sr = cfg.ensemble ? self_ensemble(model, item.lr) : model(item.lr);
      if (!sr.same_shape(item.hr)) {
        throw std::invalid_argument("output " + sr.shape_string() + " does not match HR " + item.hr.shape_string());
      }
      const Image a = crop_border(sr, cfg.effective_crop()), b = crop_border(item.hr, cfg.effective_crop());
      row.psnr = psnr(a, b);
      row.ssim = ssim(a, b);
      row.lpips = lpips_distance(ext, a, b);
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(items.size(), std::max(1u, std::thread::hardware_concurrency()));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < items.size(); i = next++) score(i);
    });
  }
  for (auto& t : pool) t.join();
  return summarize(std::move(rows));
}

MetricReport evaluate_dataset(const nn::GeneratorSR& g, const std::vector<EvalItem>& items, const EvalConfig& cfg,
                              const nn::FeatureExtractor& ext) {
  if (cfg.scale != g.config().scale) {
    throw std::invalid_argument("evaluation scale " + std::to_string(cfg.scale) + " differs from the model's " +
                                std::to_string(g.config().scale));
  }
  return evaluate_dataset([&g](const Image& lr) { return g.infer(lr, estimate_noise_sigma(lr)); }, items, cfg,
                          ext);
}

}  // namespace srres
