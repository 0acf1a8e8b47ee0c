#include "srres/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

namespace srres::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

Tensor zeros_like(const Tensor& t) { return Tensor::like(t); }

template <class F, class DF>
Var pointwise(Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor y = Tensor::like(xv);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = f(xv[i]);
  return x.tape().record(std::move(y), {x}, [x, df](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    Tensor dx = Tensor::like(xv);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * df(xv[i]);
    tape.accumulate(x, dx);
  });
}

// Geometry of one convolution: padded index maps from padded coordinates
// to source coordinates (-1 for zero padding).
struct ConvPlan {
  int c = 0, h = 0, w = 0, k = 0, stride = 1, ho = 0, wo = 0;
  std::vector<int> ymap, xmap;

  int rows() const { return c * k * k; }
  int cols() const { return ho * wo; }
};

ConvPlan make_plan(int c, int h, int w, int k, const ConvGeometry& g) {
  if (g.stride < 1 || g.pad < 0) throw std::invalid_argument("conv2d: invalid stride or padding");
  ConvPlan p;
  p.c = c;
  p.h = h;
  p.w = w;
  p.k = k;
  p.stride = g.stride;
  const int hp = h + 2 * g.pad, wp = w + 2 * g.pad;
  if (hp < k || wp < k) {
    throw std::invalid_argument("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) +
                                " smaller than kernel " + std::to_string(k));
  }
  p.ho = (hp - k) / g.stride + 1;
  p.wo = (wp - k) / g.stride + 1;
  auto build = [&](int n, int padded) {
    std::vector<int> map(padded);
    for (int i = 0; i < padded; ++i) {
      const int src = i - g.pad;
      if (src >= 0 && src < n) {
        map[i] = src;
      } else {
        map[i] = g.padding == Padding::reflect ? reflect_index(src, n) : -1;
      }
    }
    return map;
  };
  p.ymap = build(h, hp);
  p.xmap = build(w, wp);
  return p;
}

void im2col(const ConvPlan& p, const double* x, RowMat& cols) {
  cols.resize(p.rows(), p.cols());
  for (int c = 0; c < p.c; ++c) {
    const double* plane = x + static_cast<std::size_t>(c) * p.h * p.w;
    for (int i = 0; i < p.k; ++i) {
      for (int j = 0; j < p.k; ++j) {
        double* row = cols.row((c * p.k + i) * p.k + j).data();
        for (int oy = 0; oy < p.ho; ++oy) {
          const int sy = p.ymap[oy * p.stride + i];
          double* dst = row + oy * p.wo;
          if (sy < 0) {
            std::fill(dst, dst + p.wo, 0.0);
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(sy) * p.w;
          for (int ox = 0; ox < p.wo; ++ox) {
            const int sx = p.xmap[ox * p.stride + j];
            dst[ox] = sx < 0 ? 0.0 : src[sx];
          }
        }
      }
    }
  }
}

void col2im(const ConvPlan& p, const RowMat& cols, double* x) {
  for (int c = 0; c < p.c; ++c) {
    double* plane = x + static_cast<std::size_t>(c) * p.h * p.w;
    for (int i = 0; i < p.k; ++i) {
      for (int j = 0; j < p.k; ++j) {
        const double* row = cols.row((c * p.k + i) * p.k + j).data();
        for (int oy = 0; oy < p.ho; ++oy) {
          const int sy = p.ymap[oy * p.stride + i];
          if (sy < 0) continue;
          double* dst = plane + static_cast<std::size_t>(sy) * p.w;
          const double* src = row + oy * p.wo;
          for (int ox = 0; ox < p.wo; ++ox) {
            const int sx = p.xmap[ox * p.stride + j];
            if (sx >= 0) dst[sx] += src[ox];
          }
        }
      }
    }
  }
}

void require_kernel(const Tensor& w, int channels, const char* what) {
  if (w.h() != w.w()) throw std::invalid_argument(std::string(what) + ": kernels must be square");
  if (w.c() != channels) {
    throw std::invalid_argument(std::string(what) + ": weight expects " + std::to_string(w.c()) +
                                " input channels, got " + std::to_string(channels));
  }
}

std::size_t channel_of(std::size_t i, const Tensor& t) { return (i / t.plane_size()) % t.c(); }

}  // namespace

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor y = a.value();
  y += b.value();
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    tape.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor y = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  return a.tape().record(std::move(y), {a, b}, [a, b](Tape& tape, const Tensor& g) {
    tape.accumulate(a, g);
    if (b.requires_grad()) {
      Tensor nb = g;
      nb *= -1.0;
      tape.accumulate(b, nb);
    }
  });
}

Var scale(Var a, double s) {
  Tensor y = a.value();
  y *= s;
  return a.tape().record(std::move(y), {a}, [a, s](Tape& tape, const Tensor& g) {
    Tensor da = g;
    da *= s;
    tape.accumulate(a, da);
  });
}

Var scale(Var a, Var s) {
  if (s.value().size() != 1) throw std::invalid_argument("scale: factor must hold one value");
  const double sv = s.value()[0];
  Tensor y = a.value();
  y *= sv;
  return a.tape().record(std::move(y), {a, s}, [a, s](Tape& tape, const Tensor& g) {
    const double sv = s.value()[0];
    if (a.requires_grad()) {
      Tensor da = g;
      da *= sv;
      tape.accumulate(a, da);
    }
    if (s.requires_grad()) {
      const Tensor& av = a.value();
      double acc = 0.0;
      for (std::size_t i = 0; i < av.size(); ++i) acc += g[i] * av[i];
      tape.accumulate(s, Tensor::like(s.value(), acc));
    }
  });
}

Var conv2d(Var x, Var w, Var bias, ConvGeometry geom) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  require_kernel(wv, xv.c(), "conv2d");
  const int kout = wv.n();
  if (bias.valid() && static_cast<int>(bias.value().size()) != kout) {
    throw std::invalid_argument("conv2d: bias size does not match output channels");
  }
  auto plan = std::make_shared<ConvPlan>(make_plan(xv.c(), xv.h(), xv.w(), wv.h(), geom));
  Tensor y(xv.n(), kout, plan->ho, plan->wo);
  const CMapMat wm(wv.data(), kout, plan->rows());
  RowMat cols;
  for (int n = 0; n < xv.n(); ++n) {
    im2col(*plan, xv.sample(n), cols);
    MapMat ym(y.sample(n), kout, plan->cols());
    ym.noalias() = wm * cols;
    if (bias.valid()) {
      for (int k = 0; k < kout; ++k) ym.row(k).array() += bias.value()[k];
    }
  }
  return x.tape().record(std::move(y), {x, w, bias}, [x, w, bias, plan](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const int kout = wv.n();
    const CMapMat wm(wv.data(), kout, plan->rows());
    Tensor dw, dx, db;
    if (w.requires_grad()) dw = zeros_like(wv);
    if (x.requires_grad()) dx = zeros_like(xv);
    if (bias.valid() && bias.requires_grad()) db = zeros_like(bias.value());
    RowMat cols, dcols;
    for (int n = 0; n < xv.n(); ++n) {
      const CMapMat gm(g.sample(n), kout, plan->cols());
      if (!dw.empty()) {
        im2col(*plan, xv.sample(n), cols);
        MapMat(dw.data(), kout, plan->rows()).noalias() += gm * cols.transpose();
      }
      if (!db.empty()) {
        for (int k = 0; k < kout; ++k) db[k] += gm.row(k).sum();
      }
      if (!dx.empty()) {
        dcols.noalias() = wm.transpose() * gm;
        col2im(*plan, dcols, dx.sample(n));
      }
    }
    if (!dw.empty()) tape.accumulate(w, dw);
    if (!dx.empty()) tape.accumulate(x, dx);
    if (!db.empty()) tape.accumulate(bias, db);
  });
}

Var conv2d_adjoint(Var x, Var w, ConvGeometry geom, int out_h, int out_w) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (xv.c() != wv.n()) {
    throw std::invalid_argument("conv2d_adjoint: weight has " + std::to_string(wv.n()) +
                                " output channels, input has " + std::to_string(xv.c()));
  }
  auto plan = std::make_shared<ConvPlan>(make_plan(wv.c(), out_h, out_w, wv.h(), geom));
  if (plan->ho != xv.h() || plan->wo != xv.w()) {
    throw std::invalid_argument("conv2d_adjoint: output size inconsistent with input " +
                                xv.shape_string());
  }
  const int kout = wv.n();
  Tensor y(xv.n(), wv.c(), out_h, out_w);
  const CMapMat wm(wv.data(), kout, plan->rows());
  RowMat cols;
  for (int n = 0; n < xv.n(); ++n) {
    cols.noalias() = wm.transpose() * CMapMat(xv.sample(n), kout, plan->cols());
    col2im(*plan, cols, y.sample(n));
  }
  return x.tape().record(std::move(y), {x, w}, [x, w, plan](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const int kout = wv.n();
    const CMapMat wm(wv.data(), kout, plan->rows());
    Tensor dw, dx;
    if (w.requires_grad()) dw = zeros_like(wv);
    if (x.requires_grad()) dx = zeros_like(xv);
    RowMat cols;
    for (int n = 0; n < xv.n(); ++n) {
      im2col(*plan, g.sample(n), cols);
      if (!dx.empty()) MapMat(dx.sample(n), kout, plan->cols()).noalias() = wm * cols;
      if (!dw.empty()) {
        MapMat(dw.data(), kout, plan->rows()).noalias() +=
            CMapMat(xv.sample(n), kout, plan->cols()) * cols.transpose();
      }
    }
    if (!dw.empty()) tape.accumulate(w, dw);
    if (!dx.empty()) tape.accumulate(x, dx);
  });
}

Var prelu(Var x, Var slope) {
  const Tensor& xv = x.value();
  const Tensor& av = slope.value();
  const bool shared = av.size() == 1;
  if (!shared && static_cast<int>(av.size()) != xv.c()) {
    throw std::invalid_argument("prelu: slope must be shared or per channel");
  }
  Tensor y = Tensor::like(xv);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double a = av[shared ? 0 : channel_of(i, xv)];
    y[i] = xv[i] >= 0.0 ? xv[i] : a * xv[i];
  }
  return x.tape().record(std::move(y), {x, slope}, [x, slope, shared](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& av = slope.value();
    Tensor dx = Tensor::like(xv);
    Tensor da = Tensor::like(av);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const std::size_t c = shared ? 0 : channel_of(i, xv);
      if (xv[i] >= 0.0) {
        dx[i] = g[i];
      } else {
        dx[i] = g[i] * av[c];
        da[c] += g[i] * xv[i];
      }
    }
    tape.accumulate(x, dx);
    tape.accumulate(slope, da);
  });
}

Var leaky_relu(Var x, double slope) {
  return pointwise(
      x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
      [slope](double v) { return v >= 0.0 ? 1.0 : slope; });
}

Var relu(Var x) {
  return pointwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var sigmoid(Var x) {
  auto s = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  return pointwise(x, s, [s](double v) {
    const double y = s(v);
    return y * (1.0 - y);
  });
}

Var clip01(Var x) {
  return pointwise(
      x, [](double v) { return std::clamp(v, 0.0, 1.0); },
      [](double v) { return v >= 0.0 && v <= 1.0 ? 1.0 : 0.0; });
}

Var linear(Var x, Var w, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const int in = static_cast<int>(xv.sample_size());
  const int out = wv.n();
  if (static_cast<int>(wv.sample_size()) != in) {
    throw std::invalid_argument("linear: weight expects " + std::to_string(wv.sample_size()) +
                                " inputs, got " + std::to_string(in));
  }
  Tensor y(xv.n(), out, 1, 1);
  MapMat(y.data(), xv.n(), out).noalias() =
      CMapMat(xv.data(), xv.n(), in) * CMapMat(wv.data(), out, in).transpose();
  if (bias.valid()) {
    for (int n = 0; n < xv.n(); ++n) {
      for (int o = 0; o < out; ++o) y(n, o, 0, 0) += bias.value()[o];
    }
  }
  return x.tape().record(std::move(y), {x, w, bias}, [x, w, bias](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    const int in = static_cast<int>(xv.sample_size());
    const int out = wv.n();
    const CMapMat gm(g.data(), xv.n(), out);
    if (x.requires_grad()) {
      Tensor dx = Tensor::like(xv);
      MapMat(dx.data(), xv.n(), in).noalias() = gm * CMapMat(wv.data(), out, in);
      tape.accumulate(x, dx);
    }
    if (w.requires_grad()) {
      Tensor dw = Tensor::like(wv);
      MapMat(dw.data(), out, in).noalias() = gm.transpose() * CMapMat(xv.data(), xv.n(), in);
      tape.accumulate(w, dw);
    }
    if (bias.valid() && bias.requires_grad()) {
      Tensor db = Tensor::like(bias.value());
      for (int o = 0; o < out; ++o) db[o] = gm.col(o).sum();
      tape.accumulate(bias, db);
    }
  });
}

Var batch_norm_train(Var x, Var gamma, Var beta, Tensor& running_mean, Tensor& running_var,
                     double momentum, double eps) {
  const Tensor& xv = x.value();
  const int nc = xv.c();
  const std::size_t m = static_cast<std::size_t>(xv.n()) * xv.plane_size();
  if (m < 2) throw std::invalid_argument("batch_norm: need at least two values per channel");
  auto inv_std = std::make_shared<std::vector<double>>(nc);
  auto xhat = std::make_shared<Tensor>(Tensor::like(xv));
  Tensor y = Tensor::like(xv);
  const std::size_t plane = xv.plane_size();
  for (int c = 0; c < nc; ++c) {
    double mu = 0.0;
    for (int n = 0; n < xv.n(); ++n) {
      const double* p = xv.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) mu += p[i];
    }
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (int n = 0; n < xv.n(); ++n) {
      const double* p = xv.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) var += (p[i] - mu) * (p[i] - mu);
    }
    const double unbiased = var / static_cast<double>(m - 1);
    var /= static_cast<double>(m);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[c] = is;
    const double gc = gamma.value()[c], bc = beta.value()[c];
    for (int n = 0; n < xv.n(); ++n) {
      const double* p = xv.sample(n) + c * plane;
      double* h = xhat->sample(n) + c * plane;
      double* q = y.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - mu) * is;
        q[i] = gc * h[i] + bc;
      }
    }
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * unbiased;
  }
  return x.tape().record(
      std::move(y), {x, gamma, beta}, [x, gamma, beta, inv_std, xhat, m](Tape& tape, const Tensor& g) {
        const Tensor& xv = x.value();
        const std::size_t plane = xv.plane_size();
        Tensor dx = Tensor::like(xv);
        Tensor dgamma = Tensor::like(gamma.value());
        Tensor dbeta = Tensor::like(beta.value());
        for (int c = 0; c < xv.c(); ++c) {
          double sg = 0.0, sgh = 0.0;
          for (int n = 0; n < xv.n(); ++n) {
            const double* gp = g.sample(n) + c * plane;
            const double* h = xhat->sample(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              sg += gp[i];
              sgh += gp[i] * h[i];
            }
          }
          dgamma[c] = sgh;
          dbeta[c] = sg;
          const double gc = gamma.value()[c];
          const double k = gc * (*inv_std)[c] / static_cast<double>(m);
          for (int n = 0; n < xv.n(); ++n) {
            const double* gp = g.sample(n) + c * plane;
            const double* h = xhat->sample(n) + c * plane;
            double* d = dx.sample(n) + c * plane;
            for (std::size_t i = 0; i < plane; ++i) {
              d[i] = k * (static_cast<double>(m) * gp[i] - sg - h[i] * sgh);
            }
          }
        }
        tape.accumulate(x, dx);
        tape.accumulate(gamma, dgamma);
        tape.accumulate(beta, dbeta);
      });
}

Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean,
                    const Tensor& running_var, double eps) {
  const Tensor& xv = x.value();
  const std::size_t plane = xv.plane_size();
  auto xhat = std::make_shared<Tensor>(Tensor::like(xv));
  auto inv_std = std::make_shared<std::vector<double>>(xv.c());
  Tensor y = Tensor::like(xv);
  for (int c = 0; c < xv.c(); ++c) {
    const double is = 1.0 / std::sqrt(running_var[c] + eps);
    (*inv_std)[c] = is;
    for (int n = 0; n < xv.n(); ++n) {
      const double* p = xv.sample(n) + c * plane;
      double* h = xhat->sample(n) + c * plane;
      double* q = y.sample(n) + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        h[i] = (p[i] - running_mean[c]) * is;
        q[i] = gamma.value()[c] * h[i] + beta.value()[c];
      }
    }
  }
  return x.tape().record(std::move(y), {x, gamma, beta}, [x, gamma, beta, xhat, inv_std](Tape& tape, const Tensor& g) {
    const Tensor& xv = x.value();
    const std::size_t plane = xv.plane_size();
    Tensor dx = Tensor::like(xv);
    Tensor dgamma = Tensor::like(gamma.value());
    Tensor dbeta = Tensor::like(beta.value());
    for (int c = 0; c < xv.c(); ++c) {
      const double k = gamma.value()[c] * (*inv_std)[c];
      for (int n = 0; n < xv.n(); ++n) {
        const double* gp = g.sample(n) + c * plane;
        const double* h = xhat->sample(n) + c * plane;
        double* d = dx.sample(n) + c * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          d[i] = k * gp[i];
          dgamma[c] += gp[i] * h[i];
          dbeta[c] += gp[i];
        }
      }
    }
    tape.accumulate(x, dx);
    tape.accumulate(gamma, dgamma);
    tape.accumulate(beta, dbeta);
  });
}

Var resample(Var x, const Resampler& r) {
  const Tensor& xv = x.value();
  if (xv.h() != r.in_height() || xv.w() != r.in_width()) {
    throw std::invalid_argument("resample: operator built for a different input size");
  }
  auto op = std::make_shared<Resampler>(r);
  Tensor y(xv.n(), xv.c(), r.out_height(), r.out_width());
  for (int n = 0; n < xv.n(); ++n) {
    for (int c = 0; c < xv.c(); ++c) {
      op->apply_plane(xv.sample(n) + c * xv.plane_size(), y.sample(n) + c * y.plane_size());
    }
  }
  return x.tape().record(std::move(y), {x}, [x, op](Tape& tape, const Tensor& g) {
    Tensor dx = Tensor::like(x.value());
    for (int n = 0; n < dx.n(); ++n) {
      for (int c = 0; c < dx.c(); ++c) {
        op->adjoint_plane(g.sample(n) + c * g.plane_size(), dx.sample(n) + c * dx.plane_size());
      }
    }
    tape.accumulate(x, dx);
  });
}

Var upsample_bilinear(Var x, int scale) {
  if (scale == 1) return x;
  const Tensor& xv = x.value();
  return resample(x, Resampler(xv.h(), xv.w(), scale, ResampleKernel::bilinear, false));
}

Var blur(Var x, const GaussianBlur& b) {
  const Tensor& xv = x.value();
  auto op = std::make_shared<GaussianBlur>(b);
  Tensor y = Tensor::like(xv);
  for (int n = 0; n < xv.n(); ++n) {
    for (int c = 0; c < xv.c(); ++c) {
      op->apply_plane(xv.sample(n) + c * xv.plane_size(), y.sample(n) + c * y.plane_size(), xv.h(),
                      xv.w());
    }
  }
  return x.tape().record(std::move(y), {x}, [x, op](Tape& tape, const Tensor& g) {
    Tensor dx = Tensor::like(g);
    for (int n = 0; n < g.n(); ++n) {
      for (int c = 0; c < g.c(); ++c) {
        op->adjoint_plane(g.sample(n) + c * g.plane_size(), dx.sample(n) + c * dx.plane_size(),
                          g.h(), g.w());
      }
    }
    tape.accumulate(x, dx);
  });
}

Var highpass(Var x, const GaussianBlur& b) { return sub(x, blur(x, b)); }

Var project_ball(Var z, Var alpha, const std::vector<double>& sigmas) {
  const Tensor& zv = z.value();
  if (alpha.value().size() != 1) throw std::invalid_argument("project_ball: alpha must be scalar");
  if (sigmas.size() != 1 && static_cast<int>(sigmas.size()) != zv.n()) {
    throw std::invalid_argument("project_ball: need one sigma per sample or a shared sigma");
  }
  const std::size_t d = zv.sample_size();
  if (d < 2) throw std::invalid_argument("project_ball: sample must hold at least two values");
  const double root = std::sqrt(static_cast<double>(d) - 1.0);
  const double ea = std::exp(alpha.value()[0]);

  // Per sample: radius and norm; a sample is scaled iff norm > radius.
  auto eps = std::make_shared<std::vector<double>>(zv.n());
  auto nrm = std::make_shared<std::vector<double>>(zv.n());
  Tensor y = zv;
  for (int n = 0; n < zv.n(); ++n) {
    const double sigma = sigmas.size() == 1 ? sigmas[0] : sigmas[n];
    if (!(sigma >= 0.0)) throw std::invalid_argument("project_ball: sigma must be >= 0");
    (*eps)[n] = ea * sigma * root;
    const double* p = zv.sample(n);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) s += p[i] * p[i];
    (*nrm)[n] = std::sqrt(s);
    if ((*nrm)[n] > (*eps)[n]) {
      const double f = (*eps)[n] / (*nrm)[n];
      double* q = y.sample(n);
      for (std::size_t i = 0; i < d; ++i) q[i] *= f;
    }
  }
  return z.tape().record(std::move(y), {z, alpha}, [z, alpha, eps, nrm, d](Tape& tape, const Tensor& g) {
    const Tensor& zv = z.value();
    Tensor dz = g;
    double dalpha = 0.0;
    for (int n = 0; n < zv.n(); ++n) {
      const double e = (*eps)[n], r = (*nrm)[n];
      if (r <= e) continue;
      const double* p = zv.sample(n);
      const double* gp = g.sample(n);
      double* q = dz.sample(n);
      double gz = 0.0;
      for (std::size_t i = 0; i < d; ++i) gz += gp[i] * p[i];
      // y = e z / r: dy/dz = (e/r)(I - z z^T / r^2), dy/dalpha = y.
      for (std::size_t i = 0; i < d; ++i) q[i] = (e / r) * (gp[i] - p[i] * gz / (r * r));
      dalpha += e * gz / r;
    }
    tape.accumulate(z, dz);
    tape.accumulate(alpha, Tensor::like(alpha.value(), dalpha));
  });
}

Tensor normalize_filters(const Tensor& raw) {
  Tensor out = raw;
  const std::size_t d = raw.sample_size();
  for (int k = 0; k < raw.n(); ++k) {
    double* p = out.sample(k);
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += p[i];
    mu /= static_cast<double>(d);
    double s = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      p[i] -= mu;
      s += p[i] * p[i];
    }
    const double r = std::sqrt(s);
    if (!(r > 1e-12)) {
      throw std::domain_error("filter " + std::to_string(k) + " is constant and cannot be normalized");
    }
    for (std::size_t i = 0; i < d; ++i) p[i] /= r;
  }
  return out;
}

Var normalize_filters(Var raw) {
  Tensor y = normalize_filters(raw.value());
  return raw.tape().record(std::move(y), {raw}, [raw](Tape& tape, const Tensor& g) {
    const Tensor& rv = raw.value();
    const std::size_t d = rv.sample_size();
    Tensor dr = Tensor::like(rv);
    for (int k = 0; k < rv.n(); ++k) {
      const double* p = rv.sample(k);
      const double* gp = g.sample(k);
      double mu = 0.0;
      for (std::size_t i = 0; i < d; ++i) mu += p[i];
      mu /= static_cast<double>(d);
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += (p[i] - mu) * (p[i] - mu);
      const double r = std::sqrt(s);
      double ug = 0.0;
      for (std::size_t i = 0; i < d; ++i) ug += (p[i] - mu) / r * gp[i];
      double* q = dr.sample(k);
      double qm = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        q[i] = (gp[i] - ug * (p[i] - mu) / r) / r;
        qm += q[i];
      }
      qm /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) q[i] -= qm;
    }
    tape.accumulate(raw, dr);
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape().record(Tensor::scalar(s), {x}, [x](Tape& tape, const Tensor& g) {
    tape.accumulate(x, Tensor::like(x.value(), g[0]));
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

}  // namespace srres::nn
