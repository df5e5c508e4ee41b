#include "lunet/nn.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>

namespace lunet {

namespace {

// Scratch target for strip-mined im2col buffers, in doubles.
constexpr int64_t kScratchBudget = 1 << 22;

/// Fills `col` (ck2 × rows*out_w, row-major) with the im2col patch matrix
/// for output rows [y0, y1).
void im2col_strip(const Tensor& x, int64_t n, int64_t k, int64_t stride,
                  int64_t dilation, int64_t pad, int64_t out_w, int64_t y0,
                  int64_t y1, double* col) {
  const int64_t in_h = x.h(), in_w = x.w();
  const int64_t strip = (y1 - y0) * out_w;
  for (int64_t c = 0; c < x.c(); ++c) {
    const double* src = x.plane(n, c);
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * strip;
        for (int64_t y = y0; y < y1; ++y) {
          const int64_t sy = y * stride + ky * dilation - pad;
          double* dst = row + (y - y0) * out_w;
          if (sy < 0 || sy >= in_h) {
            std::fill(dst, dst + out_w, 0.0);
            continue;
          }
          const double* srow = src + sy * in_w;
          const int64_t base = kx * dilation - pad;
          if (stride == 1) {
            // x-range where base + ox is in bounds
            const int64_t lo = std::max<int64_t>(0, -base);
            const int64_t hi = std::min(out_w, in_w - base);
            if (lo > 0) std::fill(dst, dst + std::min(lo, out_w), 0.0);
            for (int64_t ox = lo; ox < hi; ++ox) dst[ox] = srow[base + ox];
            if (hi < out_w)
              std::fill(dst + std::max<int64_t>(hi, 0), dst + out_w, 0.0);
          } else {
            for (int64_t ox = 0; ox < out_w; ++ox) {
              const int64_t sx = ox * stride + base;
              dst[ox] = (sx >= 0 && sx < in_w) ? srow[sx] : 0.0;
            }
          }
        }
      }
    }
  }
}

/// Scatter-adds a col-gradient strip back into the input gradient.
void col2im_strip(Tensor& gx, int64_t n, int64_t k, int64_t stride,
                  int64_t dilation, int64_t pad, int64_t out_w, int64_t y0,
                  int64_t y1, const double* col) {
  const int64_t in_h = gx.h(), in_w = gx.w();
  const int64_t strip = (y1 - y0) * out_w;
  for (int64_t c = 0; c < gx.c(); ++c) {
    double* dst_plane = gx.plane(n, c);
    for (int64_t ky = 0; ky < k; ++ky) {
      for (int64_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * strip;
        for (int64_t y = y0; y < y1; ++y) {
          const int64_t sy = y * stride + ky * dilation - pad;
          if (sy < 0 || sy >= in_h) continue;
          const double* srow = row + (y - y0) * out_w;
          double* drow = dst_plane + sy * in_w;
          const int64_t base = kx * dilation - pad;
          if (stride == 1) {
            const int64_t lo = std::max<int64_t>(0, -base);
            const int64_t hi = std::min(out_w, in_w - base);
            for (int64_t ox = lo; ox < hi; ++ox) drow[base + ox] += srow[ox];
          } else {
            for (int64_t ox = 0; ox < out_w; ++ox) {
              const int64_t sx = ox * stride + base;
              if (sx >= 0 && sx < in_w) drow[sx] += srow[ox];
            }
          }
        }
      }
    }
  }
}

int64_t strip_rows(int64_t ck2, int64_t out_w, int64_t out_h) {
  const int64_t rows = std::max<int64_t>(1, kScratchBudget / (ck2 * out_w));
  return std::min(rows, out_h);
}

}  // namespace

Conv2d::Conv2d(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride,
               int64_t dilation, bool with_bias)
    : in_ch(in_ch),
      out_ch(out_ch),
      kernel(kernel),
      stride(stride),
      dilation(dilation),
      with_bias(with_bias) {
  if (kernel % 2 == 0 && stride == 1)
    throw ConfigError("Conv2d: same-padding requires an odd kernel, got " +
                      std::to_string(kernel));
  w = Tensor(out_ch, in_ch, kernel, kernel);
  gw = Tensor::like(w);
  if (with_bias) {
    b = Tensor(1, out_ch, 1, 1);
    gb = Tensor::like(b);
  }
}

void Conv2d::init_weights(Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(in_ch * kernel * kernel));
  for (int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal() * std;
  if (with_bias) b.fill(0.0);
}

void Conv2d::zero_grad() {
  gw.fill(0.0);
  if (with_bias) gb.fill(0.0);
}

Tensor Conv2d::forward(const Tensor& x) const {
  if (x.c() != in_ch)
    throw ShapeError("Conv2d: expected " + std::to_string(in_ch) +
                     " input channels, got " + std::to_string(x.c()));
  const int64_t oh = out_dim(x.h()), ow = out_dim(x.w());
  Tensor out(x.n(), out_ch, oh, ow);
  const int64_t ck2 = in_ch * kernel * kernel;
  const int64_t rows = strip_rows(ck2, ow, oh);
  std::vector<double> col(static_cast<size_t>(ck2 * rows * ow));
  const int64_t plane = oh * ow;
  for (int64_t n = 0; n < x.n(); ++n) {
    for (int64_t y0 = 0; y0 < oh; y0 += rows) {
      const int64_t y1 = std::min(oh, y0 + rows);
      const int64_t strip = (y1 - y0) * ow;
      im2col_strip(x, n, kernel, stride, dilation, pad(), ow, y0, y1,
                   col.data());
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, out_ch, strip,
                  ck2, 1.0, w.data(), ck2, col.data(), strip, 0.0,
                  out.plane(n, 0) + y0 * ow, plane);
    }
    if (with_bias) {
      for (int64_t oc = 0; oc < out_ch; ++oc) {
        double* dst = out.plane(n, oc);
        const double bias = b[oc];
        for (int64_t i = 0; i < plane; ++i) dst[i] += bias;
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& gout, const Tensor& x) {
  const int64_t oh = out_dim(x.h()), ow = out_dim(x.w());
  if (gout.c() != out_ch || gout.h() != oh || gout.w() != ow ||
      gout.n() != x.n())
    throw ShapeError("Conv2d::backward: gradient shape mismatch");
  Tensor gx = Tensor::like(x);
  const int64_t ck2 = in_ch * kernel * kernel;
  const int64_t rows = strip_rows(ck2, ow, oh);
  std::vector<double> col(static_cast<size_t>(ck2 * rows * ow));
  std::vector<double> gcol(static_cast<size_t>(ck2 * rows * ow));
  const int64_t plane = oh * ow;
  for (int64_t n = 0; n < x.n(); ++n) {
    if (with_bias) {
      for (int64_t oc = 0; oc < out_ch; ++oc) {
        const double* g = gout.plane(n, oc);
        double s = 0.0;
        for (int64_t i = 0; i < plane; ++i) s += g[i];
        gb[oc] += s;
      }
    }
    for (int64_t y0 = 0; y0 < oh; y0 += rows) {
      const int64_t y1 = std::min(oh, y0 + rows);
      const int64_t strip = (y1 - y0) * ow;
      im2col_strip(x, n, kernel, stride, dilation, pad(), ow, y0, y1,
                   col.data());
      const double* gstrip = gout.plane(n, 0) + y0 * ow;
      // gw += gout_strip × colᵀ
      cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, out_ch, ck2, strip,
                  1.0, gstrip, plane, col.data(), strip, 1.0, gw.data(), ck2);
      // gcol = wᵀ × gout_strip
      cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, ck2, strip, out_ch,
                  1.0, w.data(), ck2, gstrip, plane, 0.0, gcol.data(), strip);
      col2im_strip(gx, n, kernel, stride, dilation, pad(), ow, y0, y1,
                   gcol.data());
    }
  }
  return gx;
}

Tensor MaxPool2::forward(const Tensor& x, Cache* cache) {
  if (x.h() % 2 != 0 || x.w() % 2 != 0)
    throw ShapeError("MaxPool2: spatial dims must be even, got " +
                     x.shape_str());
  const int64_t oh = x.h() / 2, ow = x.w() / 2;
  Tensor out(x.n(), x.c(), oh, ow);
  if (cache) {
    cache->argmax.assign(static_cast<size_t>(out.size()), 0);
    cache->n = x.n();
    cache->c = x.c();
    cache->h = x.h();
    cache->w = x.w();
  }
  int64_t oi = 0;
  for (int64_t n = 0; n < x.n(); ++n) {
    for (int64_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xo = 0; xo < ow; ++xo) {
          const double* p = src + (2 * y) * x.w() + 2 * xo;
          double best = p[0];
          uint8_t arg = 0;
          if (p[1] > best) { best = p[1]; arg = 1; }
          if (p[x.w()] > best) { best = p[x.w()]; arg = 2; }
          if (p[x.w() + 1] > best) { best = p[x.w() + 1]; arg = 3; }
          dst[y * ow + xo] = best;
          if (cache) cache->argmax[static_cast<size_t>(oi)] = arg;
          ++oi;
        }
      }
    }
  }
  return out;
}

Tensor MaxPool2::backward(const Tensor& gout, const Cache& cache) {
  Tensor gx(cache.n, cache.c, cache.h, cache.w);
  const int64_t oh = cache.h / 2, ow = cache.w / 2;
  int64_t oi = 0;
  for (int64_t n = 0; n < cache.n; ++n) {
    for (int64_t c = 0; c < cache.c; ++c) {
      const double* g = gout.plane(n, c);
      double* dst = gx.plane(n, c);
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xo = 0; xo < ow; ++xo) {
          const uint8_t arg = cache.argmax[static_cast<size_t>(oi)];
          const int64_t sy = 2 * y + (arg >> 1);
          const int64_t sx = 2 * xo + (arg & 1);
          dst[sy * cache.w + sx] += g[y * ow + xo];
          ++oi;
        }
      }
    }
  }
  return gx;
}

Tensor UpsampleNearest2::forward(const Tensor& x) {
  Tensor out(x.n(), x.c(), x.h() * 2, x.w() * 2);
  for (int64_t n = 0; n < x.n(); ++n) {
    for (int64_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t y = 0; y < out.h(); ++y) {
        const double* srow = src + (y / 2) * x.w();
        double* drow = dst + y * out.w();
        for (int64_t xo = 0; xo < out.w(); ++xo) drow[xo] = srow[xo / 2];
      }
    }
  }
  return out;
}

Tensor UpsampleNearest2::backward(const Tensor& gout) {
  Tensor gx(gout.n(), gout.c(), gout.h() / 2, gout.w() / 2);
  for (int64_t n = 0; n < gx.n(); ++n) {
    for (int64_t c = 0; c < gx.c(); ++c) {
      const double* g = gout.plane(n, c);
      double* dst = gx.plane(n, c);
      for (int64_t y = 0; y < gout.h(); ++y) {
        const double* grow = g + y * gout.w();
        double* drow = dst + (y / 2) * gx.w();
        for (int64_t xo = 0; xo < gout.w(); ++xo) drow[xo / 2] += grow[xo];
      }
    }
  }
  return gx;
}

BatchNorm2d::BatchNorm2d(int64_t channels) : channels(channels) {
  gamma = Tensor(1, channels, 1, 1, 1.0);
  beta = Tensor(1, channels, 1, 1, 0.0);
  ggamma = Tensor::like(gamma);
  gbeta = Tensor::like(beta);
  running_mean = Tensor(1, channels, 1, 1, 0.0);
  running_var = Tensor(1, channels, 1, 1, 1.0);
}

void BatchNorm2d::zero_grad() {
  ggamma.fill(0.0);
  gbeta.fill(0.0);
}

Tensor BatchNorm2d::forward_eval(const Tensor& x) const {
  Tensor out = Tensor::like(x);
  const int64_t hw = x.h() * x.w();
  for (int64_t c = 0; c < channels; ++c) {
    const double scale = gamma[c] / std::sqrt(running_var[c] + eps);
    const double shift = beta[c] - running_mean[c] * scale;
    for (int64_t n = 0; n < x.n(); ++n) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * scale + shift;
    }
  }
  return out;
}

Tensor BatchNorm2d::forward_train(const Tensor& x, Cache& cache) {
  const int64_t hw = x.h() * x.w();
  const int64_t m = x.n() * hw;
  cache.xhat = Tensor::like(x);
  cache.inv_std.assign(static_cast<size_t>(channels), 0.0);
  cache.m = m;
  Tensor out = Tensor::like(x);
  for (int64_t c = 0; c < channels; ++c) {
    double mu = 0.0;
    for (int64_t n = 0; n < x.n(); ++n) {
      const double* src = x.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) mu += src[i];
    }
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (int64_t n = 0; n < x.n(); ++n) {
      const double* src = x.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) {
        const double d = src[i] - mu;
        var += d * d;
      }
    }
    var /= static_cast<double>(m);
    const double istd = 1.0 / std::sqrt(var + eps);
    cache.inv_std[static_cast<size_t>(c)] = istd;
    const double g = gamma[c], bta = beta[c];
    for (int64_t n = 0; n < x.n(); ++n) {
      const double* src = x.plane(n, c);
      double* xh = cache.xhat.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) {
        xh[i] = (src[i] - mu) * istd;
        dst[i] = g * xh[i] + bta;
      }
    }
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mu;
    const double var_unbiased =
        m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var_unbiased;
  }
  return out;
}

Tensor BatchNorm2d::backward(const Tensor& gout, const Cache& cache) {
  Tensor gx = Tensor::like(gout);
  const int64_t hw = gout.h() * gout.w();
  const double m = static_cast<double>(cache.m);
  for (int64_t c = 0; c < channels; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (int64_t n = 0; n < gout.n(); ++n) {
      const double* g = gout.plane(n, c);
      const double* xh = cache.xhat.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    ggamma[c] += sum_gx;
    gbeta[c] += sum_g;
    const double k = gamma[c] * cache.inv_std[static_cast<size_t>(c)] / m;
    for (int64_t n = 0; n < gout.n(); ++n) {
      const double* g = gout.plane(n, c);
      const double* xh = cache.xhat.plane(n, c);
      double* dst = gx.plane(n, c);
      for (int64_t i = 0; i < hw; ++i)
        dst[i] = k * (m * g[i] - sum_g - xh[i] * sum_gx);
    }
  }
  return gx;
}

Tensor SpatialDropout2d::forward(const Tensor& x, Mode mode, Rng* rng,
                                 Cache* cache) const {
  const int64_t nc = x.n() * x.c();
  if (mode == Mode::eval || rate == 0.0) {
    if (cache) cache->scale.assign(static_cast<size_t>(nc), 1.0);
    return x;
  }
  if (!rng) throw ConfigError("SpatialDropout2d: train mode requires an RNG");
  Tensor out = Tensor::like(x);
  const double keep_scale = 1.0 / (1.0 - rate);
  if (cache) cache->scale.assign(static_cast<size_t>(nc), 0.0);
  const int64_t hw = x.h() * x.w();
  for (int64_t j = 0; j < nc; ++j) {
    const double s = rng->uniform() < rate ? 0.0 : keep_scale;
    if (cache) cache->scale[static_cast<size_t>(j)] = s;
    const double* src = x.data() + j * hw;
    double* dst = out.data() + j * hw;
    if (s != 0.0)
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * s;
  }
  return out;
}

Tensor SpatialDropout2d::backward(const Tensor& gout,
                                  const Cache& cache) const {
  Tensor gx = Tensor::like(gout);
  const int64_t hw = gout.h() * gout.w();
  for (size_t j = 0; j < cache.scale.size(); ++j) {
    const double s = cache.scale[j];
    if (s == 0.0) continue;
    const double* g = gout.data() + static_cast<int64_t>(j) * hw;
    double* dst = gx.data() + static_cast<int64_t>(j) * hw;
    for (int64_t i = 0; i < hw; ++i) dst[i] = g[i] * s;
  }
  return gx;
}

Tensor ReLU::forward(const Tensor& x) {
  Tensor out = Tensor::like(x);
  for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
  return out;
}

Tensor ReLU::backward(const Tensor& gout, const Tensor& y) {
  Tensor gx = Tensor::like(gout);
  for (int64_t i = 0; i < gout.size(); ++i)
    gx[i] = y[i] > 0.0 ? gout[i] : 0.0;
  return gx;
}

Tensor Sigmoid::forward(const Tensor& x) {
  Tensor out = Tensor::like(x);
  for (int64_t i = 0; i < x.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-x[i]));
  return out;
}

Tensor Sigmoid::backward(const Tensor& gout, const Tensor& y) {
  Tensor gx = Tensor::like(gout);
  for (int64_t i = 0; i < gout.size(); ++i)
    gx[i] = gout[i] * y[i] * (1.0 - y[i]);
  return gx;
}

}  // namespace lunet
