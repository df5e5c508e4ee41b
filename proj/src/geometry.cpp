#include "lunet/geometry.hpp"

#include <cmath>

namespace lunet {

namespace {

template <typename MapFn>
Tensor remap(const Tensor& x, int64_t oh, int64_t ow, MapFn&& fn) {
  Tensor out(x.n(), x.c(), oh, ow);
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xx = 0; xx < ow; ++xx)
          dst[y * ow + xx] = fn(src, y, xx);
    }
  return out;
}

}  // namespace

Tensor flip_h(const Tensor& x) {
  const int64_t w = x.w();
  return remap(x, x.h(), w, [w](const double* s, int64_t y, int64_t xx) {
    return s[y * w + (w - 1 - xx)];
  });
}

Tensor flip_v(const Tensor& x) {
  const int64_t h = x.h(), w = x.w();
  return remap(x, h, w, [h, w](const double* s, int64_t y, int64_t xx) {
    return s[(h - 1 - y) * w + xx];
  });
}

Tensor transpose_hw(const Tensor& x) {
  const int64_t w = x.w();
  return remap(x, x.w(), x.h(), [w](const double* s, int64_t y, int64_t xx) {
    return s[xx * w + y];
  });
}

Tensor rot90(const Tensor& x, int k) {
  int r = k % 4;
  if (r < 0) r += 4;
  const int64_t h = x.h(), w = x.w();
  switch (r) {
    case 0:
      return x;
    case 1:
      // matches rotate_bilinear(+90): out(y,x) = in(h-1-x, y)
      return remap(x, w, h, [h, w](const double* s, int64_t y, int64_t xx) {
        return s[(h - 1 - xx) * w + y];
      });
    case 2:
      return remap(x, h, w, [h, w](const double* s, int64_t y, int64_t xx) {
        return s[(h - 1 - y) * w + (w - 1 - xx)];
      });
    default:
      return remap(x, w, h, [w](const double* s, int64_t y, int64_t xx) {
        return s[xx * w + (w - 1 - y)];
      });
  }
}

Tensor rotate_bilinear(const Tensor& x, double degrees) {
  const double turns = degrees / 90.0;
  if (turns == std::floor(turns) && x.h() == x.w())
    return rot90(x, static_cast<int>(std::floor(turns)));

  const int64_t h = x.h(), w = x.w();
  const double cy = static_cast<double>(h - 1) / 2.0;
  const double cx = static_cast<double>(w - 1) / 2.0;
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  const double co = std::cos(rad), si = std::sin(rad);
  // inverse mapping: rotate output coords by -degrees
  return remap(x, h, w, [=](const double* s, int64_t y, int64_t xx) {
    const double dy = static_cast<double>(y) - cy;
    const double dx = static_cast<double>(xx) - cx;
    const double sx = co * dx + si * dy + cx;
    const double sy = -si * dx + co * dy + cy;
    const int64_t x0 = static_cast<int64_t>(std::floor(sx));
    const int64_t y0 = static_cast<int64_t>(std::floor(sy));
    const double fx = sx - static_cast<double>(x0);
    const double fy = sy - static_cast<double>(y0);
    double acc = 0.0;
    const double wt[2] = {1.0 - fy, fy};
    const double wl[2] = {1.0 - fx, fx};
    for (int dy2 = 0; dy2 < 2; ++dy2)
      for (int dx2 = 0; dx2 < 2; ++dx2) {
        const int64_t yy = y0 + dy2, xx2 = x0 + dx2;
        if (yy < 0 || yy >= h || xx2 < 0 || xx2 >= w) continue;  // zero fill
        acc += wt[dy2] * wl[dx2] * s[yy * w + xx2];
      }
    return acc;
  });
}

namespace {

Tensor resize_impl(const Tensor& x, int64_t oh, int64_t ow, bool bilinear) {
  if (oh < 1 || ow < 1) throw ShapeError("resize: output dims must be >= 1");
  const int64_t h = x.h(), w = x.w();
  const double sy = static_cast<double>(h) / static_cast<double>(oh);
  const double sx = static_cast<double>(w) / static_cast<double>(ow);
  return remap(x, oh, ow, [=](const double* s, int64_t y, int64_t xx) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const double fx = (static_cast<double>(xx) + 0.5) * sx - 0.5;
    if (!bilinear) {
      const int64_t ny = std::min<int64_t>(
          h - 1, std::max<int64_t>(0, static_cast<int64_t>(std::lround(fy))));
      const int64_t nx = std::min<int64_t>(
          w - 1, std::max<int64_t>(0, static_cast<int64_t>(std::lround(fx))));
      return s[ny * w + nx];
    }
    const double cy = std::min(std::max(fy, 0.0), static_cast<double>(h - 1));
    const double cx = std::min(std::max(fx, 0.0), static_cast<double>(w - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(cy));
    const int64_t x0 = static_cast<int64_t>(std::floor(cx));
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const double ay = cy - static_cast<double>(y0);
    const double ax = cx - static_cast<double>(x0);
    return (1 - ay) * ((1 - ax) * s[y0 * w + x0] + ax * s[y0 * w + x1]) +
           ay * ((1 - ax) * s[y1 * w + x0] + ax * s[y1 * w + x1]);
  });
}

}  // namespace

Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w) {
  return resize_impl(x, out_h, out_w, true);
}

Tensor resize_nearest(const Tensor& x, int64_t out_h, int64_t out_w) {
  return resize_impl(x, out_h, out_w, false);
}

}  // namespace lunet
