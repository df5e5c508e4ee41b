#include "lunet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace lunet {

namespace {

// ---- separable 3×3 soft morphology with argument tracking -----------------
//
// Erosion is min-pooling, dilation is max-pooling, windows clipped at the
// borders. Each operator runs a vertical 3×1 pass then a horizontal 1×3
// pass; the chosen offset per element is recorded so gradients can be routed
// back through the winning path (first winner on ties).

struct MorphTape {
  std::vector<int8_t> v, h;  // chosen dy / dx per element
};

template <bool kMin>
Tensor pool3(const Tensor& x, bool vertical, std::vector<int8_t>* args) {
  Tensor out = Tensor::like(x);
  if (args) args->assign(static_cast<size_t>(x.size()), 0);
  const int64_t hgt = x.h(), wid = x.w();
  for (int64_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const double* src = x.data() + nc * hgt * wid;
    double* dst = out.data() + nc * hgt * wid;
    int8_t* arg = args ? args->data() + nc * hgt * wid : nullptr;
    for (int64_t y = 0; y < hgt; ++y) {
      for (int64_t xx = 0; xx < wid; ++xx) {
        double best = 0.0;
        int8_t barg = 0;
        bool first = true;
        for (int8_t d = -1; d <= 1; ++d) {
          const int64_t sy = vertical ? y + d : y;
          const int64_t sx = vertical ? xx : xx + d;
          if (sy < 0 || sy >= hgt || sx < 0 || sx >= wid) continue;
          const double v = src[sy * wid + sx];
          if (first || (kMin ? v < best : v > best)) {
            best = v;
            barg = d;
            first = false;
          }
        }
        dst[y * wid + xx] = best;
        if (arg) arg[y * wid + xx] = barg;
      }
    }
  }
  return out;
}

Tensor pool3_backward(const Tensor& gout, const std::vector<int8_t>& args,
                      bool vertical) {
  Tensor gx = Tensor::like(gout);
  const int64_t hgt = gout.h(), wid = gout.w();
  for (int64_t nc = 0; nc < gout.n() * gout.c(); ++nc) {
    const double* g = gout.data() + nc * hgt * wid;
    double* dst = gx.data() + nc * hgt * wid;
    const int8_t* arg = args.data() + nc * hgt * wid;
    for (int64_t y = 0; y < hgt; ++y) {
      for (int64_t xx = 0; xx < wid; ++xx) {
        const int8_t d = arg[y * wid + xx];
        const int64_t sy = vertical ? y + d : y;
        const int64_t sx = vertical ? xx : xx + d;
        dst[sy * wid + sx] += g[y * wid + xx];
      }
    }
  }
  return gx;
}

Tensor soft_erode(const Tensor& x, MorphTape* tape) {
  Tensor t = pool3<true>(x, true, tape ? &tape->v : nullptr);
  return pool3<true>(t, false, tape ? &tape->h : nullptr);
}

Tensor soft_dilate(const Tensor& x, MorphTape* tape) {
  Tensor t = pool3<false>(x, true, tape ? &tape->v : nullptr);
  return pool3<false>(t, false, tape ? &tape->h : nullptr);
}

Tensor morph_backward(const Tensor& gout, const MorphTape& tape) {
  Tensor g = pool3_backward(gout, tape.h, false);
  return pool3_backward(g, tape.v, true);
}

// ---- soft skeleton ---------------------------------------------------------

struct SkeletonRound {
  MorphTape erode_img;               // img_t = erode(img_{t-1})
  MorphTape open_erode, open_dilate;  // open_t = dilate(erode(img_t))
  Tensor delta;                      // relu(img_t - open_t)
  Tensor skel_before;                // skel entering this round
  std::vector<uint8_t> delta_pos;    // img_t - open_t > 0
  std::vector<uint8_t> update_pos;   // delta·(1-skel) > 0
};

struct SkeletonTape {
  MorphTape open0_erode, open0_dilate;
  std::vector<uint8_t> delta0_pos;
  std::vector<SkeletonRound> rounds;
};

Tensor soft_skeleton_fwd(const Tensor& mask, int iterations,
                         SkeletonTape* tape) {
  Tensor img = mask;
  Tensor eroded =
      soft_erode(img, tape ? &tape->open0_erode : nullptr);
  Tensor open =
      soft_dilate(eroded, tape ? &tape->open0_dilate : nullptr);
  Tensor skel = Tensor::like(img);
  if (tape) tape->delta0_pos.assign(static_cast<size_t>(img.size()), 0);
  for (int64_t i = 0; i < img.size(); ++i) {
    const double u = img[i] - open[i];
    if (u > 0.0) {
      skel[i] = u;
      if (tape) tape->delta0_pos[static_cast<size_t>(i)] = 1;
    }
  }
  if (tape) tape->rounds.resize(static_cast<size_t>(iterations));
  for (int it = 0; it < iterations; ++it) {
    SkeletonRound* r = tape ? &tape->rounds[static_cast<size_t>(it)] : nullptr;
    img = soft_erode(img, r ? &r->erode_img : nullptr);
    eroded = soft_erode(img, r ? &r->open_erode : nullptr);
    open = soft_dilate(eroded, r ? &r->open_dilate : nullptr);
    Tensor delta = Tensor::like(img);
    if (r) {
      r->delta_pos.assign(static_cast<size_t>(img.size()), 0);
      r->update_pos.assign(static_cast<size_t>(img.size()), 0);
      r->skel_before = skel;
    }
    for (int64_t i = 0; i < img.size(); ++i) {
      const double u = img[i] - open[i];
      if (u > 0.0) {
        delta[i] = u;
        if (r) r->delta_pos[static_cast<size_t>(i)] = 1;
      }
      const double upd = delta[i] * (1.0 - skel[i]);
      if (upd > 0.0) {
        skel[i] += upd;
        if (r) r->update_pos[static_cast<size_t>(i)] = 1;
      }
    }
    if (r) r->delta = std::move(delta);
  }
  return skel;
}

/// Routes d(loss)/d(skel) back to d(loss)/d(mask).
Tensor soft_skeleton_bwd(const Tensor& gskel_in, const SkeletonTape& tape) {
  Tensor gskel = gskel_in;
  Tensor gimg;  // gradient flowing into img_t from later rounds
  bool have_gimg = false;
  for (int64_t it = static_cast<int64_t>(tape.rounds.size()) - 1; it >= 0;
       --it) {
    const SkeletonRound& r = tape.rounds[static_cast<size_t>(it)];
    // skel' = skel + relu(delta·(1-skel))
    Tensor gdelta = Tensor::like(gskel);
    Tensor gskel_prev = gskel;
    for (int64_t i = 0; i < gskel.size(); ++i) {
      if (!r.update_pos[static_cast<size_t>(i)]) continue;
      gdelta[i] = gskel[i] * (1.0 - r.skel_before[i]);
      gskel_prev[i] -= gskel[i] * r.delta[i];
    }
    // delta = relu(img - open)
    Tensor gimg_t = have_gimg ? gimg : Tensor::like(gskel);
    Tensor gopen = Tensor::like(gskel);
    for (int64_t i = 0; i < gskel.size(); ++i) {
      if (!r.delta_pos[static_cast<size_t>(i)]) continue;
      gimg_t[i] += gdelta[i];
      gopen[i] -= gdelta[i];
    }
    // open = dilate(erode(img))
    gimg_t += morph_backward(morph_backward(gopen, r.open_dilate),
                             r.open_erode);
    // img_t = erode(img_{t-1})
    gimg = morph_backward(gimg_t, r.erode_img);
    have_gimg = true;
    gskel = std::move(gskel_prev);
  }
  // skel0 = relu(img0 - open0)
  Tensor gmask = have_gimg ? gimg : Tensor::like(gskel);
  Tensor gopen0 = Tensor::like(gskel);
  for (int64_t i = 0; i < gskel.size(); ++i) {
    if (!tape.delta0_pos[static_cast<size_t>(i)]) continue;
    gmask[i] += gskel[i];
    gopen0[i] -= gskel[i];
  }
  gmask += morph_backward(morph_backward(gopen0, tape.open0_dilate),
                          tape.open0_erode);
  return gmask;
}

// ---- component pieces with gradient accumulation ---------------------------

double bce_with_grad(const Tensor& pred, const Tensor& target, double eps,
                     Tensor* grad, double gscale) {
  const double n = static_cast<double>(pred.size());
  double loss = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    const double p = std::clamp(pred[i], eps, 1.0 - eps);
    const double t = target[i];
    loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    if (grad && pred[i] >= eps && pred[i] <= 1.0 - eps)
      (*grad)[i] += gscale * (p - t) / (p * (1.0 - p) * n);
  }
  return loss / n;
}

double dice_with_grad(const Tensor& pred, const Tensor& target, double eps_s,
                      Tensor* grad, double gscale) {
  double inter = 0.0, sp = 0.0, st = 0.0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    inter += pred[i] * target[i];
    sp += pred[i];
    st += target[i];
  }
  const double num = 2.0 * inter + eps_s;
  const double den = sp + st + eps_s;
  if (grad) {
    const double den2 = den * den;
    for (int64_t i = 0; i < pred.size(); ++i)
      (*grad)[i] += gscale * (num - 2.0 * target[i] * den) / den2;
  }
  return 1.0 - num / den;
}

double cldice_with_grad(const Tensor& pred, const Tensor& target, int iters,
                        double eps_s, Tensor* grad, double gscale) {
  SkeletonTape tape;
  Tensor skel_pred = soft_skeleton_fwd(pred, iters, grad ? &tape : nullptr);
  Tensor skel_tgt = soft_skeleton_fwd(target, iters, nullptr);
  double a = eps_s, b = eps_s, a2 = eps_s, b2 = eps_s;
  for (int64_t i = 0; i < pred.size(); ++i) {
    a += skel_pred[i] * target[i];
    b += skel_pred[i];
    a2 += skel_tgt[i] * pred[i];
    b2 += skel_tgt[i];
  }
  const double tprec = a / b, tsens = a2 / b2;
  const double psum = tprec + tsens;
  const double loss = 1.0 - 2.0 * tprec * tsens / psum;
  if (grad) {
    const double dP = -2.0 * tsens * tsens / (psum * psum);
    const double dS = -2.0 * tprec * tprec / (psum * psum);
    Tensor gskel = Tensor::like(pred);
    for (int64_t i = 0; i < pred.size(); ++i) {
      gskel[i] = gscale * dP * (target[i] - tprec) / b;
      (*grad)[i] += gscale * dS * skel_tgt[i] / b2;
    }
    *grad += soft_skeleton_bwd(gskel, tape);
  }
  return loss;
}

double smoothness_with_grad(const Tensor& pred, Tensor* grad, double gscale) {
  const int64_t hgt = pred.h(), wid = pred.w();
  const int64_t pairs =
      pred.n() * pred.c() * (hgt * (wid - 1) + (hgt - 1) * wid);
  if (pairs == 0) return 0.0;
  double total = 0.0;
  const double gs = gscale / static_cast<double>(pairs);
  for (int64_t nc = 0; nc < pred.n() * pred.c(); ++nc) {
    const double* p = pred.data() + nc * hgt * wid;
    double* g = grad ? grad->data() + nc * hgt * wid : nullptr;
    for (int64_t y = 0; y < hgt; ++y) {
      for (int64_t x = 0; x < wid; ++x) {
        if (x + 1 < wid) {
          const double d = p[y * wid + x + 1] - p[y * wid + x];
          total += std::fabs(d);
          if (g && d != 0.0) {
            const double s = d > 0.0 ? gs : -gs;
            g[y * wid + x + 1] += s;
            g[y * wid + x] -= s;
          }
        }
        if (y + 1 < hgt) {
          const double d = p[(y + 1) * wid + x] - p[y * wid + x];
          total += std::fabs(d);
          if (g && d != 0.0) {
            const double s = d > 0.0 ? gs : -gs;
            g[(y + 1) * wid + x] += s;
            g[y * wid + x] -= s;
          }
        }
      }
    }
  }
  return total / static_cast<double>(pairs);
}

double component_with_grad(const Tensor& pred, const Tensor& target,
                           const LossOptions& opts, Tensor* grad,
                           double gscale, LossBreakdown* breakdown) {
  check_same_shape(pred, target, "component_loss");
  const LossWeights& w = opts.weights;
  double bce = 0.0, dice = 0.0, cld = 0.0;
  if (w.lambda1 != 0.0 || breakdown)
    bce = bce_with_grad(pred, target, opts.clamp_eps, grad,
                        gscale * w.lambda1);
  if (w.lambda2 != 0.0 || breakdown)
    dice = dice_with_grad(pred, target, opts.smooth_eps, grad,
                          gscale * w.lambda2);
  if (w.lambda3 != 0.0)
    cld = cldice_with_grad(pred, target, opts.skeleton_iters, opts.smooth_eps,
                           grad, gscale * w.lambda3);
  const double smooth =
      smoothness_with_grad(pred, opts.gradient_weight != 0.0 ? grad : nullptr,
                           gscale * opts.gradient_weight);
  if (breakdown) {
    breakdown->bce += bce;
    breakdown->dice += dice;
    breakdown->cldice += cld;
    breakdown->smooth += smooth;
  }
  const double total = w.lambda1 * bce + w.lambda2 * dice + w.lambda3 * cld +
                       opts.gradient_weight * smooth;
  if (breakdown) breakdown->total += total;
  return total;
}

}  // namespace

double bce_loss(const Tensor& pred, const Tensor& target, double clamp_eps) {
  check_same_shape(pred, target, "bce_loss");
  return bce_with_grad(pred, target, clamp_eps, nullptr, 0.0);
}

double dice_loss(const Tensor& pred, const Tensor& target, double smooth_eps) {
  check_same_shape(pred, target, "dice_loss");
  return dice_with_grad(pred, target, smooth_eps, nullptr, 0.0);
}

Tensor soft_skeleton(const Tensor& mask, int iterations) {
  if (iterations < 1)
    throw ConfigError("soft_skeleton: iterations must be >= 1");
  return soft_skeleton_fwd(mask, iterations, nullptr);
}

double cldice_loss(const Tensor& pred, const Tensor& target, int iterations,
                   double smooth_eps) {
  check_same_shape(pred, target, "cldice_loss");
  if (iterations < 1)
    throw ConfigError("cldice_loss: iterations must be >= 1");
  return cldice_with_grad(pred, target, iterations, smooth_eps, nullptr, 0.0);
}

double smoothness_penalty(const Tensor& pred) {
  return smoothness_with_grad(pred, nullptr, 0.0);
}

double component_loss(const Tensor& pred, const Tensor& target,
                      const LossOptions& opts, LossBreakdown* breakdown) {
  return component_with_grad(pred, target, opts, nullptr, 0.0, breakdown);
}

void validate_label_triplet(const Tensor& label) {
  if (label.c() != 3)
    throw ShapeError("label triplet must have 3 planes, got " +
                     label.shape_str());
  for (int64_t i = 0; i < label.size(); ++i)
    if (label[i] != 0.0 && label[i] != 1.0)
      throw ConfigError("label triplet planes must be strictly binary");
}

double lunet_loss(const Tensor& pred, const Tensor& label,
                  const LossOptions& opts, LossBreakdown* breakdown,
                  Tensor* grad) {
  if (pred.c() != 2)
    throw ShapeError("lunet_loss: pred must have 2 channels, got " +
                     pred.shape_str());
  if (label.c() != 3 || label.n() != pred.n() || label.h() != pred.h() ||
      label.w() != pred.w())
    throw ShapeError("lunet_loss: label " + label.shape_str() +
                     " incompatible with pred " + pred.shape_str());
  validate_label_triplet(label);
  opts.weights.validate();

  const int64_t batch = pred.n();
  const int64_t hgt = pred.h(), wid = pred.w(), hw = hgt * wid;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  if (grad) {
    *grad = Tensor::like(pred);
  }
  if (breakdown) *breakdown = LossBreakdown{};
  double total = 0.0;

  Tensor q(1, 1, hgt, wid), t(1, 1, hgt, wid), gq(1, 1, hgt, wid);
  for (int64_t n = 0; n < batch; ++n) {
    const double* pa = pred.plane(n, 0);
    const double* pv = pred.plane(n, 1);
    const double* ya = label.plane(n, 0);
    const double* yv = label.plane(n, 1);
    const double* yu = label.plane(n, 2);

    // arteriole and venule terms on unknown-masked maps
    for (int ch = 0; ch < 2; ++ch) {
      const double* p = ch == 0 ? pa : pv;
      const double* y = ch == 0 ? ya : yv;
      for (int64_t i = 0; i < hw; ++i) {
        const double m = 1.0 - yu[i];
        q[i] = p[i] * m;
        t[i] = y[i] * m;
      }
      if (grad) gq.fill(0.0);
      total += inv_batch * component_with_grad(q, t, opts,
                                               grad ? &gq : nullptr,
                                               inv_batch, breakdown);
      if (grad) {
        double* g = grad->plane(n, ch);
        for (int64_t i = 0; i < hw; ++i) g[i] += gq[i] * (1.0 - yu[i]);
      }
    }

    // vessel-union term: soft union of predictions vs union of all labels
    for (int64_t i = 0; i < hw; ++i) {
      q[i] = std::max(pa[i], pv[i]);
      t[i] = std::max(ya[i], std::max(yv[i], yu[i]));
    }
    if (grad) gq.fill(0.0);
    total += inv_batch * component_with_grad(q, t, opts, grad ? &gq : nullptr,
                                             inv_batch, breakdown);
    if (grad) {
      double* ga = grad->plane(n, 0);
      double* gv = grad->plane(n, 1);
      for (int64_t i = 0; i < hw; ++i) {
        if (pa[i] >= pv[i])
          ga[i] += gq[i];
        else
          gv[i] += gq[i];
      }
    }
  }
  if (breakdown) {
    *breakdown *= inv_batch;
  }
  return total;
}

}  // namespace lunet
