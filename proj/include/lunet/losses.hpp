#pragma once

#include "lunet/tensor.hpp"

namespace lunet {

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda3 = 0.3;
  void validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
      throw ConfigError("LossWeights: weights must be non-negative");
  }
};

struct LossOptions {
  LossWeights weights;
  double clamp_eps = 1e-7;    // prediction clamp before logarithms
  double smooth_eps = 1.0;    // dice / clDice ratio smoothing
  int skeleton_iters = 10;
  double gradient_weight = 1.0;  // weight of the probability-map gradient term
};

struct LossBreakdown {
  double total = 0, bce = 0, dice = 0, cldice = 0, smooth = 0;
  LossBreakdown& operator+=(const LossBreakdown& o) {
    total += o.total;
    bce += o.bce;
    dice += o.dice;
    cldice += o.cldice;
    smooth += o.smooth;
    return *this;
  }
  LossBreakdown& operator*=(double s) {
    total *= s;
    bce *= s;
    dice *= s;
    cldice *= s;
    smooth *= s;
    return *this;
  }
};

/// Mean binary cross-entropy; predictions clamped to [eps, 1-eps].
double bce_loss(const Tensor& pred, const Tensor& target,
                double clamp_eps = 1e-7);

/// 1 - (2·Σpt + eps_s) / (Σp + Σt + eps_s).
double dice_loss(const Tensor& pred, const Tensor& target,
                 double smooth_eps = 1.0);

/// Differentiable skeleton by iterated soft erosion and opening with a 3×3
/// structuring element (separable min/max pooling), accumulating residues.
Tensor soft_skeleton(const Tensor& mask, int iterations);

double cldice_loss(const Tensor& pred, const Tensor& target, int iterations,
                   double smooth_eps = 1.0);

/// Mean magnitude of forward finite differences along both spatial axes,
/// pooled over all neighbor pairs.
double smoothness_penalty(const Tensor& pred);

/// λ1·BCE + λ2·dice + λ3·clDice + gradient_weight·smoothness.
double component_loss(const Tensor& pred, const Tensor& target,
                      const LossOptions& opts,
                      LossBreakdown* breakdown = nullptr);

/// Composite loss over a batch: for each sample, the sum of component losses
/// on the unknown-masked artery map, the unknown-masked venule map, and the
/// vessel union (pixelwise max); the batch value is the per-sample mean.
/// `pred` is N×2×H×W, `label` is N×3×H×W with planes [artery, venule,
/// unknown], each strictly binary. If `grad` is non-null it receives
/// d(loss)/d(pred).
double lunet_loss(const Tensor& pred, const Tensor& label,
                  const LossOptions& opts, LossBreakdown* breakdown = nullptr,
                  Tensor* grad = nullptr);

/// Throws if any element of the three planes is not exactly 0 or 1.
void validate_label_triplet(const Tensor& label);

}  // namespace lunet
