#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lunet/model.hpp"
#include "lunet/tensor.hpp"

namespace lunet {

/// Test-time augmentation plan: every angle, with and without a prior
/// transpose. The default covers 12 rotations × {identity, transpose} = 24
/// passes.
struct TTAPlan {
  std::vector<double> angles;  // degrees
  bool include_transpose = true;

  static TTAPlan standard();  // [0, 30, …, 330] + transpose
  int64_t size() const {
    return static_cast<int64_t>(angles.size()) * (include_transpose ? 2 : 1);
  }
  void validate() const;
};

/// Maps a (padded) 1×C×H×W input to probability maps of the same H×W.
using ForwardFn = std::function<Tensor(const Tensor&)>;

/// Runs the forward function once per plan entry on the transformed input
/// (transpose first, then rotation about the center), inverts each output
/// back, and averages pixel-wise. Pixels a transform never saw (rotation
/// fill) are excluded from its contribution; pixels no transform saw are 0.
/// The reduction order is canonical, so permuting the plan is bit-identical.
Tensor tta_predict(const ForwardFn& forward, const Tensor& image,
                   const TTAPlan& plan);
Tensor tta_predict(const LUNet& model, const Tensor& image,
                   const TTAPlan& plan);

/// Pads to the model's divisibility multiple, runs a plain forward pass (or
/// the TTA plan when given), and crops the probabilities back to the input
/// frame.
Tensor predict_probabilities(const LUNet& model, const Tensor& image,
                             const TTAPlan* plan = nullptr);

struct BinaryMasks {
  Tensor artery, venule, vessel;  // 1×1×H×W each; vessel = artery OR venule
};

/// Per-channel comparison prob ≥ threshold on a 1×2×H×W probability pair.
BinaryMasks binarize(const Tensor& prob, double threshold = 0.5);

/// Same thresholding packed as a 1×3×H×W label triplet (unknown plane zero),
/// ready for the mask codec.
Tensor binarize_prediction(const Tensor& prob, double threshold = 0.5);

/// Input image blended with class tints (artery red, venule blue, overlap
/// magenta, unknown green); both tensors 1×3×H×W, output in [0,1].
Tensor render_overlay(const Tensor& image, const Tensor& label);

/// Raw probability dump: magic bytes, a small JSON header, then the map as
/// little-endian doubles. Round trips bit-exactly.
void write_probability_dump(const std::string& path, const Tensor& prob);
Tensor read_probability_dump(const std::string& path);

}  // namespace lunet
