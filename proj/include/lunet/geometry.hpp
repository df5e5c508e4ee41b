#pragma once

#include "lunet/tensor.hpp"

namespace lunet {

// Spatial transforms over N×C×H×W tensors, applied per plane.

Tensor flip_h(const Tensor& x);  // mirror columns
Tensor flip_v(const Tensor& x);  // mirror rows
Tensor transpose_hw(const Tensor& x);

/// Exact quarter-turn rotation by k×90°; consistent with
/// rotate_bilinear(x, 90·k) on square inputs. k may be negative.
Tensor rot90(const Tensor& x, int k);

/// Rotation about the plane center ((w-1)/2, (h-1)/2) with bilinear
/// sampling and zero fill; the canvas keeps its dimensions. Angles that are
/// exact multiples of 90° dispatch to the index-permutation path, so no
/// interpolation error is introduced there.
Tensor rotate_bilinear(const Tensor& x, double degrees);

/// Bilinear resize with half-pixel centers (src = (dst+0.5)·scale − 0.5).
Tensor resize_bilinear(const Tensor& x, int64_t out_h, int64_t out_w);
/// Nearest-neighbor resize; keeps binary maps binary.
Tensor resize_nearest(const Tensor& x, int64_t out_h, int64_t out_w);

}  // namespace lunet
