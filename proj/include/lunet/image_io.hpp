#pragma once

#include <string>

#include "lunet/tensor.hpp"

namespace lunet {

/// Reads an 8-bit RGB PNG into a 1×3×H×W tensor with raw values in [0,255].
/// Grayscale/palette/alpha inputs are converted to RGB on load.
Tensor read_png(const std::string& path);

/// Writes a 1×3×H×W tensor with values in [0,255] (rounded to nearest,
/// clamped) as an 8-bit RGB PNG.
void write_png(const std::string& path, const Tensor& image);

}  // namespace lunet
