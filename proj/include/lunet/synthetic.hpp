#pragma once

#include <cstdint>
#include <string>

#include "lunet/data.hpp"

namespace lunet {

/// Knobs for the procedural fundus generator. The defaults are frozen:
/// desk-scale acceptance thresholds were calibrated against them.
struct SyntheticOptions {
  int64_t size = 256;      // square output, multiple of `multiple`
  int64_t multiple = 64;   // divisibility constant of the network
  int trees_per_class = 1;
  int max_depth = 4;       // binary branching depth per tree
  double vessel_scale = 1.0;  // 0 → background only, no labels
  int64_t max_width = 8, min_width = 1;
  double crossing_both_fraction = 1.0;  // crossings labeled in both planes
  bool unknown_band = true;  // band of vessel pixels relabeled "unknown"
  double unknown_band_width = 0.035;  // fraction of size

  void validate() const;
};

/// Renders a fundus-like disc with two interleaved branching vessel trees
/// (artery and venule hues, widths shrinking toward the leaves), optional
/// crossing pixels carrying both labels, and an optional unknown band.
/// Image and label are consistent by construction; intensities are
/// quantized to 8-bit steps so a PNG round trip is exact.
FundusSample generate_synthetic_dfi(uint64_t seed,
                                    const SyntheticOptions& opts = {});

/// Writes `count` samples under `dir` (images/, masks/, colormap.txt,
/// manifest.tsv). Samples are paired two per synthetic patient, eyes
/// alternating, so patient-stratified splitting has real work to do.
void write_synthetic_dataset(const std::string& dir, int count, uint64_t seed,
                             const SyntheticOptions& opts = {});

}  // namespace lunet
