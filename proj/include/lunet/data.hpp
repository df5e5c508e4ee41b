#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lunet/tensor.hpp"

namespace lunet {

struct DecodeError : IoError {
  using IoError::IoError;
};

enum class Eye { left, right, unknown };
std::string eye_to_string(Eye eye);
Eye eye_from_string(const std::string& s);

/// One fundus image with optional ground truth. `image` is 1×3×H×W in [0,1]
/// once normalized; `label` is 1×3×H×W with binary planes
/// [artery, venule, unknown], or an empty tensor when absent.
struct FundusSample {
  std::string id;
  Tensor image;
  Tensor label;
  std::string patient_id;
  Eye eye = Eye::unknown;
  std::string source;

  bool has_label() const { return !label.empty(); }
};

// ---- mask codec -------------------------------------------------------------

/// Maps RGB colors to combinations of the three label planes. Every color in
/// a mask must be declared; encoding requires a color for every plane
/// combination that occurs.
class Colormap {
 public:
  struct Entry {
    std::string name;
    uint8_t rgb[3];
    uint8_t planes;  // bit 0 artery, bit 1 venule, bit 2 unknown
  };

  /// red→artery, blue→venule, green→unknown, magenta→artery+venule,
  /// black→background.
  static Colormap default_map();
  static Colormap load(const std::string& path);
  void save(const std::string& path) const;

  const std::vector<Entry>& entries() const { return entries_; }
  void add(const Entry& e);

  /// 1×3×H×W color mask (values 0..255) → binary LabelTriplet tensor.
  Tensor decode(const Tensor& mask_image) const;
  /// Binary LabelTriplet tensor → 1×3×H×W color mask (values 0..255).
  Tensor encode(const Tensor& label) const;

 private:
  std::vector<Entry> entries_;
};

// ---- preprocessing ----------------------------------------------------------

/// Region of the original image inside a padded tensor.
struct CropRecord {
  int64_t top = 0, left = 0, height = 0, width = 0;
};

/// Zero-pads symmetrically up to the next multiple (extra pixel goes to the
/// bottom/right on odd remainders).
Tensor pad_to_multiple(const Tensor& x, int64_t multiple, CropRecord* record);
/// Inverse of pad_to_multiple.
Tensor crop(const Tensor& x, const CropRecord& record);

/// 8-bit intensities → [0,1] by dividing by 255.
Tensor normalize_u8(const Tensor& raw);
/// [0,1] → 8-bit intensity scale (not rounded).
Tensor denormalize_u8(const Tensor& unit);

// ---- splitting --------------------------------------------------------------

struct SplitManifest {
  std::vector<std::string> train, val, test;
};

/// Patient-stratified split: patients are shuffled with the seed and
/// assigned whole to train, then val, then test until each realized sample
/// fraction reaches its target.
SplitManifest split_dataset(const std::vector<FundusSample>& samples,
                            double train_frac, double val_frac, uint64_t seed);

// ---- augmentation -----------------------------------------------------------

struct AugmentOptions {
  double flip_prob = 0.5;       // each of h-flip, v-flip, transpose
  int64_t min_size = 800;       // rescale target drawn from [min, max]
  int64_t max_size = 1472;
  int64_t pad_multiple = 64;    // re-pad after rescale
  int64_t forced_size = 0;      // >0: use this size, skip the draw
  double color_lo = 0.8, color_hi = 1.2;  // brightness/contrast/saturation
  double hue_shift = 0.05;                // hue offset drawn from ±this
};

/// Seeded augmentation: flips/transpose (each with flip_prob), square rescale
/// to a drawn size, re-pad to the divisibility multiple, then color jitter on
/// the image only. Geometric ops hit image and label identically.
FundusSample augment(const FundusSample& sample, const AugmentOptions& opts,
                     uint64_t seed);

// ---- external-dataset adapters ----------------------------------------------

enum class ExternalKind { unaf, inspire_avr, les_av, hrf };
std::string external_kind_name(ExternalKind kind);
ExternalKind external_kind_from_string(const std::string& s);

/// Reframes a source image to the native 1444×1444 field of view:
///   UNAF (2124×2056):        zero-pad to 2124², center-crop 1444²
///   INSPIRE-AVR (2392×2048): center-crop to 2048², resize to 1444²
///   LES-AV (1620×1444):      center-crop borders to 1444²
///   HRF (any ≥1444):         1444² window centered on od_center, clamped
/// od_center is (x, y) in pixels; required for HRF only.
Tensor adapt_external(const Tensor& image, ExternalKind kind,
                      std::optional<std::pair<int64_t, int64_t>> od_center =
                          std::nullopt);

// ---- manifest I/O -----------------------------------------------------------

struct ManifestRow {
  std::string id, image_path, mask_path, patient_id;
  Eye eye = Eye::unknown;
  std::string split;  // train / val / test / "" (unassigned)
};

std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows);

/// Loads the sample behind a manifest row: image normalized to [0,1], mask
/// decoded through the colormap when present. Relative paths resolve against
/// the manifest's directory (pass it as `base_dir`).
FundusSample load_sample(const ManifestRow& row, const Colormap& colormap,
                         const std::string& base_dir = "");

}  // namespace lunet
