#include "lunet/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "lunet/image_io.hpp"
#include "lunet/rng.hpp"

namespace lunet {

void SyntheticOptions::validate() const {
  if (multiple < 1 || size < multiple || size % multiple != 0)
    throw ConfigError("synthetic: size must be a positive multiple of " +
                      std::to_string(multiple));
  if (min_width < 1 || max_width < min_width)
    throw ConfigError("synthetic: widths must satisfy 1 <= min <= max");
  if (trees_per_class < 0 || max_depth < 0)
    throw ConfigError("synthetic: negative tree parameters");
  if (crossing_both_fraction < 0.0 || crossing_both_fraction > 1.0)
    throw ConfigError("synthetic: crossing_both_fraction must be in [0,1]");
}

namespace {

struct Rgb {
  double r, g, b;
};

constexpr Rgb kArteryColor{0.93, 0.35, 0.22};   // bright orange-red
constexpr Rgb kVenuleColor{0.45, 0.10, 0.18};   // dark claret
constexpr Rgb kBothColor{0.69, 0.22, 0.20};
constexpr Rgb kUnknownColor{0.62, 0.20, 0.17};
constexpr Rgb kFundusColor{0.62, 0.28, 0.10};
constexpr Rgb kDiscColor{0.95, 0.85, 0.55};

/// Stamps a disc of the given radius into a binary plane.
void stamp(std::vector<uint8_t>& plane, int64_t size, double cx, double cy,
           double radius) {
  const int64_t x0 = std::max<int64_t>(0, static_cast<int64_t>(cx - radius) - 1);
  const int64_t x1 =
      std::min(size - 1, static_cast<int64_t>(cx + radius) + 1);
  const int64_t y0 = std::max<int64_t>(0, static_cast<int64_t>(cy - radius) - 1);
  const int64_t y1 =
      std::min(size - 1, static_cast<int64_t>(cy + radius) + 1);
  const double r2 = radius * radius;
  for (int64_t y = y0; y <= y1; ++y)
    for (int64_t x = x0; x <= x1; ++x) {
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      if (dx * dx + dy * dy <= r2)
        plane[static_cast<size_t>(y * size + x)] = 1;
    }
}

/// Walks one vessel segment as a unit-step polyline with angular jitter,
/// stamping discs along the way, then recurses into two children.
void grow(std::vector<uint8_t>& plane, int64_t size, Rng& rng, double x,
          double y, double angle, int depth, int max_depth, double max_width,
          double min_width, double scale) {
  const double fov = 0.47 * static_cast<double>(size);
  const double cx = static_cast<double>(size) / 2.0;
  const double cy = cx;
  const double width =
      std::max(min_width,
               std::round(max_width * std::pow(0.72, depth) * scale));
  const double length =
      rng.uniform(0.10, 0.16) * static_cast<double>(size) *
      std::pow(0.85, depth);

  const int64_t steps = std::max<int64_t>(2, std::llround(length));
  for (int64_t i = 0; i < steps; ++i) {
    angle += rng.uniform(-0.06, 0.06);
    x += std::cos(angle);
    y += std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    if (dx * dx + dy * dy > fov * fov) return;  // left the field of view
    stamp(plane, size, x, y, width / 2.0);
  }
  if (depth >= max_depth) return;
  const double split = rng.uniform(0.35, 0.65);
  grow(plane, size, rng, x, y, angle - split, depth + 1, max_depth, max_width,
       min_width, scale);
  grow(plane, size, rng, x, y, angle + split, depth + 1, max_depth, max_width,
       min_width, scale);
}

}  // namespace

FundusSample generate_synthetic_dfi(uint64_t seed,
                                    const SyntheticOptions& opts) {
  opts.validate();
  Rng rng(mix_seed(seed, hash_str("synthetic-dfi")));
  const int64_t size = opts.size;
  const double fsize = static_cast<double>(size);
  const double cx = fsize / 2.0, cy = fsize / 2.0;
  const double fov = 0.48 * fsize;

  // optic disc sits off-center; trees radiate from it toward the center
  const double disc_angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double disc_x = cx + 0.60 * fov * std::cos(disc_angle);
  const double disc_y = cy + 0.60 * fov * std::sin(disc_angle);
  const double disc_r = 0.085 * fsize;

  const size_t px = static_cast<size_t>(size * size);
  std::vector<uint8_t> artery(px, 0), venule(px, 0), unknown(px, 0);

  const bool have_vessels = opts.trees_per_class > 0 && opts.vessel_scale > 0;
  if (have_vessels) {
    const double toward_center = std::atan2(cy - disc_y, cx - disc_x);
    for (int t = 0; t < opts.trees_per_class; ++t) {
      for (int cls = 0; cls < 2; ++cls) {
        std::vector<uint8_t>& plane = cls == 0 ? artery : venule;
        const double fan =
            (static_cast<double>(t) - (opts.trees_per_class - 1) / 2.0) * 0.9;
        const double offset = cls == 0 ? 0.45 : -0.45;  // interleaved
        grow(plane, size, rng, disc_x, disc_y, toward_center + fan + offset,
             0, opts.max_depth, static_cast<double>(opts.max_width),
             static_cast<double>(opts.min_width), opts.vessel_scale);
      }
    }

    // some crossings may keep only the top (venule) label
    if (opts.crossing_both_fraction < 1.0)
      for (size_t i = 0; i < px; ++i)
        if (artery[i] && venule[i] &&
            !rng.bernoulli(opts.crossing_both_fraction))
          artery[i] = 0;

    // a straight band of vessel pixels loses its A/V identity
    if (opts.unknown_band) {
      const double phi = rng.uniform(0.0, 3.14159265358979323846);
      const double nx = std::cos(phi), ny = std::sin(phi);
      const double off = rng.uniform(-0.3, 0.3) * fov;
      const double half = opts.unknown_band_width * fsize / 2.0;
      for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
          const size_t i = static_cast<size_t>(y * size + x);
          if (!artery[i] && !venule[i]) continue;
          const double d =
              (static_cast<double>(x) - cx) * nx +
              (static_cast<double>(y) - cy) * ny - off;
          if (std::abs(d) <= half) {
            unknown[i] = 1;
            artery[i] = 0;
            venule[i] = 0;
          }
        }
    }
  }

  // render: fundus disc with radial falloff + grain, bright optic disc,
  // then vessels on top; quantized to 8-bit steps
  Tensor image(1, 3, size, size);
  Tensor label(1, 3, size, size);
  double* ir = image.plane(0, 0);
  double* ig = image.plane(0, 1);
  double* ib = image.plane(0, 2);
  for (int64_t y = 0; y < size; ++y)
    for (int64_t x = 0; x < size; ++x) {
      const size_t i = static_cast<size_t>(y * size + x);
      const double dx = static_cast<double>(x) - cx;
      const double dy = static_cast<double>(y) - cy;
      const double d = std::sqrt(dx * dx + dy * dy) / fov;
      Rgb c;
      if (d >= 1.0) {
        c = {0.02, 0.02, 0.02};
      } else {
        const double f = 1.0 - 0.35 * d * d;
        c = {kFundusColor.r * f, kFundusColor.g * f, kFundusColor.b * f};
        const double ddx = static_cast<double>(x) - disc_x;
        const double ddy = static_cast<double>(y) - disc_y;
        const double dd2 = ddx * ddx + ddy * ddy;
        if (dd2 < disc_r * disc_r * 4.0) {
          const double t = std::exp(-dd2 / (disc_r * disc_r));
          c = {c.r + (kDiscColor.r - c.r) * t, c.g + (kDiscColor.g - c.g) * t,
               c.b + (kDiscColor.b - c.b) * t};
        }
      }
      if (unknown[i])
        c = kUnknownColor;
      else if (artery[i] && venule[i])
        c = kBothColor;
      else if (artery[i])
        c = kArteryColor;
      else if (venule[i])
        c = kVenuleColor;
      const double noise = rng.uniform(-0.015, 0.015);
      // same arithmetic as normalize_u8 so a PNG round trip is bit-exact
      auto q = [noise](double v) {
        const double clamped = std::min(1.0, std::max(0.0, v + noise));
        return std::round(clamped * 255.0) * (1.0 / 255.0);
      };
      ir[i] = q(c.r);
      ig[i] = q(c.g);
      ib[i] = q(c.b);
      label.plane(0, 0)[i] = artery[i];
      label.plane(0, 1)[i] = venule[i];
      label.plane(0, 2)[i] = unknown[i];
    }

  FundusSample sample;
  sample.image = std::move(image);
  sample.label = std::move(label);
  sample.source = "synthetic";
  return sample;
}

void write_synthetic_dataset(const std::string& dir, int count, uint64_t seed,
                             const SyntheticOptions& opts) {
  if (count < 1) throw ConfigError("write_synthetic_dataset: count must be >= 1");
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  const Colormap cm = Colormap::default_map();
  cm.save((fs::path(dir) / "colormap.txt").string());

  std::vector<ManifestRow> rows;
  for (int i = 0; i < count; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "syn%04d", i);
    FundusSample s = generate_synthetic_dfi(mix_seed(seed, i), opts);
    s.id = id;
    write_png((fs::path(dir) / "images" / (s.id + ".png")).string(),
              denormalize_u8(s.image));
    write_png((fs::path(dir) / "masks" / (s.id + ".png")).string(),
              cm.encode(s.label));
    ManifestRow row;
    row.id = s.id;
    row.image_path = "images/" + s.id + ".png";
    row.mask_path = "masks/" + s.id + ".png";
    row.patient_id = "pat" + std::to_string(i / 2);
    row.eye = i % 2 == 0 ? Eye::left : Eye::right;
    rows.push_back(std::move(row));
  }
  write_manifest((fs::path(dir) / "manifest.tsv").string(), rows);
}

}  // namespace lunet
