#include "lunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "lunet/geometry.hpp"
#include "lunet/image_io.hpp"
#include "lunet/rng.hpp"

namespace lunet {

std::string eye_to_string(Eye eye) {
  switch (eye) {
    case Eye::left:
      return "left";
    case Eye::right:
      return "right";
    default:
      return "unknown";
  }
}

Eye eye_from_string(const std::string& s) {
  if (s == "left") return Eye::left;
  if (s == "right") return Eye::right;
  if (s == "unknown" || s == "-" || s.empty()) return Eye::unknown;
  throw ConfigError("unrecognized eye value '" + s + "'");
}

// ---- Colormap ---------------------------------------------------------------

namespace {

constexpr uint8_t kArtery = 1, kVenule = 2, kUnknown = 4;

uint32_t rgb_key(uint8_t r, uint8_t g, uint8_t b) {
  return (static_cast<uint32_t>(r) << 16) | (static_cast<uint32_t>(g) << 8) |
         b;
}

std::string rgb_str(uint32_t key) {
  return "(" + std::to_string((key >> 16) & 0xff) + "," +
         std::to_string((key >> 8) & 0xff) + "," + std::to_string(key & 0xff) +
         ")";
}

std::string planes_str(uint8_t bits) {
  if (bits == 0) return "-";
  std::string s;
  if (bits & kArtery) s += 'a';
  if (bits & kVenule) s += 'v';
  if (bits & kUnknown) s += 'u';
  return s;
}

uint8_t planes_bits(const std::string& s) {
  if (s == "-") return 0;
  uint8_t bits = 0;
  for (char c : s) {
    if (c == 'a')
      bits |= kArtery;
    else if (c == 'v')
      bits |= kVenule;
    else if (c == 'u')
      bits |= kUnknown;
    else
      throw ConfigError("colormap: bad plane letters '" + s + "'");
  }
  return bits;
}

}  // namespace

Colormap Colormap::default_map() {
  Colormap cm;
  cm.add({"background", {0, 0, 0}, 0});
  cm.add({"artery", {255, 0, 0}, kArtery});
  cm.add({"venule", {0, 0, 255}, kVenule});
  cm.add({"unknown", {0, 255, 0}, kUnknown});
  cm.add({"both", {255, 0, 255}, kArtery | kVenule});
  return cm;
}

void Colormap::add(const Entry& e) {
  for (const Entry& have : entries_) {
    if (have.rgb[0] == e.rgb[0] && have.rgb[1] == e.rgb[1] &&
        have.rgb[2] == e.rgb[2])
      throw ConfigError("colormap: duplicate color for '" + e.name + "'");
    if (have.planes == e.planes)
      throw ConfigError("colormap: duplicate plane combination for '" +
                        e.name + "'");
  }
  entries_.push_back(e);
}

Colormap Colormap::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open colormap '" + path + "'");
  Colormap cm;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream row(line);
    std::string name, planes;
    int r, g, b;
    if (!(row >> name)) continue;  // blank line
    if (!(row >> r >> g >> b >> planes) || r < 0 || r > 255 || g < 0 ||
        g > 255 || b < 0 || b > 255)
      throw ConfigError("colormap '" + path + "': bad line '" + line + "'");
    cm.add({name,
            {static_cast<uint8_t>(r), static_cast<uint8_t>(g),
             static_cast<uint8_t>(b)},
            planes_bits(planes)});
  }
  if (cm.entries_.empty())
    throw ConfigError("colormap '" + path + "' declares no colors");
  return cm;
}

void Colormap::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write colormap '" + path + "'");
  out << "# name r g b planes\n";
  for (const Entry& e : entries_)
    out << e.name << ' ' << static_cast<int>(e.rgb[0]) << ' '
        << static_cast<int>(e.rgb[1]) << ' ' << static_cast<int>(e.rgb[2])
        << ' ' << planes_str(e.planes) << '\n';
  if (!out.good()) throw IoError("failed writing colormap '" + path + "'");
}

Tensor Colormap::decode(const Tensor& mask_image) const {
  if (mask_image.n() != 1 || mask_image.c() != 3)
    throw ShapeError("decode_mask: expected 1×3×H×W, got " +
                     mask_image.shape_str());
  std::unordered_map<uint32_t, uint8_t> lut;
  for (const Entry& e : entries_)
    lut.emplace(rgb_key(e.rgb[0], e.rgb[1], e.rgb[2]), e.planes);

  const int64_t h = mask_image.h(), w = mask_image.w();
  Tensor label(1, 3, h, w);
  std::unordered_set<uint32_t> bad;
  const double* r = mask_image.plane(0, 0);
  const double* g = mask_image.plane(0, 1);
  const double* b = mask_image.plane(0, 2);
  for (int64_t i = 0; i < h * w; ++i) {
    const uint32_t key = rgb_key(static_cast<uint8_t>(std::lround(r[i])),
                                 static_cast<uint8_t>(std::lround(g[i])),
                                 static_cast<uint8_t>(std::lround(b[i])));
    const auto it = lut.find(key);
    if (it == lut.end()) {
      bad.insert(key);
      continue;
    }
    label.plane(0, 0)[i] = (it->second & kArtery) ? 1.0 : 0.0;
    label.plane(0, 1)[i] = (it->second & kVenule) ? 1.0 : 0.0;
    label.plane(0, 2)[i] = (it->second & kUnknown) ? 1.0 : 0.0;
  }
  if (!bad.empty()) {
    std::string msg = "decode_mask: undeclared colors:";
    int listed = 0;
    for (uint32_t key : bad) {
      if (listed++ == 8) {
        msg += " …";
        break;
      }
      msg += ' ' + rgb_str(key);
    }
    throw DecodeError(msg);
  }
  return label;
}

Tensor Colormap::encode(const Tensor& label) const {
  if (label.n() != 1 || label.c() != 3)
    throw ShapeError("encode_mask: expected 1×3×H×W, got " +
                     label.shape_str());
  std::unordered_map<uint8_t, const Entry*> by_planes;
  for (const Entry& e : entries_) by_planes.emplace(e.planes, &e);

  const int64_t h = label.h(), w = label.w();
  Tensor out(1, 3, h, w);
  const double* a = label.plane(0, 0);
  const double* v = label.plane(0, 1);
  const double* u = label.plane(0, 2);
  for (int64_t i = 0; i < h * w; ++i) {
    const uint8_t bits = static_cast<uint8_t>((a[i] != 0.0 ? kArtery : 0) |
                                              (v[i] != 0.0 ? kVenule : 0) |
                                              (u[i] != 0.0 ? kUnknown : 0));
    const auto it = by_planes.find(bits);
    if (it == by_planes.end())
      throw DecodeError("encode_mask: no color declared for combination '" +
                        planes_str(bits) + "'");
    for (int64_t c = 0; c < 3; ++c)
      out.plane(0, c)[i] = static_cast<double>(it->second->rgb[c]);
  }
  return out;
}

// ---- preprocessing ----------------------------------------------------------

namespace {

Tensor pad_to(const Tensor& x, int64_t th, int64_t tw, CropRecord* record) {
  const int64_t top = (th - x.h()) / 2;
  const int64_t left = (tw - x.w()) / 2;
  Tensor out(x.n(), x.c(), th, tw);
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = 0; c < x.c(); ++c)
      for (int64_t y = 0; y < x.h(); ++y)
        std::copy(x.plane(n, c) + y * x.w(), x.plane(n, c) + (y + 1) * x.w(),
                  out.plane(n, c) + (top + y) * tw + left);
  if (record) *record = {top, left, x.h(), x.w()};
  return out;
}

}  // namespace

Tensor pad_to_multiple(const Tensor& x, int64_t multiple, CropRecord* record) {
  if (multiple < 1)
    throw ConfigError("pad_to_multiple: multiple must be >= 1");
  const int64_t th = (x.h() + multiple - 1) / multiple * multiple;
  const int64_t tw = (x.w() + multiple - 1) / multiple * multiple;
  if (th == x.h() && tw == x.w()) {
    if (record) *record = {0, 0, x.h(), x.w()};
    return x;
  }
  return pad_to(x, th, tw, record);
}

Tensor crop(const Tensor& x, const CropRecord& r) {
  if (r.top < 0 || r.left < 0 || r.height < 1 || r.width < 1 ||
      r.top + r.height > x.h() || r.left + r.width > x.w())
    throw ShapeError("crop: record exceeds " + x.shape_str());
  Tensor out(x.n(), x.c(), r.height, r.width);
  for (int64_t n = 0; n < x.n(); ++n)
    for (int64_t c = 0; c < x.c(); ++c)
      for (int64_t y = 0; y < r.height; ++y) {
        const double* src = x.plane(n, c) + (r.top + y) * x.w() + r.left;
        std::copy(src, src + r.width, out.plane(n, c) + y * r.width);
      }
  return out;
}

Tensor normalize_u8(const Tensor& raw) {
  Tensor out = raw;
  out *= 1.0 / 255.0;
  return out;
}

Tensor denormalize_u8(const Tensor& unit) {
  Tensor out = unit;
  out *= 255.0;
  return out;
}

// ---- splitting --------------------------------------------------------------

SplitManifest split_dataset(const std::vector<FundusSample>& samples,
                            double train_frac, double val_frac,
                            uint64_t seed) {
  if (train_frac <= 0.0 || train_frac >= 1.0 || val_frac <= 0.0 ||
      val_frac >= 1.0 || train_frac + val_frac > 1.0 + 1e-12)
    throw ConfigError("split_dataset: fractions must lie in (0,1), sum <= 1");
  if (samples.empty()) throw ConfigError("split_dataset: no samples");

  // group sample indices by patient, in first-appearance order
  std::vector<std::string> patients;
  std::map<std::string, std::vector<size_t>> groups;
  for (size_t i = 0; i < samples.size(); ++i) {
    auto [it, fresh] = groups.try_emplace(samples[i].patient_id);
    if (fresh) patients.push_back(samples[i].patient_id);
    it->second.push_back(i);
  }

  const bool want_test = train_frac + val_frac < 1.0 - 1e-12;
  const size_t splits_requested = want_test ? 3 : 2;
  if (patients.size() < splits_requested)
    throw ConfigError("split_dataset: " + std::to_string(patients.size()) +
                      " patients cannot fill " +
                      std::to_string(splits_requested) + " splits");

  Rng rng(mix_seed(seed, hash_str("split")));
  rng.shuffle(patients);

  const double n = static_cast<double>(samples.size());
  const int64_t train_target = std::llround(train_frac * n);
  const int64_t val_target = std::llround(val_frac * n);

  SplitManifest out;
  int64_t in_train = 0, in_val = 0;
  for (const std::string& patient : patients) {
    const auto& members = groups[patient];
    std::vector<std::string>* dest;
    if (in_train < train_target) {
      dest = &out.train;
      in_train += static_cast<int64_t>(members.size());
    } else if (in_val < val_target || !want_test) {
      dest = &out.val;
      in_val += static_cast<int64_t>(members.size());
    } else {
      dest = &out.test;
    }
    for (size_t i : members) dest->push_back(samples[i].id);
  }
  return out;
}

// ---- augmentation -----------------------------------------------------------

namespace {

void rgb_to_hsv(double r, double g, double b, double& h, double& s,
                double& v) {
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  const double d = mx - mn;
  v = mx;
  s = mx == 0.0 ? 0.0 : d / mx;
  if (d == 0.0) {
    h = 0.0;
    return;
  }
  if (mx == r)
    h = std::fmod((g - b) / d, 6.0) / 6.0;
  else if (mx == g)
    h = ((b - r) / d + 2.0) / 6.0;
  else
    h = ((r - g) / d + 4.0) / 6.0;
  if (h < 0.0) h += 1.0;
}

void hsv_to_rgb(double h, double s, double v, double& r, double& g,
                double& b) {
  const double hh = std::fmod(h, 1.0) * 6.0;
  const int sector = static_cast<int>(std::floor(hh)) % 6;
  const double f = hh - std::floor(hh);
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (sector) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

double luma(double r, double g, double b) {
  return 0.299 * r + 0.587 * g + 0.114 * b;
}

Tensor color_jitter(const Tensor& img, double brightness, double contrast,
                    double saturation, double hue) {
  Tensor out = img;
  const int64_t hw = img.h() * img.w();
  double* r = out.plane(0, 0);
  double* g = out.plane(0, 1);
  double* b = out.plane(0, 2);

  double mean_luma = 0.0;
  for (int64_t i = 0; i < hw; ++i) {
    r[i] = clamp01(r[i] * brightness);
    g[i] = clamp01(g[i] * brightness);
    b[i] = clamp01(b[i] * brightness);
    mean_luma += luma(r[i], g[i], b[i]);
  }
  mean_luma /= static_cast<double>(hw);
  for (int64_t i = 0; i < hw; ++i) {
    r[i] = clamp01((r[i] - mean_luma) * contrast + mean_luma);
    g[i] = clamp01((g[i] - mean_luma) * contrast + mean_luma);
    b[i] = clamp01((b[i] - mean_luma) * contrast + mean_luma);
    const double l = luma(r[i], g[i], b[i]);
    r[i] = clamp01((r[i] - l) * saturation + l);
    g[i] = clamp01((g[i] - l) * saturation + l);
    b[i] = clamp01((b[i] - l) * saturation + l);
    double hh, ss, vv;
    rgb_to_hsv(r[i], g[i], b[i], hh, ss, vv);
    hh = std::fmod(hh + hue + 1.0, 1.0);
    hsv_to_rgb(hh, ss, vv, r[i], g[i], b[i]);
    r[i] = clamp01(r[i]);
    g[i] = clamp01(g[i]);
    b[i] = clamp01(b[i]);
  }
  return out;
}

}  // namespace

FundusSample augment(const FundusSample& sample, const AugmentOptions& opts,
                     uint64_t seed) {
  if (!sample.has_label())
    throw ConfigError("augment: sample '" + sample.id + "' has no label");
  if (opts.min_size < 1 || opts.max_size < opts.min_size)
    throw ConfigError("augment: bad rescale range");

  Rng rng(seed);
  // draw order is part of the determinism contract — keep it fixed
  const bool hflip = rng.bernoulli(opts.flip_prob);
  const bool vflip = rng.bernoulli(opts.flip_prob);
  const bool do_transpose = rng.bernoulli(opts.flip_prob);
  const int64_t size = opts.forced_size > 0
                           ? opts.forced_size
                           : rng.range(opts.min_size, opts.max_size);
  const double brightness = rng.uniform(opts.color_lo, opts.color_hi);
  const double contrast = rng.uniform(opts.color_lo, opts.color_hi);
  const double saturation = rng.uniform(opts.color_lo, opts.color_hi);
  const double hue = rng.uniform(-opts.hue_shift, opts.hue_shift);

  FundusSample out = sample;
  Tensor img = sample.image;
  Tensor lbl = sample.label;
  if (hflip) {
    img = flip_h(img);
    lbl = flip_h(lbl);
  }
  if (vflip) {
    img = flip_v(img);
    lbl = flip_v(lbl);
  }
  if (do_transpose) {
    img = transpose_hw(img);
    lbl = transpose_hw(lbl);
  }
  img = resize_bilinear(img, size, size);
  lbl = resize_nearest(lbl, size, size);
  img = pad_to_multiple(img, opts.pad_multiple, nullptr);
  lbl = pad_to_multiple(lbl, opts.pad_multiple, nullptr);
  out.image = color_jitter(img, brightness, contrast, saturation, hue);
  out.label = std::move(lbl);
  return out;
}

// ---- external adapters --------------------------------------------------------

std::string external_kind_name(ExternalKind kind) {
  switch (kind) {
    case ExternalKind::unaf:
      return "unaf";
    case ExternalKind::inspire_avr:
      return "inspire_avr";
    case ExternalKind::les_av:
      return "les_av";
    default:
      return "hrf";
  }
}

ExternalKind external_kind_from_string(const std::string& s) {
  if (s == "unaf") return ExternalKind::unaf;
  if (s == "inspire_avr") return ExternalKind::inspire_avr;
  if (s == "les_av") return ExternalKind::les_av;
  if (s == "hrf") return ExternalKind::hrf;
  throw ConfigError("unknown dataset kind '" + s +
                    "' (expected unaf|inspire_avr|les_av|hrf)");
}

namespace {

constexpr int64_t kFov = 1444;

Tensor center_crop(const Tensor& x, int64_t th, int64_t tw) {
  CropRecord r{(x.h() - th) / 2, (x.w() - tw) / 2, th, tw};
  return crop(x, r);
}

[[noreturn]] void bad_dims(ExternalKind kind, const Tensor& x,
                           const char* expected) {
  throw ShapeError("adapt_external(" + external_kind_name(kind) +
                   "): unexpected input dims " + x.shape_str() +
                   ", expected " + expected);
}

}  // namespace

Tensor adapt_external(const Tensor& image, ExternalKind kind,
                      std::optional<std::pair<int64_t, int64_t>> od_center) {
  const int64_t h = image.h(), w = image.w();
  switch (kind) {
    case ExternalKind::unaf: {
      const bool ok = (h == 2056 && w == 2124) || (h == 2124 && w == 2056);
      if (!ok) bad_dims(kind, image, "2124×2056 either orientation");
      return center_crop(pad_to(image, 2124, 2124, nullptr), kFov, kFov);
    }
    case ExternalKind::inspire_avr: {
      const bool ok = (h == 2048 && w == 2392) || (h == 2392 && w == 2048);
      if (!ok) bad_dims(kind, image, "2392×2048 either orientation");
      return resize_bilinear(center_crop(image, 2048, 2048), kFov, kFov);
    }
    case ExternalKind::les_av: {
      const bool ok = (h == 1444 && w == 1620) || (h == 1620 && w == 1444);
      if (!ok) bad_dims(kind, image, "1620×1444 either orientation");
      return center_crop(image, kFov, kFov);
    }
    default: {  // HRF
      if (h < kFov || w < kFov)
        bad_dims(kind, image, "at least 1444 on both sides");
      if (!od_center)
        throw ConfigError("adapt_external(hrf): od_center is required");
      const auto [cx, cy] = *od_center;
      const int64_t left =
          std::min(std::max<int64_t>(0, cx - kFov / 2), w - kFov);
      const int64_t top =
          std::min(std::max<int64_t>(0, cy - kFov / 2), h - kFov);
      return crop(image, {top, left, kFov, kFov});
    }
  }
}

// ---- manifest I/O -------------------------------------------------------------

namespace {

std::string blank_to_dash(const std::string& s) { return s.empty() ? "-" : s; }
std::string dash_to_blank(const std::string& s) {
  return s == "-" ? std::string() : s;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::vector<ManifestRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 6)
      throw IoError("manifest '" + path + "' line " + std::to_string(lineno) +
                    ": expected 6 tab-separated fields, got " +
                    std::to_string(fields.size()));
    ManifestRow row;
    row.id = fields[0];
    row.image_path = dash_to_blank(fields[1]);
    row.mask_path = dash_to_blank(fields[2]);
    row.patient_id = fields[3];
    row.eye = eye_from_string(fields[4]);
    row.split = dash_to_blank(fields[5]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::string& path,
                    const std::vector<ManifestRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path + "'");
  out << "# id\timage\tmask\tpatient\teye\tsplit\n";
  for (const ManifestRow& r : rows)
    out << r.id << '\t' << blank_to_dash(r.image_path) << '\t'
        << blank_to_dash(r.mask_path) << '\t' << r.patient_id << '\t'
        << eye_to_string(r.eye) << '\t' << blank_to_dash(r.split) << '\n';
  if (!out.good()) throw IoError("failed writing manifest '" + path + "'");
}

FundusSample load_sample(const ManifestRow& row, const Colormap& colormap,
                         const std::string& base_dir) {
  auto resolve = [&base_dir](const std::string& p) {
    if (p.empty() || p.front() == '/' || base_dir.empty()) return p;
    return base_dir + "/" + p;
  };
  FundusSample s;
  s.id = row.id;
  s.patient_id = row.patient_id;
  s.eye = row.eye;
  s.source = "manifest";
  s.image = normalize_u8(read_png(resolve(row.image_path)));
  if (!row.mask_path.empty()) {
    s.label = colormap.decode(read_png(resolve(row.mask_path)));
    if (s.label.h() != s.image.h() || s.label.w() != s.image.w())
      throw ShapeError("sample '" + row.id + "': mask dims " +
                       s.label.shape_str() + " do not match image " +
                       s.image.shape_str());
  }
  return s;
}

}  // namespace lunet
