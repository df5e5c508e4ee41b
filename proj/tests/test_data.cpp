#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "lunet/data.hpp"
#include "lunet/geometry.hpp"
#include "lunet/image_io.hpp"
#include "lunet/rng.hpp"

using namespace lunet;

namespace {

Tensor random_image(int64_t h, int64_t w, Rng& rng, double lo = 0.0,
                    double hi = 1.0) {
  Tensor t(1, 3, h, w);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

Tensor ramp(int64_t c, int64_t h, int64_t w) {
  Tensor t(1, c, h, w);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  return t;
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("lunet_test_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

}  // namespace

TEST_CASE("flips and transpose are involutions and move corners correctly") {
  Tensor x = ramp(2, 3, 4);
  const Tensor h = flip_h(x);
  CHECK(h.plane(0, 0)[0] == x.plane(0, 0)[3]);   // (0,0) <- (0,w-1)
  CHECK(max_abs_diff(flip_h(h), x) == 0.0);
  const Tensor v = flip_v(x);
  CHECK(v.plane(0, 1)[0] == x.plane(0, 1)[2 * 4]);  // (0,0) <- (h-1,0)
  CHECK(max_abs_diff(flip_v(v), x) == 0.0);
  const Tensor t = transpose_hw(x);
  CHECK(t.h() == 4);
  CHECK(t.w() == 3);
  CHECK(t.plane(0, 0)[1] == x.plane(0, 0)[4]);  // t(0,1) = x(1,0)
  CHECK(max_abs_diff(transpose_hw(t), x) == 0.0);
}

TEST_CASE("rot90 composes to identity and matches the quarter-turn table") {
  Tensor x = ramp(1, 2, 3);
  Tensor r = x;
  for (int i = 0; i < 4; ++i) r = rot90(r, 1);
  CHECK(max_abs_diff(r, x) == 0.0);
  CHECK(max_abs_diff(rot90(x, -1), rot90(x, 3)) == 0.0);
  CHECK(max_abs_diff(rot90(rot90(x, 1), 1), rot90(x, 2)) == 0.0);

  // x = [0 1 2; 3 4 5]; +90 should give out(y,x) = in(h-1-x, y)
  const Tensor q = rot90(x, 1);
  CHECK(q.h() == 3);
  CHECK(q.w() == 2);
  const double want[6] = {3, 0, 4, 1, 5, 2};
  for (int i = 0; i < 6; ++i) CHECK(q[i] == want[i]);
}

TEST_CASE("rotate_bilinear dispatches exactly on square quarter turns") {
  Rng rng(11);
  Tensor x = random_image(8, 8, rng);
  CHECK(max_abs_diff(rotate_bilinear(x, 90.0), rot90(x, 1)) == 0.0);
  CHECK(max_abs_diff(rotate_bilinear(x, -270.0), rot90(x, 1)) == 0.0);
  CHECK(max_abs_diff(rotate_bilinear(x, 180.0), rot90(x, 2)) == 0.0);
  CHECK(max_abs_diff(rotate_bilinear(x, 360.0), x) == 0.0);
  CHECK(max_abs_diff(rotate_bilinear(x, 0.0), x) == 0.0);
}

TEST_CASE("rotate_bilinear: small angles keep a constant disc constant") {
  // constant interior, zero near the border: rotation must reproduce the
  // interior exactly (any bilinear mix of equal values is that value)
  const int64_t n = 17;
  Tensor x(1, 1, n, n);
  const double c = (n - 1) / 2.0;
  for (int64_t y = 0; y < n; ++y)
    for (int64_t xx = 0; xx < n; ++xx) {
      const double d = std::hypot(y - c, xx - c);
      x.plane(0, 0)[y * n + xx] = d <= 6.0 ? 0.7 : 0.0;
    }
  const Tensor r = rotate_bilinear(x, 30.0);
  for (int64_t y = 0; y < n; ++y)
    for (int64_t xx = 0; xx < n; ++xx)
      if (std::hypot(y - c, xx - c) <= 4.0)
        CHECK(r.plane(0, 0)[y * n + xx] == doctest::Approx(0.7).epsilon(1e-12));
  // inverse rotation composes back near the center
  const Tensor back = rotate_bilinear(r, -30.0);
  CHECK(back.plane(0, 0)[static_cast<int64_t>(c) * n + static_cast<int64_t>(c)] ==
        doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("resize: identity at same size, constants stay constant") {
  Rng rng(12);
  Tensor x = random_image(7, 5, rng);
  CHECK(max_abs_diff(resize_bilinear(x, 7, 5), x) == 0.0);
  CHECK(max_abs_diff(resize_nearest(x, 7, 5), x) == 0.0);

  Tensor flat(1, 1, 6, 6);
  flat.fill(0.25);
  CHECK(max_abs_diff(resize_bilinear(flat, 13, 9), Tensor(1, 1, 13, 9)) ==
        doctest::Approx(0.25));
  const Tensor up = resize_bilinear(flat, 13, 9);
  for (int64_t i = 0; i < up.size(); ++i) CHECK(up[i] == doctest::Approx(0.25));
}

TEST_CASE("resize_nearest keeps binary maps binary; bilinear interpolates") {
  Rng rng(13);
  Tensor mask(1, 1, 9, 9);
  for (int64_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
  const Tensor nn = resize_nearest(mask, 14, 6);
  for (int64_t i = 0; i < nn.size(); ++i)
    CHECK((nn[i] == 0.0 || nn[i] == 1.0));

  // bilinear downscale of a checkerboard lands strictly inside (0,1)
  Tensor board(1, 1, 8, 8);
  for (int64_t y = 0; y < 8; ++y)
    for (int64_t xx = 0; xx < 8; ++xx)
      board.plane(0, 0)[y * 8 + xx] = static_cast<double>((y + xx) % 2);
  const Tensor down = resize_bilinear(board, 5, 5);
  bool fractional = false;
  for (int64_t i = 0; i < down.size(); ++i)
    if (down[i] > 0.0 && down[i] < 1.0) fractional = true;
  CHECK(fractional);
}

TEST_CASE("colormap: default map round-trips every plane combination") {
  const Colormap cm = Colormap::default_map();
  Tensor label(1, 3, 2, 3);
  // columns: background, artery, venule, unknown, both, artery (again)
  const double a[6] = {0, 1, 0, 0, 1, 1};
  const double v[6] = {0, 0, 1, 0, 1, 0};
  const double u[6] = {0, 0, 0, 1, 0, 0};
  for (int i = 0; i < 6; ++i) {
    label.plane(0, 0)[i] = a[i];
    label.plane(0, 1)[i] = v[i];
    label.plane(0, 2)[i] = u[i];
  }
  const Tensor mask = cm.encode(label);
  CHECK(mask.plane(0, 0)[1] == 255.0);  // artery is red
  CHECK(mask.plane(0, 2)[2] == 255.0);  // venule is blue
  CHECK(mask.plane(0, 1)[3] == 255.0);  // unknown is green
  CHECK(mask.plane(0, 0)[4] == 255.0);  // both is magenta
  CHECK(mask.plane(0, 2)[4] == 255.0);
  const Tensor back = cm.decode(mask);
  CHECK(max_abs_diff(back, label) == 0.0);
}

TEST_CASE("colormap: undeclared colors fail decode and are listed") {
  const Colormap cm = Colormap::default_map();
  Tensor mask(1, 3, 1, 2);
  mask.plane(0, 0)[0] = 255.0;  // red: fine
  mask.plane(0, 0)[1] = 17.0;   // (17,99,0): undeclared
  mask.plane(0, 1)[1] = 99.0;
  CHECK_THROWS_WITH_AS(cm.decode(mask),
                       doctest::Contains("(17,99,0)"), DecodeError);
}

TEST_CASE("colormap: encode without a matching combination fails") {
  Colormap cm;
  cm.add({"background", {0, 0, 0}, 0});
  cm.add({"artery", {255, 0, 0}, 1});
  cm.add({"venule", {0, 0, 255}, 2});
  Tensor label(1, 3, 1, 1);
  label.plane(0, 0)[0] = 1.0;
  label.plane(0, 1)[0] = 1.0;  // a+v has no declared color here
  CHECK_THROWS_AS(cm.encode(label), DecodeError);
}

TEST_CASE("colormap: duplicate declarations are rejected") {
  Colormap cm;
  cm.add({"artery", {255, 0, 0}, 1});
  CHECK_THROWS_AS(cm.add({"other", {255, 0, 0}, 2}), ConfigError);
  CHECK_THROWS_AS(cm.add({"artery2", {128, 0, 0}, 1}), ConfigError);
}

TEST_CASE("colormap: save/load round trip preserves the table") {
  TempDir dir("colormap");
  const Colormap cm = Colormap::default_map();
  cm.save(dir.file("map.txt"));
  const Colormap back = Colormap::load(dir.file("map.txt"));
  REQUIRE(back.entries().size() == cm.entries().size());
  for (size_t i = 0; i < cm.entries().size(); ++i) {
    CHECK(back.entries()[i].name == cm.entries()[i].name);
    CHECK(back.entries()[i].planes == cm.entries()[i].planes);
    for (int k = 0; k < 3; ++k)
      CHECK(back.entries()[i].rgb[k] == cm.entries()[i].rgb[k]);
  }
  CHECK_THROWS_AS(Colormap::load(dir.file("missing.txt")), IoError);
}

TEST_CASE("pad_to_multiple centers content, extra pixel goes bottom/right") {
  Tensor x = ramp(2, 5, 6);
  CropRecord rec;
  const Tensor padded = pad_to_multiple(x, 4, &rec);
  CHECK(padded.h() == 8);
  CHECK(padded.w() == 8);
  CHECK(rec.top == 1);   // 3 rows of padding: 1 above, 2 below
  CHECK(rec.left == 1);
  CHECK(rec.height == 5);
  CHECK(rec.width == 6);
  CHECK(padded.plane(0, 0)[0] == 0.0);
  CHECK(max_abs_diff(crop(padded, rec), x) == 0.0);

  // native geometry: 1444 pads to 1472 with a 14-pixel border
  Tensor native(1, 1, 1444, 1444);
  native.fill(1.0);
  CropRecord nrec;
  const Tensor npad = pad_to_multiple(native, 64, &nrec);
  CHECK(npad.h() == 1472);
  CHECK(nrec.top == 14);
  CHECK(nrec.left == 14);

  // already aligned: no copy semantics change, record is the full frame
  const Tensor same = pad_to_multiple(padded, 4, &rec);
  CHECK(max_abs_diff(same, padded) == 0.0);
  CHECK(rec.top == 0);
  CHECK(rec.height == 8);
}

TEST_CASE("crop validates its record") {
  Tensor x(1, 1, 4, 4);
  CHECK_THROWS_AS(crop(x, {2, 2, 3, 3}), ShapeError);
  CHECK_THROWS_AS(crop(x, {0, 0, 0, 1}), ShapeError);
}

TEST_CASE("normalize/denormalize are inverse scalings") {
  Rng rng(14);
  Tensor raw = random_image(3, 4, rng, 0.0, 255.0);
  const Tensor unit = normalize_u8(raw);
  CHECK(max_value(unit) <= 1.0);
  CHECK(max_abs_diff(denormalize_u8(unit), raw) < 1e-12);
}

TEST_CASE("split_dataset is patient-atomic and hits the target counts") {
  std::vector<FundusSample> samples;
  for (int p = 0; p < 10; ++p)
    for (int k = 0; k < 2; ++k) {
      FundusSample s;
      s.id = "s" + std::to_string(p * 2 + k);
      s.patient_id = "p" + std::to_string(p);
      samples.push_back(std::move(s));
    }
  const SplitManifest split = split_dataset(samples, 0.7, 0.15, 99);
  CHECK(split.train.size() + split.val.size() + split.test.size() == 20);
  CHECK(split.train.size() == 14);  // patients are pairs, 0.7*20 = 14
  CHECK(!split.val.empty());
  CHECK(!split.test.empty());

  // no patient spans two splits
  auto patient_of = [&samples](const std::string& id) {
    for (const auto& s : samples)
      if (s.id == id) return s.patient_id;
    return std::string();
  };
  std::set<std::string> train_p, other_p;
  for (const auto& id : split.train) train_p.insert(patient_of(id));
  for (const auto& id : split.val) other_p.insert(patient_of(id));
  for (const auto& id : split.test) other_p.insert(patient_of(id));
  for (const auto& p : train_p) CHECK(other_p.count(p) == 0);

  // deterministic in the seed, different across seeds
  const SplitManifest again = split_dataset(samples, 0.7, 0.15, 99);
  CHECK(again.train == split.train);
  CHECK(again.val == split.val);
  CHECK(again.test == split.test);
  const SplitManifest other = split_dataset(samples, 0.7, 0.15, 100);
  CHECK(other.train != split.train);
}

TEST_CASE("split_dataset: two-way when fractions sum to one, errors") {
  std::vector<FundusSample> samples;
  for (int p = 0; p < 4; ++p) {
    FundusSample s;
    s.id = "s" + std::to_string(p);
    s.patient_id = "p" + std::to_string(p);
    samples.push_back(std::move(s));
  }
  const SplitManifest split = split_dataset(samples, 0.75, 0.25, 7);
  CHECK(split.test.empty());
  CHECK(split.train.size() + split.val.size() == 4);
  CHECK(!split.val.empty());

  CHECK_THROWS_AS(split_dataset(samples, 0.0, 0.5, 7), ConfigError);
  CHECK_THROWS_AS(split_dataset(samples, 0.8, 0.3, 7), ConfigError);
  CHECK_THROWS_AS(split_dataset({}, 0.7, 0.2, 7), ConfigError);

  std::vector<FundusSample> one(samples.begin(), samples.begin() + 2);
  for (auto& s : one) s.patient_id = "same";
  CHECK_THROWS_AS(split_dataset(one, 0.7, 0.2, 7), ConfigError);
}

TEST_CASE("augment: deterministic in the seed, shapes padded to multiple") {
  Rng rng(15);
  FundusSample s;
  s.id = "a1";
  s.image = random_image(40, 40, rng);
  s.label = Tensor(1, 3, 40, 40);
  for (int64_t i = 0; i < s.label.size(); ++i)
    s.label[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;

  AugmentOptions opts;
  opts.min_size = 24;
  opts.max_size = 56;
  opts.pad_multiple = 16;
  const FundusSample a = augment(s, opts, 42);
  const FundusSample b = augment(s, opts, 42);
  CHECK(max_abs_diff(a.image, b.image) == 0.0);
  CHECK(max_abs_diff(a.label, b.label) == 0.0);
  CHECK(a.image.h() % 16 == 0);
  CHECK(a.image.w() % 16 == 0);
  CHECK(a.image.h() == a.label.h());
  for (int64_t i = 0; i < a.label.size(); ++i)
    CHECK((a.label[i] == 0.0 || a.label[i] == 1.0));

  const FundusSample c = augment(s, opts, 43);
  CHECK(max_abs_diff(a.image, c.image) > 0.0);
}

TEST_CASE("augment: geometry hits image and label identically") {
  // with all flips forced and neutral color jitter the image must equal the
  // label path applied to the image content
  Rng rng(16);
  Tensor img = random_image(32, 32, rng);
  FundusSample s;
  s.id = "a2";
  s.image = img;
  s.label = Tensor(1, 3, 32, 32);  // binary copy of thresholded image
  for (int64_t i = 0; i < img.size(); ++i)
    s.label[i] = img[i] > 0.5 ? 1.0 : 0.0;

  AugmentOptions opts;
  opts.flip_prob = 1.0;  // hflip, vflip and transpose all fire
  opts.forced_size = 32;
  opts.pad_multiple = 1;
  opts.color_lo = opts.color_hi = 1.0;
  opts.hue_shift = 0.0;
  const FundusSample a = augment(s, opts, 5);

  const Tensor want_img = transpose_hw(flip_v(flip_h(img)));
  const Tensor want_lbl = transpose_hw(flip_v(flip_h(s.label)));
  CHECK(max_abs_diff(a.image, want_img) < 1e-12);
  CHECK(max_abs_diff(a.label, want_lbl) == 0.0);
}

TEST_CASE("augment: forced size skips the draw, errors are validated") {
  Rng rng(17);
  FundusSample s;
  s.id = "a3";
  s.image = random_image(20, 20, rng);
  s.label = Tensor(1, 3, 20, 20);

  AugmentOptions opts;
  opts.forced_size = 48;
  opts.pad_multiple = 32;
  const FundusSample a = augment(s, opts, 1);
  CHECK(a.image.h() == 64);  // 48 padded up to 64

  FundusSample unlabeled;
  unlabeled.id = "u";
  unlabeled.image = s.image;
  CHECK_THROWS_AS(augment(unlabeled, opts, 1), ConfigError);

  AugmentOptions bad;
  bad.min_size = 10;
  bad.max_size = 5;
  CHECK_THROWS_AS(augment(s, bad, 1), ConfigError);
}

TEST_CASE("color jitter: brightness scales, neutral settings are identity") {
  Rng rng(18);
  FundusSample s;
  s.id = "c1";
  s.image = random_image(16, 16, rng, 0.2, 0.6);
  s.label = Tensor(1, 3, 16, 16);

  AugmentOptions neutral;
  neutral.flip_prob = 0.0;
  neutral.forced_size = 16;
  neutral.pad_multiple = 1;
  neutral.color_lo = neutral.color_hi = 1.0;
  neutral.hue_shift = 0.0;
  const FundusSample same = augment(s, neutral, 9);
  CHECK(max_abs_diff(same.image, s.image) < 1e-12);

  AugmentOptions bright = neutral;
  bright.color_lo = bright.color_hi = 1.5;  // brightness=contrast=saturation=1.5
  const FundusSample scaled = augment(s, bright, 9);
  CHECK(max_value(scaled.image) <= 1.0);      // clamped
  CHECK(mean(scaled.image) > mean(s.image));   // overall brighter
}

TEST_CASE("adapt_external: unaf pads then crops to the native frame") {
  Tensor img(1, 3, 2056, 2124);
  img.fill(0.5);
  // mark the source center; it must stay at the output center
  img.plane(0, 0)[1027 * 2124 + 1061] = 9.0;
  const Tensor out = adapt_external(img, ExternalKind::unaf);
  CHECK(out.h() == 1444);
  CHECK(out.w() == 1444);
  // pad 2056->2124 puts top at 34; crop 2124->1444 removes 340 per side
  CHECK(out.plane(0, 0)[(1027 + 34 - 340) * 1444 + (1061 - 340)] == 9.0);
  CHECK(adapt_external(transpose_hw(img), ExternalKind::unaf).h() == 1444);
  Tensor bad(1, 3, 2000, 2124);
  CHECK_THROWS_WITH_AS(adapt_external(bad, ExternalKind::unaf),
                       doctest::Contains("unaf"), ShapeError);
}

TEST_CASE("adapt_external: inspire_avr crops square then rescales") {
  Tensor img(1, 3, 2048, 2392);
  img.fill(0.25);
  const Tensor out = adapt_external(img, ExternalKind::inspire_avr);
  CHECK(out.h() == 1444);
  CHECK(out.w() == 1444);
  for (int64_t i = 0; i < out.size(); i += 977)
    CHECK(out[i] == doctest::Approx(0.25));
  Tensor bad(1, 3, 2048, 2048);
  CHECK_THROWS_AS(adapt_external(bad, ExternalKind::inspire_avr), ShapeError);
}

TEST_CASE("adapt_external: les_av center-crops the margin") {
  Tensor img = ramp(1, 1444, 1620);
  const Tensor out = adapt_external(img, ExternalKind::les_av);
  CHECK(out.h() == 1444);
  CHECK(out.w() == 1444);
  CHECK(out.plane(0, 0)[0] == img.plane(0, 0)[88]);  // (1620-1444)/2 = 88
}

TEST_CASE("adapt_external: hrf windows on the optic disc with clamping") {
  Tensor img(1, 3, 2336, 3504);
  img.fill(0.0);
  img.plane(0, 0)[1168 * 3504 + 1752] = 7.0;  // od center
  const Tensor out =
      adapt_external(img, ExternalKind::hrf, std::make_pair<int64_t, int64_t>(1752, 1168));
  CHECK(out.h() == 1444);
  CHECK(out.w() == 1444);
  // window starts at (row 446, col 1030); od lands at (722, 722)
  CHECK(out.plane(0, 0)[722 * 1444 + 722] == 7.0);

  // od near the corner: window clamps to the image frame
  img.plane(0, 0)[5 * 3504 + 6] = 3.0;
  const Tensor c = adapt_external(img, ExternalKind::hrf,
                                  std::make_pair<int64_t, int64_t>(10, 10));
  CHECK(c.plane(0, 0)[5 * 1444 + 6] == 3.0);  // window anchored at (0,0)

  CHECK_THROWS_AS(adapt_external(img, ExternalKind::hrf), ConfigError);
  Tensor small(1, 3, 1000, 1500);
  CHECK_THROWS_AS(adapt_external(small, ExternalKind::hrf,
                                 std::make_pair<int64_t, int64_t>(500, 500)),
                  ShapeError);
}

TEST_CASE("external kind names round-trip") {
  for (ExternalKind k : {ExternalKind::unaf, ExternalKind::inspire_avr,
                         ExternalKind::les_av, ExternalKind::hrf})
    CHECK(external_kind_from_string(external_kind_name(k)) == k);
  CHECK_THROWS_AS(external_kind_from_string("drive"), ConfigError);
}

TEST_CASE("manifest: write/read round trip with blank fields") {
  TempDir dir("manifest");
  std::vector<ManifestRow> rows(2);
  rows[0] = {"a", "images/a.png", "masks/a.png", "p0", Eye::left, "train"};
  rows[1] = {"b", "images/b.png", "", "p1", Eye::unknown, ""};
  write_manifest(dir.file("m.tsv"), rows);
  const std::vector<ManifestRow> back = read_manifest(dir.file("m.tsv"));
  REQUIRE(back.size() == 2);
  CHECK(back[0].id == "a");
  CHECK(back[0].eye == Eye::left);
  CHECK(back[0].split == "train");
  CHECK(back[1].mask_path.empty());
  CHECK(back[1].split.empty());
  CHECK(back[1].eye == Eye::unknown);

  std::FILE* f = std::fopen(dir.file("bad.tsv").c_str(), "w");
  std::fputs("only\tthree\tfields\n", f);
  std::fclose(f);
  CHECK_THROWS_WITH_AS(read_manifest(dir.file("bad.tsv")),
                       doctest::Contains("6 tab-separated"), IoError);
  CHECK_THROWS_AS(read_manifest(dir.file("missing.tsv")), IoError);
}

TEST_CASE("png round trip preserves 8-bit images exactly") {
  TempDir dir("png");
  Rng rng(19);
  Tensor img(1, 3, 21, 17);
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(rng.below(256));
  write_png(dir.file("x.png"), img);
  const Tensor back = read_png(dir.file("x.png"));
  REQUIRE(back.h() == 21);
  REQUIRE(back.w() == 17);
  CHECK(max_abs_diff(back, img) == 0.0);
  CHECK_THROWS_AS(read_png(dir.file("missing.png")), IoError);
}

TEST_CASE("load_sample stitches image, mask and metadata together") {
  TempDir dir("load");
  std::filesystem::create_directories(dir.path / "images");
  std::filesystem::create_directories(dir.path / "masks");
  const Colormap cm = Colormap::default_map();

  Rng rng(20);
  Tensor img(1, 3, 8, 8);
  for (int64_t i = 0; i < img.size(); ++i)
    img[i] = static_cast<double>(rng.below(256));
  Tensor label(1, 3, 8, 8);
  for (int64_t i = 0; i < 64; ++i) {
    const int64_t pick = rng.below(4);
    label.plane(0, 0)[i] = pick == 1;
    label.plane(0, 1)[i] = pick == 2;
    label.plane(0, 2)[i] = pick == 3;
  }
  write_png(dir.file("images/s.png"), img);
  write_png(dir.file("masks/s.png"), cm.encode(label));

  ManifestRow row{"s", "images/s.png", "masks/s.png", "p0", Eye::right, ""};
  const FundusSample s = load_sample(row, cm, dir.path.string());
  CHECK(s.id == "s");
  CHECK(s.eye == Eye::right);
  CHECK(s.has_label());
  CHECK(max_abs_diff(s.image, normalize_u8(img)) == 0.0);
  CHECK(max_abs_diff(s.label, label) == 0.0);

  ManifestRow imgonly{"s2", "images/s.png", "", "p0", Eye::left, ""};
  CHECK(!load_sample(imgonly, cm, dir.path.string()).has_label());
}
