#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "lunet/data.hpp"
#include "lunet/geometry.hpp"
#include "lunet/inference.hpp"
#include "lunet/rng.hpp"

using namespace lunet;

namespace {

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() / ("lunet_test_" + tag);
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

LUNet tiny_model(uint64_t seed) {
  LUNetConfig cfg = LUNetConfig::with_base(2, 1);
  cfg.kernel_size = 3;
  cfg.dilation_rate = 2;
  cfg.tail_blocks = 1;
  cfg.dropout_rate = 0.0;
  LUNet model(cfg);
  model.init_weights(seed);
  return model;
}

/// Smooth radial field supported on the inscribed disc. The quartic profile
/// reaches zero at the rim with zero slope (C¹ everywhere), keeping bilinear
/// resampling error down to the curvature term; rotating the image commutes
/// with rotating the field.
Tensor smooth_disc_image(int64_t hw) {
  Tensor x(1, 3, hw, hw);
  const double c = (hw - 1) / 2.0;
  const double r_max = hw / 2.0 - 1.5;
  for (int64_t ch = 0; ch < 3; ++ch)
    for (int64_t i = 0; i < hw; ++i)
      for (int64_t j = 0; j < hw; ++j) {
        const double r = std::hypot(i - c, j - c);
        const double u2 = (r / r_max) * (r / r_max);
        const double v = r >= r_max ? 0.0 : 0.8 * (1.0 - u2) * (1.0 - u2);
        x(0, ch, i, j) = ch == 0 ? v : 0.5 * v;
      }
  return x;
}

double max_interior_diff(const Tensor& a, const Tensor& b, int64_t border) {
  double worst = 0.0;
  for (int64_t c = 0; c < a.c(); ++c)
    for (int64_t i = border; i < a.h() - border; ++i)
      for (int64_t j = border; j < a.w() - border; ++j)
        worst = std::max(worst, std::abs(a(0, c, i, j) - b(0, c, i, j)));
  return worst;
}

}  // namespace

TEST_CASE("TTAPlan: the standard plan and its validation") {
  const TTAPlan plan = TTAPlan::standard();
  REQUIRE(plan.angles.size() == 12);
  CHECK(plan.angles.front() == 0.0);
  CHECK(plan.angles.back() == 330.0);
  for (size_t i = 0; i < plan.angles.size(); ++i)
    CHECK(plan.angles[i] == 30.0 * static_cast<double>(i));
  CHECK(plan.include_transpose);
  CHECK(plan.size() == 24);
  plan.validate();

  TTAPlan empty;
  CHECK_THROWS_AS(empty.validate(), ConfigError);
  TTAPlan dup;
  dup.angles = {0.0, 90.0, 0.0};
  CHECK_THROWS_AS(dup.validate(), ConfigError);
}

TEST_CASE("tta_predict: the identity-only plan is a plain forward pass") {
  LUNet model = tiny_model(50);
  Rng rng(51);
  Tensor x(1, 3, 16, 16);
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  TTAPlan plan;
  plan.angles = {0.0};
  plan.include_transpose = false;
  const Tensor got = tta_predict(model, x, plan);
  const Tensor want = model.forward(x);
  CHECK(max_abs_diff(got, want) == 0.0);
}

TEST_CASE("tta_predict: a constant field stays constant under averaging") {
  TTAPlan plan = TTAPlan::standard();
  const ForwardFn constant = [](const Tensor& x) {
    Tensor out(1, 2, x.h(), x.w());
    out.fill(0.37);
    return out;
  };
  const Tensor out = tta_predict(constant, Tensor(1, 3, 32, 32), plan);
  REQUIRE(out.c() == 2);
  for (int64_t i = 0; i < out.size(); ++i)
    CHECK(out[i] == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("tta_predict: equivariant stub recovers the input field") {
  // the red channel is equivariant under every plan transform, so averaging
  // the de-transformed outputs must reproduce it (up to interpolation error)
  const ForwardFn red = [](const Tensor& x) {
    Tensor out(1, 1, x.h(), x.w());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x[i];
    return out;
  };
  const int64_t hw = 128;
  const Tensor image = smooth_disc_image(hw);
  Tensor want(1, 1, hw, hw);
  for (int64_t i = 0; i < want.size(); ++i) want[i] = image[i];

  const Tensor got = tta_predict(red, image, TTAPlan::standard());
  CHECK(max_interior_diff(got, want, 2) < 1e-3);
}

TEST_CASE("tta_predict: plan order never changes the result") {
  LUNet model = tiny_model(52);
  const Tensor image = smooth_disc_image(16);

  TTAPlan sorted;
  sorted.angles = {0.0, 30.0, 90.0, 210.0};
  TTAPlan shuffled;
  shuffled.angles = {210.0, 0.0, 90.0, 30.0};
  const Tensor a = tta_predict(model, image, sorted);
  const Tensor b = tta_predict(model, image, shuffled);
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("tta_predict: probabilities stay within [0,1]") {
  LUNet model = tiny_model(53);
  const Tensor out = tta_predict(model, smooth_disc_image(16),
                                 TTAPlan::standard());
  CHECK(min_value(out) >= 0.0);
  CHECK(max_value(out) <= 1.0);
}

TEST_CASE("tta_predict: shape and plan validation") {
  LUNet model = tiny_model(54);
  TTAPlan empty;
  CHECK_THROWS_AS(tta_predict(model, Tensor(1, 3, 16, 16), empty), ConfigError);
  CHECK_THROWS_AS(tta_predict(model, Tensor(2, 3, 16, 16), TTAPlan::standard()),
                  ShapeError);
}

TEST_CASE("predict_probabilities: pads, forwards, crops back") {
  LUNet model = tiny_model(55);
  Rng rng(56);
  Tensor x(1, 3, 11, 13);  // not a multiple of the model's divisor (2)
  for (int64_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  const Tensor prob = predict_probabilities(model, x);
  CHECK(prob.n() == 1);
  CHECK(prob.c() == 2);
  CHECK(prob.h() == 11);
  CHECK(prob.w() == 13);
  CHECK(min_value(prob) >= 0.0);
  CHECK(max_value(prob) <= 1.0);

  // bit-exact against the manual pad → forward → crop pipeline
  CropRecord rec;
  const Tensor padded = pad_to_multiple(x, model.config().divisor(), &rec);
  const Tensor want = crop(model.forward(padded), rec);
  CHECK(max_abs_diff(prob, want) == 0.0);

  // with a plan, same frame contract
  TTAPlan plan;
  plan.angles = {0.0, 180.0};
  plan.include_transpose = true;
  const Tensor tta = predict_probabilities(model, x, &plan);
  CHECK(tta.h() == 11);
  CHECK(tta.w() == 13);
}

TEST_CASE("binarize: pinned examples and monotonicity") {
  Tensor prob(1, 2, 1, 4);
  // artery:  0.6 0.4 0.5 0.0    venule: 0.2 0.7 0.5 0.0
  prob.plane(0, 0)[0] = 0.6;
  prob.plane(0, 0)[1] = 0.4;
  prob.plane(0, 0)[2] = 0.5;
  prob.plane(0, 1)[0] = 0.2;
  prob.plane(0, 1)[1] = 0.7;
  prob.plane(0, 1)[2] = 0.5;

  const BinaryMasks m = binarize(prob, 0.5);
  CHECK(m.artery[0] == 1.0);
  CHECK(m.artery[1] == 0.0);
  CHECK(m.artery[2] == 1.0);  // threshold itself is included
  CHECK(m.artery[3] == 0.0);
  CHECK(m.venule[0] == 0.0);
  CHECK(m.venule[1] == 1.0);
  CHECK(m.venule[2] == 1.0);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(m.vessel[i] == std::max(m.artery[i], m.venule[i]));

  // raising the threshold can only clear pixels
  Rng rng(57);
  Tensor random(1, 2, 8, 8);
  for (int64_t i = 0; i < random.size(); ++i) random[i] = rng.uniform();
  const BinaryMasks lo = binarize(random, 0.3);
  const BinaryMasks hi = binarize(random, 0.7);
  for (int64_t i = 0; i < 64; ++i) {
    CHECK(hi.artery[i] <= lo.artery[i]);
    CHECK(hi.venule[i] <= lo.venule[i]);
  }

  CHECK_THROWS_AS(binarize(prob, 0.0), ConfigError);
  CHECK_THROWS_AS(binarize(prob, 1.0), ConfigError);
  CHECK_THROWS_AS(binarize(Tensor(1, 3, 2, 2), 0.5), ShapeError);

  const Tensor label = binarize_prediction(prob, 0.5);
  CHECK(label.c() == 3);
  CHECK(label.plane(0, 0)[0] == 1.0);
  CHECK(label.plane(0, 1)[1] == 1.0);
  double unknown_sum = 0.0;
  for (int64_t i = 0; i < 4; ++i) unknown_sum += label.plane(0, 2)[i];
  CHECK(unknown_sum == 0.0);
}

TEST_CASE("render_overlay: labeled pixels tinted, the rest untouched") {
  Tensor image(1, 3, 2, 2);
  image.fill(0.5);
  Tensor label(1, 3, 2, 2);
  label.plane(0, 0)[0] = 1.0;  // artery at (0,0)
  label.plane(0, 1)[1] = 1.0;  // venule at (0,1)
  label.plane(0, 2)[2] = 1.0;  // unknown at (1,0)

  const Tensor out = render_overlay(image, label);
  CHECK(out.same_shape(image));
  CHECK(min_value(out) >= 0.0);
  CHECK(max_value(out) <= 1.0);
  // artery pixel pushed toward red: R up, G down
  CHECK(out(0, 0, 0, 0) > 0.5);
  CHECK(out(0, 1, 0, 0) < 0.5);
  // venule pixel pushed toward blue
  CHECK(out(0, 2, 0, 1) > 0.5);
  CHECK(out(0, 0, 0, 1) < 0.5);
  // unknown pixel pushed toward green
  CHECK(out(0, 1, 1, 0) > 0.5);
  // unlabeled pixel bit-identical
  CHECK(out(0, 0, 1, 1) == 0.5);
  CHECK(out(0, 1, 1, 1) == 0.5);
  CHECK(out(0, 2, 1, 1) == 0.5);

  CHECK_THROWS_AS(render_overlay(image, Tensor(1, 3, 4, 4)), ShapeError);
}

TEST_CASE("probability dump: bit-exact round trip") {
  TempDir dir("probdump");
  const std::string path = (dir.path / "prob.bin").string();
  Rng rng(58);
  Tensor prob(1, 2, 7, 9);
  for (int64_t i = 0; i < prob.size(); ++i) prob[i] = rng.uniform();

  write_probability_dump(path, prob);
  const Tensor back = read_probability_dump(path);
  CHECK(back.same_shape(prob));
  CHECK(max_abs_diff(back, prob) == 0.0);

  const std::string garbage = (dir.path / "garbage.bin").string();
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "not a dump";
  }
  CHECK_THROWS_AS(read_probability_dump(garbage), IoError);
  CHECK_THROWS_AS(read_probability_dump((dir.path / "absent.bin").string()),
                  IoError);
}

TEST_CASE("geometry contract behind TTA: round trips") {
  const Tensor image = smooth_disc_image(128);
  // exact for quarter turns and transpose
  CHECK(max_abs_diff(rotate_bilinear(rotate_bilinear(image, 90.0), -90.0),
                     image) == 0.0);
  CHECK(max_abs_diff(transpose_hw(transpose_hw(image)), image) == 0.0);
  // near-identity for an oblique angle on disc-supported content
  const Tensor back = rotate_bilinear(rotate_bilinear(image, 30.0), -30.0);
  CHECK(max_interior_diff(back, image, 2) < 1e-3);
}
