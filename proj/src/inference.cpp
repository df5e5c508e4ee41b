#include "lunet/inference.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>

#include "json.hpp"
#include "lunet/data.hpp"
#include "lunet/geometry.hpp"

namespace lunet {

TTAPlan TTAPlan::standard() {
  TTAPlan plan;
  for (int k = 0; k < 12; ++k) plan.angles.push_back(30.0 * k);
  plan.include_transpose = true;
  return plan;
}

void TTAPlan::validate() const {
  if (angles.empty()) throw ConfigError("tta: plan declares no angles");
  std::set<double> uniq(angles.begin(), angles.end());
  if (uniq.size() != angles.size())
    throw ConfigError("tta: duplicate angles in plan");
}

namespace {

/// Entries sorted by (transpose, angle) fix the reduction order regardless of
/// how the plan was written down.
std::vector<std::pair<bool, double>> canonical_entries(const TTAPlan& plan) {
  std::vector<double> sorted_angles = plan.angles;
  std::sort(sorted_angles.begin(), sorted_angles.end());
  std::vector<std::pair<bool, double>> entries;
  for (int t = 0; t < (plan.include_transpose ? 2 : 1); ++t)
    for (double a : sorted_angles) entries.emplace_back(t == 1, a);
  return entries;
}

Tensor apply_transform(const Tensor& x, bool transpose, double angle) {
  return rotate_bilinear(transpose ? transpose_hw(x) : x, angle);
}

Tensor invert_transform(const Tensor& y, bool transpose, double angle) {
  const Tensor unrot = rotate_bilinear(y, -angle);
  return transpose ? transpose_hw(unrot) : unrot;
}

}  // namespace

Tensor tta_predict(const ForwardFn& forward, const Tensor& image,
                   const TTAPlan& plan) {
  plan.validate();
  if (image.n() != 1)
    throw ShapeError("tta_predict: expected a single image, got " +
                     image.shape_str());

  Tensor ones(1, 1, image.h(), image.w());
  ones.fill(1.0);

  Tensor acc, weight;
  for (const auto& [transpose, angle] : canonical_entries(plan)) {
    const Tensor transformed = apply_transform(image, transpose, angle);
    Tensor prob = forward(transformed);
    if (prob.n() != 1 || prob.h() != transformed.h() ||
        prob.w() != transformed.w())
      throw ShapeError("tta_predict: forward returned " + prob.shape_str() +
                       " for input " + transformed.shape_str());
    prob = invert_transform(prob, transpose, angle);

    // coverage of this transform: pixels whose round trip stayed inside
    const Tensor seen =
        invert_transform(apply_transform(ones, transpose, angle), transpose,
                         angle);
    if (acc.empty()) {
      acc = Tensor(1, prob.c(), image.h(), image.w());
      weight = Tensor(1, 1, image.h(), image.w());
    } else if (prob.c() != acc.c()) {
      throw ShapeError("tta_predict: channel count changed across transforms");
    }
    const int64_t hw = image.h() * image.w();
    for (int64_t i = 0; i < hw; ++i) {
      if (seen[i] < 0.999) continue;
      weight[i] += 1.0;
      for (int64_t c = 0; c < prob.c(); ++c)
        acc.plane(0, c)[i] += prob.plane(0, c)[i];
    }
  }

  const int64_t hw = image.h() * image.w();
  for (int64_t c = 0; c < acc.c(); ++c)
    for (int64_t i = 0; i < hw; ++i)
      acc.plane(0, c)[i] =
          weight[i] > 0.0 ? acc.plane(0, c)[i] / weight[i] : 0.0;
  return acc;
}

Tensor tta_predict(const LUNet& model, const Tensor& image,
                   const TTAPlan& plan) {
  return tta_predict(
      [&model](const Tensor& x) { return model.forward(x); }, image, plan);
}

Tensor predict_probabilities(const LUNet& model, const Tensor& image,
                             const TTAPlan* plan) {
  CropRecord rec;
  const Tensor padded =
      pad_to_multiple(image, model.config().divisor(), &rec);
  const Tensor prob =
      plan ? tta_predict(model, padded, *plan) : model.forward(padded);
  return crop(prob, rec);
}

BinaryMasks binarize(const Tensor& prob, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0)
    throw ConfigError("binarize: threshold must lie in (0,1)");
  if (prob.n() != 1 || prob.c() != 2)
    throw ShapeError("binarize: expected 1×2×H×W probabilities, got " +
                     prob.shape_str());
  BinaryMasks out;
  out.artery = Tensor(1, 1, prob.h(), prob.w());
  out.venule = Tensor(1, 1, prob.h(), prob.w());
  out.vessel = Tensor(1, 1, prob.h(), prob.w());
  const int64_t hw = prob.h() * prob.w();
  const double* pa = prob.plane(0, 0);
  const double* pv = prob.plane(0, 1);
  for (int64_t i = 0; i < hw; ++i) {
    const bool a = pa[i] >= threshold, v = pv[i] >= threshold;
    out.artery[i] = a;
    out.venule[i] = v;
    out.vessel[i] = a || v;
  }
  return out;
}

Tensor binarize_prediction(const Tensor& prob, double threshold) {
  const BinaryMasks masks = binarize(prob, threshold);
  Tensor label(1, 3, prob.h(), prob.w());
  const int64_t hw = prob.h() * prob.w();
  std::copy(masks.artery.data(), masks.artery.data() + hw, label.plane(0, 0));
  std::copy(masks.venule.data(), masks.venule.data() + hw, label.plane(0, 1));
  return label;
}

Tensor render_overlay(const Tensor& image, const Tensor& label) {
  if (image.n() != 1 || image.c() != 3 || label.n() != 1 || label.c() != 3 ||
      image.h() != label.h() || image.w() != label.w())
    throw ShapeError("render_overlay: want matching 1×3×H×W tensors, got " +
                     image.shape_str() + " and " + label.shape_str());
  Tensor out = image;
  const int64_t hw = image.h() * image.w();
  const double* a = label.plane(0, 0);
  const double* v = label.plane(0, 1);
  const double* u = label.plane(0, 2);
  constexpr double kBlend = 0.55;
  for (int64_t i = 0; i < hw; ++i) {
    if (a[i] == 0.0 && v[i] == 0.0 && u[i] == 0.0) continue;
    double tint[3] = {0.0, 0.0, 0.0};
    if (u[i] != 0.0) {
      tint[1] = 1.0;  // unknown: green
    } else {
      if (a[i] != 0.0) tint[0] = 1.0;  // artery: red
      if (v[i] != 0.0) tint[2] = 1.0;  // venule: blue (overlap: magenta)
    }
    for (int64_t c = 0; c < 3; ++c) {
      double& px = out.plane(0, c)[i];
      px = kBlend * px + (1.0 - kBlend) * tint[c];
    }
  }
  return out;
}

namespace {

constexpr char kProbMagic[9] = "LUNPROB1";

}  // namespace

void write_probability_dump(const std::string& path, const Tensor& prob) {
  if (prob.n() != 1)
    throw ShapeError("probability dump: expected a single map, got " +
                     prob.shape_str());
  nlohmann::json header;
  header["format"] = "LUNPROB1";
  header["c"] = prob.c();
  header["h"] = prob.h();
  header["w"] = prob.w();
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write probability dump '" + path + "'");
  out.write(kProbMagic, 8);
  const uint64_t len = head.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(prob.data()),
            static_cast<std::streamsize>(prob.size() * sizeof(double)));
  if (!out.good())
    throw IoError("failed writing probability dump '" + path + "'");
}

Tensor read_probability_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open probability dump '" + path + "'");
  char magic[8];
  in.read(magic, 8);
  if (!in.good() || std::string(magic, 8) != std::string(kProbMagic, 8))
    throw IoError("'" + path + "' is not a probability dump");
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string head(len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(len));
  if (!in.good()) throw IoError("truncated probability dump '" + path + "'");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad probability dump header in '" + path + "': " +
                  e.what());
  }
  Tensor prob(1, header.at("c").get<int64_t>(), header.at("h").get<int64_t>(),
              header.at("w").get<int64_t>());
  in.read(reinterpret_cast<char*>(prob.data()),
          static_cast<std::streamsize>(prob.size() * sizeof(double)));
  if (!in.good()) throw IoError("truncated probability dump '" + path + "'");
  return prob;
}

}  // namespace lunet
