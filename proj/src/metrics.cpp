#include "lunet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "lunet/image_io.hpp"
#include "lunet/inference.hpp"
#include "lunet/rng.hpp"

namespace lunet {

namespace {

double dice_planes(const double* p, const double* g, const double* u,
                   int64_t n) {
  int64_t inter = 0, psum = 0, gsum = 0;
  for (int64_t i = 0; i < n; ++i) {
    if (u && u[i] != 0.0) continue;
    const bool ps = p[i] != 0.0, gs = g[i] != 0.0;
    inter += ps && gs;
    psum += ps;
    gsum += gs;
  }
  const int64_t denom = psum + gsum;
  return denom == 0 ? 1.0
                    : 2.0 * static_cast<double>(inter) /
                          static_cast<double>(denom);
}

double percentile(const std::vector<double>& sorted, double p) {
  const double rank =
      p / 100.0 * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(rank));
  const double f = rank - static_cast<double>(lo);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] * (1.0 - f) + sorted[lo + 1] * f;
}

}  // namespace

double dice_score(const Tensor& pred, const Tensor& gt,
                  const Tensor& unknown) {
  if (pred.size() != gt.size() || pred.size() != unknown.size())
    throw ShapeError("dice_score: mask shapes differ: " + pred.shape_str() +
                     " vs " + gt.shape_str() + " vs " + unknown.shape_str());
  return dice_planes(pred.data(), gt.data(), unknown.data(), pred.size());
}

std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       int64_t n_rounds, double frac,
                                       uint64_t seed) {
  if (scores.empty()) throw ConfigError("bootstrap_ci: no scores");
  if (n_rounds < 1) throw ConfigError("bootstrap_ci: n_rounds must be >= 1");
  if (frac <= 0.0 || frac > 1.0)
    throw ConfigError("bootstrap_ci: frac must lie in (0,1]");

  const int64_t n = static_cast<int64_t>(scores.size());
  const int64_t n_draw =
      std::max<int64_t>(1, std::llround(frac * static_cast<double>(n)));
  Rng rng(mix_seed(seed, hash_str("bootstrap")));
  std::vector<double> means(static_cast<size_t>(n_rounds));
  for (int64_t r = 0; r < n_rounds; ++r) {
    double acc = 0.0;
    for (int64_t k = 0; k < n_draw; ++k)
      acc += scores[static_cast<size_t>(rng.below(n))];
    means[static_cast<size_t>(r)] = acc / static_cast<double>(n_draw);
  }
  std::sort(means.begin(), means.end());
  return {percentile(means, 2.5), percentile(means, 97.5)};
}

EvalRow score_pair(const std::string& id, const Tensor& pred_label,
                   const Tensor& gt_label) {
  if (pred_label.n() != 1 || pred_label.c() != 3 || gt_label.n() != 1 ||
      gt_label.c() != 3 || pred_label.h() != gt_label.h() ||
      pred_label.w() != gt_label.w())
    throw ShapeError("score_pair '" + id + "': labels must share 1×3×H×W, got " +
                     pred_label.shape_str() + " vs " + gt_label.shape_str());
  const int64_t hw = gt_label.h() * gt_label.w();
  const double* ukn = gt_label.plane(0, 2);
  EvalRow row;
  row.id = id;
  row.dice_a = dice_planes(pred_label.plane(0, 0), gt_label.plane(0, 0), ukn, hw);
  row.dice_v = dice_planes(pred_label.plane(0, 1), gt_label.plane(0, 1), ukn, hw);
  return row;
}

EvalReport summarize_rows(std::vector<EvalRow> rows,
                          const BootstrapParams& params) {
  if (rows.empty()) throw ConfigError("summarize_rows: no per-image rows");
  std::sort(rows.begin(), rows.end(),
            [](const EvalRow& a, const EvalRow& b) { return a.id < b.id; });
  EvalReport rep;
  std::vector<double> a, v;
  for (const EvalRow& r : rows) {
    a.push_back(r.dice_a);
    v.push_back(r.dice_v);
    rep.mean_dice_a += r.dice_a;
    rep.mean_dice_v += r.dice_v;
  }
  rep.mean_dice_a /= static_cast<double>(rows.size());
  rep.mean_dice_v /= static_cast<double>(rows.size());
  std::tie(rep.ci_a_lo, rep.ci_a_hi) =
      bootstrap_ci(a, params.n_rounds, params.sample_frac, params.seed);
  std::tie(rep.ci_v_lo, rep.ci_v_hi) =
      bootstrap_ci(v, params.n_rounds, params.sample_frac, params.seed);
  rep.per_image = std::move(rows);
  rep.n_bootstrap = params.n_rounds;
  rep.sample_frac = params.sample_frac;
  rep.seed = params.seed;
  return rep;
}

EvalReport evaluate_dirs(const std::string& pred_dir,
                         const std::string& gt_dir, const Colormap& colormap,
                         const BootstrapParams& params) {
  namespace fs = std::filesystem;
  auto list_pngs = [](const std::string& dir) {
    if (!fs::is_directory(dir))
      throw IoError("evaluate_dirs: '" + dir + "' is not a directory");
    std::set<std::string> ids;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.path().extension() == ".png")
        ids.insert(entry.path().stem().string());
    return ids;
  };
  const std::set<std::string> pred_ids = list_pngs(pred_dir);
  const std::set<std::string> gt_ids = list_pngs(gt_dir);
  if (pred_ids != gt_ids) {
    std::string msg = "evaluate_dirs: file sets differ;";
    int listed = 0;
    for (const std::string& id : gt_ids)
      if (!pred_ids.count(id) && listed++ < 4)
        msg += " missing prediction '" + id + "'";
    for (const std::string& id : pred_ids)
      if (!gt_ids.count(id) && listed++ < 8)
        msg += " missing ground truth '" + id + "'";
    throw ConfigError(msg);
  }
  if (pred_ids.empty()) throw ConfigError("evaluate_dirs: no .png files");

  std::vector<EvalRow> rows;
  for (const std::string& id : pred_ids) {
    const Tensor pred =
        colormap.decode(read_png((fs::path(pred_dir) / (id + ".png")).string()));
    const Tensor gt =
        colormap.decode(read_png((fs::path(gt_dir) / (id + ".png")).string()));
    rows.push_back(score_pair(id, pred, gt));
  }
  return summarize_rows(std::move(rows), params);
}

namespace {

std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report(const std::string& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write report '" + path + "'");
  out << "id\tdice_a\tdice_v\n";
  for (const EvalRow& r : report.per_image)
    out << r.id << '\t' << fmt_real(r.dice_a) << '\t' << fmt_real(r.dice_v)
        << '\n';
  out << "mean_dice_a\t" << fmt_real(report.mean_dice_a) << '\n'
      << "ci_a_lo\t" << fmt_real(report.ci_a_lo) << '\n'
      << "ci_a_hi\t" << fmt_real(report.ci_a_hi) << '\n'
      << "mean_dice_v\t" << fmt_real(report.mean_dice_v) << '\n'
      << "ci_v_lo\t" << fmt_real(report.ci_v_lo) << '\n'
      << "ci_v_hi\t" << fmt_real(report.ci_v_hi) << '\n'
      << "n\t" << report.per_image.size() << '\n'
      << "n_bootstrap\t" << report.n_bootstrap << '\n'
      << "sample_frac\t" << fmt_real(report.sample_frac) << '\n'
      << "seed\t" << report.seed << '\n';
  if (!out.good()) throw IoError("failed writing report '" + path + "'");
}

EvalReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report '" + path + "'");
  EvalReport rep;
  std::string line;
  bool header_seen = false;
  int64_t n_declared = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::vector<std::string> fields;
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (!header_seen) {
      if (fields.size() != 3 || fields[0] != "id")
        throw IoError("report '" + path + "': missing `id dice_a dice_v` header");
      header_seen = true;
      continue;
    }
    if (fields.size() == 3) {
      rep.per_image.push_back(
          {fields[0], std::stod(fields[1]), std::stod(fields[2])});
      continue;
    }
    if (fields.size() != 2)
      throw IoError("report '" + path + "': bad line '" + line + "'");
    const std::string& key = fields[0];
    const std::string& val = fields[1];
    if (key == "mean_dice_a")
      rep.mean_dice_a = std::stod(val);
    else if (key == "ci_a_lo")
      rep.ci_a_lo = std::stod(val);
    else if (key == "ci_a_hi")
      rep.ci_a_hi = std::stod(val);
    else if (key == "mean_dice_v")
      rep.mean_dice_v = std::stod(val);
    else if (key == "ci_v_lo")
      rep.ci_v_lo = std::stod(val);
    else if (key == "ci_v_hi")
      rep.ci_v_hi = std::stod(val);
    else if (key == "n")
      n_declared = std::stoll(val);
    else if (key == "n_bootstrap")
      rep.n_bootstrap = std::stoll(val);
    else if (key == "sample_frac")
      rep.sample_frac = std::stod(val);
    else if (key == "seed")
      rep.seed = std::stoull(val);
    else
      throw IoError("report '" + path + "': unknown footer key '" + key + "'");
  }
  if (!header_seen) throw IoError("report '" + path + "' is empty");
  if (n_declared >= 0 &&
      n_declared != static_cast<int64_t>(rep.per_image.size()))
    throw IoError("report '" + path + "': footer n=" +
                  std::to_string(n_declared) + " but " +
                  std::to_string(rep.per_image.size()) + " rows present");
  return rep;
}

std::vector<CurveRow> learning_curve(
    const std::vector<std::pair<int64_t, const LUNet*>>& checkpoints,
    const std::vector<FundusSample>& test_set, const SampleScorer& scorer) {
  if (checkpoints.empty()) throw ConfigError("learning_curve: no checkpoints");
  if (test_set.empty()) throw ConfigError("learning_curve: empty test set");
  std::vector<CurveRow> rows;
  for (const auto& [size, model] : checkpoints) {
    CurveRow row;
    row.train_size = size;
    for (const FundusSample& s : test_set) {
      if (!s.has_label())
        throw ConfigError("learning_curve: sample '" + s.id + "' has no label");
      const auto [da, dv] = scorer(*model, s);
      row.dice_a += da;
      row.dice_v += dv;
    }
    row.dice_a /= static_cast<double>(test_set.size());
    row.dice_v /= static_cast<double>(test_set.size());
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
    return a.train_size < b.train_size;
  });
  return rows;
}

std::vector<CurveRow> learning_curve(
    const std::vector<std::pair<int64_t, const LUNet*>>& checkpoints,
    const std::vector<FundusSample>& test_set) {
  return learning_curve(
      checkpoints, test_set,
      [](const LUNet& model, const FundusSample& s) {
        const Tensor prob = predict_probabilities(model, s.image);
        const Tensor label = binarize_prediction(prob);
        const EvalRow row = score_pair(s.id, label, s.label);
        return std::make_pair(row.dice_a, row.dice_v);
      });
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size())
    throw ConfigError("pearson: length mismatch: " + std::to_string(x.size()) +
                      " vs " + std::to_string(y.size()));
  if (x.size() < 2) throw ConfigError("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw ConfigError("pearson: correlation undefined under zero variance");
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace lunet
