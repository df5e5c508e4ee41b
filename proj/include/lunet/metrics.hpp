#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lunet/data.hpp"
#include "lunet/tensor.hpp"

namespace lunet {

class LUNet;

/// Dice over pixels where unknown == 0: 2|P∩G| / (|P|+|G|). Inputs are
/// treated as binary (nonzero = set). Both masks empty after deleting the
/// unknown pixels → 1.0, so background-only crops do not poison means.
double dice_score(const Tensor& pred, const Tensor& gt, const Tensor& unknown);

struct BootstrapParams {
  int64_t n_rounds = 1000;
  double sample_frac = 0.8;
  uint64_t seed = 0;
};

/// Resamples round(frac·N) scores with replacement n_rounds times and returns
/// the empirical (2.5th, 97.5th) percentiles of the resample means, with
/// linear interpolation between order statistics.
std::pair<double, double> bootstrap_ci(const std::vector<double>& scores,
                                       int64_t n_rounds, double frac,
                                       uint64_t seed);

struct EvalRow {
  std::string id;
  double dice_a = 0.0, dice_v = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> per_image;
  double mean_dice_a = 0.0, mean_dice_v = 0.0;
  double ci_a_lo = 0.0, ci_a_hi = 0.0;
  double ci_v_lo = 0.0, ci_v_hi = 0.0;
  int64_t n_bootstrap = 1000;
  double sample_frac = 0.8;
  uint64_t seed = 0;
};

/// Masked dice of one prediction/ground-truth pair; the unknown plane of the
/// ground truth masks both classes.
EvalRow score_pair(const std::string& id, const Tensor& pred_label,
                   const Tensor& gt_label);

/// Means + bootstrap CIs over per-image rows. One seed drives both class
/// intervals (identical resample indices).
EvalReport summarize_rows(std::vector<EvalRow> rows,
                          const BootstrapParams& params);

/// Scores every <id>.png present in both directories (decoded through the
/// colormap); the file sets must match exactly.
EvalReport evaluate_dirs(const std::string& pred_dir,
                         const std::string& gt_dir, const Colormap& colormap,
                         const BootstrapParams& params);

/// Tab-separated table `id dice_a dice_v` followed by a key-value footer:
/// mean_dice_a, ci_a_lo, ci_a_hi, mean_dice_v, ci_v_lo, ci_v_hi, n,
/// n_bootstrap, sample_frac, seed. Reals are written with full precision.
void write_report(const std::string& path, const EvalReport& report);
EvalReport read_report(const std::string& path);

struct CurveRow {
  int64_t train_size = 0;
  double dice_a = 0.0, dice_v = 0.0;
};

/// Scores one sample with one model; returns (dice_a, dice_v).
using SampleScorer =
    std::function<std::pair<double, double>(const LUNet&, const FundusSample&)>;

/// Mean test dice per checkpoint, one row per (train_size, model) pair,
/// sorted by train_size. The two-argument overload scores with plain
/// padded forward passes thresholded at 0.5.
std::vector<CurveRow> learning_curve(
    const std::vector<std::pair<int64_t, const LUNet*>>& checkpoints,
    const std::vector<FundusSample>& test_set, const SampleScorer& scorer);
std::vector<CurveRow> learning_curve(
    const std::vector<std::pair<int64_t, const LUNet*>>& checkpoints,
    const std::vector<FundusSample>& test_set);

/// Sample Pearson correlation; throws when either argument has zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace lunet
