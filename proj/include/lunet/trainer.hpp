#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "lunet/checkpoint.hpp"
#include "lunet/data.hpp"
#include "lunet/losses.hpp"
#include "lunet/model.hpp"

namespace lunet {

struct EpochStats {
  int64_t epoch = 0;  // 1-based
  double train_loss = 0.0, val_loss = 0.0;
  LossBreakdown train_terms, val_terms;
};

struct TrainConfig {
  int64_t epochs = 1300;
  int64_t batch_size = 8;
  double learning_rate = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
  LossOptions loss;
  AugmentOptions augment;
  bool augment_train = true;  // off: plain padded samples, fixed batches
  uint64_t seed = 0;
  std::string checkpoint_dir;  // empty: keep everything in memory only
  std::function<void(const EpochStats&)> on_epoch;  // progress hook

  void validate() const;
};

/// Mutable training progress; everything needed to continue a run.
struct TrainStart {
  int64_t start_epoch = 0;  // epochs already completed
  CheckpointMeta meta;
  AdamState adam;  // moments empty → initialized fresh
  std::vector<EpochStats> history;
};

struct TrainResult {
  CheckpointMeta best;
  std::vector<EpochStats> history;
};

/// Mean lunet_loss over the set: evaluation mode, no augmentation, each
/// sample padded to the model's divisibility multiple.
double validate(const LUNet& model, const std::vector<FundusSample>& val_set,
                const LossOptions& loss);

/// Epoch loop: seeded shuffle, per-batch augmentation with one shared rescale
/// size, Adam steps on lunet_loss, validation after every epoch, best/last
/// checkpoints plus a history CSV in cfg.checkpoint_dir. All randomness is
/// derived statelessly from (seed, epoch, batch, sample id), so a resumed run
/// reproduces the uninterrupted one.
TrainResult train(LUNet& model, const std::vector<FundusSample>& train_set,
                  const std::vector<FundusSample>& val_set,
                  const TrainConfig& cfg, TrainStart start = {});

/// Restores model, optimizer state and history from `dir` (last.ckpt +
/// history.csv) for continuation via train().
struct ResumeBundle {
  std::unique_ptr<LUNet> model;
  TrainStart start;
};
ResumeBundle load_resume_bundle(const std::string& dir);

/// History CSV: epoch,train_loss,val_loss + per-term breakdown columns.
void write_history(const std::string& path,
                   const std::vector<EpochStats>& history);
std::vector<EpochStats> read_history(const std::string& path);

}  // namespace lunet
