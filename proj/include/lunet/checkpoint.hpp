#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "lunet/model.hpp"
#include "lunet/tensor.hpp"

namespace lunet {

/// Adam first/second moments, aligned with the model's canonical parameter
/// order, plus the optimizer hyperparameters they were accumulated under.
struct AdamState {
  std::vector<Tensor> m, v;
  int64_t step = 0;
  double learning_rate = 1e-4;
  double beta1 = 0.9, beta2 = 0.999;
  double epsilon = 1e-8;

  /// Zero moments shaped like every parameter of the model.
  void init(LUNet& model);
};

struct CheckpointMeta {
  int64_t epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int64_t best_epoch = 0;
};

/// Single-file checkpoint: magic bytes, a JSON header holding the
/// architecture config and training metadata, then parameters, batch-norm
/// running stats and (optionally) Adam moments as little-endian doubles in
/// canonical order. Writes go to a temp file renamed into place, so a
/// half-written checkpoint never shadows a good one. Round trips are
/// bit-exact.
void save_checkpoint(const std::string& path, LUNet& model,
                     const CheckpointMeta& meta,
                     const AdamState* adam = nullptr);

/// Rebuilds the model from the stored config and restores its state.
/// `meta`/`adam` are filled when non-null; a checkpoint without optimizer
/// state leaves `adam` untouched and returns has_adam=false via meta-free
/// probing (see has_adam_state).
std::unique_ptr<LUNet> load_checkpoint(const std::string& path,
                                       CheckpointMeta* meta = nullptr,
                                       AdamState* adam = nullptr);

/// True when the checkpoint stores Adam moments (resumable).
bool has_adam_state(const std::string& path);

}  // namespace lunet
