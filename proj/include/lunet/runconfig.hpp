#pragma once

#include <cstdint>
#include <string>

#include "lunet/inference.hpp"
#include "lunet/model.hpp"
#include "lunet/trainer.hpp"

namespace lunet {

/// Merged run settings parsed from a flat key-value config file. Keys use
/// dotted sections (model.*, loss.*, train.*, augment.*, tta.*, predict.*,
/// paths.*, seed); unknown or duplicate keys are hard errors so hyperparameter
/// typos cannot pass silently.
struct RunConfig {
  LUNetConfig model;  // defaults to the base-16, depth-6 plan
  TrainConfig train;
  TTAPlan tta;
  bool tta_enabled = true;
  double threshold = 0.5;  // binarization threshold for predict
  uint64_t seed = 0;       // global seed; also drives train.seed

  struct Paths {
    std::string manifest;
    std::string colormap;
    std::string checkpoint_dir;
    std::string output_dir;
  } paths;

  RunConfig();
  void validate() const;
};

/// Parses `key = value` lines ('#' comments, blank lines ignored).
RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_text(const std::string& text,
                                const std::string& origin = "<config>");

}  // namespace lunet
