#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lunet/nn.hpp"
#include "lunet/rng.hpp"
#include "lunet/tensor.hpp"

namespace lunet {

/// Architecture hyperparameters. Encoder channels double per level from a
/// base width; decoder levels run at half the encoder width of the same
/// level, keeping the feature budget encoder-heavy. The bottleneck reuses
/// the deepest encoder width.
struct LUNetConfig {
  int depth = 6;
  std::vector<int> encoder_channels;  // one entry per level (shallow→deep)
  std::vector<int> decoder_channels;  // one entry per level (shallow→deep)
  int kernel_size = 7;
  int dilation_rate = 3;
  double dropout_rate = 0.1;
  int tail_blocks = 4;
  int in_channels = 3;
  int out_channels = 2;
  bool ddcb_sum_merge = false;  // sum the two conv branches instead of concat

  /// Default plan: encoder = base·2^level, decoder = encoder/2 (min 2).
  static LUNetConfig with_base(int base_channels, int depth = 6);

  void validate() const;  // throws ConfigError
  int64_t divisor() const { return int64_t{1} << depth; }
};

/// Diagnostic switch for the attention gates.
enum class GateOverride { none, ones, zeros };

/// Double dilated convolution block: a standard and a dilated convolution in
/// parallel (kernel 7 each), merged, then spatial dropout, batch norm, ReLU.
/// Spatial dims are preserved via same-padding.
struct DDCB {
  Conv2d conv_std;
  Conv2d conv_dil;
  SpatialDropout2d drop;
  BatchNorm2d bn;
  bool sum_merge = false;

  struct Cache {
    Tensor x;
    SpatialDropout2d::Cache drop;
    BatchNorm2d::Cache bn;
    Tensor relu_out;
  };

  DDCB() = default;
  DDCB(int64_t in_ch, int64_t out_ch, const LUNetConfig& cfg);

  int64_t out_channels() const { return bn.channels; }
  Tensor forward(const Tensor& x, Mode mode, Rng* rng = nullptr,
                 Cache* cache = nullptr) const;
  /// Accumulates parameter gradients, returns the input gradient.
  Tensor backward(const Tensor& gout, const Cache& cache);
};

/// Additive attention gate (1×1 projections, additive merge, ReLU, 1×1 to a
/// single channel, sigmoid, ×2 upsample to the skip resolution).
struct AttentionGate {
  Conv2d theta_x;  // skip → inter, 1×1 stride 2
  Conv2d theta_g;  // gating → inter, 1×1
  Conv2d psi;      // inter → 1, 1×1

  struct Cache {
    Tensor skip, gating;
    Tensor add_relu;     // relu(theta_x(skip) + theta_g(gating))
    Tensor alpha_small;  // sigmoid(psi(...)), gating resolution
    Tensor alpha;        // upsampled attention map, skip resolution
  };

  AttentionGate() = default;
  AttentionGate(int64_t skip_ch, int64_t gate_ch);

  Tensor forward(const Tensor& skip, const Tensor& gating,
                 GateOverride ov = GateOverride::none,
                 Cache* cache = nullptr) const;
  /// Returns the gradient w.r.t. `skip`; adds the gradient w.r.t. `gating`
  /// into `ggating`. Only valid for caches recorded with GateOverride::none.
  Tensor backward(const Tensor& gout, const Cache& cache, Tensor& ggating);
};

/// Attention U-Net of configurable depth with DDCB blocks, a full-resolution
/// tail, and a per-channel sigmoid head (multi-label output).
class LUNet {
 public:
  struct Tape {
    std::vector<DDCB::Cache> enc;
    std::vector<MaxPool2::Cache> pool;
    DDCB::Cache bottleneck;
    std::vector<Tensor> up;  // upsampled input of each level's up-conv
    std::vector<AttentionGate::Cache> gate;
    std::vector<DDCB::Cache> dec;
    std::vector<DDCB::Cache> tail;
    Tensor head_in;
    Tensor output;
  };

  explicit LUNet(const LUNetConfig& cfg);

  const LUNetConfig& config() const { return cfg_; }
  void init_weights(uint64_t seed);

  /// Deterministic evaluation-mode pass (dropout off, running BN stats).
  /// Safe for concurrent calls on an unchanging model.
  Tensor forward(const Tensor& x) const;
  /// Training-mode pass: batch BN statistics, spatial dropout driven by
  /// `dropout_rng`, every intermediate needed by backward() stored in `tape`.
  Tensor forward_train(const Tensor& x, Rng& dropout_rng, Tape& tape);
  /// Accumulates parameter gradients; returns the input gradient.
  Tensor backward(const Tensor& gout, const Tape& tape);

  void zero_grad();
  /// Visits every trainable parameter tensor with its gradient, in a fixed
  /// canonical order (stable across runs; used by optimizer + checkpoints).
  void for_each_param(const std::function<void(Tensor&, Tensor&)>& fn);
  /// Visits every non-trainable state tensor (BN running stats).
  void for_each_buffer(const std::function<void(Tensor&)>& fn);
  int64_t param_count() const;

  void set_gate_override(GateOverride ov) { gate_override_ = ov; }

 private:
  void check_input(const Tensor& x) const;
  // Mutates nothing in eval mode; train mode updates BN running stats.
  Tensor run(const Tensor& x, Mode mode, Rng* rng, Tape* tape);

  LUNetConfig cfg_;
  std::vector<DDCB> enc_;
  DDCB bottleneck_;
  std::vector<Conv2d> up_conv_;       // per level, 3×3 after ×2 upsample
  std::vector<AttentionGate> gate_;   // per level
  std::vector<DDCB> dec_;
  std::vector<DDCB> tail_;
  Conv2d head_;
  GateOverride gate_override_ = GateOverride::none;
};

}  // namespace lunet
