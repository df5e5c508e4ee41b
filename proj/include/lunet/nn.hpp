#pragma once

#include <cstdint>
#include <vector>

#include "lunet/rng.hpp"
#include "lunet/tensor.hpp"

namespace lunet {

enum class Mode { train, eval };

/// 2-D convolution, NCHW, odd kernel with same-padding (stride 1) or
/// valid padding (stride > 1). Backed by im2col + BLAS GEMM, strip-mined
/// over output rows to bound scratch memory.
struct Conv2d {
  int64_t in_ch = 0, out_ch = 0, kernel = 1, stride = 1, dilation = 1;
  bool with_bias = true;
  Tensor w;  // out_ch × in_ch × k × k
  Tensor b;  // 1 × out_ch × 1 × 1
  Tensor gw, gb;

  Conv2d() = default;
  Conv2d(int64_t in_ch, int64_t out_ch, int64_t kernel, int64_t stride = 1,
         int64_t dilation = 1, bool with_bias = true);

  void init_weights(Rng& rng);
  void zero_grad();
  int64_t pad() const { return stride == 1 ? dilation * (kernel - 1) / 2 : 0; }
  int64_t out_dim(int64_t in) const {
    return (in + 2 * pad() - dilation * (kernel - 1) - 1) / stride + 1;
  }
  int64_t param_count() const {
    return w.size() + (with_bias ? b.size() : 0);
  }

  Tensor forward(const Tensor& x) const;
  /// Accumulates gw/gb and returns the input gradient. `x` is the forward
  /// input (caller keeps it; conv needs nothing else).
  Tensor backward(const Tensor& gout, const Tensor& x);
};

struct MaxPool2 {
  struct Cache {
    std::vector<uint8_t> argmax;  // 2*dy + dx per output element
    int64_t n = 0, c = 0, h = 0, w = 0;  // input dims
  };
  static Tensor forward(const Tensor& x, Cache* cache = nullptr);
  static Tensor backward(const Tensor& gout, const Cache& cache);
};

struct UpsampleNearest2 {
  static Tensor forward(const Tensor& x);
  static Tensor backward(const Tensor& gout);
};

struct BatchNorm2d {
  int64_t channels = 0;
  double eps = 1e-5;
  double momentum = 0.1;
  Tensor gamma, beta, ggamma, gbeta;
  Tensor running_mean, running_var;  // buffers, not parameters

  struct Cache {
    Tensor xhat;
    std::vector<double> inv_std;
    int64_t m = 0;  // elements per channel in the batch
  };

  BatchNorm2d() = default;
  explicit BatchNorm2d(int64_t channels);
  void zero_grad();
  int64_t param_count() const { return gamma.size() + beta.size(); }

  Tensor forward_eval(const Tensor& x) const;
  /// Batch-statistics normalization; updates running stats.
  Tensor forward_train(const Tensor& x, Cache& cache);
  Tensor backward(const Tensor& gout, const Cache& cache);
};

/// Drops whole feature maps per (sample, channel), scaling survivors by
/// 1/(1-rate). Identity in eval mode and at rate 0 (no RNG draws).
struct SpatialDropout2d {
  double rate = 0.0;
  struct Cache {
    std::vector<double> scale;  // per n*c
  };
  Tensor forward(const Tensor& x, Mode mode, Rng* rng,
                 Cache* cache = nullptr) const;
  Tensor backward(const Tensor& gout, const Cache& cache) const;
};

struct ReLU {
  static Tensor forward(const Tensor& x);
  /// `y` is the forward output (mask y>0 equals x>0).
  static Tensor backward(const Tensor& gout, const Tensor& y);
};

struct Sigmoid {
  static Tensor forward(const Tensor& x);
  static Tensor backward(const Tensor& gout, const Tensor& y);
};

}  // namespace lunet
