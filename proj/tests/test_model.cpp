#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <string>
#include <vector>

#include "doctest.h"
#include "lunet/model.hpp"
#include "lunet/rng.hpp"
#include "oracles.hpp"

using lunet::GateOverride;
using lunet::LUNet;
using lunet::LUNetConfig;
using lunet::Rng;
using lunet::Tensor;

namespace {

Tensor random_image(int64_t n, int64_t c, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Tensor t(n, c, h, w);
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

LUNetConfig toy_config() {
  LUNetConfig cfg = LUNetConfig::with_base(4, 1);
  cfg.kernel_size = 3;
  cfg.tail_blocks = 0;
  cfg.dropout_rate = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("config plan and validation") {
  LUNetConfig cfg = LUNetConfig::with_base(16, 6);
  CHECK(cfg.encoder_channels ==
        std::vector<int>{16, 32, 64, 128, 256, 512});
  CHECK(cfg.decoder_channels == std::vector<int>{8, 16, 32, 64, 128, 256});
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.divisor() == 64);

  LUNetConfig bad = cfg;
  bad.kernel_size = 4;
  CHECK_THROWS_AS(bad.validate(), lunet::ConfigError);
  bad = cfg;
  bad.depth = 0;
  CHECK_THROWS_AS(bad.validate(), lunet::ConfigError);
  bad = cfg;
  bad.dilation_rate = 1;
  CHECK_THROWS_AS(bad.validate(), lunet::ConfigError);
  bad = cfg;
  bad.decoder_channels[2] = bad.encoder_channels[2] + 1;
  CHECK_THROWS_AS(bad.validate(), lunet::ConfigError);
  bad = cfg;
  bad.encoder_channels.pop_back();
  CHECK_THROWS_AS(bad.validate(), lunet::ConfigError);
}

TEST_CASE("ddcb preserves spatial dims and honors the channel budget") {
  LUNetConfig cfg = LUNetConfig::with_base(8, 2);
  lunet::DDCB block(3, 8, cfg);
  Rng rng(lunet::mix_seed(9, lunet::hash_str("ddcb")));
  block.conv_std.init_weights(rng);
  block.conv_dil.init_weights(rng);
  Tensor x = random_image(2, 3, 12, 10, 42);
  Tensor y = block.forward(x, lunet::Mode::eval);
  CHECK(y.n() == 2);
  CHECK(y.c() == 8);
  CHECK(y.h() == 12);
  CHECK(y.w() == 10);
}

TEST_CASE("ddcb with dilation rate 1 has two identical branches") {
  LUNetConfig cfg = LUNetConfig::with_base(8, 2);
  cfg.dilation_rate = 1;  // legal at block level; config.validate() rejects it
  lunet::DDCB block(3, 8, cfg);
  Rng rng(lunet::mix_seed(10, lunet::hash_str("ddcb-dil1")));
  block.conv_std.init_weights(rng);
  block.conv_dil.w = block.conv_std.w;
  block.conv_dil.b = block.conv_std.b;
  Tensor x = random_image(1, 3, 9, 9, 43);
  Tensor a = block.conv_std.forward(x);
  Tensor b = block.conv_dil.forward(x);
  CHECK(lunet::max_abs_diff(a, b) == 0.0);
}

TEST_CASE("dilated branch receptive field is (k-1)*rate+1") {
  lunet::Conv2d conv(1, 1, 7, 1, 3);
  conv.w.fill(1.0);
  Tensor impulse(1, 1, 41, 41);
  impulse(0, 0, 20, 20) = 1.0;
  Tensor y = conv.forward(impulse);
  int64_t lo = 41, hi = -1;
  for (int64_t r = 0; r < 41; ++r)
    for (int64_t c = 0; c < 41; ++c)
      if (y(0, 0, r, c) != 0.0) {
        lo = std::min(lo, r);
        hi = std::max(hi, r);
      }
  CHECK(hi - lo + 1 == 19);
}

TEST_CASE("attention gate overrides and bounds") {
  lunet::AttentionGate gate(4, 8);
  Rng rng(lunet::mix_seed(11, lunet::hash_str("gate")));
  gate.theta_x.init_weights(rng);
  gate.theta_g.init_weights(rng);
  gate.psi.init_weights(rng);
  Tensor skip = random_image(2, 4, 8, 8, 44);
  Tensor gating = random_image(2, 8, 4, 4, 45);

  Tensor ones = gate.forward(skip, gating, GateOverride::ones);
  CHECK(lunet::max_abs_diff(ones, skip) == 0.0);
  Tensor zeros = gate.forward(skip, gating, GateOverride::zeros);
  CHECK(lunet::max_value(zeros) == 0.0);
  CHECK(lunet::min_value(zeros) == 0.0);

  Tensor out = gate.forward(skip, gating);
  for (int64_t i = 0; i < out.size(); ++i)
    CHECK(std::abs(out[i]) <= std::abs(skip[i]) + 1e-15);

  Tensor bad = random_image(2, 8, 8, 8, 46);  // not one level deeper
  CHECK_THROWS_AS(gate.forward(skip, bad), lunet::ShapeError);
}

TEST_CASE("forward shape contract and divisibility error") {
  LUNetConfig cfg = LUNetConfig::with_base(2, 6);
  cfg.tail_blocks = 1;
  LUNet model(cfg);
  model.init_weights(7);

  Tensor x = random_image(1, 3, 128, 192, 47);
  Tensor y = model.forward(x);
  CHECK(y.n() == 1);
  CHECK(y.c() == 2);
  CHECK(y.h() == 128);
  CHECK(y.w() == 192);
  CHECK(lunet::min_value(y) >= 0.0);
  CHECK(lunet::max_value(y) <= 1.0);

  Tensor bad = random_image(1, 3, 100, 100, 48);
  bool threw = false;
  try {
    model.forward(bad);
  } catch (const lunet::ShapeError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("64") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("eval forward is deterministic with dropout configured") {
  LUNetConfig cfg = LUNetConfig::with_base(4, 2);
  cfg.dropout_rate = 0.4;
  cfg.tail_blocks = 1;
  LUNet model(cfg);
  model.init_weights(21);
  Tensor x = random_image(1, 3, 16, 16, 49);
  Tensor a = model.forward(x);
  Tensor b = model.forward(x);
  CHECK(lunet::max_abs_diff(a, b) == 0.0);
}

TEST_CASE("gate override ones reduces to a plain skip U-Net") {
  LUNetConfig cfg = LUNetConfig::with_base(4, 2);
  cfg.dropout_rate = 0.0;
  cfg.tail_blocks = 0;
  LUNet model(cfg);
  model.init_weights(31);
  Tensor x = random_image(1, 3, 16, 16, 50);
  Tensor gated = model.forward(x);
  model.set_gate_override(GateOverride::ones);
  Tensor plain1 = model.forward(x);
  Tensor plain2 = model.forward(x);
  model.set_gate_override(GateOverride::none);
  CHECK(lunet::max_abs_diff(plain1, plain2) == 0.0);
  CHECK(lunet::max_abs_diff(gated, plain1) > 0.0);  // gates actually act
}

TEST_CASE("parameter count matches the layer-plan formula") {
  auto ddcb_params = [](int64_t in, int64_t out) {
    return 49 * in * out + 3 * out;  // conv weights + biases + BN affine
  };
  const std::vector<int64_t> e{16, 32, 64, 128, 256, 512};
  const std::vector<int64_t> d{8, 16, 32, 64, 128, 256};
  int64_t expected = 0;
  int64_t in = 3;
  for (int i = 0; i < 6; ++i) {
    expected += ddcb_params(in, e[static_cast<size_t>(i)]);
    in = e[static_cast<size_t>(i)];
  }
  expected += ddcb_params(512, 512);  // bottleneck
  for (int i = 0; i < 6; ++i) {
    const int64_t deep = i == 5 ? 512 : d[static_cast<size_t>(i + 1)];
    const int64_t ei = e[static_cast<size_t>(i)];
    const int64_t di = d[static_cast<size_t>(i)];
    const int64_t inter = ei / 2;
    expected += 9 * deep * di + di;                   // up-conv 3×3
    expected += ei * inter + inter;                   // theta_x
    expected += deep * inter + inter;                 // theta_g
    expected += inter + 1;                            // psi
    expected += ddcb_params(di + ei, di);             // decoder DDCB
  }
  expected += 4 * ddcb_params(8, 8);  // tail
  expected += 8 * 2 + 2;              // 1×1 head

  LUNet model(LUNetConfig::with_base(16, 6));
  CHECK(model.param_count() == expected);
  // frozen regression constant for the default architecture
  CHECK(model.param_count() == 36187008);
}

TEST_CASE("parameter gradients match finite differences on a toy config") {
  LUNetConfig cfg = toy_config();
  LUNet model(cfg);
  model.init_weights(1234);

  const Tensor x = random_image(2, 3, 8, 8, 51);
  const Tensor target = random_image(2, 2, 8, 8, 52);
  Rng dummy(0);

  auto eval_loss = [&]() {
    LUNet::Tape tape;
    Tensor y = model.forward_train(x, dummy, tape);
    Tensor d = y;
    d -= target;
    return 0.5 * lunet::dot(d, d);
  };

  // analytic gradients
  model.zero_grad();
  LUNet::Tape tape;
  Tensor y = model.forward_train(x, dummy, tape);
  Tensor gout = y;
  gout -= target;
  Tensor gx = model.backward(gout, tape);

  std::vector<Tensor*> params, grads;
  model.for_each_param([&](Tensor& w, Tensor& g) {
    params.push_back(&w);
    grads.push_back(&g);
  });
  int64_t total = 0;
  for (Tensor* p : params) total += p->size();
  CHECK(total == model.param_count());

  const double h = 1e-4;
  double num = 0.0, den_a = 0.0, den_f = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& w = *params[pi];
    Tensor& g = *grads[pi];
    for (int64_t i = 0; i < w.size(); ++i) {
      const double keep = w[i];
      w[i] = keep + h;
      const double fp = eval_loss();
      w[i] = keep - h;
      const double fm = eval_loss();
      w[i] = keep;
      const double fd = (fp - fm) / (2.0 * h);
      const double d = g[i] - fd;
      num += d * d;
      den_a += g[i] * g[i];
      den_f += fd * fd;
    }
  }
  const double rel =
      std::sqrt(num) /
      std::max({std::sqrt(den_a), std::sqrt(den_f), 1e-12});
  CHECK(rel < 1e-3);

  // input gradient along the same tape
  Tensor fd_x = oracle::fd_gradient(
      [&](const Tensor& xi) {
        LUNet::Tape t2;
        Tensor yy = model.forward_train(xi, dummy, t2);
        Tensor d = yy;
        d -= target;
        return 0.5 * lunet::dot(d, d);
      },
      x, h);
  CHECK(oracle::rel_l2(gx, fd_x) < 1e-3);
}
