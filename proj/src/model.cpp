#include "lunet/model.hpp"

#include <algorithm>
#include <utility>

namespace lunet {

// ---- LUNetConfig -----------------------------------------------------------

LUNetConfig LUNetConfig::with_base(int base_channels, int depth) {
  LUNetConfig cfg;
  cfg.depth = depth;
  cfg.encoder_channels.resize(static_cast<size_t>(depth));
  cfg.decoder_channels.resize(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    cfg.encoder_channels[static_cast<size_t>(i)] = base_channels << i;
    cfg.decoder_channels[static_cast<size_t>(i)] =
        std::max(2, (base_channels << i) / 2);
  }
  return cfg;
}

void LUNetConfig::validate() const {
  if (depth < 1) throw ConfigError("LUNetConfig: depth must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw ConfigError("LUNetConfig: kernel_size must be odd and positive");
  if (dilation_rate < 2)
    throw ConfigError("LUNetConfig: dilation_rate must be >= 2");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw ConfigError("LUNetConfig: dropout_rate must be in [0,1)");
  if (tail_blocks < 0)
    throw ConfigError("LUNetConfig: tail_blocks must be >= 0");
  if (in_channels < 1 || out_channels < 1)
    throw ConfigError("LUNetConfig: channel counts must be positive");
  if (encoder_channels.size() != static_cast<size_t>(depth) ||
      decoder_channels.size() != static_cast<size_t>(depth))
    throw ConfigError(
        "LUNetConfig: encoder_channels and decoder_channels must list "
        "exactly one entry per level (depth entries)");
  const int min_width = ddcb_sum_merge ? 1 : 2;
  for (int i = 0; i < depth; ++i) {
    const int e = encoder_channels[static_cast<size_t>(i)];
    const int d = decoder_channels[static_cast<size_t>(i)];
    if (e < min_width || d < min_width)
      throw ConfigError("LUNetConfig: channel widths below minimum of " +
                        std::to_string(min_width));
    if (e < d)
      throw ConfigError(
          "LUNetConfig: encoder width must be >= decoder width at level " +
          std::to_string(i));
  }
}

// ---- DDCB ------------------------------------------------------------------

DDCB::DDCB(int64_t in_ch, int64_t out_ch, const LUNetConfig& cfg)
    : sum_merge(cfg.ddcb_sum_merge) {
  const int64_t std_ch = sum_merge ? out_ch : out_ch - out_ch / 2;
  const int64_t dil_ch = sum_merge ? out_ch : out_ch / 2;
  conv_std = Conv2d(in_ch, std_ch, cfg.kernel_size, 1, 1);
  conv_dil = Conv2d(in_ch, dil_ch, cfg.kernel_size, 1, cfg.dilation_rate);
  drop.rate = cfg.dropout_rate;
  bn = BatchNorm2d(out_ch);
}

Tensor DDCB::forward(const Tensor& x, Mode mode, Rng* rng,
                     Cache* cache) const {
  if (cache) cache->x = x;
  Tensor a = conv_std.forward(x);
  Tensor b = conv_dil.forward(x);
  Tensor merged;
  if (sum_merge) {
    merged = std::move(a);
    merged += b;
  } else {
    merged = concat_channels(a, b);
  }
  Tensor d = drop.forward(merged, mode, rng, cache ? &cache->drop : nullptr);
  Tensor n;
  if (mode == Mode::train) {
    BatchNorm2d::Cache scratch;
    n = const_cast<BatchNorm2d&>(bn).forward_train(
        d, cache ? cache->bn : scratch);
  } else {
    n = bn.forward_eval(d);
  }
  Tensor y = ReLU::forward(n);
  if (cache) cache->relu_out = y;
  return y;
}

Tensor DDCB::backward(const Tensor& gout, const Cache& cache) {
  Tensor gn = ReLU::backward(gout, cache.relu_out);
  Tensor gd = bn.backward(gn, cache.bn);
  Tensor gmerged = drop.backward(gd, cache.drop);
  Tensor gx;
  if (sum_merge) {
    gx = conv_std.backward(gmerged, cache.x);
    gx += conv_dil.backward(gmerged, cache.x);
  } else {
    const int64_t std_ch = conv_std.out_ch;
    Tensor ga = slice_channels(gmerged, 0, std_ch);
    Tensor gb = slice_channels(gmerged, std_ch, gmerged.c());
    gx = conv_std.backward(ga, cache.x);
    gx += conv_dil.backward(gb, cache.x);
  }
  return gx;
}

// ---- AttentionGate ---------------------------------------------------------

AttentionGate::AttentionGate(int64_t skip_ch, int64_t gate_ch) {
  const int64_t inter = std::max<int64_t>(1, skip_ch / 2);
  theta_x = Conv2d(skip_ch, inter, 1, 2);
  theta_g = Conv2d(gate_ch, inter, 1, 1);
  psi = Conv2d(inter, 1, 1, 1);
}

namespace {

Tensor mul_broadcast_channel(const Tensor& x, const Tensor& alpha) {
  Tensor out = Tensor::like(x);
  const int64_t hw = x.h() * x.w();
  for (int64_t n = 0; n < x.n(); ++n) {
    const double* a = alpha.plane(n, 0);
    for (int64_t c = 0; c < x.c(); ++c) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) dst[i] = src[i] * a[i];
    }
  }
  return out;
}

}  // namespace

Tensor AttentionGate::forward(const Tensor& skip, const Tensor& gating,
                              GateOverride ov, Cache* cache) const {
  if (skip.n() != gating.n() || skip.h() != gating.h() * 2 ||
      skip.w() != gating.w() * 2)
    throw ShapeError("attention_gate: gating " + gating.shape_str() +
                     " is not one level deeper than skip " + skip.shape_str());
  if (ov == GateOverride::ones) return skip;
  if (ov == GateOverride::zeros) return Tensor::like(skip);
  Tensor tx = theta_x.forward(skip);
  Tensor tg = theta_g.forward(gating);
  tx += tg;
  Tensor a = ReLU::forward(tx);
  Tensor alpha_small = Sigmoid::forward(psi.forward(a));
  Tensor alpha = UpsampleNearest2::forward(alpha_small);
  Tensor out = mul_broadcast_channel(skip, alpha);
  if (cache) {
    cache->skip = skip;
    cache->gating = gating;
    cache->add_relu = std::move(a);
    cache->alpha_small = std::move(alpha_small);
    cache->alpha = std::move(alpha);
  }
  return out;
}

Tensor AttentionGate::backward(const Tensor& gout, const Cache& cache,
                               Tensor& ggating) {
  // out = skip ⊙ alpha (alpha broadcast over channels)
  Tensor gskip = mul_broadcast_channel(gout, cache.alpha);
  Tensor galpha(gout.n(), 1, gout.h(), gout.w());
  const int64_t hw = gout.h() * gout.w();
  for (int64_t n = 0; n < gout.n(); ++n) {
    double* ga = galpha.plane(n, 0);
    for (int64_t c = 0; c < gout.c(); ++c) {
      const double* g = gout.plane(n, c);
      const double* s = cache.skip.plane(n, c);
      for (int64_t i = 0; i < hw; ++i) ga[i] += g[i] * s[i];
    }
  }
  Tensor galpha_small = UpsampleNearest2::backward(galpha);
  Tensor gpsi_out = Sigmoid::backward(galpha_small, cache.alpha_small);
  Tensor ga = psi.backward(gpsi_out, cache.add_relu);
  Tensor gsum = ReLU::backward(ga, cache.add_relu);
  gskip += theta_x.backward(gsum, cache.skip);
  ggating += theta_g.backward(gsum, cache.gating);
  return gskip;
}

// ---- LUNet -----------------------------------------------------------------

LUNet::LUNet(const LUNetConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const auto& ec = cfg_.encoder_channels;
  const auto& dc = cfg_.decoder_channels;
  const int depth = cfg_.depth;

  int64_t ch = cfg_.in_channels;
  enc_.reserve(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    enc_.emplace_back(ch, ec[static_cast<size_t>(i)], cfg_);
    ch = ec[static_cast<size_t>(i)];
  }
  bottleneck_ = DDCB(ch, ch, cfg_);

  up_conv_.resize(static_cast<size_t>(depth));
  gate_.resize(static_cast<size_t>(depth));
  dec_.resize(static_cast<size_t>(depth));
  // Deeper feature entering level i is the bottleneck (i = depth-1) or the
  // level-(i+1) decoder output.
  for (int i = depth - 1; i >= 0; --i) {
    const int64_t deep_ch =
        i == depth - 1 ? ec.back() : dc[static_cast<size_t>(i + 1)];
    const int64_t skip_ch = ec[static_cast<size_t>(i)];
    const int64_t out_ch = dc[static_cast<size_t>(i)];
    up_conv_[static_cast<size_t>(i)] = Conv2d(deep_ch, out_ch, 3);
    gate_[static_cast<size_t>(i)] = AttentionGate(skip_ch, deep_ch);
    dec_[static_cast<size_t>(i)] = DDCB(out_ch + skip_ch, out_ch, cfg_);
  }

  tail_.reserve(static_cast<size_t>(cfg_.tail_blocks));
  for (int j = 0; j < cfg_.tail_blocks; ++j)
    tail_.emplace_back(dc.front(), dc.front(), cfg_);
  head_ = Conv2d(dc.front(), cfg_.out_channels, 1);
}

void LUNet::init_weights(uint64_t seed) {
  Rng rng(mix_seed(seed, hash_str("lunet-init")));
  auto init_conv = [&rng](Conv2d& c) { c.init_weights(rng); };
  for (auto& b : enc_) {
    init_conv(b.conv_std);
    init_conv(b.conv_dil);
  }
  init_conv(bottleneck_.conv_std);
  init_conv(bottleneck_.conv_dil);
  for (size_t i = 0; i < up_conv_.size(); ++i) {
    init_conv(up_conv_[i]);
    init_conv(gate_[i].theta_x);
    init_conv(gate_[i].theta_g);
    init_conv(gate_[i].psi);
    init_conv(dec_[i].conv_std);
    init_conv(dec_[i].conv_dil);
  }
  for (auto& b : tail_) {
    init_conv(b.conv_std);
    init_conv(b.conv_dil);
  }
  init_conv(head_);
}

void LUNet::check_input(const Tensor& x) const {
  if (x.c() != cfg_.in_channels)
    throw ShapeError("forward: expected " + std::to_string(cfg_.in_channels) +
                     " input channels, got " + x.shape_str());
  const int64_t d = cfg_.divisor();
  if (x.h() % d != 0 || x.w() % d != 0)
    throw ShapeError("forward: spatial dims of " + x.shape_str() +
                     " must be multiples of " + std::to_string(d) +
                     " (2^depth)");
}

Tensor LUNet::run(const Tensor& x, Mode mode, Rng* rng, Tape* tape) {
  check_input(x);
  const int depth = cfg_.depth;
  if (tape) {
    tape->enc.resize(static_cast<size_t>(depth));
    tape->pool.resize(static_cast<size_t>(depth));
    tape->up.resize(static_cast<size_t>(depth));
    tape->gate.resize(static_cast<size_t>(depth));
    tape->dec.resize(static_cast<size_t>(depth));
    tape->tail.resize(tail_.size());
  }

  std::vector<Tensor> skips(static_cast<size_t>(depth));
  Tensor cur = x;
  for (int i = 0; i < depth; ++i) {
    skips[static_cast<size_t>(i)] = enc_[static_cast<size_t>(i)].forward(
        cur, mode, rng, tape ? &tape->enc[static_cast<size_t>(i)] : nullptr);
    cur = MaxPool2::forward(skips[static_cast<size_t>(i)],
                            tape ? &tape->pool[static_cast<size_t>(i)]
                                 : nullptr);
  }
  cur = bottleneck_.forward(cur, mode, rng, tape ? &tape->bottleneck : nullptr);

  for (int i = depth - 1; i >= 0; --i) {
    const size_t si = static_cast<size_t>(i);
    Tensor up = UpsampleNearest2::forward(cur);
    Tensor upc = up_conv_[si].forward(up);
    if (tape) tape->up[si] = std::move(up);
    Tensor att = gate_[si].forward(skips[si], cur, gate_override_,
                                   tape ? &tape->gate[si] : nullptr);
    Tensor cat = concat_channels(upc, att);
    cur = dec_[si].forward(cat, mode, rng, tape ? &tape->dec[si] : nullptr);
  }

  for (size_t j = 0; j < tail_.size(); ++j)
    cur = tail_[j].forward(cur, mode, rng, tape ? &tape->tail[j] : nullptr);

  if (tape) tape->head_in = cur;
  Tensor out = Sigmoid::forward(head_.forward(cur));
  if (tape) tape->output = out;
  return out;
}

Tensor LUNet::forward(const Tensor& x) const {
  // Eval mode touches no mutable state (running BN stats, dropout off).
  return const_cast<LUNet*>(this)->run(x, Mode::eval, nullptr, nullptr);
}

Tensor LUNet::forward_train(const Tensor& x, Rng& dropout_rng, Tape& tape) {
  return run(x, Mode::train, &dropout_rng, &tape);
}

Tensor LUNet::backward(const Tensor& gout, const Tape& tape) {
  const int depth = cfg_.depth;
  Tensor g = Sigmoid::backward(gout, tape.output);
  g = head_.backward(g, tape.head_in);
  for (size_t j = tail_.size(); j-- > 0;)
    g = tail_[j].backward(g, tape.tail[j]);

  // Decoder ran deep→shallow, so walk levels shallow→deep here. `g` holds
  // the gradient w.r.t. the level-i decoder output on entry.
  std::vector<Tensor> gskip(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    const size_t si = static_cast<size_t>(i);
    Tensor gcat = dec_[si].backward(g, tape.dec[si]);
    const int64_t up_ch = up_conv_[si].out_ch;
    Tensor gupc = slice_channels(gcat, 0, up_ch);
    Tensor gatt = slice_channels(gcat, up_ch, gcat.c());
    Tensor gup = up_conv_[si].backward(gupc, tape.up[si]);
    Tensor gdeep = UpsampleNearest2::backward(gup);
    gskip[si] = gate_[si].backward(gatt, tape.gate[si], gdeep);
    g = std::move(gdeep);
  }

  g = bottleneck_.backward(g, tape.bottleneck);
  for (int i = depth - 1; i >= 0; --i) {
    const size_t si = static_cast<size_t>(i);
    Tensor gs = MaxPool2::backward(g, tape.pool[si]);
    gs += gskip[si];
    g = enc_[si].backward(gs, tape.enc[si]);
  }
  return g;
}

void LUNet::zero_grad() {
  for_each_param([](Tensor&, Tensor& grad) { grad.fill(0.0); });
}

void LUNet::for_each_param(const std::function<void(Tensor&, Tensor&)>& fn) {
  auto conv = [&fn](Conv2d& c) {
    fn(c.w, c.gw);
    if (c.with_bias) fn(c.b, c.gb);
  };
  auto block = [&](DDCB& b) {
    conv(b.conv_std);
    conv(b.conv_dil);
    fn(b.bn.gamma, b.bn.ggamma);
    fn(b.bn.beta, b.bn.gbeta);
  };
  for (auto& b : enc_) block(b);
  block(bottleneck_);
  for (size_t i = 0; i < up_conv_.size(); ++i) {
    conv(up_conv_[i]);
    conv(gate_[i].theta_x);
    conv(gate_[i].theta_g);
    conv(gate_[i].psi);
    block(dec_[i]);
  }
  for (auto& b : tail_) block(b);
  conv(head_);
}

void LUNet::for_each_buffer(const std::function<void(Tensor&)>& fn) {
  auto block = [&fn](DDCB& b) {
    fn(b.bn.running_mean);
    fn(b.bn.running_var);
  };
  for (auto& b : enc_) block(b);
  block(bottleneck_);
  for (auto& b : dec_) block(b);
  for (auto& b : tail_) block(b);
}

int64_t LUNet::param_count() const {
  int64_t total = 0;
  const_cast<LUNet*>(this)->for_each_param(
      [&total](Tensor& w, Tensor&) { total += w.size(); });
  return total;
}

}  // namespace lunet
