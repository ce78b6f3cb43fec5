#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "intrinsic/errors.hpp"
#include "intrinsic/image.hpp"
#include "intrinsic/layers.hpp"
#include "intrinsic/optim.hpp"
#include "intrinsic/rng.hpp"
#include "intrinsic/tensor.hpp"

namespace intrinsic {

struct LossWeights {
  double gamma_r = 1.0;
  double gamma_s = 1.0;
  double gamma_imf = 1.0;
  double gamma_h = 1.0;
  double gamma_e = 1.0;

  void validate() const {
    if (gamma_r < 0 || gamma_s < 0 || gamma_imf < 0 || gamma_h < 0 || gamma_e < 0)
      throw DomainError("LossWeights: weights must be >= 0");
    if (gamma_r == 0 && gamma_s == 0)
      throw DomainError("LossWeights: at least one of gamma_r/gamma_s must be positive");
  }
};

/// Shared-encoder / two-decoder topology. Each encoder block is
/// convs_per_block 3x3 convolutions followed by a stride-2 3x3 downsampling
/// convolution; decoders mirror with 4x4 stride-2 deconvolutions. Skip
/// connections run from each block's pre-downsampling activation to the
/// matching decoder stage, except at the bottleneck. Batch norm follows every
/// convolution except the final prediction layers, which stay linear.
struct IntrinsicNetConfig {
  std::vector<int> block_widths{16, 32, 64};
  int convs_per_block = 2;
  int input_channels = 3;
  int output_channels = 3;  // per decoder
  int input_height = 32;
  int input_width = 32;
  bool use_imf_loss = true;
  LossWeights loss_weights;
  bool additive_skips = false;    // concatenation by default
  bool unit_normal_deconv_init = false; // N(0,1) instead of He for deconv weights

  int depth() const { return static_cast<int>(block_widths.size()); }

  void validate() const {
    if (block_widths.size() < 2)
      throw ConfigError("IntrinsicNetConfig: need at least 2 encoder blocks");
    for (int w : block_widths)
      if (w < 1) throw ConfigError("IntrinsicNetConfig: block widths must be positive");
    if (convs_per_block < 1)
      throw ConfigError("IntrinsicNetConfig: convs_per_block must be >= 1");
    if (input_channels < 1 || output_channels < 1)
      throw ConfigError("IntrinsicNetConfig: channel counts must be positive");
    loss_weights.validate();
    const int div = 1 << depth();
    if (input_height % div != 0 || input_width % div != 0 || input_height < div ||
        input_width < div)
      throw ConfigError("IntrinsicNetConfig: input " + std::to_string(input_height) + "x" +
                        std::to_string(input_width) + " must be divisible by 2^depth = " +
                        std::to_string(div) + " for shape mirroring");
  }
};

/// Full-scale configuration with VGG16-like widths. 120x160 inputs are padded
/// to 128x160 so the 5-level mirror closes; inference handles the padding.
inline IntrinsicNetConfig full_scale_config() {
  IntrinsicNetConfig cfg;
  cfg.block_widths = {64, 128, 256, 512, 512};
  cfg.convs_per_block = 2;
  cfg.input_height = 128;
  cfg.input_width = 160;
  return cfg;
}

template <typename T>
struct ConvUnit {
  Parameter<T> w, b;
};

template <typename T>
struct BnUnit {
  Parameter<T> gamma, beta;
  BnState<T> state;
  std::string name;
};

namespace detail {

template <typename T>
ConvUnit<T> make_conv(const std::string& name, int oc, int ic, int k, Rng& rng) {
  ConvUnit<T> u{Parameter<T>(name + ".w", TensorShape{oc, ic, k, k}),
                Parameter<T>(name + ".b", TensorShape{1, oc, 1, 1})};
  init_he(u.w.value, ic * k * k, rng);
  return u;  // biases stay zero
}

template <typename T>
ConvUnit<T> make_deconv(const std::string& name, int ic, int oc, Rng& rng, bool paper_init) {
  ConvUnit<T> u{Parameter<T>(name + ".w", TensorShape{ic, oc, 4, 4}),
                Parameter<T>(name + ".b", TensorShape{1, oc, 1, 1})};
  if (paper_init)
    init_normal(u.w.value, 0.0, 1.0, rng);
  else
    init_he(u.w.value, ic * 16, rng);
  return u;
}

template <typename T>
BnUnit<T> make_bn(const std::string& name, int c) {
  BnUnit<T> u{Parameter<T>(name + ".gamma", TensorShape{1, c, 1, 1}),
              Parameter<T>(name + ".beta", TensorShape{1, c, 1, 1}), BnState<T>(c), name};
  std::fill(u.gamma.value.values().begin(), u.gamma.value.values().end(), T(1));
  return u;
}

template <typename T>
void collect(std::vector<Parameter<T>*>& out, ConvUnit<T>& u) {
  out.push_back(&u.w);
  out.push_back(&u.b);
}
template <typename T>
void collect(std::vector<Parameter<T>*>& out, BnUnit<T>& u) {
  out.push_back(&u.gamma);
  out.push_back(&u.beta);
}

}  // namespace detail

template <typename T>
class IntrinsicNet {
 public:
  struct Block {
    std::vector<ConvUnit<T>> convs;
    std::vector<BnUnit<T>> bns;
    ConvUnit<T> down;
    BnUnit<T> down_bn;
  };
  struct Stage {
    ConvUnit<T> up;
    BnUnit<T> up_bn;
    std::vector<ConvUnit<T>> convs;
    std::vector<BnUnit<T>> bns;
  };
  struct DecoderNet {
    std::vector<Stage> stages;  // deepest first
    ConvUnit<T> pred;
  };

  IntrinsicNetConfig cfg;
  std::vector<Block> encoder;
  DecoderNet decoder_reflectance, decoder_shading;

  static IntrinsicNet build(const IntrinsicNetConfig& cfg, Rng& rng) {
    cfg.validate();
    IntrinsicNet net;
    net.cfg = cfg;
    const auto& widths = cfg.block_widths;
    const int blocks = cfg.depth();

    int cur = cfg.input_channels;
    for (int i = 0; i < blocks; ++i) {
      Block blk;
      const std::string base = "enc.b" + std::to_string(i);
      for (int j = 0; j < cfg.convs_per_block; ++j) {
        const int ic = j == 0 ? cur : widths[i];
        blk.convs.push_back(detail::make_conv<T>(base + ".conv" + std::to_string(j),
                                                 widths[i], ic, 3, rng));
        blk.bns.push_back(detail::make_bn<T>(base + ".bn" + std::to_string(j), widths[i]));
      }
      blk.down = detail::make_conv<T>(base + ".down", widths[i], widths[i], 3, rng);
      blk.down_bn = detail::make_bn<T>(base + ".down_bn", widths[i]);
      net.encoder.push_back(std::move(blk));
      cur = widths[i];
    }

    auto build_decoder = [&](const std::string& base) {
      DecoderNet dec;
      int in_ch = widths[blocks - 1];
      for (int j = blocks - 1; j >= 0; --j) {
        Stage st;
        const std::string sbase = base + ".s" + std::to_string(j);
        st.up = detail::make_deconv<T>(sbase + ".up", in_ch, widths[j], rng,
                                       cfg.unit_normal_deconv_init);
        st.up_bn = detail::make_bn<T>(sbase + ".up_bn", widths[j]);
        const bool has_skip = j < blocks - 1;
        int conv_in = has_skip && !cfg.additive_skips ? 2 * widths[j] : widths[j];
        for (int k = 0; k < cfg.convs_per_block; ++k) {
          st.convs.push_back(detail::make_conv<T>(sbase + ".conv" + std::to_string(k),
                                                  widths[j], conv_in, 3, rng));
          st.bns.push_back(detail::make_bn<T>(sbase + ".bn" + std::to_string(k), widths[j]));
          conv_in = widths[j];
        }
        dec.stages.push_back(std::move(st));
        in_ch = widths[j];
      }
      dec.pred = detail::make_conv<T>(base + ".pred", cfg.output_channels, widths[0], 3, rng);
      return dec;
    };
    net.decoder_reflectance = build_decoder("dec_r");
    net.decoder_shading = build_decoder("dec_s");
    return net;
  }

  struct Output {
    Tensor<T> reflectance;
    Tensor<T> shading;
  };

  Output forward(const Tensor<T>& x, BnMode mode) {
    const TensorShape s = x.shape();
    if (s.c != cfg.input_channels)
      throw DimensionError("IntrinsicNet: expected " + std::to_string(cfg.input_channels) +
                           " input channels, got " + std::to_string(s.c));
    const int div = 1 << cfg.depth();
    if (s.h % div != 0 || s.w % div != 0)
      throw DimensionError("IntrinsicNet: input " + s.str() +
                           " not divisible by 2^depth = " + std::to_string(div));

    std::vector<Tensor<T>> taps;
    Tensor<T> cur = x;
    for (Block& blk : encoder) {
      for (std::size_t j = 0; j < blk.convs.size(); ++j) {
        cur = conv3x3(cur, blk.convs[j].w.value, blk.convs[j].b.value, 1);
        cur = relu(batchnorm(cur, blk.bns[j].gamma.value, blk.bns[j].beta.value,
                             blk.bns[j].state, mode));
      }
      taps.push_back(cur);
      cur = conv3x3(cur, blk.down.w.value, blk.down.b.value, 2);
      cur = relu(batchnorm(cur, blk.down_bn.gamma.value, blk.down_bn.beta.value,
                           blk.down_bn.state, mode));
    }

    const int blocks = cfg.depth();
    auto run_decoder = [&](DecoderNet& dec) {
      Tensor<T> z = cur;
      for (int idx = 0; idx < blocks; ++idx) {
        Stage& st = dec.stages[idx];
        const int j = blocks - 1 - idx;
        z = deconv4x4_s2(z, st.up.w.value, st.up.b.value);
        z = relu(batchnorm(z, st.up_bn.gamma.value, st.up_bn.beta.value, st.up_bn.state, mode));
        if (j < blocks - 1)
          z = cfg.additive_skips ? add_elem(z, taps[j]) : concat_c<T>({z, taps[j]});
        for (std::size_t k = 0; k < st.convs.size(); ++k) {
          z = conv3x3(z, st.convs[k].w.value, st.convs[k].b.value, 1);
          z = relu(batchnorm(z, st.bns[k].gamma.value, st.bns[k].beta.value, st.bns[k].state,
                             mode));
        }
      }
      return conv3x3(z, dec.pred.w.value, dec.pred.b.value, 1);  // linear output
    };
    return Output{run_decoder(decoder_reflectance), run_decoder(decoder_shading)};
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (Block& blk : encoder) {
      for (std::size_t j = 0; j < blk.convs.size(); ++j) {
        detail::collect(out, blk.convs[j]);
        detail::collect(out, blk.bns[j]);
      }
      detail::collect(out, blk.down);
      detail::collect(out, blk.down_bn);
    }
    for (DecoderNet* dec : {&decoder_reflectance, &decoder_shading}) {
      for (Stage& st : dec->stages) {
        detail::collect(out, st.up);
        detail::collect(out, st.up_bn);
        for (std::size_t k = 0; k < st.convs.size(); ++k) {
          detail::collect(out, st.convs[k]);
          detail::collect(out, st.bns[k]);
        }
      }
      detail::collect(out, dec->pred);
    }
    return out;
  }

  std::vector<std::pair<std::string, BnState<T>*>> bn_states() {
    std::vector<std::pair<std::string, BnState<T>*>> out;
    for (Block& blk : encoder) {
      for (BnUnit<T>& u : blk.bns) out.emplace_back(u.name, &u.state);
      out.emplace_back(blk.down_bn.name, &blk.down_bn.state);
    }
    for (DecoderNet* dec : {&decoder_reflectance, &decoder_shading})
      for (Stage& st : dec->stages) {
        out.emplace_back(st.up_bn.name, &st.up_bn.state);
        for (BnUnit<T>& u : st.bns) out.emplace_back(u.name, &u.state);
      }
    return out;
  }

  std::int64_t parameter_count() {
    std::int64_t n = 0;
    for (Parameter<T>* p : parameters()) n += p->value.numel();
    return n;
  }
};

/// Stage-2 gradient reintegration network: a stride-1 chain of 3x3
/// convolutions, ReLU between layers, linear 6-channel output split into
/// reflectance and shading. No spatial resampling, no batch norm by default.
struct RetiNetConfig {
  RetiNetConfig() {
    stage1.input_channels = 6;  // RGB + per-channel gradient magnitude
  }

  IntrinsicNetConfig stage1;
  std::vector<int> stage2_widths{64, 128, 128, 64};
  int stage2_kernel = 3;
  int stage2_input_channels = 9;
  int stage2_output_channels = 6;
  bool stage2_batchnorm = false;  // flag to re-enable inner batch norm

  void validate() const {
    IntrinsicNetConfig s1 = stage1;
    s1.validate();
    if (stage1.input_channels != 6)
      throw ConfigError("RetiNetConfig: stage 1 takes RGB + per-channel gradient magnitude "
                        "(6 channels)");
    if (stage2_widths.empty())
      throw ConfigError("RetiNetConfig: stage 2 needs at least one layer");
    for (int w : stage2_widths)
      if (w < 1) throw ConfigError("RetiNetConfig: stage 2 widths must be positive");
    if (stage2_kernel != 3)
      throw ConfigError("RetiNetConfig: stage 2 uses 3x3 kernels");
    if (stage2_input_channels < 1 || stage2_output_channels < 1)
      throw ConfigError("RetiNetConfig: bad stage 2 channel counts");
  }
};

template <typename T>
class RetiNetStage2 {
 public:
  RetiNetConfig cfg;
  std::vector<ConvUnit<T>> convs;  // hidden layers + final prediction conv
  std::vector<BnUnit<T>> bns;      // only when cfg.stage2_batchnorm

  static RetiNetStage2 build(const RetiNetConfig& cfg, Rng& rng) {
    cfg.validate();
    RetiNetStage2 net;
    net.cfg = cfg;
    int cur = cfg.stage2_input_channels;
    for (std::size_t i = 0; i < cfg.stage2_widths.size(); ++i) {
      const int w = cfg.stage2_widths[i];
      net.convs.push_back(
          detail::make_conv<T>("s2.conv" + std::to_string(i), w, cur, cfg.stage2_kernel, rng));
      if (cfg.stage2_batchnorm)
        net.bns.push_back(detail::make_bn<T>("s2.bn" + std::to_string(i), w));
      cur = w;
    }
    net.convs.push_back(
        detail::make_conv<T>("s2.pred", cfg.stage2_output_channels, cur, cfg.stage2_kernel, rng));
    return net;
  }

  /// Returns (reflectance, shading), each with half the output channels.
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& x, BnMode mode) {
    if (x.shape().c != cfg.stage2_input_channels)
      throw DimensionError("RetiNetStage2: expected " +
                           std::to_string(cfg.stage2_input_channels) + " channels, got " +
                           std::to_string(x.shape().c));
    Tensor<T> z = x;
    for (std::size_t i = 0; i + 1 < convs.size(); ++i) {
      z = conv3x3(z, convs[i].w.value, convs[i].b.value, 1);
      if (cfg.stage2_batchnorm)
        z = batchnorm(z, bns[i].gamma.value, bns[i].beta.value, bns[i].state, mode);
      z = relu(z);
    }
    z = conv3x3(z, convs.back().w.value, convs.back().b.value, 1);  // linear
    const int half = cfg.stage2_output_channels / 2;
    return {slice_c(z, 0, half), slice_c(z, half, cfg.stage2_output_channels)};
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      detail::collect(out, convs[i]);
      if (cfg.stage2_batchnorm && i < bns.size()) detail::collect(out, bns[i]);
    }
    return out;
  }

  std::vector<std::pair<std::string, BnState<T>*>> bn_states() {
    std::vector<std::pair<std::string, BnState<T>*>> out;
    for (BnUnit<T>& u : bns) out.emplace_back(u.name, &u.state);
    return out;
  }

  std::int64_t weight_count() {
    std::int64_t n = 0;
    for (const ConvUnit<T>& u : convs) n += u.w.value.numel();
    return n;
  }
  std::int64_t bias_count() {
    std::int64_t n = 0;
    for (const ConvUnit<T>& u : convs) n += u.b.value.numel();
    return n;
  }
  std::int64_t parameter_count() { return weight_count() + bias_count(); }
};

// ---------------------------------------------------------------------------
// Loss functions. All are built on the autodiff graph so gradients flow into
// every prediction argument.
// ---------------------------------------------------------------------------

/// Weighted reconstruction losses for both intrinsics:
/// gamma_r * mse(R_hat, R) + gamma_s * mse(S_hat, S).
template <typename T>
Tensor<T> combined_loss(const Tensor<T>& r_hat, const Tensor<T>& r, const Tensor<T>& s_hat,
                        const Tensor<T>& s, const LossWeights& w) {
  return add_elem(scale(mse_loss(r_hat, r), static_cast<T>(w.gamma_r)),
                  scale(mse_loss(s_hat, s), static_cast<T>(w.gamma_s)));
}

/// Reflection-model constraint: gamma_imf * mse(R_hat * S_hat, I). Gradients
/// reach both predictions through the product.
template <typename T>
Tensor<T> image_formation_loss(const Tensor<T>& r_hat, const Tensor<T>& s_hat,
                               const Tensor<T>& image, double gamma_imf) {
  return scale(mse_loss(mul_elem(r_hat, s_hat), image), static_cast<T>(gamma_imf));
}

/// Combined + image formation loss.
template <typename T>
Tensor<T> final_loss(const Tensor<T>& r_hat, const Tensor<T>& r, const Tensor<T>& s_hat,
                     const Tensor<T>& s, const Tensor<T>& image, const LossWeights& w) {
  return add_elem(combined_loss(r_hat, r, s_hat, s, w),
                  image_formation_loss(r_hat, s_hat, image, w.gamma_imf));
}

/// Loss for the full reflection model: per-component reconstruction terms for
/// R, S, H, E plus the formation constraint on R*S*E + H*E. The illuminant
/// may be a (1,3,1,1) global triple or a per-pixel map.
template <typename T>
Tensor<T> full_reflection_loss(const Tensor<T>& r_hat, const Tensor<T>& r,
                               const Tensor<T>& s_hat, const Tensor<T>& s,
                               const Tensor<T>& h_hat, const Tensor<T>& h,
                               const Tensor<T>& e_hat, const Tensor<T>& e,
                               const Tensor<T>& image, const LossWeights& w) {
  Tensor<T> loss = add_elem(scale(mse_loss(r_hat, r), static_cast<T>(w.gamma_r)),
                            scale(mse_loss(s_hat, s), static_cast<T>(w.gamma_s)));
  loss = add_elem(loss, scale(mse_loss(h_hat, h), static_cast<T>(w.gamma_h)));
  loss = add_elem(loss, scale(mse_loss(e_hat, e), static_cast<T>(w.gamma_e)));
  const Tensor<T> recon = add_elem(mul_elem(mul_elem(r_hat, s_hat), e_hat),
                                   mul_elem(h_hat, e_hat));
  return add_elem(loss, scale(mse_loss(recon, image), static_cast<T>(w.gamma_imf)));
}

/// Stage-1 loss: the combined loss applied to gradient magnitudes.
template <typename T>
Tensor<T> gradient_stage_loss(const Tensor<T>& grad_r_hat, const Tensor<T>& grad_r,
                              const Tensor<T>& grad_s_hat, const Tensor<T>& grad_s,
                              const LossWeights& w) {
  return combined_loss(grad_r_hat, grad_r, grad_s_hat, grad_s, w);
}

// ---------------------------------------------------------------------------
// Image <-> tensor conversion (HWC interleaved <-> NCHW planar).
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> image_to_tensor(const Image& im) {
  Tensor<T> t(TensorShape{1, im.channels, im.height, im.width});
  auto& v = t.values();
  std::size_t i = 0;
  for (int c = 0; c < im.channels; ++c)
    for (int y = 0; y < im.height; ++y)
      for (int x = 0; x < im.width; ++x, ++i) v[i] = static_cast<T>(im.at(y, x, c));
  return t;
}

template <typename T>
Tensor<T> images_to_batch(const std::vector<Image>& images) {
  if (images.empty()) throw UsageError("images_to_batch: empty batch");
  const Image& first = images.front();
  Tensor<T> t(TensorShape{static_cast<int>(images.size()), first.channels, first.height,
                          first.width});
  auto& v = t.values();
  std::size_t i = 0;
  for (const Image& im : images) {
    if (!im.same_shape(first))
      throw DimensionError("images_to_batch: inconsistent sample shapes");
    for (int c = 0; c < im.channels; ++c)
      for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x, ++i) v[i] = static_cast<T>(im.at(y, x, c));
  }
  return t;
}

template <typename T>
Image tensor_to_image(const Tensor<T>& t, int batch_index = 0) {
  const TensorShape s = t.shape();
  Image im(s.h, s.w, s.c);
  const auto& v = t.values();
  std::size_t i = static_cast<std::size_t>(batch_index) * s.c * s.h * s.w;
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x, ++i) im.at(y, x, c) = static_cast<float>(v[i]);
  return im;
}

// ---------------------------------------------------------------------------
// JSON (de)serialization for configs, stored next to checkpoints.
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"gamma_r", w.gamma_r},
       {"gamma_s", w.gamma_s},
       {"gamma_imf", w.gamma_imf},
       {"gamma_h", w.gamma_h},
       {"gamma_e", w.gamma_e}};
}
inline void from_json(const nlohmann::json& j, LossWeights& w) {
  w.gamma_r = j.value("gamma_r", 1.0);
  w.gamma_s = j.value("gamma_s", 1.0);
  w.gamma_imf = j.value("gamma_imf", 1.0);
  w.gamma_h = j.value("gamma_h", 1.0);
  w.gamma_e = j.value("gamma_e", 1.0);
}

inline void to_json(nlohmann::json& j, const IntrinsicNetConfig& c) {
  j = {{"block_widths", c.block_widths},
       {"convs_per_block", c.convs_per_block},
       {"input_channels", c.input_channels},
       {"output_channels", c.output_channels},
       {"input_height", c.input_height},
       {"input_width", c.input_width},
       {"use_imf_loss", c.use_imf_loss},
       {"loss_weights", c.loss_weights},
       {"additive_skips", c.additive_skips},
       {"unit_normal_deconv_init", c.unit_normal_deconv_init}};
}
inline void from_json(const nlohmann::json& j, IntrinsicNetConfig& c) {
  IntrinsicNetConfig d;
  c.block_widths = j.value("block_widths", d.block_widths);
  c.convs_per_block = j.value("convs_per_block", d.convs_per_block);
  c.input_channels = j.value("input_channels", d.input_channels);
  c.output_channels = j.value("output_channels", d.output_channels);
  c.input_height = j.value("input_height", d.input_height);
  c.input_width = j.value("input_width", d.input_width);
  c.use_imf_loss = j.value("use_imf_loss", d.use_imf_loss);
  c.loss_weights = j.value("loss_weights", d.loss_weights);
  c.additive_skips = j.value("additive_skips", d.additive_skips);
  c.unit_normal_deconv_init = j.value("unit_normal_deconv_init", d.unit_normal_deconv_init);
}

inline void to_json(nlohmann::json& j, const RetiNetConfig& c) {
  j = {{"stage1", c.stage1},
       {"stage2_widths", c.stage2_widths},
       {"stage2_kernel", c.stage2_kernel},
       {"stage2_input_channels", c.stage2_input_channels},
       {"stage2_output_channels", c.stage2_output_channels},
       {"stage2_batchnorm", c.stage2_batchnorm}};
}
inline void from_json(const nlohmann::json& j, RetiNetConfig& c) {
  RetiNetConfig d;
  c.stage1 = j.value("stage1", d.stage1);
  c.stage2_widths = j.value("stage2_widths", d.stage2_widths);
  c.stage2_kernel = j.value("stage2_kernel", d.stage2_kernel);
  c.stage2_input_channels = j.value("stage2_input_channels", d.stage2_input_channels);
  c.stage2_output_channels = j.value("stage2_output_channels", d.stage2_output_channels);
  c.stage2_batchnorm = j.value("stage2_batchnorm", d.stage2_batchnorm);
}

}  // namespace intrinsic
