#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cephmark/codec.hpp"
#include "cephmark/ops.hpp"

namespace cephmark {

// Encoder-decoder topology shared by both stages. Channel widths double per
// level; skip connections concatenate encoder features into the decoder.
struct UNetConfig {
  int depth = 4;          // down/up levels
  int base_channels = 16;  // channels at the first level
  int kernel_size = 3;
  int in_channels = 1;    // grayscale input
  int out_channels = 20;  // K+1

  void validate() const {
    if (depth < 1) throw ConfigError("unet: depth must be >= 1");
    if (base_channels < 1) throw ConfigError("unet: base_channels must be >= 1");
    if (kernel_size < 1 || kernel_size % 2 == 0)
      throw ConfigError("unet: kernel_size must be odd and >= 1");
    if (in_channels < 1) throw ConfigError("unet: in_channels must be >= 1");
    if (out_channels < 2) throw ConfigError("unet: out_channels must be >= 2 (K+1)");
  }

  int spatial_multiple() const { return 1 << depth; }

  bool operator==(const UNetConfig&) const = default;
};

template <typename T>
struct UNetModel {
  struct ConvBlock {
    ag::Tensor<T> weight;  // [C_out, C_in, k, k]
    ag::Tensor<T> bias;    // [C_out]
  };

  UNetConfig config;
  std::vector<ConvBlock> encoder;     // 2 per level
  std::vector<ConvBlock> bottleneck;  // 2
  std::vector<ConvBlock> decoder;     // 2 per level, shallow level last
  ConvBlock head;                     // final 1x1 projection to K+1 channels

  // Stable, unique names; the checkpoint format keys off them.
  std::vector<std::pair<std::string, ag::Tensor<T>>> named_parameters() const {
    std::vector<std::pair<std::string, ag::Tensor<T>>> out;
    auto push = [&out](const std::string& prefix, const ConvBlock& b) {
      out.emplace_back(prefix + ".weight", b.weight);
      out.emplace_back(prefix + ".bias", b.bias);
    };
    for (int l = 0; l < config.depth; ++l)
      for (int j = 0; j < 2; ++j)
        push("enc" + std::to_string(l) + ".conv" + std::to_string(j), encoder[2 * l + j]);
    for (int j = 0; j < 2; ++j) push("bottleneck.conv" + std::to_string(j), bottleneck[j]);
    for (int l = config.depth - 1; l >= 0; --l)
      for (int j = 0; j < 2; ++j)
        push("dec" + std::to_string(l) + ".conv" + std::to_string(j),
             decoder[2 * (config.depth - 1 - l) + j]);
    push("head", head);
    return out;
  }

  std::vector<ag::Tensor<T>> parameters() const {
    std::vector<ag::Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(t);
    return out;
  }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t.numel();
    return n;
  }

  void set_requires_grad(bool rg) {
    for (auto& t : parameters()) t.set_requires_grad(rg);
  }
};

namespace detail {

template <typename T>
typename UNetModel<T>::ConvBlock init_conv(int c_out, int c_in, int k, Rng& rng) {
  // fan-in-scaled uniform, weights and biases alike; keeps the head logits
  // small enough for a near-uniform softmax at initialization, and nonzero
  // biases keep pre-activations off the exact ReLU kink
  double bound = std::sqrt(1.0 / (static_cast<double>(c_in) * k * k));
  ag::Tensor<T> w = ag::Tensor<T>::zeros({c_out, c_in, k, k}, true);
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  ag::Tensor<T> b = ag::Tensor<T>::zeros({c_out}, true);
  for (auto& v : b.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  return {w, b};
}

}  // namespace detail

// Seeded construction: identical seed, identical parameters.
template <typename T>
UNetModel<T> build_unet(const UNetConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  UNetModel<T> m;
  m.config = config;
  const int k = config.kernel_size;
  int ch = config.in_channels;
  for (int l = 0; l < config.depth; ++l) {
    int c = config.base_channels << l;
    m.encoder.push_back(detail::init_conv<T>(c, ch, k, rng));
    m.encoder.push_back(detail::init_conv<T>(c, c, k, rng));
    ch = c;
  }
  {
    int c = config.base_channels << config.depth;
    m.bottleneck.push_back(detail::init_conv<T>(c, ch, k, rng));
    m.bottleneck.push_back(detail::init_conv<T>(c, c, k, rng));
    ch = c;
  }
  for (int l = config.depth - 1; l >= 0; --l) {
    int c = config.base_channels << l;
    m.decoder.push_back(detail::init_conv<T>(c, c + ch, k, rng));  // skip concat widens input
    m.decoder.push_back(detail::init_conv<T>(c, c, k, rng));
    ch = c;
  }
  m.head = detail::init_conv<T>(config.out_channels, ch, 1, rng);
  return m;
}

// Re-initializes the head bias with a background prior: the shared
// background channel starts at `prior_logit` and every landmark channel at
// 0, so initial landmark probabilities sit near 1/(K + e^prior) instead of
// uniform. Dense detectors with focal-style losses start this way to skip
// the phase where the background class swamps every gradient; 4.6 puts the
// landmark prior near 0.01.
template <typename T>
void apply_background_prior(UNetModel<T>& model, double prior_logit) {
  auto& bias = model.head.bias.values();
  for (auto& v : bias) v = T{};
  bias.back() = static_cast<T>(prior_logit);
}

// image [1,H,W] -> probability stack [K+1,H,W]; H and W must be divisible by
// 2^depth. Per level: (conv, relu) x2, maxpool; mirrored on the way up with
// nearest-neighbor upsampling and skip concatenation; 1x1 head; channel
// softmax.
template <typename T>
HeatmapStack<T> unet_forward(const UNetModel<T>& model, ag::Tape<T>* tape,
                             const ag::Tensor<T>& image, Frame frame) {
  const UNetConfig& cfg = model.config;
  if (image.ndim() != 3 || image.dim(0) != cfg.in_channels)
    throw ShapeError("unet_forward: expected [" + std::to_string(cfg.in_channels) +
                     ",H,W] input, got " + shape_str(image.shape()));
  const int mult = cfg.spatial_multiple();
  if (image.dim(1) % mult != 0 || image.dim(2) % mult != 0)
    throw ShapeError("unet_forward: input " + shape_str(image.shape()) +
                     " not divisible by 2^depth = " + std::to_string(mult) +
                     "; pad to the next multiple first");

  const int pad = cfg.kernel_size / 2;
  auto conv_relu = [&](const ag::Tensor<T>& x, const typename UNetModel<T>::ConvBlock& b) {
    return ag::relu(tape, ag::conv2d(tape, x, b.weight, b.bias, 1, pad));
  };

  ag::Tensor<T> x = image;
  std::vector<ag::Tensor<T>> skips;
  for (int l = 0; l < cfg.depth; ++l) {
    x = conv_relu(x, model.encoder[2 * l]);
    x = conv_relu(x, model.encoder[2 * l + 1]);
    skips.push_back(x);
    x = ag::maxpool2d(tape, x, 2);
  }
  x = conv_relu(x, model.bottleneck[0]);
  x = conv_relu(x, model.bottleneck[1]);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    x = ag::upsample2d(tape, x, 2);
    x = ag::concat_channels(tape, skips[l], x);
    x = conv_relu(x, model.decoder[2 * (cfg.depth - 1 - l)]);
    x = conv_relu(x, model.decoder[2 * (cfg.depth - 1 - l) + 1]);
  }
  x = ag::conv2d(tape, x, model.head.weight, model.head.bias, 1, 0);
  x = ag::channel_softmax(tape, x);

  HeatmapStack<T> out;
  out.channels = x;
  out.frame = frame;
  return out;
}

}  // namespace cephmark
