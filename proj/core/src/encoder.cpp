#include "ctt/encoder.hpp"

#include <stdexcept>
#include <string>

namespace ctt {

std::size_t EncoderConfig::stages() const {
  std::size_t f = downsample_factor, n = 0;
  while (f > 1) {
    f /= 2;
    ++n;
  }
  return n;
}

void EncoderConfig::validate() const {
  if (input_height == 0 || input_width == 0) {
    throw ShapeError("EncoderConfig: image extents must be positive");
  }
  std::size_t f = downsample_factor;
  if (f == 0 || (f & (f - 1)) != 0) {
    throw ShapeError("EncoderConfig: downsample_factor must be a power of two");
  }
  if (input_height % f != 0 || input_width % f != 0) {
    throw ShapeError("EncoderConfig: image extents must be divisible by the "
                     "downsample factor");
  }
  if (channels.size() != stages()) {
    throw ShapeError("EncoderConfig: channel schedule needs one entry per "
                     "stage (" + std::to_string(stages()) + ")");
  }
  for (std::size_t c : channels) {
    if (c == 0) throw ShapeError("EncoderConfig: zero channel count");
  }
  if (token_dim == 0) throw ShapeError("EncoderConfig: token_dim must be positive");
}

ViewEncoderParams make_view_encoder(const EncoderConfig& cfg,
                                    ParameterStore& store,
                                    const std::string& prefix, Rng& rng) {
  cfg.validate();
  ViewEncoderParams p;
  std::size_t in_c = 1;
  for (std::size_t s = 0; s < cfg.stages(); ++s) {
    const std::size_t out_c = cfg.channels[s];
    const std::string base = prefix + "/stage" + std::to_string(s);
    ViewEncoderParams::Stage stage;
    stage.conv_w = store.create(base + "/conv_w", {out_c, 3, 3, in_c},
                                Init::fan_in_uniform(9 * in_c), rng);
    stage.conv_b = store.create(base + "/conv_b", {out_c}, Init::zeros(), rng);
    stage.shortcut_w = store.create(base + "/shortcut_w", {out_c, 1, 1, in_c},
                                    Init::fan_in_uniform(in_c), rng);
    p.stages.push_back(stage);
    in_c = out_c;
  }
  p.proj_w = store.create(prefix + "/proj_w", {cfg.token_dim, 1, 1, in_c},
                          Init::fan_in_uniform(in_c), rng);
  p.proj_b = store.create(prefix + "/proj_b", {cfg.token_dim}, Init::zeros(), rng);
  return p;
}

Tensor encode_view(const Tensor& image, const EncoderConfig& cfg,
                   const ViewEncoderParams& params) {
  if (image.rank() != 2 || image.dim(0) != cfg.input_height ||
      image.dim(1) != cfg.input_width) {
    throw ShapeError("encode_view: image extents do not match the config");
  }
  Tensor x = reshape(image, {cfg.input_height, cfg.input_width, 1});
  for (const auto& stage : params.stages) {
    Tensor main = conv2d(x, stage.conv_w, stage.conv_b, 2);
    Tensor shortcut = conv2d(x, stage.shortcut_w, 2);
    x = relu(add(main, shortcut));
  }
  return conv2d(x, params.proj_w, params.proj_b, 1);
}

Tensor tokenize(const Tensor& feature_map) {
  if (feature_map.rank() != 3) {
    throw ShapeError("tokenize: expects a [P1,P2,D] feature map");
  }
  const std::size_t p = feature_map.dim(0) * feature_map.dim(1);
  return reshape(feature_map, {p, feature_map.dim(2)});
}

VaEmbedderParams make_va_embedder(std::size_t token_dim, ParameterStore& store,
                                  const std::string& prefix, Rng& rng) {
  VaEmbedderParams p;
  p.w = store.create(prefix + "/w", {1, token_dim}, Init::fan_in_uniform(1), rng);
  p.b = store.create(prefix + "/b", {1, token_dim}, Init::zeros(), rng);
  return p;
}

Tensor embed_preop_va(double pre_va, const VaEmbedderParams& params,
                      double va_max) {
  if (!(pre_va >= 0.0 && pre_va <= va_max)) {
    throw std::invalid_argument("embed_preop_va: value " +
                                std::to_string(pre_va) + " outside [0, " +
                                std::to_string(va_max) + "]");
  }
  return add(scale(params.w, pre_va), params.b);
}

}  // namespace ctt
