#pragma once

#include <string>
#include <vector>

#include "ctt/params.hpp"
#include "ctt/tensor.hpp"

namespace ctt {

// Geometry of the per-view convolutional feature extractor. Each stage
// halves the resolution, so stage count = log2(downsample_factor) and the
// output grid is (H/factor) x (W/factor) with token_dim channels.
struct EncoderConfig {
  std::size_t input_height = 64;
  std::size_t input_width = 64;
  std::size_t downsample_factor = 32;
  std::vector<std::size_t> channels = {8, 16, 32, 32, 32};  // one per stage
  std::size_t token_dim = 32;

  std::size_t stages() const;
  std::size_t patch_rows() const { return input_height / downsample_factor; }
  std::size_t patch_cols() const { return input_width / downsample_factor; }
  std::size_t patch_count() const { return patch_rows() * patch_cols(); }
  void validate() const;
};

// Stage = stride-2 3x3 conv plus a 1x1 stride-2 projection shortcut, ReLU on
// the sum. A final 1x1 conv maps the last stage's channels to token_dim.
struct ViewEncoderParams {
  struct Stage {
    Tensor conv_w;      // [Cout,3,3,Cin]
    Tensor conv_b;      // [Cout]
    Tensor shortcut_w;  // [Cout,1,1,Cin], no bias
  };
  std::vector<Stage> stages;
  Tensor proj_w;  // [D,1,1,Clast]
  Tensor proj_b;  // [D]
};

ViewEncoderParams make_view_encoder(const EncoderConfig& cfg,
                                    ParameterStore& store,
                                    const std::string& prefix, Rng& rng);

// [H,W] image in [0,1] -> [P1,P2,D] feature map.
Tensor encode_view(const Tensor& image, const EncoderConfig& cfg,
                   const ViewEncoderParams& params);

// Row-major flattening of the patch grid: token (i,j) lands at row i*P2 + j.
Tensor tokenize(const Tensor& feature_map);

struct VaEmbedderParams {
  Tensor w;  // [1,D]
  Tensor b;  // [1,D]
};

VaEmbedderParams make_va_embedder(std::size_t token_dim, ParameterStore& store,
                                  const std::string& prefix, Rng& rng);

// Affine map of the preoperative VA scalar to a [1,D] token.
Tensor embed_preop_va(double pre_va, const VaEmbedderParams& params,
                      double va_max);

}  // namespace ctt
