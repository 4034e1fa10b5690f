#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctt/params.hpp"
#include "ctt/tensor.hpp"

namespace ctt {

// Per-view token sequence, rows fixed as [reg, va, patch 0..P-1, ctn].
// Length is always P+3; the cross-token sits at the last row and is the only
// row ever exchanged between the two view streams.
struct TokenSequence {
  Tensor tokens;            // [P+3, D]
  std::size_t patch_count;  // P

  std::size_t length() const { return patch_count + 3; }
  static constexpr std::size_t kRegIndex = 0;
  static constexpr std::size_t kVaIndex = 1;
  std::size_t ctn_index() const { return patch_count + 2; }
};

// One pre-norm transformer encoder layer: attention projections, the two
// layer-norm affine pairs, and the feed-forward pair (hidden = 4*D, GELU).
struct LayerParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

// A fusion layer applies the encoder layer twice (exchange step, restore
// step). The two steps have their own parameters unless shared.
struct CrossLayerParams {
  LayerParams step1;
  LayerParams step2;
  bool shared = false;
  const LayerParams& second() const { return shared ? step1 : step2; }
};

struct StreamParams {
  std::vector<LayerParams> plain_layers;
  std::vector<CrossLayerParams> cross_layers;
  Tensor reg_token;             // [1,D], learned
  Tensor ctn_token;             // [1,D], learned
  Tensor null_va;               // [1,D]; fills the va slot when PVA is off
  Tensor positional;            // [P+3,D] when enabled
};

LayerParams make_layer_params(std::size_t dim, ParameterStore& store,
                              const std::string& prefix, Rng& rng);

Tensor multi_head_self_attention(const Tensor& x, const LayerParams& p,
                                 std::size_t heads);

// y = MSA(LN(z)) + z ; z' = FFN(LN(y)) + y
Tensor encoder_layer_tokens(const Tensor& tokens, const LayerParams& p,
                            std::size_t heads);
TokenSequence encoder_layer(const TokenSequence& z, const LayerParams& p,
                            std::size_t heads);

// Builds [reg, va, patches..., ctn] (+ positional embeddings when present).
// va_token empty means the stream's learned null token fills the slot.
TokenSequence assemble_sequence(const Tensor& patches,
                                const std::optional<Tensor>& va_token,
                                const StreamParams& stream);

struct CrossLayerTrace {
  Tensor hor_after_step1;
  Tensor ver_after_step1;
};

// Two-step fusion layer. Step 1 runs each stream on its own non-ctn tokens
// with the other view's cross-token appended; step 2 swaps the cross-tokens
// back to their home streams and runs each stream once more. Non-ctn tokens
// never leave their stream.
std::pair<TokenSequence, TokenSequence> cross_token_layer(
    const TokenSequence& hor, const TokenSequence& ver,
    const CrossLayerParams& hor_params, const CrossLayerParams& ver_params,
    std::size_t heads, CrossLayerTrace* trace = nullptr);

}  // namespace ctt
