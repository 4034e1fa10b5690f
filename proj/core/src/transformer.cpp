#include "ctt/transformer.hpp"

#include <cmath>

namespace ctt {

LayerParams make_layer_params(std::size_t dim, ParameterStore& store,
                              const std::string& prefix, Rng& rng) {
  const std::size_t hidden = 4 * dim;
  LayerParams p;
  p.wq = store.create(prefix + "/msa/wq", {dim, dim}, Init::fan_in_uniform(dim), rng);
  p.bq = store.create(prefix + "/msa/bq", {1, dim}, Init::zeros(), rng);
  p.wk = store.create(prefix + "/msa/wk", {dim, dim}, Init::fan_in_uniform(dim), rng);
  p.bk = store.create(prefix + "/msa/bk", {1, dim}, Init::zeros(), rng);
  p.wv = store.create(prefix + "/msa/wv", {dim, dim}, Init::fan_in_uniform(dim), rng);
  p.bv = store.create(prefix + "/msa/bv", {1, dim}, Init::zeros(), rng);
  p.wo = store.create(prefix + "/msa/wo", {dim, dim}, Init::fan_in_uniform(dim), rng);
  p.bo = store.create(prefix + "/msa/bo", {1, dim}, Init::zeros(), rng);
  p.ln1_g = store.create(prefix + "/ln1/gamma", {dim}, Init::ones(), rng);
  p.ln1_b = store.create(prefix + "/ln1/beta", {dim}, Init::zeros(), rng);
  p.ln2_g = store.create(prefix + "/ln2/gamma", {dim}, Init::ones(), rng);
  p.ln2_b = store.create(prefix + "/ln2/beta", {dim}, Init::zeros(), rng);
  p.ffn_w1 = store.create(prefix + "/ffn/w1", {dim, hidden}, Init::fan_in_uniform(dim), rng);
  p.ffn_b1 = store.create(prefix + "/ffn/b1", {1, hidden}, Init::zeros(), rng);
  p.ffn_w2 = store.create(prefix + "/ffn/w2", {hidden, dim}, Init::fan_in_uniform(hidden), rng);
  p.ffn_b2 = store.create(prefix + "/ffn/b2", {1, dim}, Init::zeros(), rng);
  return p;
}

Tensor multi_head_self_attention(const Tensor& x, const LayerParams& p,
                                 std::size_t heads) {
  const std::size_t dim = x.dim(1);
  if (heads == 0 || dim % heads != 0) {
    throw ShapeError("multi_head_self_attention: head count must divide D");
  }
  const std::size_t dk = dim / heads;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dk));

  Tensor q = add_bias(matmul(x, p.wq), p.bq);
  Tensor k = add_bias(matmul(x, p.wk), p.bk);
  Tensor v = add_bias(matmul(x, p.wv), p.bv);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor qh = slice(q, 1, h * dk, (h + 1) * dk);
    Tensor kh = slice(k, 1, h * dk, (h + 1) * dk);
    Tensor vh = slice(v, 1, h * dk, (h + 1) * dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), att_scale);
    Tensor weights = softmax(scores, 1);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? head_outputs[0] : concat(head_outputs, 1);
  return add_bias(matmul(merged, p.wo), p.bo);
}

Tensor encoder_layer_tokens(const Tensor& tokens, const LayerParams& p,
                            std::size_t heads) {
  constexpr double kLnEps = 1e-6;
  Tensor y = add(multi_head_self_attention(
                     layer_norm(tokens, p.ln1_g, p.ln1_b, kLnEps), p, heads),
                 tokens);
  Tensor hidden = gelu(add_bias(
      matmul(layer_norm(y, p.ln2_g, p.ln2_b, kLnEps), p.ffn_w1), p.ffn_b1));
  Tensor ffn = add_bias(matmul(hidden, p.ffn_w2), p.ffn_b2);
  return add(ffn, y);
}

TokenSequence encoder_layer(const TokenSequence& z, const LayerParams& p,
                            std::size_t heads) {
  return TokenSequence{encoder_layer_tokens(z.tokens, p, heads), z.patch_count};
}

TokenSequence assemble_sequence(const Tensor& patches,
                                const std::optional<Tensor>& va_token,
                                const StreamParams& stream) {
  if (patches.rank() != 2) {
    throw ShapeError("assemble_sequence: patches must be [P,D]");
  }
  const std::size_t dim = patches.dim(1);
  if (stream.reg_token.dim(1) != dim) {
    throw ShapeError("assemble_sequence: token width mismatch");
  }
  const Tensor& va = va_token ? *va_token : stream.null_va;
  if (va.dim(1) != dim) {
    throw ShapeError("assemble_sequence: va token width mismatch");
  }
  Tensor tokens =
      concat({stream.reg_token, va, patches, stream.ctn_token}, 0);
  if (stream.positional.defined()) {
    if (stream.positional.shape() != tokens.shape()) {
      throw ShapeError("assemble_sequence: positional embedding shape mismatch");
    }
    tokens = add(tokens, stream.positional);
  }
  return TokenSequence{tokens, patches.dim(0)};
}

std::pair<TokenSequence, TokenSequence> cross_token_layer(
    const TokenSequence& hor, const TokenSequence& ver,
    const CrossLayerParams& hor_params, const CrossLayerParams& ver_params,
    std::size_t heads, CrossLayerTrace* trace) {
  if (hor.length() != ver.length() || hor.patch_count != ver.patch_count) {
    throw ShapeError("cross_token_layer: sequence lengths differ");
  }
  const std::size_t len = hor.length();
  const std::size_t split = len - 1;

  Tensor own_hor = slice(hor.tokens, 0, 0, split);
  Tensor ctn_hor = slice(hor.tokens, 0, split, len);
  Tensor own_ver = slice(ver.tokens, 0, 0, split);
  Tensor ctn_ver = slice(ver.tokens, 0, split, len);

  // Step 1: each stream sees the other view's cross-token.
  Tensor step1_hor = encoder_layer_tokens(concat({own_hor, ctn_ver}, 0),
                                          hor_params.step1, heads);
  Tensor step1_ver = encoder_layer_tokens(concat({own_ver, ctn_hor}, 0),
                                          ver_params.step1, heads);
  if (trace) {
    trace->hor_after_step1 = step1_hor;
    trace->ver_after_step1 = step1_ver;
  }

  Tensor hat_own_hor = slice(step1_hor, 0, 0, split);
  Tensor hat_ctn_ver = slice(step1_hor, 0, split, len);
  Tensor hat_own_ver = slice(step1_ver, 0, 0, split);
  Tensor hat_ctn_hor = slice(step1_ver, 0, split, len);

  // Step 2: cross-tokens return home and each stream runs once more.
  Tensor out_hor = encoder_layer_tokens(concat({hat_own_hor, hat_ctn_hor}, 0),
                                        hor_params.second(), heads);
  Tensor out_ver = encoder_layer_tokens(concat({hat_own_ver, hat_ctn_ver}, 0),
                                        ver_params.second(), heads);

  return {TokenSequence{out_hor, hor.patch_count},
          TokenSequence{out_ver, ver.patch_count}};
}

}  // namespace ctt
