#include "ctt/model.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "ctt/errors.hpp"
#include "ctt/rng.hpp"

namespace ctt {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr std::uint64_t kInitStream = 0x1417;

StreamParams make_stream(const ModelConfig& cfg, ParameterStore& store,
                         const std::string& prefix, std::size_t plain_count,
                         std::size_t cross_count, Rng& rng) {
  const std::size_t dim = cfg.encoder.token_dim;
  StreamParams s;
  std::size_t layer = 0;
  for (std::size_t i = 0; i < plain_count; ++i, ++layer) {
    s.plain_layers.push_back(make_layer_params(
        dim, store, prefix + "/layer" + std::to_string(layer), rng));
  }
  for (std::size_t i = 0; i < cross_count; ++i, ++layer) {
    const std::string base = prefix + "/layer" + std::to_string(layer);
    CrossLayerParams c;
    c.shared = cfg.share_cross_step_weights;
    c.step1 = make_layer_params(dim, store, base + "/step1", rng);
    if (!c.shared) {
      c.step2 = make_layer_params(dim, store, base + "/step2", rng);
    }
    s.cross_layers.push_back(c);
  }
  s.reg_token = store.create(prefix + "/reg_token", {1, dim}, Init::normal(0.02), rng);
  s.ctn_token = store.create(prefix + "/ctn_token", {1, dim}, Init::normal(0.02), rng);
  if (!cfg.mode.use_preop_va) {
    s.null_va = store.create(prefix + "/null_va", {1, dim}, Init::normal(0.02), rng);
  }
  if (cfg.positional_embeddings) {
    s.positional = store.create(prefix + "/pos",
                                {cfg.encoder.patch_count() + 3, dim},
                                Init::normal(0.02), rng);
  }
  return s;
}

}  // namespace

std::string fusion_name(Fusion f) {
  switch (f) {
    case Fusion::kSingleHor: return "single_hor";
    case Fusion::kSingleVer: return "single_ver";
    case Fusion::kLateNoAttention: return "late_no_attention";
    case Fusion::kFullAttention: return "full_attention";
    case Fusion::kCrossToken: return "cross_token";
  }
  throw std::logic_error("fusion_name: bad enum value");
}

Fusion fusion_from_name(const std::string& name) {
  if (name == "single_hor") return Fusion::kSingleHor;
  if (name == "single_ver") return Fusion::kSingleVer;
  if (name == "late_no_attention") return Fusion::kLateNoAttention;
  if (name == "full_attention") return Fusion::kFullAttention;
  if (name == "cross_token") return Fusion::kCrossToken;
  throw ConfigError("unknown fusion mode '" + name + "'");
}

void ModelConfig::validate() const {
  encoder.validate();
  if (layers == 0) throw ShapeError("ModelConfig: layer count must be positive");
  if (heads == 0 || encoder.token_dim % heads != 0) {
    throw ShapeError("ModelConfig: head count must divide token_dim");
  }
  if (mode.fusion == Fusion::kCrossToken && mode.cross_layer_start > layers) {
    throw ShapeError("ModelConfig: cross_layer_start must lie in [0, layers]");
  }
  if (va_max <= 0.0) throw ShapeError("ModelConfig: va_max must be positive");
}

CttModel::CttModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  Rng rng(mix_seed(seed, kInitStream));
  const std::size_t dim = config_.encoder.token_dim;
  const std::size_t p = config_.encoder.patch_count();
  const Fusion fusion = config_.mode.fusion;

  const bool wants_hor = fusion != Fusion::kSingleVer;
  const bool wants_ver = fusion != Fusion::kSingleHor;
  if (wants_hor) {
    hor_encoder_ = make_view_encoder(config_.encoder, params_, "hor_encoder", rng);
  }
  if (wants_ver) {
    ver_encoder_ = make_view_encoder(config_.encoder, params_, "ver_encoder", rng);
  }
  if (config_.mode.use_preop_va) {
    va_embedder_ = make_va_embedder(dim, params_, "va_embed", rng);
  }

  switch (fusion) {
    case Fusion::kSingleHor:
      hor_stream_ = make_stream(config_, params_, "hor", config_.layers, 0, rng);
      head_w_ = params_.create("head/w", {dim, 1}, Init::fan_in_uniform(dim), rng);
      head_b_ = params_.create("head/b", {1, 1}, Init::zeros(), rng);
      break;
    case Fusion::kSingleVer:
      ver_stream_ = make_stream(config_, params_, "ver", config_.layers, 0, rng);
      head_w_ = params_.create("head/w", {dim, 1}, Init::fan_in_uniform(dim), rng);
      head_b_ = params_.create("head/b", {1, 1}, Init::zeros(), rng);
      break;
    case Fusion::kCrossToken: {
      const std::size_t plain = config_.mode.cross_layer_start;
      const std::size_t cross = config_.layers - plain;
      hor_stream_ = make_stream(config_, params_, "hor", plain, cross, rng);
      ver_stream_ = make_stream(config_, params_, "ver", plain, cross, rng);
      head_w_ = params_.create("head/w", {2 * dim, 1},
                               Init::fan_in_uniform(2 * dim), rng);
      head_b_ = params_.create("head/b", {1, 1}, Init::zeros(), rng);
      break;
    }
    case Fusion::kFullAttention: {
      joint_stream_ = StreamParams{};
      for (std::size_t l = 0; l < config_.layers; ++l) {
        joint_stream_->plain_layers.push_back(make_layer_params(
            dim, params_, "joint/layer" + std::to_string(l), rng));
      }
      joint_reg_hor_ = params_.create("joint/reg_hor", {1, dim}, Init::normal(0.02), rng);
      joint_reg_ver_ = params_.create("joint/reg_ver", {1, dim}, Init::normal(0.02), rng);
      if (!config_.mode.use_preop_va) {
        joint_null_va_ = params_.create("joint/null_va", {1, dim}, Init::normal(0.02), rng);
      }
      if (config_.positional_embeddings) {
        joint_positional_ = params_.create("joint/pos", {2 * p + 4, dim},
                                           Init::normal(0.02), rng);
      }
      head_w_ = params_.create("head/w", {2 * dim, 1},
                               Init::fan_in_uniform(2 * dim), rng);
      head_b_ = params_.create("head/b", {1, 1}, Init::zeros(), rng);
      break;
    }
    case Fusion::kLateNoAttention: {
      const std::size_t feat = p * dim + (config_.mode.use_preop_va ? dim : 0);
      late_hor_w_ = params_.create("late/hor_w", {feat, 1}, Init::fan_in_uniform(feat), rng);
      late_hor_b_ = params_.create("late/hor_b", {1, 1}, Init::zeros(), rng);
      late_ver_w_ = params_.create("late/ver_w", {feat, 1}, Init::fan_in_uniform(feat), rng);
      late_ver_b_ = params_.create("late/ver_b", {1, 1}, Init::zeros(), rng);
      break;
    }
  }
}

TokenSequence CttModel::run_stream_plain(
    const TokenSequence& seq, const StreamParams& stream,
    std::size_t layer_count,
    std::vector<std::vector<double>>* boundaries) const {
  TokenSequence z = seq;
  if (boundaries) boundaries->push_back(z.tokens.values());
  for (std::size_t l = 0; l < layer_count; ++l) {
    z = encoder_layer(z, stream.plain_layers[l], config_.heads);
    if (boundaries) boundaries->push_back(z.tokens.values());
  }
  return z;
}

Tensor CttModel::forward_cross_token(const Tensor& hor_tokens,
                                     const Tensor& ver_tokens,
                                     const std::optional<Tensor>& va,
                                     ForwardTrace* trace) const {
  TokenSequence zh = assemble_sequence(hor_tokens, va, *hor_stream_);
  TokenSequence zv = assemble_sequence(ver_tokens, va, *ver_stream_);
  if (trace) {
    trace->hor_boundaries.push_back(zh.tokens.values());
    trace->ver_boundaries.push_back(zv.tokens.values());
  }
  for (std::size_t l = 0; l < hor_stream_->plain_layers.size(); ++l) {
    zh = encoder_layer(zh, hor_stream_->plain_layers[l], config_.heads);
    zv = encoder_layer(zv, ver_stream_->plain_layers[l], config_.heads);
    if (trace) {
      trace->hor_boundaries.push_back(zh.tokens.values());
      trace->ver_boundaries.push_back(zv.tokens.values());
    }
  }
  for (std::size_t l = 0; l < hor_stream_->cross_layers.size(); ++l) {
    CrossLayerTrace step_trace;
    auto [nzh, nzv] = cross_token_layer(zh, zv, hor_stream_->cross_layers[l],
                                        ver_stream_->cross_layers[l],
                                        config_.heads,
                                        trace ? &step_trace : nullptr);
    zh = nzh;
    zv = nzv;
    if (trace) {
      trace->hor_step1.push_back(step_trace.hor_after_step1.values());
      trace->ver_step1.push_back(step_trace.ver_after_step1.values());
      trace->hor_boundaries.push_back(zh.tokens.values());
      trace->ver_boundaries.push_back(zv.tokens.values());
    }
  }
  Tensor reg_h = slice(zh.tokens, 0, 0, 1);
  Tensor reg_v = slice(zv.tokens, 0, 0, 1);
  return add_bias(matmul(concat({reg_h, reg_v}, 1), head_w_), head_b_);
}

Tensor CttModel::forward_full_attention(const Tensor& hor_tokens,
                                        const Tensor& ver_tokens,
                                        const std::optional<Tensor>& va) const {
  const Tensor& va_tok = va ? *va : joint_null_va_;
  // Joint layout: [reg_hor, va, hor patches..., reg_ver, va, ver patches...]
  Tensor joint = concat({joint_reg_hor_, va_tok, hor_tokens,
                         joint_reg_ver_, va_tok, ver_tokens}, 0);
  if (joint_positional_.defined()) {
    joint = add(joint, joint_positional_);
  }
  for (const LayerParams& layer : joint_stream_->plain_layers) {
    joint = encoder_layer_tokens(joint, layer, config_.heads);
  }
  const std::size_t p = config_.encoder.patch_count();
  Tensor reg_h = slice(joint, 0, 0, 1);
  Tensor reg_v = slice(joint, 0, p + 2, p + 3);
  return add_bias(matmul(concat({reg_h, reg_v}, 1), head_w_), head_b_);
}

Tensor CttModel::forward_late(const Tensor& hor_tokens,
                              const Tensor& ver_tokens,
                              const std::optional<Tensor>& va) const {
  const std::size_t p = config_.encoder.patch_count();
  const std::size_t dim = config_.encoder.token_dim;
  Tensor flat_h = reshape(hor_tokens, {1, p * dim});
  Tensor flat_v = reshape(ver_tokens, {1, p * dim});
  if (va) {
    flat_h = concat({flat_h, *va}, 1);
    flat_v = concat({flat_v, *va}, 1);
  }
  Tensor s_h = add_bias(matmul(flat_h, late_hor_w_), late_hor_b_);
  Tensor s_v = add_bias(matmul(flat_v, late_ver_w_), late_ver_b_);
  return scale(add(s_h, s_v), 0.5);
}

Tensor CttModel::predict(const Tensor& hor_image, const Tensor& ver_image,
                         double pre_va, ForwardTrace* trace) const {
  std::optional<Tensor> va;
  if (config_.mode.use_preop_va) {
    va = embed_preop_va(pre_va, *va_embedder_, config_.va_max);
  }

  switch (config_.mode.fusion) {
    case Fusion::kSingleHor: {
      Tensor tokens = tokenize(encode_view(hor_image, config_.encoder, *hor_encoder_));
      TokenSequence z = assemble_sequence(tokens, va, *hor_stream_);
      z = run_stream_plain(z, *hor_stream_, config_.layers,
                           trace ? &trace->hor_boundaries : nullptr);
      Tensor reg = slice(z.tokens, 0, 0, 1);
      return add_bias(matmul(reg, head_w_), head_b_);
    }
    case Fusion::kSingleVer: {
      Tensor tokens = tokenize(encode_view(ver_image, config_.encoder, *ver_encoder_));
      TokenSequence z = assemble_sequence(tokens, va, *ver_stream_);
      z = run_stream_plain(z, *ver_stream_, config_.layers,
                           trace ? &trace->ver_boundaries : nullptr);
      Tensor reg = slice(z.tokens, 0, 0, 1);
      return add_bias(matmul(reg, head_w_), head_b_);
    }
    case Fusion::kCrossToken: {
      Tensor th = tokenize(encode_view(hor_image, config_.encoder, *hor_encoder_));
      Tensor tv = tokenize(encode_view(ver_image, config_.encoder, *ver_encoder_));
      return forward_cross_token(th, tv, va, trace);
    }
    case Fusion::kFullAttention: {
      Tensor th = tokenize(encode_view(hor_image, config_.encoder, *hor_encoder_));
      Tensor tv = tokenize(encode_view(ver_image, config_.encoder, *ver_encoder_));
      return forward_full_attention(th, tv, va);
    }
    case Fusion::kLateNoAttention: {
      Tensor th = tokenize(encode_view(hor_image, config_.encoder, *hor_encoder_));
      Tensor tv = tokenize(encode_view(ver_image, config_.encoder, *ver_encoder_));
      return forward_late(th, tv, va);
    }
  }
  throw std::logic_error("CttModel::predict: bad fusion enum");
}

double CttModel::predict_value(const Tensor& hor_image, const Tensor& ver_image,
                               double pre_va) const {
  return predict(hor_image, ver_image, pre_va).at(0);
}

void CttModel::save_checkpoint(const std::filesystem::path& path) const {
  ordered_json doc;
  doc["format"] = "ctt-checkpoint";
  doc["version"] = 1;
  ordered_json params = ordered_json::object();
  for (const auto& [name, tensor] : params_.entries()) {
    ordered_json entry;
    entry["shape"] = tensor.shape();
    entry["data"] = tensor.values();
    params[name] = std::move(entry);
  }
  doc["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) {
    throw DataError("save_checkpoint: cannot open " + path.string());
  }
  out << doc.dump(2) << "\n";
}

void CttModel::load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("load_checkpoint: cannot open " + path.string());
  }
  ordered_json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: " + path.string() + ": " + e.what());
  }
  if (!doc.contains("format") || doc["format"] != "ctt-checkpoint" ||
      !doc.contains("version") || doc["version"] != 1) {
    throw DataError("load_checkpoint: unrecognized checkpoint format");
  }
  const auto& params = doc.at("params");
  // Every registered parameter must be present with the exact shape; extras
  // are rejected so a checkpoint can never silently half-load.
  for (const auto& [name, tensor] : params_.entries()) {
    if (!params.contains(name)) {
      throw DataError("load_checkpoint: missing parameter " + name);
    }
    const auto& entry = params.at(name);
    const auto shape = entry.at("shape").get<Shape>();
    if (shape != tensor.shape()) {
      throw DataError("load_checkpoint: shape mismatch for " + name);
    }
    auto data = entry.at("data").get<std::vector<double>>();
    if (data.size() != tensor.size()) {
      throw DataError("load_checkpoint: data length mismatch for " + name);
    }
    params_.at(name).mutable_values() = std::move(data);
  }
  if (params.size() != params_.count()) {
    throw DataError("load_checkpoint: checkpoint has unknown extra parameters");
  }
}

}  // namespace ctt
