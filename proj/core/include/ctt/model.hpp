#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ctt/encoder.hpp"
#include "ctt/transformer.hpp"

namespace ctt {

enum class Fusion {
  kSingleHor,       // one stream over the horizontal view only
  kSingleVer,       // one stream over the vertical view only
  kLateNoAttention, // per-view affine heads averaged, no attention at all
  kFullAttention,   // one joint transformer over both views' tokens
  kCrossToken,      // two streams exchanging only the cross-tokens
};

std::string fusion_name(Fusion f);
Fusion fusion_from_name(const std::string& name);

struct FusionMode {
  Fusion fusion = Fusion::kCrossToken;
  bool use_preop_va = true;
  // First layer index that applies cross-token exchange (cross_token only).
  std::size_t cross_layer_start = 2;
};

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t layers = 4;
  std::size_t heads = 2;
  FusionMode mode;
  bool positional_embeddings = true;
  bool share_cross_step_weights = false;
  double va_max = 1.5;

  void validate() const;
};

// Captured per-layer sequence values (plain copies, no gradient linkage).
struct ForwardTrace {
  std::vector<std::vector<double>> hor_boundaries;
  std::vector<std::vector<double>> ver_boundaries;
  std::vector<std::vector<double>> hor_step1;
  std::vector<std::vector<double>> ver_step1;
};

// The full regression model for one fusion configuration. Only the
// parameters the configured mode actually uses are allocated, so every
// registered tensor receives a gradient on every training step.
class CttModel {
 public:
  CttModel(ModelConfig config, std::uint64_t seed);

  // Runs the forward pass and returns the [1,1] prediction tensor. Records
  // on the active tape when one is set; otherwise a pure evaluation.
  Tensor predict(const Tensor& hor_image, const Tensor& ver_image,
                 double pre_va, ForwardTrace* trace = nullptr) const;
  double predict_value(const Tensor& hor_image, const Tensor& ver_image,
                       double pre_va) const;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  void save_checkpoint(const std::filesystem::path& path) const;
  void load_checkpoint(const std::filesystem::path& path);

 private:
  TokenSequence run_stream_plain(const TokenSequence& seq,
                                 const StreamParams& stream,
                                 std::size_t layer_count,
                                 std::vector<std::vector<double>>* boundaries) const;
  Tensor forward_cross_token(const Tensor& hor_tokens, const Tensor& ver_tokens,
                             const std::optional<Tensor>& va,
                             ForwardTrace* trace) const;
  Tensor forward_full_attention(const Tensor& hor_tokens,
                                const Tensor& ver_tokens,
                                const std::optional<Tensor>& va) const;
  Tensor forward_late(const Tensor& hor_tokens, const Tensor& ver_tokens,
                      const std::optional<Tensor>& va) const;

  ModelConfig config_;
  ParameterStore params_;

  std::optional<ViewEncoderParams> hor_encoder_, ver_encoder_;
  std::optional<VaEmbedderParams> va_embedder_;
  std::optional<StreamParams> hor_stream_, ver_stream_, joint_stream_;

  // Joint-sequence extras (full attention): second reg token and positional
  // table sized 2P+4.
  Tensor joint_reg_hor_, joint_reg_ver_, joint_positional_, joint_null_va_;

  // Readout: single affine head for the transformer modes, per-view affine
  // heads for late fusion.
  Tensor head_w_, head_b_;
  Tensor late_hor_w_, late_hor_b_, late_ver_w_, late_ver_b_;
};

}  // namespace ctt
