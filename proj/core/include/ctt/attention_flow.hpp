#pragma once

#include <cstdint>
#include <vector>

#include "ctt/model.hpp"

namespace ctt {

// Attention-matrix cell counts for one layer, classified by token origin.
// A cell (query, key) is cross-view when the two tokens originate from
// different views, or when either one is foreign to the stream hosting the
// matrix (a visiting cross-token's own row/column carries cross-view
// information in both directions). Cross-token layers run two steps with two
// per-view matrices each; their counts cover all four applications and
// `attention_steps` is 2, so the per-step figure is count / 2.
struct LayerFlow {
  std::int64_t intra_view_edges = 0;
  std::int64_t cross_view_edges = 0;
  int attention_steps = 1;  // 0 for attention-free layers
};

// Closed-form counts per layer for the configured fusion mode.
std::vector<LayerFlow> count_attention_flow(const ModelConfig& config);

}  // namespace ctt
