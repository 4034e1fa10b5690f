#include "ctt/attention_flow.hpp"

namespace ctt {

std::vector<LayerFlow> count_attention_flow(const ModelConfig& config) {
  config.validate();
  const std::int64_t p = static_cast<std::int64_t>(config.encoder.patch_count());
  const std::int64_t own = p + 2;    // reg + va + patches
  const std::int64_t seq = p + 3;    // own tokens + one cross-token
  std::vector<LayerFlow> flows(config.layers);

  switch (config.mode.fusion) {
    case Fusion::kSingleHor:
    case Fusion::kSingleVer:
      // One stream attending over its own P+3 tokens.
      for (auto& f : flows) {
        f.intra_view_edges = seq * seq;
        f.cross_view_edges = 0;
      }
      break;
    case Fusion::kLateNoAttention:
      for (auto& f : flows) f.attention_steps = 0;
      break;
    case Fusion::kFullAttention: {
      // One joint matrix over 2(P+2) tokens; cells split evenly between
      // same-origin and different-origin pairs.
      const std::int64_t cross = 2 * own * own;
      for (auto& f : flows) {
        f.intra_view_edges = cross;
        f.cross_view_edges = cross;
      }
      break;
    }
    case Fusion::kCrossToken: {
      const std::size_t start = config.mode.cross_layer_start;
      for (std::size_t l = 0; l < config.layers; ++l) {
        if (l < start) {
          // Two independent per-view matrices.
          flows[l].intra_view_edges = 2 * seq * seq;
          flows[l].cross_view_edges = 0;
        } else {
          // Per stream and step, the visiting cross-token touches
          // 2(P+2)+1 cells: its row, its column, and its own diagonal cell.
          const std::int64_t cross_per_step = 2 * (2 * own + 1);
          const std::int64_t intra_per_step = 2 * own * own;
          flows[l].intra_view_edges = 2 * intra_per_step;
          flows[l].cross_view_edges = 2 * cross_per_step;
          flows[l].attention_steps = 2;
        }
      }
      break;
    }
  }
  return flows;
}

}  // namespace ctt
