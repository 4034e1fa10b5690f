#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "ctt/attention_flow.hpp"

using namespace ctt;

namespace {

// Brute-force oracle: build the token origin list of every attention matrix
// a layer runs, then count cells by the classification rule. Origins: 'h',
// 'v'; host is the stream a matrix runs in ('j' = joint, hosting both).
struct MatrixSpec {
  std::vector<char> origins;
  char host;
};

std::pair<std::int64_t, std::int64_t> count_cells(const MatrixSpec& m) {
  std::int64_t intra = 0, cross = 0;
  for (char q : m.origins) {
    for (char k : m.origins) {
      const bool foreign_q = m.host != 'j' && q != m.host;
      const bool foreign_k = m.host != 'j' && k != m.host;
      if (q != k || foreign_q || foreign_k) {
        ++cross;
      } else {
        ++intra;
      }
    }
  }
  return {intra, cross};
}

// Matrices run by layer `l` of the given mode, for patch count p.
std::vector<MatrixSpec> layer_matrices(Fusion fusion, std::size_t p,
                                       std::size_t cross_start, std::size_t l) {
  const auto own_seq = [&](char view) {
    // [reg, va, patches..., ctn], all of one view
    return std::vector<char>(p + 3, view);
  };
  const auto visiting = [&](char view, char foreign) {
    std::vector<char> seq(p + 2, view);
    seq.push_back(foreign);  // the other view's cross-token
    return seq;
  };
  switch (fusion) {
    case Fusion::kSingleHor:
      return {{own_seq('h'), 'h'}};
    case Fusion::kSingleVer:
      return {{own_seq('v'), 'v'}};
    case Fusion::kLateNoAttention:
      return {};
    case Fusion::kFullAttention: {
      std::vector<char> joint(p + 2, 'h');
      joint.insert(joint.end(), p + 2, 'v');
      return {{joint, 'j'}};
    }
    case Fusion::kCrossToken:
      if (l < cross_start) {
        return {{own_seq('h'), 'h'}, {own_seq('v'), 'v'}};
      }
      // two steps, two streams each; after the step-1 swap each stream
      // hosts the other view's cross-token both times
      return {{visiting('h', 'v'), 'h'},
              {visiting('v', 'h'), 'v'},
              {visiting('h', 'v'), 'h'},
              {visiting('v', 'h'), 'v'}};
  }
  return {};
}

ModelConfig config_for(Fusion fusion, std::size_t p, std::size_t layers,
                       std::size_t cross_start) {
  ModelConfig cfg;
  // grid p x 1 via a rectangular image; factor 2 keeps extents small
  cfg.encoder.input_height = 2 * p;
  cfg.encoder.input_width = 2;
  cfg.encoder.downsample_factor = 2;
  cfg.encoder.channels = {4};
  cfg.encoder.token_dim = 8;
  cfg.layers = layers;
  cfg.heads = 2;
  cfg.mode.fusion = fusion;
  cfg.mode.cross_layer_start = cross_start;
  return cfg;
}

}  // namespace

TEST_CASE("closed forms match enumeration for P in 1..16") {
  const std::size_t layers = 4, cross_start = 2;
  for (std::size_t p = 1; p <= 16; ++p) {
    for (Fusion fusion : {Fusion::kSingleHor, Fusion::kSingleVer,
                          Fusion::kLateNoAttention, Fusion::kFullAttention,
                          Fusion::kCrossToken}) {
      const auto flows = count_attention_flow(config_for(fusion, p, layers, cross_start));
      REQUIRE(flows.size() == layers);
      for (std::size_t l = 0; l < layers; ++l) {
        std::int64_t intra = 0, cross = 0;
        for (const MatrixSpec& m : layer_matrices(fusion, p, cross_start, l)) {
          const auto [i, c] = count_cells(m);
          intra += i;
          cross += c;
        }
        CHECK(flows[l].intra_view_edges == intra);
        CHECK(flows[l].cross_view_edges == cross);
      }
    }
  }
}

TEST_CASE("documented counts at P = 4") {
  const auto full = count_attention_flow(
      config_for(Fusion::kFullAttention, 4, 2, 0));
  CHECK(full[0].cross_view_edges == 72);  // 2 (P+2)^2

  const auto cta = count_attention_flow(
      config_for(Fusion::kCrossToken, 4, 2, 1));
  CHECK(cta[0].cross_view_edges == 0);
  CHECK(cta[1].attention_steps == 2);
  CHECK(cta[1].cross_view_edges == 52);               // both steps
  CHECK(cta[1].cross_view_edges / 2 == 26);           // per step: 2 (2(P+2)+1)
}

TEST_CASE("late fusion has zero attention edges everywhere") {
  const auto flows = count_attention_flow(
      config_for(Fusion::kLateNoAttention, 4, 3, 0));
  for (const auto& f : flows) {
    CHECK(f.intra_view_edges == 0);
    CHECK(f.cross_view_edges == 0);
    CHECK(f.attention_steps == 0);
  }
}

TEST_CASE("per-step cross-token flow is strictly below full attention for all P") {
  for (std::size_t p = 1; p <= 16; ++p) {
    const auto full = count_attention_flow(
        config_for(Fusion::kFullAttention, p, 1, 0));
    const auto cta = count_attention_flow(
        config_for(Fusion::kCrossToken, p, 1, 0));
    const std::int64_t per_step =
        cta[0].cross_view_edges / cta[0].attention_steps;
    CHECK(per_step < full[0].cross_view_edges);
  }
}

TEST_CASE("network totals: sectional fusion stays below full attention") {
  // With exchange confined to the late half of the layers, the whole-network
  // cross-view count is below full attention for every P as well.
  for (std::size_t p = 1; p <= 16; ++p) {
    const std::size_t layers = 4, start = 2;
    const auto full = count_attention_flow(
        config_for(Fusion::kFullAttention, p, layers, 0));
    const auto cta = count_attention_flow(
        config_for(Fusion::kCrossToken, p, layers, start));
    std::int64_t full_total = 0, cta_total = 0;
    for (const auto& f : full) full_total += f.cross_view_edges;
    for (const auto& f : cta) cta_total += f.cross_view_edges;
    CHECK(cta_total < full_total);
  }
}
