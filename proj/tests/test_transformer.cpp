#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctt/model.hpp"
#include "ctt/transformer.hpp"
#include "test_support.hpp"

using namespace ctt;

namespace {

StreamParams make_test_stream(std::size_t p, std::size_t dim,
                              std::size_t plain, std::size_t cross,
                              ParameterStore& store, const std::string& prefix,
                              Rng& rng, bool positional = true) {
  StreamParams s;
  for (std::size_t i = 0; i < plain; ++i) {
    s.plain_layers.push_back(
        make_layer_params(dim, store, prefix + "/layer" + std::to_string(i), rng));
  }
  for (std::size_t i = 0; i < cross; ++i) {
    CrossLayerParams c;
    c.step1 = make_layer_params(dim, store, prefix + "/cross" + std::to_string(i) +
                                               "/step1", rng);
    c.step2 = make_layer_params(dim, store, prefix + "/cross" + std::to_string(i) +
                                               "/step2", rng);
    s.cross_layers.push_back(c);
  }
  s.reg_token = store.create(prefix + "/reg", {1, dim}, Init::normal(0.5), rng);
  s.ctn_token = store.create(prefix + "/ctn", {1, dim}, Init::normal(0.5), rng);
  s.null_va = store.create(prefix + "/null_va", {1, dim}, Init::normal(0.5), rng);
  if (positional) {
    s.positional = store.create(prefix + "/pos", {p + 3, dim}, Init::normal(0.5), rng);
  }
  return s;
}

void zero_output_projections(ParameterStore& store, const std::string& layer_prefix) {
  for (const char* name : {"/msa/wo", "/msa/bo", "/ffn/w2", "/ffn/b2"}) {
    for (double& v : store.at(layer_prefix + name).mutable_values()) v = 0.0;
  }
}

}  // namespace

TEST_CASE("assemble_sequence ordering and length") {
  ParameterStore store;
  Rng rng(3);
  const std::size_t p = 4, d = 6;
  StreamParams stream = make_test_stream(p, d, 0, 0, store, "s", rng,
                                         /*positional=*/false);
  Tensor patches = ctt_test::random_tensor({p, d}, rng, false);
  Tensor va = ctt_test::random_tensor({1, d}, rng, false);

  TokenSequence seq = assemble_sequence(patches, va, stream);
  CHECK(seq.length() == 7);
  CHECK(seq.tokens.shape() == Shape{7, d});
  CHECK(seq.ctn_index() == 6);
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(seq.tokens(0, j) == stream.reg_token.at(j));
    CHECK(seq.tokens(1, j) == va.at(j));
    CHECK(seq.tokens(2, j) == patches(0, j));
    CHECK(seq.tokens(5, j) == patches(3, j));
    CHECK(seq.tokens(6, j) == stream.ctn_token.at(j));
  }
}

TEST_CASE("assemble_sequence at reference width") {
  ParameterStore store;
  Rng rng(5);
  StreamParams stream = make_test_stream(64, 128, 0, 0, store, "s", rng);
  Tensor patches = ctt_test::random_tensor({64, 128}, rng, false);
  TokenSequence seq = assemble_sequence(patches, std::nullopt, stream);
  CHECK(seq.length() == 67);
}

TEST_CASE("disabling the va token leaves other slots untouched") {
  ParameterStore store;
  Rng rng(7);
  const std::size_t p = 3, d = 4;
  StreamParams stream = make_test_stream(p, d, 0, 0, store, "s", rng,
                                         /*positional=*/false);
  Tensor patches = ctt_test::random_tensor({p, d}, rng, false);
  Tensor va = ctt_test::random_tensor({1, d}, rng, false);
  TokenSequence with = assemble_sequence(patches, va, stream);
  TokenSequence without = assemble_sequence(patches, std::nullopt, stream);
  CHECK(with.length() == without.length());
  for (std::size_t i = 0; i < with.length(); ++i) {
    if (i == TokenSequence::kVaIndex) continue;
    for (std::size_t j = 0; j < d; ++j) {
      CHECK(with.tokens(i, j) == without.tokens(i, j));
    }
  }
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(without.tokens(1, j) == stream.null_va.at(j));
  }
}

TEST_CASE("encoder layer with zeroed output projections is the identity") {
  ParameterStore store;
  Rng rng(11);
  const std::size_t d = 8;
  LayerParams layer = make_layer_params(d, store, "l", rng);
  zero_output_projections(store, "l");
  Tensor x = ctt_test::random_tensor({5, d}, rng, false);
  Tensor y = encoder_layer_tokens(x, layer, 2);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.at(i) == x.at(i));
}

TEST_CASE("encoder layer preserves length for any P") {
  ParameterStore store;
  Rng rng(13);
  const std::size_t d = 8;
  LayerParams layer = make_layer_params(d, store, "l", rng);
  for (std::size_t s : {1u, 4u, 7u, 19u}) {
    Tensor x = ctt_test::random_tensor({s, d}, rng, false);
    CHECK(encoder_layer_tokens(x, layer, 2).shape() == Shape{s, d});
  }
}

TEST_CASE("encoder layer gradcheck") {
  ParameterStore store;
  Rng rng(17);
  const std::size_t d = 6;
  LayerParams layer = make_layer_params(d, store, "l", rng);
  Tensor x = ctt_test::random_tensor({4, d}, rng, true);
  Tensor probe = ctt_test::random_tensor({4, d}, rng, false);
  std::vector<Tensor> inputs{x};
  for (const auto& [path, t] : store.entries()) inputs.push_back(t);
  const double err = ctt_test::gradcheck(
      [&] { return mean(mul(encoder_layer_tokens(x, layer, 2), probe)); },
      inputs);
  CHECK(err < 1e-4);
}

TEST_CASE("multi-head attention rejects non-dividing head count") {
  ParameterStore store;
  Rng rng(19);
  LayerParams layer = make_layer_params(6, store, "l", rng);
  Tensor x = ctt_test::random_tensor({3, 6}, rng, false);
  CHECK_THROWS_AS(multi_head_self_attention(x, layer, 4), ShapeError);
  CHECK_NOTHROW(multi_head_self_attention(x, layer, 3));
}

TEST_CASE("cross layer: step-1 horizontal output ignores vertical non-ctn tokens") {
  Rng rng(23);
  const std::size_t p = 4, d = 8;
  for (int trial = 0; trial < 100; ++trial) {
    ParameterStore store;
    Rng init(rng.next_u64());
    StreamParams hs = make_test_stream(p, d, 0, 1, store, "h", init);
    StreamParams vs = make_test_stream(p, d, 0, 1, store, "v", init);

    Tensor ht = ctt_test::random_tensor({p + 3, d}, init, false);
    Tensor vt = ctt_test::random_tensor({p + 3, d}, init, false);
    TokenSequence hor{ht, p}, ver{vt, p};

    CrossLayerTrace before;
    cross_token_layer(hor, ver, hs.cross_layers[0], vs.cross_layers[0], 2, &before);

    // Perturb every vertical row except the cross-token.
    Tensor vt2(vt.shape(), vt.values());
    for (std::size_t i = 0; i < p + 2; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        vt2.mutable_values()[i * d + j] += init.uniform(-1.0, 1.0);
      }
    }
    TokenSequence ver2{vt2, p};
    CrossLayerTrace after;
    cross_token_layer(hor, ver2, hs.cross_layers[0], vs.cross_layers[0], 2, &after);

    REQUIRE(before.hor_after_step1.size() == after.hor_after_step1.size());
    for (std::size_t i = 0; i < before.hor_after_step1.size(); ++i) {
      CHECK(before.hor_after_step1.at(i) == after.hor_after_step1.at(i));
    }
  }
}

TEST_CASE("cross layer with zeroed projections returns both sequences unchanged") {
  ParameterStore store;
  Rng rng(29);
  const std::size_t p = 3, d = 8;
  StreamParams hs = make_test_stream(p, d, 0, 1, store, "h", rng);
  StreamParams vs = make_test_stream(p, d, 0, 1, store, "v", rng);
  for (const char* stream : {"h", "v"}) {
    for (const char* step : {"/cross0/step1", "/cross0/step2"}) {
      zero_output_projections(store, std::string(stream) + step);
    }
  }
  Tensor ht = ctt_test::random_tensor({p + 3, d}, rng, false);
  Tensor vt = ctt_test::random_tensor({p + 3, d}, rng, false);
  auto [oh, ov] = cross_token_layer({ht, p}, {vt, p}, hs.cross_layers[0],
                                    vs.cross_layers[0], 2);
  for (std::size_t i = 0; i < ht.size(); ++i) {
    CHECK(oh.tokens.at(i) == ht.at(i));
    CHECK(ov.tokens.at(i) == vt.at(i));
  }
}

TEST_CASE("cross layer keeps ctn at the last index and swaps it home") {
  ParameterStore store;
  Rng rng(31);
  const std::size_t p = 2, d = 4;
  StreamParams hs = make_test_stream(p, d, 0, 1, store, "h", rng);
  StreamParams vs = make_test_stream(p, d, 0, 1, store, "v", rng);
  // Zero step-2 projections so step-2 passes its input through; the hor
  // output's last row must then equal the hat ctn_hor computed in the ver
  // stream at step 1.
  zero_output_projections(store, "h/cross0/step2");
  zero_output_projections(store, "v/cross0/step2");

  Tensor ht = ctt_test::random_tensor({p + 3, d}, rng, false);
  Tensor vt = ctt_test::random_tensor({p + 3, d}, rng, false);
  CrossLayerTrace trace;
  auto [oh, ov] = cross_token_layer({ht, p}, {vt, p}, hs.cross_layers[0],
                                    vs.cross_layers[0], 2, &trace);
  CHECK(oh.length() == p + 3);
  CHECK(ov.length() == p + 3);
  const std::size_t last = p + 2;
  for (std::size_t j = 0; j < d; ++j) {
    CHECK(oh.tokens(last, j) == trace.ver_after_step1(last, j));
    CHECK(ov.tokens(last, j) == trace.hor_after_step1(last, j));
  }
}

TEST_CASE("cross layer gradcheck") {
  ParameterStore store;
  Rng rng(37);
  const std::size_t p = 2, d = 4;
  StreamParams hs = make_test_stream(p, d, 0, 1, store, "h", rng);
  StreamParams vs = make_test_stream(p, d, 0, 1, store, "v", rng);
  Tensor ht = ctt_test::random_tensor({p + 3, d}, rng, true);
  Tensor vt = ctt_test::random_tensor({p + 3, d}, rng, true);
  Tensor probe = ctt_test::random_tensor({p + 3, d}, rng, false);
  std::vector<Tensor> inputs{ht, vt};
  for (const auto& [path, t] : store.entries()) {
    if (path.find("/cross0/") != std::string::npos) inputs.push_back(t);
  }
  const double err = ctt_test::gradcheck(
      [&] {
        auto [oh, ov] = cross_token_layer({ht, p}, {vt, p}, hs.cross_layers[0],
                                          vs.cross_layers[0], 2);
        return mean(add(mul(oh.tokens, probe), mul(ov.tokens, probe)));
      },
      inputs);
  CHECK(err < 1e-4);
}

// ---- model-level behaviour --------------------------------------------------

namespace {

ModelConfig tiny_config(Fusion fusion, bool pva = true) {
  ModelConfig cfg;
  cfg.encoder.input_height = 32;
  cfg.encoder.input_width = 32;
  cfg.encoder.channels = {2, 2, 4, 4, 8};
  cfg.encoder.token_dim = 8;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.mode.fusion = fusion;
  cfg.mode.use_preop_va = pva;
  cfg.mode.cross_layer_start = 1;
  return cfg;
}

}  // namespace

TEST_CASE("single_hor prediction ignores the vertical image") {
  CttModel model(tiny_config(Fusion::kSingleHor), 41);
  Rng rng(43);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver1 = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver2 = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  CHECK(model.predict_value(hor, ver1, 0.5) == model.predict_value(hor, ver2, 0.5));
}

TEST_CASE("cross_layer_start == layers runs two independent streams") {
  ModelConfig cfg = tiny_config(Fusion::kCrossToken);
  cfg.mode.cross_layer_start = cfg.layers;
  CttModel model(cfg, 47);
  Rng rng(53);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);

  ForwardTrace trace;
  const double pred = model.predict(hor, ver, 0.5, &trace).at(0);
  CHECK(trace.hor_step1.empty());  // no cross layers ran

  // Perturbing the vertical image must leave every horizontal boundary
  // bit-identical (information has no path between streams).
  Tensor ver2 = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  ForwardTrace trace2;
  const double pred2 = model.predict(hor, ver2, 0.5, &trace2).at(0);
  REQUIRE(trace.hor_boundaries.size() == trace2.hor_boundaries.size());
  for (std::size_t l = 0; l < trace.hor_boundaries.size(); ++l) {
    CHECK(trace.hor_boundaries[l] == trace2.hor_boundaries[l]);
  }
  CHECK(pred != pred2);  // the ver stream itself still feeds the head
}

TEST_CASE("stream isolation before cross_layer_start") {
  ModelConfig cfg = tiny_config(Fusion::kCrossToken);
  CttModel model(cfg, 59);
  Rng rng(61);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver1 = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver2 = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);

  ForwardTrace t1, t2;
  model.predict(hor, ver1, 0.5, &t1);
  model.predict(hor, ver2, 0.5, &t2);
  // Boundaries 0..cross_layer_start of the hor stream are unaffected by the
  // vertical view; the first cross layer output may differ.
  for (std::size_t l = 0; l <= cfg.mode.cross_layer_start; ++l) {
    CHECK(t1.hor_boundaries[l] == t2.hor_boundaries[l]);
  }
  CHECK(t1.hor_boundaries.back() != t2.hor_boundaries.back());
}

TEST_CASE("sequence length is P+3 at every boundary") {
  ModelConfig cfg = tiny_config(Fusion::kCrossToken);
  CttModel model(cfg, 67);
  Rng rng(71);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  ForwardTrace trace;
  model.predict(hor, ver, 0.5, &trace);
  const std::size_t expected = (cfg.encoder.patch_count() + 3) * cfg.encoder.token_dim;
  CHECK(trace.hor_boundaries.size() == cfg.layers + 1);
  for (const auto& b : trace.hor_boundaries) CHECK(b.size() == expected);
  for (const auto& b : trace.ver_boundaries) CHECK(b.size() == expected);
}

TEST_CASE("forward deterministic across calls and modes work") {
  Rng rng(73);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  for (Fusion fusion : {Fusion::kSingleHor, Fusion::kSingleVer,
                        Fusion::kLateNoAttention, Fusion::kFullAttention,
                        Fusion::kCrossToken}) {
    CttModel model(tiny_config(fusion), 79);
    const double a = model.predict_value(hor, ver, 0.5);
    const double b = model.predict_value(hor, ver, 0.5);
    CHECK(a == b);
    CHECK(std::isfinite(a));
  }
}

TEST_CASE("pva flag changes predictions only via the va slot") {
  // With PVA on, varying pre_va moves the prediction; with PVA off it cannot.
  Rng rng(83);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  CttModel with(tiny_config(Fusion::kCrossToken, true), 89);
  CttModel without(tiny_config(Fusion::kCrossToken, false), 89);
  CHECK(with.predict_value(hor, ver, 0.2) != with.predict_value(hor, ver, 1.0));
  CHECK(without.predict_value(hor, ver, 0.2) ==
        without.predict_value(hor, ver, 1.0));
}

TEST_CASE("checkpoint round trip preserves predictions and validates shapes") {
  const auto dir = ctt_test::scratch_dir("ckpt");
  ModelConfig cfg = tiny_config(Fusion::kCrossToken);
  CttModel model(cfg, 97);
  Rng rng(101);
  Tensor hor = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor ver = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  const double before = model.predict_value(hor, ver, 0.5);
  model.save_checkpoint(dir / "ckpt.json");

  CttModel other(cfg, 103);  // different init
  CHECK(other.predict_value(hor, ver, 0.5) != before);
  other.load_checkpoint(dir / "ckpt.json");
  CHECK(other.predict_value(hor, ver, 0.5) == before);

  // A checkpoint from a different architecture must be rejected.
  ModelConfig narrower = cfg;
  narrower.encoder.token_dim = 4;
  narrower.heads = 2;
  CttModel mismatched(narrower, 107);
  CHECK_THROWS_AS(mismatched.load_checkpoint(dir / "ckpt.json"), DataError);
}

TEST_CASE("share_cross_step_weights halves cross-layer parameters") {
  ModelConfig shared = tiny_config(Fusion::kCrossToken);
  shared.share_cross_step_weights = true;
  ModelConfig split = tiny_config(Fusion::kCrossToken);
  CttModel a(shared, 109), b(split, 109);
  CHECK(a.params().count() < b.params().count());
  CHECK(a.params().contains("hor/layer1/step1/msa/wq"));
  CHECK(!a.params().contains("hor/layer1/step2/msa/wq"));
  CHECK(b.params().contains("hor/layer1/step2/msa/wq"));
}

TEST_CASE("model config validation") {
  ModelConfig bad_heads = tiny_config(Fusion::kCrossToken);
  bad_heads.heads = 3;  // does not divide 8
  CHECK_THROWS_AS(CttModel(bad_heads, 1), ShapeError);

  ModelConfig bad_start = tiny_config(Fusion::kCrossToken);
  bad_start.mode.cross_layer_start = 5;
  CHECK_THROWS_AS(CttModel(bad_start, 1), ShapeError);
}
