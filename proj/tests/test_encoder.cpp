#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ctt/encoder.hpp"
#include "test_support.hpp"

using namespace ctt;

TEST_CASE("config geometry at reference scale") {
  EncoderConfig cfg;
  cfg.input_height = 256;
  cfg.input_width = 256;
  cfg.downsample_factor = 32;
  cfg.channels = {8, 8, 8, 8, 8};
  cfg.token_dim = 128;
  cfg.validate();
  CHECK(cfg.stages() == 5);
  CHECK(cfg.patch_rows() == 8);
  CHECK(cfg.patch_cols() == 8);
  CHECK(cfg.patch_count() == 64);
}

TEST_CASE("config validation rejects bad geometry") {
  EncoderConfig bad;
  bad.input_height = 60;  // not divisible by 32
  CHECK_THROWS_AS(bad.validate(), ShapeError);

  EncoderConfig factor;
  factor.downsample_factor = 12;
  CHECK_THROWS_AS(factor.validate(), ShapeError);

  EncoderConfig schedule;
  schedule.channels = {8, 8};
  CHECK_THROWS_AS(schedule.validate(), ShapeError);
}

TEST_CASE("encode_view output shape per config") {
  EncoderConfig cfg;  // 64x64 /32, D=32
  ParameterStore store;
  Rng rng(3);
  auto params = make_view_encoder(cfg, store, "enc", rng);
  Tensor img = ctt_test::random_tensor({64, 64}, rng, false, 0.0, 1.0);
  Tensor fm = encode_view(img, cfg, params);
  CHECK(fm.shape() == Shape{2, 2, 32});

  Tensor wrong = ctt_test::random_tensor({32, 64}, rng, false, 0.0, 1.0);
  CHECK_THROWS_AS(encode_view(wrong, cfg, params), ShapeError);
}

TEST_CASE("encode_view is deterministic") {
  EncoderConfig cfg;
  cfg.input_height = 32;
  cfg.input_width = 32;
  cfg.channels = {4, 4, 4, 8, 8};
  ParameterStore store;
  Rng rng(5);
  auto params = make_view_encoder(cfg, store, "enc", rng);
  Tensor img = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor a = encode_view(img, cfg, params);
  Tensor b = encode_view(img, cfg, params);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("tokenize flattens row-major") {
  // 2x2xD map with distinguishable cells
  const std::size_t d = 3;
  std::vector<double> data;
  for (double cell : {0.0, 1.0, 2.0, 3.0}) {
    for (std::size_t j = 0; j < d; ++j) data.push_back(cell * 10 + j);
  }
  Tensor fm({2, 2, d}, data);
  Tensor tokens = tokenize(fm);
  CHECK(tokens.shape() == Shape{4, d});
  // order (0,0), (0,1), (1,0), (1,1)
  CHECK(tokens(0, 0) == 0.0);
  CHECK(tokens(1, 0) == 10.0);
  CHECK(tokens(2, 0) == 20.0);
  CHECK(tokens(3, 0) == 30.0);

  // round trip back to the map
  Tensor back = reshape(tokens, {2, 2, d});
  for (std::size_t i = 0; i < fm.size(); ++i) CHECK(back.at(i) == fm.at(i));
}

TEST_CASE("tokenize yields P tokens at 8x8") {
  Tensor fm({8, 8, 16});
  CHECK(tokenize(fm).shape() == Shape{64, 16});
}

TEST_CASE("va embedding affine properties") {
  ParameterStore store;
  Rng rng(7);
  auto emb = make_va_embedder(6, store, "va", rng);

  // zero weights -> bias exactly
  for (double& v : store.at("va/w").mutable_values()) v = 0.0;
  Tensor tok = embed_preop_va(0.8, emb, 1.5);
  for (std::size_t i = 0; i < 6; ++i) CHECK(tok.at(i) == emb.b.at(i));

  // affinity: embed(2x) - embed(0) = 2 (embed(x) - embed(0))
  ParameterStore store2;
  auto emb2 = make_va_embedder(6, store2, "va", rng);
  Tensor e0 = embed_preop_va(0.0, emb2, 1.5);
  Tensor ex = embed_preop_va(0.4, emb2, 1.5);
  Tensor e2x = embed_preop_va(0.8, emb2, 1.5);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(e2x.at(i) - e0.at(i) ==
          doctest::Approx(2.0 * (ex.at(i) - e0.at(i))));
  }

  CHECK_THROWS_AS(embed_preop_va(1.6, emb2, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(embed_preop_va(-0.1, emb2, 1.5), std::invalid_argument);
}

TEST_CASE("va embedding gradcheck") {
  ParameterStore store;
  Rng rng(11);
  auto emb = make_va_embedder(5, store, "va", rng);
  Tensor probe = ctt_test::random_tensor({1, 5}, rng, false);
  const double err = ctt_test::gradcheck(
      [&] { return mean(mul(embed_preop_va(0.7, emb, 1.5), probe)); },
      {emb.w, emb.b});
  CHECK(err < 1e-4);
}

TEST_CASE("separate view encoders: equal count, different outputs") {
  EncoderConfig cfg;
  cfg.input_height = 32;
  cfg.input_width = 32;
  cfg.channels = {4, 4, 8, 8, 8};
  ParameterStore store;
  Rng rng(13);
  auto hor = make_view_encoder(cfg, store, "hor_encoder", rng);
  auto ver = make_view_encoder(cfg, store, "ver_encoder", rng);

  CHECK(store.elements_with_prefix("hor_encoder/") ==
        store.elements_with_prefix("ver_encoder/"));
  CHECK(store.elements_with_prefix("hor_encoder/") > 0);

  Tensor img = ctt_test::random_tensor({32, 32}, rng, false, 0.0, 1.0);
  Tensor a = encode_view(img, cfg, hor);
  Tensor b = encode_view(img, cfg, ver);
  bool differs = false;
  for (std::size_t i = 0; i < a.size() && !differs; ++i) {
    differs = a.at(i) != b.at(i);
  }
  CHECK(differs);
}

TEST_CASE("one-stage micro encoder gradcheck") {
  EncoderConfig cfg;
  cfg.input_height = 4;
  cfg.input_width = 4;
  cfg.downsample_factor = 2;
  cfg.channels = {3};
  cfg.token_dim = 2;
  ParameterStore store;
  Rng rng(17);
  auto params = make_view_encoder(cfg, store, "enc", rng);
  Tensor img = ctt_test::random_tensor({4, 4}, rng, true, 0.05, 1.0);
  Tensor probe = ctt_test::random_tensor({2 * 2 * 2}, rng, false);

  std::vector<Tensor> inputs{img};
  for (const auto& [path, t] : store.entries()) inputs.push_back(t);
  // Nudge the zero biases off the ReLU kink before differencing.
  for (double& v : store.at("enc/stage0/conv_b").mutable_values()) v += 0.013;

  const double err = ctt_test::gradcheck(
      [&] {
        return mean(mul(reshape(encode_view(img, cfg, params), {8}), probe));
      },
      inputs);
  CHECK(err < 1e-4);
}
