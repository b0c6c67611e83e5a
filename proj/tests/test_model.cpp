#include <doctest.h>

#include <cmath>

#include "aeckit/error.hpp"
#include "aeckit/model.hpp"

using namespace aeckit;

namespace {

FeatureBlock random_features(const ModelConfig& cfg, std::size_t frames, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> g(static_cast<float>(cfg.input_shift), static_cast<float>(cfg.input_scale));
  FeatureBlock f(cfg.in_channels, frames, cfg.input_bins());
  for (auto& v : f.data) v = g(rng);
  return f;
}

const Parameter<float>& param(const Checkpoint& c, const std::string& name) {
  for (const auto& p : c.params)
    if (p.name == name) return p;
  FAIL("no parameter " << name);
  return c.params.front();
}

ModelConfig no_dropout(ModelConfig c) {
  c.dropout_conv = 0.0;
  c.dropout_dense = 0.0;
  c.gru_dropout = 0.0;
  return c;
}

}  // namespace

TEST_CASE("config validation and json round trip") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.conv_channels = {1, 2, 3};
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig{};
  c.out_dim = 3;
  CHECK_THROWS_AS(c.validate(), Error);

  ModelConfig m;
  m.feature_mode = FeatureMode::Mel160;
  m.use_gru = false;
  m.gru_hidden = 17;
  m.stft.hop = 128;
  nlohmann::json j = m;
  ModelConfig back;
  from_json(j, back);
  CHECK(back == m);
  CHECK(m.input_bins() == 160);
  CHECK(ModelConfig{}.input_bins() == 257);

  ModelConfig partial;
  from_json(nlohmann::json{{"gru_hidden", 8}}, partial);
  CHECK(partial.gru_hidden == 8);
  CHECK(partial.conv_channels == ModelConfig{}.conv_channels);
  CHECK_THROWS_AS(from_json(nlohmann::json{{"bogus", 1}}, partial), Error);
}

TEST_CASE("parameter layout follows the config") {
  const auto ckpt = init_model(ModelConfig{});
  CHECK(param(ckpt, "conv0.weight").values.size() == 864);
  CHECK(param(ckpt, "conv0.bias").values.size() == 32);
  CHECK(param(ckpt, "conv3.weight").values.size() == 128 * 64 * 9);
  CHECK(param(ckpt, "gru0.fwd.w_ih").values.size() == 3 * 64 * 128);
  CHECK(param(ckpt, "gru1.bwd.w_ih").values.size() == 3 * 64 * 128);
  CHECK(param(ckpt, "gru0.fwd.w_hh").values.size() == 3 * 64 * 64);
  CHECK(param(ckpt, "dense0.weight").values.size() == 64 * 128);
  CHECK(param(ckpt, "dense2.weight").values.size() == 2 * 64);

  ModelConfig ablated;
  ablated.use_gru = false;
  const auto a = init_model(ablated);
  for (const auto& p : a.params) CHECK(p.name.rfind("gru", 0) != 0);
  CHECK(param(a, "dense0.weight").values.size() == 64 * 128);
}

TEST_CASE("initialisation is deterministic with zero biases and bounded weights") {
  ModelConfig cfg;
  cfg.seed = 42;
  const auto a = init_model(cfg);
  const auto b = init_model(cfg);
  CHECK(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].values == b.params[i].values);
  cfg.seed = 43;
  CHECK(init_model(cfg).params[0].values != a.params[0].values);

  for (const auto& p : a.params) {
    if (p.shape.size() == 1 || p.name.find(".b_") != std::string::npos) {
      for (float v : p.values) CHECK(v == 0.0f);
      continue;
    }
    double bound;
    if (p.name.rfind("gru", 0) == 0) {
      bound = 1.0 / std::sqrt(64.0);
    } else if (p.name.rfind("conv", 0) == 0) {
      bound = std::sqrt(6.0 / static_cast<double>(p.shape[1] * 9 + p.shape[0] * 9));
    } else {
      bound = std::sqrt(6.0 / static_cast<double>(p.shape[0] + p.shape[1]));
    }
    float peak = 0.0f;
    for (float v : p.values) peak = std::max(peak, std::abs(v));
    CHECK(peak <= bound + 1e-7);
    CHECK(peak > 0.5 * bound);
  }
  for (const auto& m : a.adam.m)
    for (float v : m) CHECK(v == 0.0f);
  CHECK(a.adam.step == 0);
}

TEST_CASE("activation maps logit 0 to 3 and stays inside (1,5)") {
  CHECK(mos_activation(0.0) == 3.0);
  CHECK(mos_activation(1e6) < 5.0);
  CHECK(mos_activation(-1e6) > 1.0);
  CHECK(mos_activation(2.0) == doctest::Approx(1.0 + 4.0 / (1.0 + std::exp(-2.0))));
}

TEST_CASE("forward reproduces the reference conv-stage shapes") {
  const auto ckpt = init_model(ModelConfig{});
  const auto pred = forward(ckpt, random_features(ckpt.config, 541, 1));
  REQUIRE(pred.cache.stages.size() == 4);
  const std::size_t expect[4][3] = {{32, 270, 128}, {64, 135, 64}, {64, 67, 32}, {128, 33, 16}};
  for (int i = 0; i < 4; ++i) {
    CHECK(pred.cache.stages[i].out.c == expect[i][0]);
    CHECK(pred.cache.stages[i].out.h == expect[i][1]);
    CHECK(pred.cache.stages[i].out.w == expect[i][2]);
  }
  CHECK(pred.cache.steps == 33);
  CHECK(pred.cache.seq_dim == 128);
  CHECK(pred.cache.head_in.size() == 128);
  CHECK(pred.mos.echo_mos > 1.0);
  CHECK(pred.mos.echo_mos < 5.0);
}

TEST_CASE("variable length input and shape errors") {
  const auto ckpt = init_model(tiny_config());
  for (std::size_t frames : {16, 17, 31, 100}) CHECK_NOTHROW(forward(ckpt, random_features(ckpt.config, frames, frames)));
  CHECK_THROWS_AS(forward(ckpt, random_features(ckpt.config, 15, 1)), Error);
  FeatureBlock wrong_bins(3, 32, 16);
  try {
    forward(ckpt, wrong_bins);
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ShapeMismatch);
  }
  FeatureBlock wrong_channels(2, 32, 17);
  CHECK_THROWS_AS(forward(ckpt, wrong_channels), Error);
}

TEST_CASE("inference is deterministic and training mode is seeded") {
  const auto ckpt = init_model(tiny_config());
  const auto f = random_features(ckpt.config, 48, 3);
  const auto a = forward(ckpt, f).mos;
  const auto b = forward(ckpt, f).mos;
  CHECK(a.echo_mos == b.echo_mos);
  CHECK(a.other_mos == b.other_mos);
  Rng r1(5), r2(5);
  const auto t1 = forward(ckpt, f, true, &r1).mos;
  const auto t2 = forward(ckpt, f, true, &r2).mos;
  CHECK(t1.echo_mos == t2.echo_mos);
  CHECK_THROWS_AS(forward(ckpt, f, true, nullptr), Error);
}

TEST_CASE("outputs stay strictly inside (1,5) under extreme parameters") {
  auto ckpt = init_model(tiny_config());
  for (auto& p : ckpt.params)
    for (auto& v : p.values) v *= 1000.0f;
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto f = random_features(ckpt.config, 32, s);
    for (auto& v : f.data) v *= 100.0f;
    const auto m = forward(ckpt, f).mos;
    CHECK(m.echo_mos > 1.0);
    CHECK(m.echo_mos < 5.0);
    CHECK(m.other_mos > 1.0);
    CHECK(m.other_mos < 5.0);
  }
}

TEST_CASE("gradient check passes on the tiny config and its variants") {
  const auto full = gradient_check(tiny_config());
  CHECK(full.passed);
  CHECK(full.checked >= 200);
  CHECK(full.max_rel_err < 1e-4);
  CHECK(gradient_check(tiny_config()) == full);

  ModelConfig ablated = tiny_config();
  ablated.use_gru = false;
  const auto a = gradient_check(ablated);
  CHECK(a.passed);
  CHECK(a.max_rel_err < 1e-4);

  ModelConfig uni = tiny_config();
  uni.gru_bidirectional = false;
  uni.gru_layers = 1;
  CHECK(gradient_check(uni).passed);

  ModelConfig mel = tiny_config();
  mel.feature_mode = FeatureMode::Mel160;
  mel.n_mels = 16;
  CHECK(gradient_check(mel).passed);
}

TEST_CASE("gradient check with linear activations is exact to FD truncation") {
  // With slope 1 the only nonlinearities left are pooling winners and the output sigmoid.
  ModelConfig lin = tiny_config();
  lin.leaky_slope = 1.0;
  lin.use_gru = false;
  const auto r = gradient_check(lin);
  CHECK(r.passed);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("train_step loss is the mean of 2B squared errors") {
  const auto cfg = tiny_config();
  auto ckpt = init_model(cfg);
  std::vector<TrainExample> batch;
  for (std::uint64_t i = 0; i < 10; ++i) batch.push_back({random_features(cfg, 32, 100 + i), {1.0 + 0.4 * i, 4.5 - 0.3 * i}});
  Rng rng(9), oracle_rng(9);
  double expect = 0.0;
  for (const auto& ex : batch) {
    const auto m = forward(ckpt, ex.features, true, &oracle_rng).mos;
    expect += std::pow(m.echo_mos - ex.target.echo_mos, 2) + std::pow(m.other_mos - ex.target.other_mos, 2);
  }
  expect /= 20.0;
  const double loss = train_step(ckpt, batch, 1e-3, rng);
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(ckpt.adam.step == 1);
}

TEST_CASE("zero error leaves parameters unchanged") {
  const auto cfg = no_dropout(tiny_config());
  auto ckpt = init_model(cfg);
  const auto f = random_features(cfg, 32, 1);
  const auto m = forward(ckpt, f).mos;
  const std::vector<TrainExample> batch{{f, m}};
  const auto before = ckpt.params;
  Rng rng(1);
  CHECK(train_step(ckpt, batch, 1e-3, rng) == 0.0);
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t j = 0; j < before[i].values.size(); ++j)
      CHECK(std::abs(ckpt.params[i].values[j] - before[i].values[j]) <= 1e-3);
}

TEST_CASE("train_step is deterministic and validates targets") {
  const auto cfg = tiny_config();
  const std::vector<TrainExample> batch{{random_features(cfg, 32, 1), {2.0, 3.0}}, {random_features(cfg, 48, 2), {4.0, 1.5}}};
  auto a = init_model(cfg), b = init_model(cfg);
  Rng ra(3), rb(3);
  for (int s = 0; s < 2; ++s) {
    train_step(a, batch, 1e-3, ra);
    train_step(b, batch, 1e-3, rb);
  }
  for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].values == b.params[i].values);
  CHECK(a.adam == b.adam);

  auto bad = batch;
  bad[0].target.echo_mos = 5.5;
  try {
    train_step(a, bad, 1e-3, ra);
    FAIL("expected RatingOutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::RatingOutOfRange);
  }
  CHECK_THROWS_AS(train_step(a, std::span<const TrainExample>{}, 1e-3, ra), Error);
}

TEST_CASE("non-finite input raises NonFiniteLoss without touching the checkpoint") {
  const auto cfg = tiny_config();
  auto ckpt = init_model(cfg);
  auto f = random_features(cfg, 32, 1);
  f.data[5] = std::numeric_limits<float>::quiet_NaN();
  const std::vector<TrainExample> batch{{f, {3.0, 3.0}}};
  const auto before = ckpt.params;
  Rng rng(1);
  try {
    train_step(ckpt, batch, 1e-3, rng);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
  }
  CHECK(ckpt.adam.step == 0);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(ckpt.params[i].values == before[i].values);
}

TEST_CASE("overfit probe: four examples, 500 steps") {
  // Memorisation check, so regularisation is off.
  auto cfg = tiny_config();
  cfg.dropout_conv = cfg.gru_dropout = cfg.dropout_dense = 0.0;
  auto ckpt = init_model(cfg);
  std::vector<TrainExample> batch;
  const MosPair targets[4] = {{1.5, 4.0}, {4.5, 2.0}, {3.0, 3.5}, {2.2, 1.3}};
  for (std::uint64_t i = 0; i < 4; ++i) batch.push_back({random_features(cfg, 48, 50 + i), targets[i]});
  Rng rng(0);
  for (int s = 0; s < 500; ++s) train_step(ckpt, batch, 1e-3, rng);
  CHECK(evaluate_loss(ckpt, batch) < 1e-3);
}
