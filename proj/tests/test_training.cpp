#include <doctest.h>

#include "aeckit/error.hpp"
#include "aeckit/training.hpp"
#include "support.hpp"

using namespace aeckit;

namespace {

std::vector<LabeledRequest> toy_data(std::size_t n) {
  std::vector<LabeledRequest> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = static_cast<Scenario>(i % 3);
    ScoringRequest req{testsupport::noise(1600, 3 * i), testsupport::noise(1600, 3 * i + 1),
                       testsupport::noise(1600, 3 * i + 2, 0.02 * static_cast<double>(i + 1)), s};
    out.push_back({req, {1.0 + 0.5 * static_cast<double>(i % 5), 4.0}});
  }
  return out;
}

ModelConfig quiet_tiny() {
  auto cfg = tiny_config();
  cfg.dropout_conv = cfg.gru_dropout = cfg.dropout_dense = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("train_model runs the requested epochs and reports each") {
  auto ckpt = init_model(quiet_tiny());
  const auto data = toy_data(7);
  TrainOptions opts;
  opts.epochs = 3;
  opts.batch = 3;
  std::vector<std::size_t> seen;
  opts.on_epoch = [&](const EpochStats& s) { seen.push_back(s.epoch); };
  const auto hist = train_model(ckpt, data, opts);
  REQUIRE(hist.size() == 3);
  CHECK(seen == std::vector<std::size_t>{1, 2, 3});
  for (const auto& h : hist) {
    CHECK(h.steps == 3);  // ceil(7 / 3)
    CHECK(std::isfinite(h.mean_loss));
  }
  CHECK(ckpt.adam.step == 9);
}

TEST_CASE("train_model is deterministic per seed, with and without augmentation") {
  const auto data = toy_data(6);
  for (bool augment : {false, true}) {
    auto a = init_model(tiny_config());
    auto b = init_model(tiny_config());
    TrainOptions opts;
    opts.epochs = 2;
    opts.batch = 4;
    opts.seed = 9;
    opts.augment = augment;
    const auto ha = train_model(a, data, opts);
    const auto hb = train_model(b, data, opts);
    CHECK(ha.back().mean_loss == hb.back().mean_loss);
    for (std::size_t i = 0; i < a.params.size(); ++i) CHECK(a.params[i].values == b.params[i].values);
    opts.seed = 10;
    auto c = init_model(tiny_config());
    train_model(c, data, opts);
    bool differs = false;
    for (std::size_t i = 0; i < a.params.size(); ++i) differs = differs || a.params[i].values != c.params[i].values;
    CHECK(differs);
  }
}

TEST_CASE("training reduces the loss on a small set") {
  auto ckpt = init_model(quiet_tiny());
  const auto data = toy_data(5);
  TrainOptions opts;
  opts.epochs = 60;
  opts.batch = 5;
  opts.lr = 3e-3;
  const auto hist = train_model(ckpt, data, opts);
  CHECK(hist.back().mean_loss < 0.5 * hist.front().mean_loss);
}

TEST_CASE("train_model argument errors") {
  auto ckpt = init_model(tiny_config());
  const auto data = toy_data(2);
  TrainOptions opts;
  CHECK_THROWS_AS(train_model(ckpt, std::span<const LabeledRequest>{}, opts), Error);
  opts.batch = 0;
  CHECK_THROWS_AS(train_model(ckpt, data, opts), Error);
  opts.batch = 2;
  opts.lr = 0.0;
  CHECK_THROWS_AS(train_model(ckpt, data, opts), Error);
}

TEST_CASE("request_for drops the scenario only without marker input") {
  ModelConfig cfg = tiny_config();
  ScoringRequest req{testsupport::noise(800, 1), testsupport::noise(800, 2), testsupport::noise(800, 3),
                     Scenario::DoubleTalk};
  CHECK(request_for(cfg, req).scenario == Scenario::DoubleTalk);
  cfg.use_scenario_marker = false;
  CHECK_FALSE(request_for(cfg, req).scenario.has_value());
}
