#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aeckit/error.hpp"
#include "aeckit/eval.hpp"

using namespace aeckit;
using namespace aeckit::eval;

namespace {

// Straightforward textbook formula, independent of the library's two-pass code.
double ref_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
    sxy += x[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

synth::DatasetManifest make_manifest(const std::vector<std::string>& aecs, std::size_t per_aec) {
  synth::DatasetManifest m;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> jitter(-0.3, 0.3);
  const Scenario order[3] = {Scenario::NearEndSingleTalk, Scenario::FarEndSingleTalk, Scenario::DoubleTalk};
  std::size_t k = 0;
  for (std::size_t a = 0; a < aecs.size(); ++a) {
    for (std::size_t i = 0; i < per_aec; ++i, ++k) {
      synth::ManifestEntry e;
      char buf[32];
      std::snprintf(buf, sizeof buf, "clip_%05zu", k);
      e.id = buf;
      e.aec_id = aecs[a];
      e.scenario = order[k % 3];
      const double q = 1.5 + static_cast<double>(a) * 0.8;
      e.oracle.echo_mos = e.scenario == Scenario::NearEndSingleTalk ? 5.0 : q + jitter(rng);
      e.oracle.other_mos = e.scenario == Scenario::FarEndSingleTalk ? 5.0 : 5.0 - q * 0.6 + jitter(rng);
      m.entries.push_back(e);
    }
  }
  return m;
}

std::map<std::string, MosPair> oracle_predictions(const synth::DatasetManifest& m) {
  std::map<std::string, MosPair> p;
  for (const auto& e : m.entries) p[e.id] = e.oracle;
  return p;
}

}  // namespace

TEST_CASE("pearson closed forms") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(*pearson(x, std::vector<double>{2, 4, 6, 8, 10}) == doctest::Approx(1.0));
  CHECK(*pearson(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0));
  CHECK(*pearson(x, std::vector<double>{1, 3, 2, 5, 4}) == doctest::Approx(0.8));
  CHECK(*pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 1}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_FALSE(pearson(x, std::vector<double>{3, 3, 3, 3, 3}).has_value());
  CHECK_FALSE(pearson(std::vector<double>{1, 1}, std::vector<double>{1, 2}).has_value());
  CHECK_THROWS_AS(pearson(x, std::vector<double>{1, 2}), Error);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), Error);
  try {
    pearson(std::vector<double>{1}, std::vector<double>{1});
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::TooShort);
  }
}

TEST_CASE("pearson matches the textbook formula and its invariances") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(50), y(50);
    for (std::size_t i = 0; i < 50; ++i) {
      x[i] = g(rng);
      y[i] = 0.5 * x[i] + g(rng);
    }
    const double r = *pearson(x, y);
    CHECK(r == doctest::Approx(ref_pearson(x, y)).epsilon(1e-10));
    CHECK(r >= -1.0);
    CHECK(r <= 1.0);
    CHECK(*pearson(y, x) == doctest::Approx(r).epsilon(1e-12));
    std::vector<double> ay(y);
    for (auto& v : ay) v = 3.0 * v - 7.0;
    CHECK(*pearson(x, ay) == doctest::Approx(r).epsilon(1e-10));
    for (auto& v : ay) v = -v;
    CHECK(*pearson(x, ay) == doctest::Approx(-r).epsilon(1e-10));
  }
  // Large offsets do not wreck the result.
  std::vector<double> x{1e9 + 1, 1e9 + 2, 1e9 + 3}, y{1, 2, 3};
  CHECK(*pearson(x, y) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("fractional ranks and spearman") {
  CHECK(fractional_ranks(std::vector<double>{10, 30, 20}) == std::vector<double>{1, 3, 2});
  CHECK(fractional_ranks(std::vector<double>{5, 1, 5, 5}) == std::vector<double>{3, 1, 3, 3});
  CHECK(fractional_ranks(std::vector<double>{2, 2, 1, 1}) == std::vector<double>{3.5, 3.5, 1.5, 1.5});
  const std::vector<double> x{1, 2, 3, 4, 5};
  CHECK(*spearman(x, std::vector<double>{1, 4, 9, 16, 25}) == doctest::Approx(1.0));
  CHECK(*spearman(x, std::vector<double>{-1, -8, -27, -64, -125}) == doctest::Approx(-1.0));
  // No ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
  const std::vector<double> y{2, 1, 4, 3, 5};
  CHECK(*spearman(x, y) == doctest::Approx(1.0 - 6.0 * 4.0 / (5.0 * 24.0)));
  CHECK_FALSE(spearman(x, std::vector<double>{7, 7, 7, 7, 7}).has_value());
}

TEST_CASE("rank_models with oracle predictions is perfect") {
  const auto m = make_manifest({"a", "b", "c", "d"}, 12);
  const auto r = rank_models(m, oracle_predictions(m));
  CHECK(r.clips == 48);
  CHECK(r.model_means.size() == 4);
  CHECK(*r.per_clip_pcc.echo == doctest::Approx(1.0));
  CHECK(*r.per_clip_pcc.other == doctest::Approx(1.0));
  CHECK(*r.per_model_srcc.echo == doctest::Approx(1.0));
  CHECK(*r.per_model_srcc.other == doctest::Approx(1.0));
  CHECK(*r.per_model_pcc.echo == doctest::Approx(1.0));
  CHECK(*r.per_scenario_pcc.at("fst_echo") == doctest::Approx(1.0));
  CHECK(r.model_means.at("a").clips == 12);
}

TEST_CASE("rank_models on reflected predictions is -1") {
  const auto m = make_manifest({"a", "b", "c"}, 9);
  auto p = oracle_predictions(m);
  for (auto& [id, v] : p) {
    v.echo_mos = 6.0 - v.echo_mos;
    v.other_mos = 6.0 - v.other_mos;
  }
  const auto r = rank_models(m, p);
  CHECK(*r.per_model_srcc.echo == doctest::Approx(-1.0));
  CHECK(*r.per_model_srcc.other == doctest::Approx(-1.0));
}

TEST_CASE("rank_models is invariant to entry order") {
  auto m = make_manifest({"a", "b", "c"}, 10);
  std::mt19937_64 rng(1);
  auto p = oracle_predictions(m);
  for (auto& [id, v] : p) v.echo_mos += std::uniform_real_distribution<double>(-1, 1)(rng);
  const auto r1 = rank_models(m, p);
  std::shuffle(m.entries.begin(), m.entries.end(), rng);
  const auto r2 = rank_models(m, p);
  CHECK(*r1.per_clip_pcc.echo == *r2.per_clip_pcc.echo);
  CHECK(*r1.per_model_pcc.echo == *r2.per_model_pcc.echo);
  CHECK(to_json(r1) == to_json(r2));
}

TEST_CASE("rank_models errors") {
  const auto m = make_manifest({"a", "b"}, 4);
  auto p = oracle_predictions(m);
  p.erase(p.begin());
  try {
    rank_models(m, p);
    FAIL("expected MissingPrediction");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingPrediction);
  }
  const auto single = make_manifest({"only"}, 6);
  try {
    rank_models(single, oracle_predictions(single));
    FAIL("expected SingleModel");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SingleModel);
  }
}

TEST_CASE("undefined correlations serialise as null and NA") {
  auto m = make_manifest({"a", "b"}, 6);
  auto p = oracle_predictions(m);
  for (auto& [id, v] : p) v = MosPair{3.0, 3.0};
  const auto r = rank_models(m, p);
  CHECK_FALSE(r.per_clip_pcc.echo.has_value());
  const auto j = to_json(r);
  CHECK(j.at("per_clip_pcc").at("echo").is_null());
  const auto csv = to_csv(r);
  CHECK(csv.find("NA") != std::string::npos);
  CHECK(csv.find("\n\n") != std::string::npos);
  CHECK(csv.find("a,") != std::string::npos);
}
