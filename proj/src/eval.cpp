#include "aeckit/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "aeckit/error.hpp"

namespace aeckit::eval {
namespace {

void check_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw Error(ErrorCode::LengthMismatch,
                "sequences differ in length (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) + ")");
  if (x.size() < 2) throw Error(ErrorCode::TooShort, "need at least two points");
}

struct Series {
  std::vector<double> pred;
  std::vector<double> truth;
  void add(double p, double t) {
    pred.push_back(p);
    truth.push_back(t);
  }
  Correlation pcc() const { return pred.size() < 2 ? Correlation{} : pearson(pred, truth); }
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string fmt(const Correlation& c) { return c ? fmt(*c) : std::string("NA"); }

nlohmann::json json_of(const Correlation& c) { return c ? nlohmann::json(*c) : nlohmann::json(nullptr); }

}  // namespace

Correlation pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx / (n - 1.0) < kMinVariance || syy / (n - 1.0) < kMinVariance) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> fractional_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

Correlation spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x, y);
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  return pearson(rx, ry);
}

EvalReport rank_models(const synth::DatasetManifest& manifest, const std::map<std::string, MosPair>& predictions) {
  // Sorted by id so the report does not depend on manifest order.
  std::vector<const synth::ManifestEntry*> entries;
  for (const auto& e : manifest.entries) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->id < b->id; });

  EvalReport report;
  report.clips = entries.size();
  std::map<std::string, std::array<double, 5>> sums;  // clips, pred echo/other, oracle echo/other
  Series echo_all, other_all, fst_echo, nst_other, dt_echo, dt_other;
  for (const auto* e : entries) {
    const auto it = predictions.find(e->id);
    if (it == predictions.end()) throw Error(ErrorCode::MissingPrediction, "no prediction for " + e->id);
    const MosPair& p = it->second;
    auto& acc = sums[e->aec_id];
    acc[0] += 1.0;
    acc[1] += p.echo_mos;
    acc[2] += p.other_mos;
    acc[3] += e->oracle.echo_mos;
    acc[4] += e->oracle.other_mos;
    switch (e->scenario) {
      case Scenario::FarEndSingleTalk:
        echo_all.add(p.echo_mos, e->oracle.echo_mos);
        fst_echo.add(p.echo_mos, e->oracle.echo_mos);
        break;
      case Scenario::NearEndSingleTalk:
        other_all.add(p.other_mos, e->oracle.other_mos);
        nst_other.add(p.other_mos, e->oracle.other_mos);
        break;
      case Scenario::DoubleTalk:
        echo_all.add(p.echo_mos, e->oracle.echo_mos);
        other_all.add(p.other_mos, e->oracle.other_mos);
        dt_echo.add(p.echo_mos, e->oracle.echo_mos);
        dt_other.add(p.other_mos, e->oracle.other_mos);
        break;
    }
  }
  if (sums.size() < 2)
    throw Error(ErrorCode::SingleModel, "ranking needs at least two models, got " + std::to_string(sums.size()));

  Series echo_means, other_means;
  for (const auto& [id, acc] : sums) {
    auto& mm = report.model_means[id];
    const double n = acc[0];
    mm.clips = static_cast<std::size_t>(n);
    mm.predicted = {acc[1] / n, acc[2] / n};
    mm.oracle = {acc[3] / n, acc[4] / n};
    echo_means.add(mm.predicted.echo_mos, mm.oracle.echo_mos);
    other_means.add(mm.predicted.other_mos, mm.oracle.other_mos);
  }

  report.per_clip_pcc = {echo_all.pcc(), other_all.pcc()};
  report.per_model_pcc = {echo_means.pcc(), other_means.pcc()};
  report.per_model_srcc = {spearman(echo_means.pred, echo_means.truth), spearman(other_means.pred, other_means.truth)};
  report.per_scenario_pcc = {{"fst_echo", fst_echo.pcc()},
                             {"nst_other", nst_other.pcc()},
                             {"dt_echo", dt_echo.pcc()},
                             {"dt_other", dt_other.pcc()}};
  return report;
}

nlohmann::json to_json(const EvalReport& r) {
  using nlohmann::json;
  json models = json::object();
  for (const auto& [id, mm] : r.model_means) {
    models[id] = {{"clips", mm.clips},
                  {"predicted_echo_mos", mm.predicted.echo_mos},
                  {"predicted_other_mos", mm.predicted.other_mos},
                  {"oracle_echo_mos", mm.oracle.echo_mos},
                  {"oracle_other_mos", mm.oracle.other_mos}};
  }
  json scen = json::object();
  for (const auto& [k, v] : r.per_scenario_pcc) scen[k] = json_of(v);
  return {{"clips", r.clips},
          {"per_clip_pcc", {{"echo", json_of(r.per_clip_pcc.echo)}, {"other", json_of(r.per_clip_pcc.other)}}},
          {"per_model_pcc", {{"echo", json_of(r.per_model_pcc.echo)}, {"other", json_of(r.per_model_pcc.other)}}},
          {"per_model_srcc", {{"echo", json_of(r.per_model_srcc.echo)}, {"other", json_of(r.per_model_srcc.other)}}},
          {"per_scenario_pcc", scen},
          {"model_means", models}};
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "aec_id,clips,predicted_echo_mos,predicted_other_mos,oracle_echo_mos,oracle_other_mos\n";
  for (const auto& [id, mm] : r.model_means)
    os << id << ',' << mm.clips << ',' << fmt(mm.predicted.echo_mos) << ',' << fmt(mm.predicted.other_mos) << ','
       << fmt(mm.oracle.echo_mos) << ',' << fmt(mm.oracle.other_mos) << '\n';
  os << "\nmetric,value\n";
  os << "per_clip_pcc_echo," << fmt(r.per_clip_pcc.echo) << '\n';
  os << "per_clip_pcc_other," << fmt(r.per_clip_pcc.other) << '\n';
  os << "per_model_pcc_echo," << fmt(r.per_model_pcc.echo) << '\n';
  os << "per_model_pcc_other," << fmt(r.per_model_pcc.other) << '\n';
  os << "per_model_srcc_echo," << fmt(r.per_model_srcc.echo) << '\n';
  os << "per_model_srcc_other," << fmt(r.per_model_srcc.other) << '\n';
  for (const auto& [k, v] : r.per_scenario_pcc) os << "pcc_" << k << ',' << fmt(v) << '\n';
  return os.str();
}

}  // namespace aeckit::eval
