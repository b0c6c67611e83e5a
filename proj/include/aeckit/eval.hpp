#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeckit/model.hpp"
#include "aeckit/synthdata.hpp"

namespace aeckit::eval {

// Empty when a correlation is undefined (a variance below 1e-15).
using Correlation = std::optional<double>;

inline constexpr double kMinVariance = 1e-15;

// Sample Pearson correlation. Throws LengthMismatch, TooShort.
Correlation pearson(std::span<const double> x, std::span<const double> y);
// 1-based ranks; ties share the average rank.
std::vector<double> fractional_ranks(std::span<const double> x);
Correlation spearman(std::span<const double> x, std::span<const double> y);

struct AxisPair {
  Correlation echo;
  Correlation other;
};

struct ModelMeans {
  std::size_t clips = 0;
  MosPair predicted;
  MosPair oracle;
};

struct EvalReport {
  AxisPair per_clip_pcc;    // echo over FE-ST + DT, other over NE-ST + DT
  AxisPair per_model_pcc;   // over per-model means
  AxisPair per_model_srcc;
  // fst_echo, nst_other, dt_echo, dt_other
  std::map<std::string, Correlation> per_scenario_pcc;
  std::map<std::string, ModelMeans> model_means;  // keyed by aec id
  std::size_t clips = 0;
};

// predictions[id] for every manifest entry. Throws MissingPrediction, SingleModel.
EvalReport rank_models(const synth::DatasetManifest& manifest, const std::map<std::string, MosPair>& predictions);

// Undefined correlations serialise as null.
nlohmann::json to_json(const EvalReport& report);
// One row per model, then a blank line and a metric,value summary block.
std::string to_csv(const EvalReport& report);

}  // namespace aeckit::eval
