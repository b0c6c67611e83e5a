#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aeckit/audio.hpp"
#include "aeckit/dsp.hpp"
#include "aeckit/model.hpp"

namespace aeckit {

enum class Scenario { NearEndSingleTalk, FarEndSingleTalk, DoubleTalk };

inline constexpr Scenario kAllScenarios[] = {Scenario::NearEndSingleTalk, Scenario::FarEndSingleTalk,
                                             Scenario::DoubleTalk};

// Short codes: "nst", "fst", "dt".
std::string to_string(Scenario s);
// Accepts the short codes, case-sensitive. Throws InvalidArgument.
Scenario scenario_from_string(const std::string& s);

struct ScoringRequest {
  AudioClip near_mic;
  AudioClip far_end;
  AudioClip enhanced;
  std::optional<Scenario> scenario;
};

// Length of the per-signal activity prefix that encodes the scenario: one
// DFT window, so it covers a whole number of 256-hop frames.
inline constexpr std::size_t kMarkerSamples = 512;

struct SignalActivity {
  bool near = true;
  bool far = true;
  bool enhanced = true;
};

// near: active in NE-ST and DT; far: active in FE-ST and DT; enhanced: always.
SignalActivity marker_activity(Scenario s);

// Validates the request (16 kHz, non-empty), pads the three signals at the
// tail to a common length, prefixes the scenario marker when present, and
// stacks the per-signal spectrograms in (near, far, enhanced) order.
FeatureBlock assemble_features(const ScoringRequest& req, const dsp::StftConfig& cfg, FeatureMode mode,
                               std::size_t n_mels = 160);
FeatureBlock assemble_features(const ScoringRequest& req, const ModelConfig& cfg);

enum class MicroAugmentation { Identity, Trim10ms, PlusHalfDb, MinusHalfDb };

MicroAugmentation pick_micro_augmentation(Rng& rng);
AudioClip apply_micro_augmentation(const AudioClip& clip, MicroAugmentation kind);
// Uniform choice among the four augmentations. Requires > 160 samples.
AudioClip micro_augment(const AudioClip& clip, Rng& rng);
// Applies micro_augment to one uniformly chosen signal of the triple.
ScoringRequest augment_request(const ScoringRequest& req, Rng& rng);

// NE-ST -> (5, other); FE-ST -> (echo, 5); DT -> (echo, other).
MosPair derive_training_label(Scenario scenario, std::optional<double> rated_echo,
                              std::optional<double> rated_other);

// Inference entry point. The scenario marker is used only when the
// checkpoint was configured with use_scenario_marker.
MosPair score(const Checkpoint& ckpt, const ScoringRequest& req);

// Scores independent requests in parallel; the result order matches the input.
std::vector<MosPair> score_all(const Checkpoint& ckpt, std::span<const ScoringRequest> requests);

}  // namespace aeckit
