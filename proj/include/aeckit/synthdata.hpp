#pragma once

// Synthetic stand-in for a crowdsourced AEC rating corpus: speech-like
// signals, a parameterised echo path, a family of simulated echo cancellers
// of graded quality, and a deterministic rule-based MOS oracle.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aeckit/audio.hpp"
#include "aeckit/model.hpp"
#include "aeckit/pipeline.hpp"

namespace aeckit::synth {

// splitmix64 finaliser; derives independent sub-seeds from (seed, stream).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Pink-ish noise through two formant resonators, 2-6 Hz syllabic amplitude
// modulation, ~30% silent gaps, peak-normalised to 0.5. duration in [1, 30] s.
AudioClip gen_speech_like(double duration_s, std::uint64_t seed);

// Mean power of gen_speech_like output, averaged over seeds. Used as the
// reference speech level when the near end is silent.
inline constexpr double kNominalSpeechPower = 0.00285;

struct ScenarioSpec {
  Scenario scenario = Scenario::DoubleTalk;
  double duration_s = 8.0;         // [3, 14.5]
  double echo_delay_ms = 50.0;     // [10, 300]
  double echo_gain_db = -10.0;     // [-25, -3]
  double echo_nonlinearity = 1.0;  // hard-clip threshold, (0, 1]
  std::optional<double> noise_floor_db = -50.0;  // [-70, -30] dBFS; nullopt = no noise
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedScenario {
  AudioClip near_speech;
  AudioClip far_end;
  AudioClip echo;  // delayed, scaled, clipped far end as picked up by the mic
  AudioClip noise;
  AudioClip mic;   // near_speech + echo + noise
};

SimulatedScenario simulate_scenario(const ScenarioSpec& spec);

struct SyntheticAec {
  std::string id;
  double echo_suppression_db = 30.0;  // [0, 60]
  double nearend_distortion = 0.0;    // fraction of STFT cells dropped, [0, 1]

  void validate() const;
};

// The five-canceller roster used throughout the tests: suppression
// {0, 15, 30, 45, 60} dB paired with distortion {0.5, 0.35, 0.2, 0.1, 0}.
std::vector<SyntheticAec> default_roster();
// "id:suppression_db:distortion,..." e.g. "a:0:0.5,b:30:0.2".
std::vector<SyntheticAec> parse_roster(const std::string& text);

struct AecOutput {
  AudioClip enhanced;
  AudioClip residual_echo;
  std::size_t dropped_cells = 0;
  std::size_t total_cells = 0;
};

// enhanced = dropout(mic - true_echo) + true_echo * 10^(-suppression/20).
// Spectral dropout zeroes each STFT cell independently with probability
// nearend_distortion (the same seed yields nested masks as the fraction
// grows) and resynthesises by overlap-add.
AecOutput apply_synthetic_aec(const AudioClip& mic, const AudioClip& far_end, const SyntheticAec& aec,
                              const AudioClip& true_echo, std::uint64_t seed);

struct OracleConfig {
  // Echo level (residual relative to near speech + residual, dB) knots.
  double echo_worst_db = -5.0;  // at or above -> 1
  double echo_best_db = -80.0;  // at or below -> 5
  // Near-end signal-to-distortion ratio knots.
  double sdr_worst_db = 0.0;
  double sdr_best_db = 30.0;
  double nominal_speech_power = kNominalSpeechPower;
};

MosPair oracle_mos(const AudioClip& near_speech, const AudioClip& residual_echo, const AudioClip& enhanced,
                   Scenario scenario, const OracleConfig& cfg = {});

struct ScenarioMix {
  double near_single = 0.456;
  double far_single = 0.267;
  double double_talk = 0.277;

  friend bool operator==(const ScenarioMix&, const ScenarioMix&) = default;
};

// "a,b,c" in (nst, fst, dt) order.
ScenarioMix parse_mix(const std::string& text);

// Largest-remainder apportionment of n clips; ties go to the earlier scenario.
std::array<std::size_t, 3> scenario_counts(std::size_t n, const ScenarioMix& mix);

struct ManifestEntry {
  std::string id;
  std::string near;  // paths relative to the manifest directory
  std::string far;
  std::string enhanced;
  Scenario scenario = Scenario::DoubleTalk;
  MosPair oracle;
  std::string aec_id;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  static constexpr int kVersion = 1;

  std::vector<ManifestEntry> entries;
  ScenarioMix mix;
  std::filesystem::path base_dir;  // not serialised

  std::array<std::size_t, 3> counts() const;
};

// JSON: {version, mix:{nst,fst,dt}, counts:{nst,fst,dt},
//        entries:[{id,near,far,enhanced,scenario,echo_mos,other_mos,aec_id,seed}]}
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Reads the entry's WAV triple; the scenario is attached when requested.
ScoringRequest load_request(const DatasetManifest& manifest, const ManifestEntry& entry, bool with_scenario);

struct DatasetOptions {
  std::size_t n_clips = 100;
  ScenarioMix mix;
  std::vector<SyntheticAec> roster = default_roster();
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  double min_duration_s = 3.0;
  double max_duration_s = 14.5;
  OracleConfig oracle;
};

// Writes <out_dir>/<id>_{near,far,enh}.wav and <out_dir>/manifest.json.
DatasetManifest build_dataset(const DatasetOptions& options);

}  // namespace aeckit::synth
