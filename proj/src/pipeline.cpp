#include "aeckit/pipeline.hpp"

#include <algorithm>
#include <array>
#include <exception>

#include "aeckit/error.hpp"

namespace aeckit {

std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::NearEndSingleTalk: return "nst";
    case Scenario::FarEndSingleTalk: return "fst";
    case Scenario::DoubleTalk: return "dt";
  }
  return "?";
}

Scenario scenario_from_string(const std::string& s) {
  if (s == "nst") return Scenario::NearEndSingleTalk;
  if (s == "fst") return Scenario::FarEndSingleTalk;
  if (s == "dt") return Scenario::DoubleTalk;
  throw Error(ErrorCode::InvalidArgument, "unknown scenario '" + s + "' (expected nst, fst or dt)");
}

SignalActivity marker_activity(Scenario s) {
  return {s != Scenario::FarEndSingleTalk, s != Scenario::NearEndSingleTalk, true};
}

namespace {

void validate_clip(const AudioClip& clip, const char* role) {
  if (clip.empty()) throw Error(ErrorCode::EmptyClip, std::string(role) + " signal is empty");
  if (clip.sample_rate != kPipelineSampleRate)
    throw Error(ErrorCode::SampleRateMismatch, std::string(role) + " signal is " + std::to_string(clip.sample_rate) +
                                                   " Hz, expected 16000 Hz");
}

AudioClip with_marker(const AudioClip& clip, bool active) {
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.reserve(clip.size() + kMarkerSamples);
  out.samples.assign(kMarkerSamples, active ? 1.0 : 0.0);
  out.samples.insert(out.samples.end(), clip.samples.begin(), clip.samples.end());
  return out;
}

}  // namespace

FeatureBlock assemble_features(const ScoringRequest& req, const dsp::StftConfig& cfg, FeatureMode mode,
                               std::size_t n_mels) {
  validate_clip(req.near_mic, "near-end mic");
  validate_clip(req.far_end, "far-end");
  validate_clip(req.enhanced, "enhanced");
  const std::size_t len = std::max({req.near_mic.size(), req.far_end.size(), req.enhanced.size()});

  std::array<AudioClip, 3> sig{pad_to_length(req.near_mic, len), pad_to_length(req.far_end, len),
                               pad_to_length(req.enhanced, len)};
  if (req.scenario) {
    const auto act = marker_activity(*req.scenario);
    const bool active[3] = {act.near, act.far, act.enhanced};
    for (std::size_t i = 0; i < 3; ++i) sig[i] = with_marker(sig[i], active[i]);
  }

  FeatureBlock block;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const auto spec = mode == FeatureMode::Stft257 ? dsp::log_power_spectrogram(sig[ch], cfg)
                                                   : dsp::mel_log_power_spectrogram(sig[ch], cfg, n_mels);
    if (ch == 0) block = FeatureBlock(3, spec.n_frames, spec.n_bins);
    std::transform(spec.values.begin(), spec.values.end(), block.data.begin() + static_cast<std::ptrdiff_t>(ch * block.plane()),
                   [](double v) { return static_cast<float>(v); });
  }
  return block;
}

FeatureBlock assemble_features(const ScoringRequest& req, const ModelConfig& cfg) {
  return assemble_features(req, cfg.stft, cfg.feature_mode, cfg.n_mels);
}

MicroAugmentation pick_micro_augmentation(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, 3);
  return static_cast<MicroAugmentation>(pick(rng));
}

AudioClip apply_micro_augmentation(const AudioClip& clip, MicroAugmentation kind) {
  switch (kind) {
    case MicroAugmentation::Identity: return clip;
    case MicroAugmentation::Trim10ms: return trim_leading_ms(clip, 10.0);
    case MicroAugmentation::PlusHalfDb: return scale_db(clip, 0.5);
    case MicroAugmentation::MinusHalfDb: return scale_db(clip, -0.5);
  }
  return clip;
}

AudioClip micro_augment(const AudioClip& clip, Rng& rng) {
  const auto trim = static_cast<std::size_t>(clip.sample_rate / 100);
  if (clip.size() <= trim)
    throw Error(ErrorCode::TrimExceedsLength, "micro augmentation needs more than 10 ms of audio");
  return apply_micro_augmentation(clip, pick_micro_augmentation(rng));
}

ScoringRequest augment_request(const ScoringRequest& req, Rng& rng) {
  ScoringRequest out = req;
  std::uniform_int_distribution<int> which(0, 2);
  AudioClip* targets[3] = {&out.near_mic, &out.far_end, &out.enhanced};
  AudioClip& target = *targets[which(rng)];
  target = micro_augment(target, rng);
  return out;
}

MosPair derive_training_label(Scenario scenario, std::optional<double> rated_echo,
                              std::optional<double> rated_other) {
  const auto need = [](std::optional<double> r, const char* what) {
    if (!r) throw Error(ErrorCode::MissingRating, std::string(what) + " rating required for this scenario");
    if (!(*r >= 1.0 && *r <= 5.0)) throw Error(ErrorCode::RatingOutOfRange, std::string(what) + " rating outside [1, 5]");
    return *r;
  };
  switch (scenario) {
    case Scenario::NearEndSingleTalk: return {5.0, need(rated_other, "other")};
    case Scenario::FarEndSingleTalk: return {need(rated_echo, "echo"), 5.0};
    case Scenario::DoubleTalk: {
      const double e = need(rated_echo, "echo");
      return {e, need(rated_other, "other")};
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown scenario");
}

MosPair score(const Checkpoint& ckpt, const ScoringRequest& req) {
  if (!ckpt.config.use_scenario_marker && req.scenario) {
    ScoringRequest stripped = req;
    stripped.scenario.reset();
    return forward(ckpt, assemble_features(stripped, ckpt.config)).mos;
  }
  return forward(ckpt, assemble_features(req, ckpt.config)).mos;
}

std::vector<MosPair> score_all(const Checkpoint& ckpt, std::span<const ScoringRequest> requests) {
  std::vector<MosPair> out(requests.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(requests.size()); ++i) {
    try {
      out[static_cast<std::size_t>(i)] = score(ckpt, requests[static_cast<std::size_t>(i)]);
    } catch (...) {
#pragma omp critical(aeckit_score_all)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace aeckit
