#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace aeckit {

inline constexpr int kPipelineSampleRate = 16000;

// Mono PCM signal. Samples are nominally in [-1, 1]; values outside that
// range are allowed in memory and saturated only when written out.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kPipelineSampleRate;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  double duration_s() const noexcept {
    return static_cast<double>(samples.size()) / sample_rate;
  }

  friend bool operator==(const AudioClip&, const AudioClip&) = default;
};

// WAV codec over in-memory buffers. Decoding accepts PCM16 and IEEE float32,
// any channel count (averaged to mono). Encoding always emits PCM16 mono.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

AudioClip scale_db(const AudioClip& clip, double delta_db);

// Drops round(ms * rate / 1000) leading samples.
AudioClip trim_leading_ms(const AudioClip& clip, double ms);

// Zero-pads the tail up to `length`; never truncates.
AudioClip pad_to_length(const AudioClip& clip, std::size_t length);

}  // namespace aeckit
