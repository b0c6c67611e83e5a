#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "aeckit/audio.hpp"

namespace aeckit::dsp {

enum class Window { Hann };

struct StftConfig {
  std::size_t dft_size = 512;
  std::size_t hop = 256;
  Window window = Window::Hann;
  double epsilon = 1e-12;  // power floor inside the log

  std::size_t n_bins() const noexcept { return dft_size / 2 + 1; }
  // Throws InvalidConfig unless dft_size is a power of two and 0 < hop <= dft_size.
  void validate() const;

  friend bool operator==(const StftConfig&, const StftConfig&) = default;
};

// Row-major frames x bins matrix of natural-log power.
struct Spectrogram {
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::vector<double> values;

  double at(std::size_t frame, std::size_t bin) const { return values[frame * n_bins + bin]; }
  std::span<const double> frame(std::size_t t) const { return {values.data() + t * n_bins, n_bins}; }
};

// 1 + floor(max(0, n - dft_size) / hop). Signals shorter than one window
// give a single zero-padded frame.
std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg);

// Periodic Hann window, sums to 1 under 50% overlap.
std::vector<double> hann_window(std::size_t n);

// One-sided |X[k]|^2, k = 0..n/2, for an already-windowed frame.
std::vector<double> power_spectrum(std::span<const double> windowed_frame);

Spectrogram log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg = {});

// Rows are filters (n_mels), columns are linear-frequency bins (dft_size/2+1).
struct MelFilterbank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * n_bins + bin]; }
  double row_sum(std::size_t mel) const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// HTK-scale triangular filters between 0 Hz and sample_rate / 2 with unit peak.
MelFilterbank mel_filterbank(const StftConfig& cfg, std::size_t n_mels, int sample_rate = kPipelineSampleRate);

Spectrogram mel_log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg, std::size_t n_mels);

// 10 log10(mean(y^2) / max(mean(e^2), 1e-12)). Throws SilentReference when
// mean(y^2) < 1e-12.
double erle_db(const AudioClip& mic_far_echo, const AudioClip& residual);

namespace serial {
// Single-threaded reference for the OpenMP framing loop above.
Spectrogram log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg = {});
}  // namespace serial

}  // namespace aeckit::dsp
