#include "aeckit/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <utility>

#include "aeckit/error.hpp"
#include "fft.hpp"

namespace aeckit {
namespace detail {
namespace {

struct PlanPair {
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;
};

// Plans live for the process lifetime.
std::pair<fftw_plan, fftw_plan> plans_for(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, PlanPair> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(n);
  if (it == cache.end()) {
    const int len = static_cast<int>(n);
    auto* in = fftw_alloc_real(n);
    auto* out = fftw_alloc_complex(n / 2 + 1);
    PlanPair p;
    p.r2c = fftw_plan_dft_r2c_1d(len, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.c2r = fftw_plan_dft_c2r_1d(len, out, in, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    it = cache.emplace(n, p).first;
  }
  return {it->second.r2c, it->second.c2r};
}

}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  auto [a, b] = plans_for(n);
  r2c_ = a;
  c2r_ = b;
}

void RealFft::forward(const double* in, std::complex<double>* out) const {
  fftw_execute_dft_r2c(static_cast<fftw_plan>(r2c_), const_cast<double*>(in),
                       reinterpret_cast<fftw_complex*>(out));
}

void RealFft::inverse(const std::complex<double>* in, double* out) const {
  std::vector<std::complex<double>> scratch(in, in + n_ / 2 + 1);
  fftw_execute_dft_c2r(static_cast<fftw_plan>(c2r_), reinterpret_cast<fftw_complex*>(scratch.data()), out);
}

}  // namespace detail

namespace dsp {
namespace {

void require_clip(const AudioClip& clip) {
  if (clip.empty()) throw Error(ErrorCode::EmptyClip, "spectrogram of an empty clip");
}

template <bool Parallel>
Spectrogram log_power_impl(const AudioClip& clip, const StftConfig& cfg) {
  cfg.validate();
  require_clip(clip);
  const std::size_t n = cfg.dft_size;
  const std::size_t bins = cfg.n_bins();
  const std::size_t frames = frame_count(clip.size(), cfg);
  const auto window = hann_window(n);
  const detail::RealFft fft(n);

  Spectrogram spec;
  spec.n_frames = frames;
  spec.n_bins = bins;
  spec.values.resize(frames * bins);

  const auto frame_body = [&](std::size_t t, std::vector<double>& buf, std::vector<std::complex<double>>& bins_out) {
    const std::size_t start = t * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = start + i;
      buf[i] = idx < clip.size() ? clip.samples[idx] * window[i] : 0.0;
    }
    fft.forward(buf.data(), bins_out.data());
    double* row = spec.values.data() + t * bins;
    for (std::size_t k = 0; k < bins; ++k) row[k] = std::log(std::norm(bins_out[k]) + cfg.epsilon);
  };

  if constexpr (Parallel) {
#pragma omp parallel
    {
      std::vector<double> buf(n);
      std::vector<std::complex<double>> out(bins);
#pragma omp for schedule(static)
      for (std::ptrdiff_t t = 0; t < static_cast<std::ptrdiff_t>(frames); ++t)
        frame_body(static_cast<std::size_t>(t), buf, out);
    }
  } else {
    std::vector<double> buf(n);
    std::vector<std::complex<double>> out(bins);
    for (std::size_t t = 0; t < frames; ++t) frame_body(t, buf, out);
  }
  return spec;
}

}  // namespace

void StftConfig::validate() const {
  if (dft_size < 2 || !std::has_single_bit(dft_size))
    throw Error(ErrorCode::InvalidConfig, "dft_size must be a power of two");
  if (hop == 0 || hop > dft_size) throw Error(ErrorCode::InvalidConfig, "hop must be in (0, dft_size]");
  if (!(epsilon > 0.0)) throw Error(ErrorCode::InvalidConfig, "epsilon must be positive");
}

std::size_t frame_count(std::size_t n_samples, const StftConfig& cfg) {
  if (n_samples <= cfg.dft_size) return 1;
  return 1 + (n_samples - cfg.dft_size) / cfg.hop;
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

std::vector<double> power_spectrum(std::span<const double> windowed_frame) {
  const detail::RealFft fft(windowed_frame.size());
  std::vector<std::complex<double>> out(windowed_frame.size() / 2 + 1);
  fft.forward(windowed_frame.data(), out.data());
  std::vector<double> power(out.size());
  std::transform(out.begin(), out.end(), power.begin(), [](auto c) { return std::norm(c); });
  return power;
}

Spectrogram log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg) {
  return log_power_impl<true>(clip, cfg);
}

namespace serial {
Spectrogram log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg) {
  return log_power_impl<false>(clip, cfg);
}
}  // namespace serial

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

double MelFilterbank::row_sum(std::size_t mel) const {
  double s = 0.0;
  for (std::size_t k = 0; k < n_bins; ++k) s += at(mel, k);
  return s;
}

MelFilterbank mel_filterbank(const StftConfig& cfg, std::size_t n_mels, int sample_rate) {
  cfg.validate();
  const std::size_t bins = cfg.n_bins();
  if (n_mels < 1 || n_mels > bins)
    throw Error(ErrorCode::InvalidConfig, "n_mels must be in [1, dft_size/2+1]");

  const double nyquist = sample_rate / 2.0;
  const double mel_hi = hz_to_mel(nyquist);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(n_mels + 1));

  const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(cfg.dft_size);
  MelFilterbank fb;
  fb.n_mels = n_mels;
  fb.n_bins = bins;
  fb.weights.assign(n_mels * bins, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    double* row = fb.weights.data() + m * bins;
    bool any = false;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > lo && f <= centre) w = (f - lo) / (centre - lo);
      else if (f > centre && f < hi) w = (hi - f) / (hi - centre);
      row[k] = w;
      any = any || w > 0.0;
    }
    // Low-frequency triangles can be narrower than one DFT bin; such a
    // filter collapses onto the bin nearest its centre.
    if (!any) {
      const auto k = static_cast<std::size_t>(std::lround(centre / bin_hz));
      row[std::min(k, bins - 1)] = 1.0;
    }
  }
  return fb;
}

Spectrogram mel_log_power_spectrogram(const AudioClip& clip, const StftConfig& cfg, std::size_t n_mels) {
  const auto fb = mel_filterbank(cfg, n_mels, clip.sample_rate);
  require_clip(clip);
  const std::size_t n = cfg.dft_size;
  const std::size_t bins = cfg.n_bins();
  const std::size_t frames = frame_count(clip.size(), cfg);
  const auto window = hann_window(n);
  const detail::RealFft fft(n);

  Spectrogram spec;
  spec.n_frames = frames;
  spec.n_bins = n_mels;
  spec.values.resize(frames * n_mels);

#pragma omp parallel
  {
    std::vector<double> buf(n);
    std::vector<std::complex<double>> out(bins);
    std::vector<double> power(bins);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ti = 0; ti < static_cast<std::ptrdiff_t>(frames); ++ti) {
      const auto t = static_cast<std::size_t>(ti);
      const std::size_t start = t * cfg.hop;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = start + i;
        buf[i] = idx < clip.size() ? clip.samples[idx] * window[i] : 0.0;
      }
      fft.forward(buf.data(), out.data());
      for (std::size_t k = 0; k < bins; ++k) power[k] = std::norm(out[k]);
      double* row = spec.values.data() + t * n_mels;
      for (std::size_t m = 0; m < n_mels; ++m) {
        double acc = 0.0;
        const double* w = fb.weights.data() + m * bins;
        for (std::size_t k = 0; k < bins; ++k) acc += w[k] * power[k];
        row[m] = std::log(acc + cfg.epsilon);
      }
    }
  }
  return spec;
}

double erle_db(const AudioClip& mic_far_echo, const AudioClip& residual) {
  if (mic_far_echo.empty() || residual.empty()) throw Error(ErrorCode::EmptyClip, "ERLE of an empty clip");
  if (mic_far_echo.size() != residual.size())
    throw Error(ErrorCode::LengthMismatch, "ERLE needs equal-length signals");
  constexpr double kFloor = 1e-12;
  double py = 0.0, pe = 0.0;
  for (std::size_t i = 0; i < residual.size(); ++i) {
    py += mic_far_echo.samples[i] * mic_far_echo.samples[i];
    pe += residual.samples[i] * residual.samples[i];
  }
  const auto n = static_cast<double>(residual.size());
  py /= n;
  pe /= n;
  if (py < kFloor) throw Error(ErrorCode::SilentReference, "echo reference is silent");
  // The floor clamps rather than adds so that non-silent residuals are not biased.
  return 10.0 * std::log10(py / std::max(pe, kFloor));
}

}  // namespace dsp
}  // namespace aeckit
