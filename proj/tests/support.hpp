#pragma once

#include <cmath>
#include <complex>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "aeckit/audio.hpp"

namespace testsupport {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("aeckit_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// O(n^2) DFT straight from the definition.
inline std::vector<std::complex<double>> direct_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline aeckit::AudioClip sine(double hz, double amp, std::size_t n, int rate = 16000) {
  aeckit::AudioClip c;
  c.sample_rate = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate);
  return c;
}

inline aeckit::AudioClip noise(std::size_t n, std::uint64_t seed, double sd = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sd);
  aeckit::AudioClip c;
  c.samples.resize(n);
  for (auto& v : c.samples) v = g(rng);
  return c;
}

// Little-endian RIFF/WAVE writer independent of the library encoder.
struct WavBuilder {
  std::uint16_t format = 1;
  std::uint16_t channels = 1;
  std::uint32_t rate = 16000;
  std::uint16_t bits = 16;
  std::vector<std::uint8_t> payload;
  bool extensible = false;
  std::uint16_t sub_format = 1;

  template <typename T>
  static void put(std::vector<std::uint8_t>& b, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) b.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
  }
  static void tag(std::vector<std::uint8_t>& b, const char* s) { b.insert(b.end(), s, s + 4); }

  void add_pcm16(std::int16_t v) { put(payload, static_cast<std::uint16_t>(v)); }
  void add_f32(float v) {
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    put(payload, u);
  }

  std::vector<std::uint8_t> bytes(bool with_junk_chunk = false) const {
    std::vector<std::uint8_t> fmt;
    put(fmt, extensible ? std::uint16_t{0xFFFE} : format);
    put(fmt, channels);
    put(fmt, rate);
    put(fmt, static_cast<std::uint32_t>(rate * channels * bits / 8));
    put(fmt, static_cast<std::uint16_t>(channels * bits / 8));
    put(fmt, bits);
    if (extensible) {
      put(fmt, std::uint16_t{22});
      put(fmt, bits);
      put(fmt, std::uint32_t{0});
      put(fmt, sub_format);
      const std::uint8_t guid_tail[14] = {0x00, 0x00, 0x00, 0x00, 0x10, 0x00, 0x80, 0x00, 0x00, 0xAA, 0x00, 0x38, 0x9B, 0x71};
      fmt.insert(fmt.end(), guid_tail, guid_tail + 14);
    }
    std::vector<std::uint8_t> body;
    tag(body, "WAVE");
    if (with_junk_chunk) {
      tag(body, "LIST");
      put(body, std::uint32_t{3});
      body.insert(body.end(), {'a', 'b', 'c', 0});  // odd size + pad byte
    }
    tag(body, "fmt ");
    put(body, static_cast<std::uint32_t>(fmt.size()));
    body.insert(body.end(), fmt.begin(), fmt.end());
    tag(body, "data");
    put(body, static_cast<std::uint32_t>(payload.size()));
    body.insert(body.end(), payload.begin(), payload.end());
    std::vector<std::uint8_t> out;
    tag(out, "RIFF");
    put(out, static_cast<std::uint32_t>(body.size()));
    out.insert(out.end(), body.begin(), body.end());
    return out;
  }
};

}  // namespace testsupport
