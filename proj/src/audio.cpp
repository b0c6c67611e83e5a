#include "aeckit/audio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "aeckit/error.hpp"

namespace aeckit {
namespace {

static_assert(std::endian::native == std::endian::little,
              "WAV codec assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T read() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string tag() {
    need(4);
    std::string t(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }

  void skip(std::size_t n) {
    need(n);
    pos_ += n;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::uint8_t* here() const { return bytes_.data() + pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::CorruptHeader, "unexpected end of WAV data");
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

}  // namespace

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 12) throw Error(ErrorCode::CorruptHeader, "file too short for a RIFF header");
  if (r.tag() != "RIFF") throw Error(ErrorCode::CorruptHeader, "missing RIFF tag");
  r.read<std::uint32_t>();
  if (r.tag() != "WAVE") throw Error(ErrorCode::CorruptHeader, "missing WAVE tag");

  bool have_fmt = false;
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;

  while (r.remaining() >= 8) {
    const std::string id = r.tag();
    const auto size = r.read<std::uint32_t>();
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::CorruptHeader, "fmt chunk too small");
      const std::size_t start = r.pos();
      format = r.read<std::uint16_t>();
      channels = r.read<std::uint16_t>();
      rate = r.read<std::uint32_t>();
      r.read<std::uint32_t>();  // byte rate
      r.read<std::uint16_t>();  // block align
      bits = r.read<std::uint16_t>();
      if (format == kFormatExtensible) {
        if (size < 40) throw Error(ErrorCode::CorruptHeader, "extensible fmt chunk too small");
        r.read<std::uint16_t>();  // cb size
        r.read<std::uint16_t>();  // valid bits
        r.read<std::uint32_t>();  // channel mask
        format = r.read<std::uint16_t>();  // first two bytes of the subformat GUID
      }
      r.skip(size - (r.pos() - start) + (size & 1u));
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::CorruptHeader, "data chunk before fmt chunk");
      if (channels == 0 || rate == 0) throw Error(ErrorCode::CorruptHeader, "zero channels or sample rate");
      const bool pcm16 = format == kFormatPcm && bits == 16;
      const bool f32 = format == kFormatFloat && bits == 32;
      if (!pcm16 && !f32) {
        throw Error(ErrorCode::UnsupportedFormat,
                    "codec " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
      }
      const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
      // Tolerate a data size that overruns the file (common with streamed writers).
      const std::size_t avail = std::min<std::size_t>(size, r.remaining());
      const std::size_t frames = avail / frame_bytes;

      AudioClip clip;
      clip.sample_rate = static_cast<int>(rate);
      clip.samples.resize(frames);
      const std::uint8_t* p = r.here();
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          if (pcm16) {
            std::int16_t v;
            std::memcpy(&v, p + (i * channels + c) * 2, 2);
            acc += static_cast<double>(v) / 32768.0;
          } else {
            float v;
            std::memcpy(&v, p + (i * channels + c) * 4, 4);
            if (!std::isfinite(v)) throw Error(ErrorCode::CorruptHeader, "non-finite float sample");
            acc += static_cast<double>(v);
          }
        }
        clip.samples[i] = acc / channels;
      }
      return clip;
    } else {
      r.skip(std::min<std::size_t>(size + (size & 1u), r.remaining()));
    }
  }
  throw Error(ErrorCode::CorruptHeader, "no data chunk");
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.empty()) throw Error(ErrorCode::EmptyClip, "cannot write an empty clip");
  const auto data_bytes = static_cast<std::uint32_t>(clip.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put<std::uint32_t>(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, kFormatPcm);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  put_tag(out, "data");
  put<std::uint32_t>(out, data_bytes);
  for (double s : clip.samples) {
    const double clipped = std::isfinite(s) ? std::clamp(s, -1.0, 1.0) : 0.0;
    const long q = std::clamp(std::lround(clipped * 32768.0), -32768L, 32767L);
    put<std::int16_t>(out, static_cast<std::int16_t>(q));
  }
  return out;
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_wav(bytes);
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

AudioClip scale_db(const AudioClip& clip, double delta_db) {
  if (!std::isfinite(delta_db)) throw Error(ErrorCode::InvalidArgument, "gain must be finite");
  AudioClip out = clip;
  if (delta_db == 0.0) return out;
  const double gain = std::pow(10.0, delta_db / 20.0);
  for (double& s : out.samples) s *= gain;
  return out;
}

AudioClip trim_leading_ms(const AudioClip& clip, double ms) {
  if (!(ms >= 0.0)) throw Error(ErrorCode::InvalidArgument, "trim duration must be non-negative");
  const auto n = static_cast<std::size_t>(std::llround(ms * clip.sample_rate / 1000.0));
  if (n == 0) return clip;
  if (n >= clip.size()) {
    throw Error(ErrorCode::TrimExceedsLength,
                "trimming " + std::to_string(n) + " of " + std::to_string(clip.size()) + " samples");
  }
  AudioClip out;
  out.sample_rate = clip.sample_rate;
  out.samples.assign(clip.samples.begin() + static_cast<std::ptrdiff_t>(n), clip.samples.end());
  return out;
}

AudioClip pad_to_length(const AudioClip& clip, std::size_t length) {
  AudioClip out = clip;
  if (out.samples.size() < length) out.samples.resize(length, 0.0);
  return out;
}

}  // namespace aeckit
