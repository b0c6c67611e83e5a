#include <doctest.h>

#include <cmath>
#include <functional>
#include <fstream>

#include "aeckit/audio.hpp"
#include "aeckit/error.hpp"
#include "support.hpp"

using namespace aeckit;
using testsupport::WavBuilder;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an aeckit::Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("pcm16 silence decodes to zeros") {
  WavBuilder b;
  for (int i = 0; i < 16000; ++i) b.add_pcm16(0);
  const auto clip = decode_wav(b.bytes());
  CHECK(clip.size() == 16000);
  CHECK(clip.sample_rate == 16000);
  for (double v : clip.samples) CHECK(v == 0.0);
}

TEST_CASE("pcm16 maps by division by 32768") {
  WavBuilder b;
  b.add_pcm16(-32768);
  b.add_pcm16(32767);
  b.add_pcm16(16384);
  const auto clip = decode_wav(b.bytes());
  CHECK(clip.samples[0] == -1.0);
  CHECK(clip.samples[1] == 32767.0 / 32768.0);
  CHECK(clip.samples[2] == 0.5);
}

TEST_CASE("stereo is averaged to mono") {
  WavBuilder b;
  b.channels = 2;
  for (int i = 0; i < 10; ++i) {
    b.add_pcm16(16384);
    b.add_pcm16(-16384);
  }
  const auto clip = decode_wav(b.bytes());
  REQUIRE(clip.size() == 10);
  for (double v : clip.samples) CHECK(v == 0.0);
}

TEST_CASE("float32 and extensible headers are accepted") {
  WavBuilder f;
  f.format = 3;
  f.bits = 32;
  f.add_f32(0.25f);
  f.add_f32(-0.75f);
  auto clip = decode_wav(f.bytes());
  CHECK(clip.samples == std::vector<double>{0.25, -0.75});

  WavBuilder x;
  x.extensible = true;
  x.sub_format = 1;
  x.rate = 48000;
  x.add_pcm16(8192);
  clip = decode_wav(x.bytes(true));
  CHECK(clip.samples == std::vector<double>{0.25});
  CHECK(clip.sample_rate == 48000);
}

TEST_CASE("unknown chunks with odd sizes are skipped") {
  WavBuilder b;
  b.add_pcm16(100);
  CHECK(decode_wav(b.bytes(true)).samples.size() == 1);
}

TEST_CASE("decode errors") {
  WavBuilder b8;
  b8.bits = 8;
  b8.payload = {1, 2, 3};
  CHECK(code_of([&] { decode_wav(b8.bytes()); }) == ErrorCode::UnsupportedFormat);

  WavBuilder alaw;
  alaw.format = 6;
  alaw.bits = 16;
  alaw.add_pcm16(0);
  CHECK(code_of([&] { decode_wav(alaw.bytes()); }) == ErrorCode::UnsupportedFormat);

  std::vector<std::uint8_t> junk{'R', 'I', 'F', 'X', 0, 0, 0, 0, 'W', 'A', 'V', 'E'};
  CHECK(code_of([&] { decode_wav(junk); }) == ErrorCode::CorruptHeader);
  CHECK(code_of([&] { decode_wav(std::vector<std::uint8_t>{1, 2, 3}); }) == ErrorCode::CorruptHeader);

  WavBuilder nan;
  nan.format = 3;
  nan.bits = 32;
  nan.add_f32(std::nanf(""));
  CHECK(code_of([&] { decode_wav(nan.bytes()); }) == ErrorCode::CorruptHeader);

  CHECK(code_of([] { read_wav("/nonexistent/dir/x.wav"); }) == ErrorCode::NotFound);
}

TEST_CASE("write/read round trip within one quantisation step") {
  testsupport::TempDir dir("audio");
  const auto path = dir / "a.wav";
  AudioClip c;
  c.samples.assign(160, 0.25);
  write_wav(c, path);
  auto back = read_wav(path);
  REQUIRE(back.size() == 160);
  for (double v : back.samples) CHECK(std::abs(v - 0.25) <= 1.0 / 32768);

  const auto rnd = testsupport::noise(5000, 11, 0.4);
  AudioClip clipped = rnd;
  for (auto& v : clipped.samples) v = std::clamp(v, -1.0, 1.0);
  write_wav(clipped, path);
  back = read_wav(path);
  REQUIRE(back.size() == clipped.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(std::abs(back.samples[i] - clipped.samples[i]) <= 1.0 / 32768);
}

TEST_CASE("writes saturate out-of-range samples") {
  AudioClip c;
  c.samples = {1.5, -1.5, 1.0, -1.0};
  const auto back = decode_wav(encode_wav(c));
  CHECK(back.samples[0] == 32767.0 / 32768.0);
  CHECK(back.samples[1] == -1.0);
  CHECK(back.samples[2] == 32767.0 / 32768.0);
  CHECK(back.samples[3] == -1.0);
}

TEST_CASE("empty clip cannot be written") {
  CHECK(code_of([] { encode_wav(AudioClip{}); }) == ErrorCode::EmptyClip);
  testsupport::TempDir dir("audio_empty");
  CHECK(code_of([&] { write_wav(AudioClip{}, dir / "e.wav"); }) == ErrorCode::EmptyClip);
  AudioClip one;
  one.samples = {0.1};
  CHECK(code_of([&] { write_wav(one, dir / "missing" / "x.wav"); }) == ErrorCode::IoError);
}

TEST_CASE("scale_db") {
  const auto c = testsupport::noise(1000, 3);
  CHECK(scale_db(c, 0.0) == c);
  const auto up = scale_db(c, 0.5);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(up.samples[i] == doctest::Approx(c.samples[i] * 1.059254).epsilon(1e-6));
  AudioClip ones;
  ones.samples.assign(10, 1.0);
  for (double v : scale_db(ones, -20.0).samples) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
  // No clipping until write time.
  CHECK(scale_db(ones, 6.0).samples[0] > 1.9);
  const auto round = scale_db(scale_db(c, 3.7), -3.7);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(std::abs(round.samples[i] - c.samples[i]) <= 1e-9 * std::abs(c.samples[i]) + 1e-300);
  CHECK(code_of([&] { scale_db(c, std::nan("")); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("trim_leading_ms") {
  const auto c = testsupport::noise(1000, 4);
  const auto t = trim_leading_ms(c, 10);
  REQUIRE(t.size() == 840);
  CHECK(std::equal(t.samples.begin(), t.samples.end(), c.samples.begin() + 160));
  CHECK(trim_leading_ms(c, 0) == c);
  AudioClip short_clip;
  short_clip.samples.assign(100, 0.0);
  CHECK(code_of([&] { trim_leading_ms(short_clip, 10); }) == ErrorCode::TrimExceedsLength);
  AudioClip exact;
  exact.samples.assign(160, 0.0);
  CHECK(code_of([&] { trim_leading_ms(exact, 10); }) == ErrorCode::TrimExceedsLength);
}

TEST_CASE("pad_to_length appends zeros") {
  AudioClip c;
  c.samples = {0.1, 0.2};
  const auto p = pad_to_length(c, 5);
  CHECK(p.samples == std::vector<double>{0.1, 0.2, 0.0, 0.0, 0.0});
  CHECK(pad_to_length(c, 2) == c);
}
