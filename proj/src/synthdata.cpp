#include "aeckit/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "aeckit/dsp.hpp"
#include "aeckit/error.hpp"
#include "fft.hpp"

namespace aeckit::synth {
namespace {

constexpr double kFs = kPipelineSampleRate;
constexpr double kPowerFloor = 1e-12;

void require_range(double v, double lo, double hi, const char* what) {
  if (!(v >= lo && v <= hi))
    throw Error(ErrorCode::InvalidArgument,
                std::string(what) + " must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

std::size_t samples_for(double seconds) { return static_cast<std::size_t>(std::llround(seconds * kFs)); }

AudioClip silent(std::size_t n) { return AudioClip{std::vector<double>(n, 0.0), kPipelineSampleRate}; }

double mean_power(const std::vector<double>& x) {
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

// Two-pole resonator, unity-ish gain at the centre frequency.
class Resonator {
 public:
  Resonator(double centre_hz, double bandwidth_hz) {
    const double r = std::exp(-std::numbers::pi * bandwidth_hz / kFs);
    a1_ = -2.0 * r * std::cos(2.0 * std::numbers::pi * centre_hz / kFs);
    a2_ = r * r;
    gain_ = 1.0 - r;
  }
  double step(double x) {
    const double y = gain_ * x - a1_ * y1_ - a2_ * y2_;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double a1_ = 0, a2_ = 0, gain_ = 1, y1_ = 0, y2_ = 0;
};

const char* scenario_key(Scenario s) {
  switch (s) {
    case Scenario::NearEndSingleTalk: return "nst";
    case Scenario::FarEndSingleTalk: return "fst";
    case Scenario::DoubleTalk: return "dt";
  }
  return "?";
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

AudioClip gen_speech_like(double duration_s, std::uint64_t seed) {
  require_range(duration_s, 1.0, 30.0, "duration_s");
  const std::size_t n = samples_for(duration_s);
  Rng rng(seed);
  std::normal_distribution<double> white(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

  AudioClip clip = silent(n);
  double b0 = 0, b1 = 0, b2 = 0;  // pink filter state
  std::size_t pos = samples_for(uniform(0.0, 0.3));
  const std::size_t ramp = samples_for(0.01);
  while (pos < n) {
    const std::size_t len = std::min(n - pos, samples_for(uniform(0.4, 1.6)));
    Resonator f1(uniform(300.0, 900.0), 90.0);
    Resonator f2(uniform(1000.0, 2500.0), 140.0);
    const double f2_gain = uniform(0.3, 0.7);
    const double syllable_hz = uniform(2.0, 6.0);
    const double phase = uniform(0.0, std::numbers::pi);
    for (std::size_t i = 0; i < len; ++i) {
      const double w = white(rng);
      b0 = 0.99765 * b0 + w * 0.0990460;
      b1 = 0.96300 * b1 + w * 0.2965164;
      b2 = 0.57000 * b2 + w * 1.0526913;
      const double pink = b0 + b1 + b2 + w * 0.1848;
      const double voiced = f1.step(pink) + f2_gain * f2.step(pink);
      const double t = static_cast<double>(i) / kFs;
      const double s = std::sin(std::numbers::pi * syllable_hz * t + phase);
      double env = s * s;
      const std::size_t edge = std::min(i, len - 1 - i);
      if (edge < ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / ramp);
      clip.samples[pos + i] = voiced * env;
    }
    pos += len + samples_for(uniform(0.2, 0.65));
  }

  double peak = 0.0;
  for (double v : clip.samples) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : clip.samples) v *= 0.5 / peak;
  return clip;
}

void ScenarioSpec::validate() const {
  require_range(duration_s, 3.0, 14.5, "duration_s");
  require_range(echo_delay_ms, 10.0, 300.0, "echo_delay_ms");
  require_range(echo_gain_db, -25.0, -3.0, "echo_gain_db");
  if (!(echo_nonlinearity > 0.0 && echo_nonlinearity <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "echo_nonlinearity must be in (0, 1]");
  if (noise_floor_db) require_range(*noise_floor_db, -70.0, -30.0, "noise_floor_db");
}

SimulatedScenario simulate_scenario(const ScenarioSpec& spec) {
  spec.validate();
  const std::size_t n = samples_for(spec.duration_s);
  SimulatedScenario sim;
  sim.near_speech = spec.scenario == Scenario::FarEndSingleTalk ? silent(n)
                                                                : gen_speech_like(spec.duration_s, derive_seed(spec.seed, 1));
  sim.far_end = spec.scenario == Scenario::NearEndSingleTalk ? silent(n)
                                                             : gen_speech_like(spec.duration_s, derive_seed(spec.seed, 2));

  const auto delay = static_cast<std::size_t>(std::llround(spec.echo_delay_ms * kFs / 1000.0));
  const double gain = std::pow(10.0, spec.echo_gain_db / 20.0);
  const double thr = spec.echo_nonlinearity;
  sim.echo = silent(n);
  for (std::size_t i = delay; i < n; ++i)
    sim.echo.samples[i] = std::clamp(sim.far_end.samples[i - delay] * gain, -thr, thr);

  sim.noise = silent(n);
  if (spec.noise_floor_db) {
    Rng rng(derive_seed(spec.seed, 3));
    std::normal_distribution<double> g(0.0, std::pow(10.0, *spec.noise_floor_db / 20.0));
    for (double& v : sim.noise.samples) v = g(rng);
  }

  sim.mic = silent(n);
  for (std::size_t i = 0; i < n; ++i)
    sim.mic.samples[i] = sim.near_speech.samples[i] + sim.echo.samples[i] + sim.noise.samples[i];
  return sim;
}

void SyntheticAec::validate() const {
  require_range(echo_suppression_db, 0.0, 60.0, "echo_suppression_db");
  require_range(nearend_distortion, 0.0, 1.0, "nearend_distortion");
}

std::vector<SyntheticAec> default_roster() {
  return {{"aec_s00", 0.0, 0.5}, {"aec_s15", 15.0, 0.35}, {"aec_s30", 30.0, 0.2}, {"aec_s45", 45.0, 0.1},
          {"aec_s60", 60.0, 0.0}};
}

std::vector<SyntheticAec> parse_roster(const std::string& text) {
  std::vector<SyntheticAec> roster;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find(':');
    const auto b = a == std::string::npos ? a : item.find(':', a + 1);
    if (b == std::string::npos) throw Error(ErrorCode::InvalidArgument, "roster entry '" + item + "' is not id:db:fraction");
    SyntheticAec aec;
    aec.id = item.substr(0, a);
    try {
      aec.echo_suppression_db = std::stod(item.substr(a + 1, b - a - 1));
      aec.nearend_distortion = std::stod(item.substr(b + 1));
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "roster entry '" + item + "' has a non-numeric field");
    }
    if (aec.id.empty()) throw Error(ErrorCode::InvalidArgument, "roster entry with empty id");
    aec.validate();
    roster.push_back(aec);
  }
  if (roster.empty()) throw Error(ErrorCode::InvalidArgument, "empty AEC roster");
  return roster;
}

AecOutput apply_synthetic_aec(const AudioClip& mic, const AudioClip& far_end, const SyntheticAec& aec,
                              const AudioClip& true_echo, std::uint64_t seed) {
  aec.validate();
  if (mic.size() != true_echo.size() || mic.size() != far_end.size())
    throw Error(ErrorCode::LengthMismatch, "mic, far end and echo must have equal lengths");
  const std::size_t n = mic.size();
  AecOutput out;
  out.residual_echo = silent(n);
  const double residual_gain = std::pow(10.0, -aec.echo_suppression_db / 20.0);
  for (std::size_t i = 0; i < n; ++i) out.residual_echo.samples[i] = true_echo.samples[i] * residual_gain;

  std::vector<double> near(n);
  for (std::size_t i = 0; i < n; ++i) near[i] = mic.samples[i] - true_echo.samples[i];

  if (aec.nearend_distortion > 0.0 && n > 0) {
    constexpr std::size_t N = 512, hop = 256;
    const detail::RealFft fft(N);
    const auto window = dsp::hann_window(N);
    const std::size_t frames = (n + hop - 1) / hop + 1;
    std::vector<double> padded(hop * (frames + 1), 0.0);
    std::copy(near.begin(), near.end(), padded.begin() + hop);
    std::vector<double> synth(padded.size(), 0.0);
    std::vector<double> buf(N), time(N);
    std::vector<std::complex<double>> spec(N / 2 + 1);
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t i = 0; i < N; ++i) buf[i] = padded[t * hop + i] * window[i];
      fft.forward(buf.data(), spec.data());
      for (auto& c : spec) {
        if (u(rng) < aec.nearend_distortion) {
          c = 0.0;
          ++out.dropped_cells;
        }
      }
      out.total_cells += spec.size();
      fft.inverse(spec.data(), time.data());
      for (std::size_t i = 0; i < N; ++i) synth[t * hop + i] += time[i] / static_cast<double>(N);
    }
    std::copy_n(synth.begin() + hop, n, near.begin());
  }

  out.enhanced = silent(n);
  for (std::size_t i = 0; i < n; ++i) out.enhanced.samples[i] = near[i] + out.residual_echo.samples[i];
  return out;
}

MosPair oracle_mos(const AudioClip& near_speech, const AudioClip& residual_echo, const AudioClip& enhanced,
                   Scenario scenario, const OracleConfig& cfg) {
  const std::size_t n = near_speech.size();
  if (residual_echo.size() != n || enhanced.size() != n)
    throw Error(ErrorCode::LengthMismatch, "oracle signals must have equal lengths");
  const auto ramp = [](double x, double worst, double best) {
    return std::clamp(1.0 + 4.0 * (x - worst) / (best - worst), 1.0, 5.0);
  };

  MosPair mos{5.0, 5.0};
  const double p_near = mean_power(near_speech.samples);
  if (scenario != Scenario::NearEndSingleTalk) {
    const double p_res = mean_power(residual_echo.samples);
    const double p_ref = scenario == Scenario::FarEndSingleTalk ? cfg.nominal_speech_power : p_near;
    const double level = 10.0 * std::log10(p_res + kPowerFloor) - 10.0 * std::log10(p_ref + p_res + kPowerFloor);
    mos.echo_mos = ramp(level, cfg.echo_worst_db, cfg.echo_best_db);
  }
  if (scenario != Scenario::FarEndSingleTalk) {
    double p_dist = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = enhanced.samples[i] - near_speech.samples[i] - residual_echo.samples[i];
      p_dist += d * d;
    }
    p_dist = n == 0 ? 0.0 : p_dist / static_cast<double>(n);
    const double sdr = 10.0 * std::log10(p_near + kPowerFloor) - 10.0 * std::log10(p_dist + kPowerFloor);
    mos.other_mos = ramp(sdr, cfg.sdr_worst_db, cfg.sdr_best_db);
  }
  return mos;
}

ScenarioMix parse_mix(const std::string& text) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) parts.push_back(std::stod(item));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "mix must be three comma-separated numbers");
  }
  if (parts.size() != 3) throw Error(ErrorCode::InvalidArgument, "mix must be three comma-separated numbers");
  return {parts[0], parts[1], parts[2]};
}

std::array<std::size_t, 3> scenario_counts(std::size_t n, const ScenarioMix& mix) {
  const std::array<double, 3> p{mix.near_single, mix.far_single, mix.double_talk};
  if (std::any_of(p.begin(), p.end(), [](double v) { return !(v >= 0.0); }) ||
      std::abs(p[0] + p[1] + p[2] - 1.0) > 1e-9)
    throw Error(ErrorCode::InvalidArgument, "scenario mix must be non-negative and sum to 1");
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = p[i] * static_cast<double>(n);
    counts[i] = static_cast<std::size_t>(std::floor(quota));
    rem[i] = quota - std::floor(quota);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) counts[order[k % 3]] += 1;
  return counts;
}

std::array<std::size_t, 3> DatasetManifest::counts() const {
  std::array<std::size_t, 3> c{};
  for (const auto& e : entries) c[static_cast<std::size_t>(e.scenario)] += 1;
  return c;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  using nlohmann::json;
  json entries = json::array();
  for (const auto& e : manifest.entries) {
    entries.push_back({{"id", e.id},
                       {"near", e.near},
                       {"far", e.far},
                       {"enhanced", e.enhanced},
                       {"scenario", scenario_key(e.scenario)},
                       {"echo_mos", e.oracle.echo_mos},
                       {"other_mos", e.oracle.other_mos},
                       {"aec_id", e.aec_id},
                       {"seed", e.seed}});
  }
  const auto c = manifest.counts();
  const json doc = {
      {"version", DatasetManifest::kVersion},
      {"mix", {{"nst", manifest.mix.near_single}, {"fst", manifest.mix.far_single}, {"dt", manifest.mix.double_talk}}},
      {"counts", {{"nst", c[0]}, {"fst", c[1]}, {"dt", c[2]}}},
      {"entries", entries}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::NotFound, "manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  try {
    const auto doc = nlohmann::json::parse(in);
    if (doc.at("version").get<int>() != DatasetManifest::kVersion)
      throw Error(ErrorCode::VersionMismatch, "manifest version " + doc.at("version").dump());
    const auto& mix = doc.at("mix");
    m.mix = {mix.at("nst").get<double>(), mix.at("fst").get<double>(), mix.at("dt").get<double>()};
    for (const auto& e : doc.at("entries")) {
      ManifestEntry me;
      me.id = e.at("id").get<std::string>();
      me.near = e.at("near").get<std::string>();
      me.far = e.at("far").get<std::string>();
      me.enhanced = e.at("enhanced").get<std::string>();
      me.scenario = scenario_from_string(e.at("scenario").get<std::string>());
      me.oracle = {e.at("echo_mos").get<double>(), e.at("other_mos").get<double>()};
      me.aec_id = e.at("aec_id").get<std::string>();
      me.seed = e.at("seed").get<std::uint64_t>();
      m.entries.push_back(std::move(me));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptHeader, "manifest " + path.string() + ": " + e.what());
  }
  return m;
}

ScoringRequest load_request(const DatasetManifest& manifest, const ManifestEntry& entry, bool with_scenario) {
  ScoringRequest req;
  req.near_mic = read_wav(manifest.base_dir / entry.near);
  req.far_end = read_wav(manifest.base_dir / entry.far);
  req.enhanced = read_wav(manifest.base_dir / entry.enhanced);
  if (with_scenario) req.scenario = entry.scenario;
  return req;
}

DatasetManifest build_dataset(const DatasetOptions& options) {
  if (options.n_clips < 1) throw Error(ErrorCode::InvalidArgument, "n_clips must be at least 1");
  if (options.roster.empty()) throw Error(ErrorCode::InvalidArgument, "empty AEC roster");
  for (const auto& aec : options.roster) aec.validate();
  require_range(options.min_duration_s, 3.0, 14.5, "min_duration_s");
  require_range(options.max_duration_s, options.min_duration_s, 14.5, "max_duration_s");
  const auto counts = scenario_counts(options.n_clips, options.mix);

  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create " + options.out_dir.string() + ": " + ec.message());

  std::vector<Scenario> scenarios;
  for (std::size_t s = 0; s < 3; ++s) scenarios.insert(scenarios.end(), counts[s], kAllScenarios[s]);
  Rng shuffle_rng(derive_seed(options.seed, 0));
  std::shuffle(scenarios.begin(), scenarios.end(), shuffle_rng);

  DatasetManifest manifest;
  manifest.mix = options.mix;
  manifest.base_dir = options.out_dir;
  manifest.entries.resize(options.n_clips);

  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(options.n_clips); ++ii) {
    try {
      const auto i = static_cast<std::size_t>(ii);
      const std::uint64_t clip_seed = derive_seed(options.seed, 1000 + i);
      Rng rng(clip_seed);
      std::uniform_real_distribution<double> u(0.0, 1.0);
      const auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };

      ScenarioSpec spec;
      spec.scenario = scenarios[i];
      spec.duration_s = uniform(options.min_duration_s, options.max_duration_s);
      spec.echo_delay_ms = uniform(10.0, 300.0);
      spec.echo_gain_db = uniform(-25.0, -3.0);
      spec.echo_nonlinearity = uniform(0.2, 1.0);
      spec.noise_floor_db = uniform(-70.0, -30.0);
      spec.seed = derive_seed(clip_seed, 1);
      const auto& aec = options.roster[i % options.roster.size()];

      const auto sim = simulate_scenario(spec);
      const auto processed = apply_synthetic_aec(sim.mic, sim.far_end, aec, sim.echo, derive_seed(clip_seed, 2));

      char id[32];
      std::snprintf(id, sizeof(id), "clip_%05zu", i);
      ManifestEntry e;
      e.id = id;
      e.near = e.id + "_near.wav";
      e.far = e.id + "_far.wav";
      e.enhanced = e.id + "_enh.wav";
      e.scenario = spec.scenario;
      e.oracle = oracle_mos(sim.near_speech, processed.residual_echo, processed.enhanced, spec.scenario, options.oracle);
      e.aec_id = aec.id;
      e.seed = clip_seed;
      write_wav(sim.mic, options.out_dir / e.near);
      write_wav(sim.far_end, options.out_dir / e.far);
      write_wav(processed.enhanced, options.out_dir / e.enhanced);
      manifest.entries[i] = std::move(e);
    } catch (...) {
#pragma omp critical(aeckit_build_dataset)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  save_manifest(manifest, options.out_dir / "manifest.json");
  return manifest;
}

}  // namespace aeckit::synth
