#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "aeckit/dsp.hpp"
#include "aeckit/tensor.hpp"

namespace aeckit {

using Rng = std::mt19937_64;

enum class FeatureMode { Stft257, Mel160 };

std::string to_string(FeatureMode mode);
FeatureMode feature_mode_from_string(const std::string& s);

// Network input: channels (near mic, far end, enhanced) x frames x bins.
using FeatureBlock = Tensor3<float>;

struct ModelConfig {
  std::size_t in_channels = 3;
  std::vector<std::size_t> conv_channels{32, 64, 64, 128};
  std::size_t kernel = 3;
  double leaky_slope = 0.01;
  double dropout_conv = 0.4;
  std::size_t gru_layers = 2;
  std::size_t gru_hidden = 64;
  bool gru_bidirectional = true;
  double gru_dropout = 0.2;
  std::vector<std::size_t> dense_sizes{64, 64};
  double dropout_dense = 0.4;
  std::size_t out_dim = 2;
  FeatureMode feature_mode = FeatureMode::Stft257;
  std::size_t n_mels = 160;
  dsp::StftConfig stft;
  bool use_scenario_marker = true;
  bool use_gru = true;
  std::uint64_t seed = 0;
  // Fixed affine map applied to log-power features before the first conv.
  double input_shift = -10.0;
  double input_scale = 8.0;

  // Throws InvalidConfig.
  void validate() const;
  std::size_t input_bins() const;
  // Frames must be a multiple of this many to survive the pooling stack (>= 1 step).
  std::size_t min_frames() const { return std::size_t{1} << conv_channels.size(); }
  std::size_t head_input_size() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

// Small configuration for finite-difference checks and fast tests:
// conv [2,2,2,4], GRU hidden 3, dense [8,8], 17-bin STFT (dft 32, hop 16).
ModelConfig tiny_config();

template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<T> values;
};

template <typename T>
using ParameterSet = std::vector<Parameter<T>>;

struct ParameterShape {
  std::string name;
  std::vector<std::size_t> shape;
};

// The fixed, ordered parameter set for a config:
//   conv{i}.weight [out,in,3,3], conv{i}.bias [out]                   i = 0..3
//   gru{l}.{fwd,bwd}.{w_ih [3H,in], w_hh [3H,H], b_ih [3H], b_hh [3H]} gate rows r|z|n
//   dense{j}.weight [out,in], dense{j}.bias [out]                     j = 0..len(dense_sizes)
// GRU entries are absent when use_gru is false.
std::vector<ParameterShape> parameter_shapes(const ModelConfig& cfg);

// conv/dense: Glorot uniform; GRU: uniform(+-1/sqrt(H)); biases zero.
template <typename T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed);

struct MosPair {
  double echo_mos = 5.0;
  double other_mos = 5.0;

  friend bool operator==(const MosPair&, const MosPair&) = default;
};

// 1 + 4 * sigmoid(logit), with the logit clamped to +-30 so the result stays
// strictly inside (1, 5) even in double precision.
double mos_activation(double logit);

template <typename T>
struct ForwardCache {
  struct ConvStage {
    Tensor3<T> pre;
    Tensor3<T> act;
    Tensor3<T> pooled;
    Tensor3<T> out;
    std::vector<std::uint32_t> argmax;
    std::vector<T> mask;  // empty when dropout is inactive
  };
  struct GruDirection {
    std::vector<T> r, z, n, hn, h;  // each [steps][hidden]
  };
  struct GruLayer {
    std::size_t in_dim = 0;
    std::vector<T> input;  // [steps][in_dim], after inter-layer dropout
    std::vector<T> mask;
    std::vector<GruDirection> dirs;
  };
  struct Dense {
    std::vector<T> in, pre, out, mask;
  };

  Tensor3<T> input;  // normalised features
  std::vector<ConvStage> stages;
  std::size_t steps = 0;
  std::size_t seq_dim = 0;
  std::vector<T> seq;                  // [steps][seq_dim], max over frequency
  std::vector<std::uint32_t> seq_arg;  // frequency index of each max
  std::vector<GruLayer> gru;
  std::vector<std::uint32_t> time_arg;  // no-GRU path: time index of each max
  std::vector<T> head_in;
  std::vector<Dense> dense;  // hidden layers
  std::vector<T> final_in;
  std::array<double, 2> logits{};
  std::array<double, 2> outputs{};
};

// Forward/backward for one example. Stateless apart from the config; the
// same instance may be used concurrently from several threads.
template <typename T>
class Network {
 public:
  explicit Network(ModelConfig cfg);

  const ModelConfig& config() const noexcept { return cfg_; }

  // Throws ShapeMismatch on a bad input. rng is required when training.
  std::array<double, 2> forward(const ParameterSet<T>& params, const Tensor3<T>& features, bool training,
                                Rng* rng, ForwardCache<T>& cache) const;

  // Accumulates parameter gradients for d(loss)/d(outputs) into grads.
  void backward(const ParameterSet<T>& params, const ForwardCache<T>& cache, std::array<double, 2> d_outputs,
                ParameterSet<T>& grads) const;

  ParameterSet<T> zero_gradients() const;

  // Sign pattern of every piecewise-linear decision taken in the forward pass
  // (LeakyReLU branches, pooling winners). Finite differences are only
  // meaningful between points that share a signature.
  std::vector<std::uint32_t> decision_signature(const ForwardCache<T>& cache) const;

 private:
  void check_params(const ParameterSet<T>& params) const;

  ModelConfig cfg_;
  std::vector<ParameterShape> shapes_;
  std::vector<std::size_t> conv_w_, conv_b_;
  struct GruIdx {
    std::size_t w_ih, w_hh, b_ih, b_hh;
  };
  std::vector<std::vector<GruIdx>> gru_idx_;
  std::vector<std::size_t> dense_w_, dense_b_;
};

extern template class Network<float>;
extern template class Network<double>;

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ModelConfig config;
  ParameterSet<float> params;
  AdamState adam;
};

Checkpoint init_model(const ModelConfig& config);

struct Prediction {
  MosPair mos;
  ForwardCache<float> cache;
};

// training == false disables dropout; rng may then be null.
Prediction forward(const Checkpoint& ckpt, const FeatureBlock& features, bool training = false, Rng* rng = nullptr);

struct TrainExample {
  FeatureBlock features;
  MosPair target;
};

// One Adam step on the mean squared error over the batch and both outputs.
// Returns the pre-update loss. Throws NonFiniteLoss before touching ckpt.
double train_step(Checkpoint& ckpt, std::span<const TrainExample> batch, double lr, Rng& rng,
                  const AdamHyper& hyper = {});

// Mean squared error with dropout disabled; no update.
double evaluate_loss(const Checkpoint& ckpt, std::span<const TrainExample> batch);

// Binary layout (all integers little-endian):
//   "AECKCKPT" | u32 format_version | u64 json_len | config JSON (keys sorted)
//   | u64 adam_step | u32 n_arrays | n_arrays x (u32 name_len | name | u64 count | f32[count])
//   | u32 CRC-32 of everything before it
// Arrays are the parameters in canonical order, then "adam.m.<name>" and
// "adam.v.<name>" for each parameter.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

struct GradCheckOptions {
  std::size_t frames = 48;  // bins come from the config
  std::size_t min_checked = 200;
  double step = 1e-4;
  double tolerance = 1e-4;
  // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 1;
};

struct GradCheckReport {
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double max_rel_err = 0.0;
  std::string worst_parameter;
  bool passed = false;

  friend bool operator==(const GradCheckReport&, const GradCheckReport&) = default;
};

// Central-difference check of Network<double>::backward with dropout off.
GradCheckReport gradient_check(const ModelConfig& config, const GradCheckOptions& options = {});

}  // namespace aeckit
