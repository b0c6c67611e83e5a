#include "aeckit/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "aeckit/error.hpp"
#include "aeckit/kernels.hpp"

namespace aeckit {
namespace {

namespace k = kernels::omp;

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

template <typename T>
void fill_dropout_mask(std::vector<T>& mask, std::size_t n, double p, Rng& rng) {
  mask.resize(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& m : mask) m = u(rng) < p ? T{} : keep_scale;
}

// y[o] = b[o] + sum_i W[o][i] x[i]
template <typename T>
void affine(const std::vector<T>& w, const std::vector<T>& b, const T* x, std::size_t in, T* y) {
  const std::size_t out = b.size();
  for (std::size_t o = 0; o < out; ++o) {
    const T* row = w.data() + o * in;
    T acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// dW += dy x^T, db += dy, dx += W^T dy (dx may be null).
template <typename T>
void affine_backward(const std::vector<T>& w, const T* x, std::size_t in, const T* dy, std::size_t out,
                     std::vector<T>& dw, std::vector<T>& db, T* dx) {
  for (std::size_t o = 0; o < out; ++o) {
    const T g = dy[o];
    db[o] += g;
    T* drow = dw.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) drow[i] += g * x[i];
  }
  if (dx == nullptr) return;
  for (std::size_t o = 0; o < out; ++o) {
    const T g = dy[o];
    const T* row = w.data() + o * in;
    for (std::size_t i = 0; i < in; ++i) dx[i] += row[i] * g;
  }
}

constexpr double kLogitClamp = 30.0;

}  // namespace

std::string to_string(FeatureMode mode) { return mode == FeatureMode::Stft257 ? "stft257" : "mel160"; }

FeatureMode feature_mode_from_string(const std::string& s) {
  if (s == "stft257") return FeatureMode::Stft257;
  if (s == "mel160") return FeatureMode::Mel160;
  throw Error(ErrorCode::InvalidConfig, "unknown feature_mode '" + s + "'");
}

void ModelConfig::validate() const {
  const auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidConfig, why); };
  if (in_channels != 3) bad("in_channels must be 3");
  if (conv_channels.size() != 4) bad("conv_channels must list 4 stages");
  if (std::any_of(conv_channels.begin(), conv_channels.end(), [](auto c) { return c == 0; }))
    bad("conv channel counts must be positive");
  if (kernel != 3) bad("only 3x3 kernels are supported");
  if (out_dim != 2) bad("out_dim must be 2");
  if (use_gru && (gru_layers == 0 || gru_hidden == 0)) bad("GRU needs at least one layer and hidden unit");
  if (std::any_of(dense_sizes.begin(), dense_sizes.end(), [](auto c) { return c == 0; }))
    bad("dense sizes must be positive");
  for (double p : {dropout_conv, gru_dropout, dropout_dense})
    if (!(p >= 0.0 && p < 1.0)) bad("dropout rates must be in [0, 1)");
  if (!(leaky_slope >= 0.0 && leaky_slope <= 1.0)) bad("leaky_slope must be in [0, 1]");
  if (!(input_scale > 0.0) || !std::isfinite(input_shift)) bad("input normalisation must be finite and positive");
  stft.validate();
  if (feature_mode == FeatureMode::Mel160 && (n_mels == 0 || n_mels > stft.n_bins()))
    bad("n_mels must be in [1, dft_size/2+1]");
  if (input_bins() < min_frames()) bad("too few frequency bins for the pooling stack");
}

std::size_t ModelConfig::input_bins() const {
  return feature_mode == FeatureMode::Stft257 ? stft.n_bins() : n_mels;
}

std::size_t ModelConfig::head_input_size() const {
  if (!use_gru) return conv_channels.back();
  return gru_hidden * (gru_bidirectional ? 2 : 1);
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{
      {"in_channels", c.in_channels},
      {"conv_channels", c.conv_channels},
      {"kernel", c.kernel},
      {"leaky_slope", c.leaky_slope},
      {"dropout_conv", c.dropout_conv},
      {"gru_layers", c.gru_layers},
      {"gru_hidden", c.gru_hidden},
      {"gru_bidirectional", c.gru_bidirectional},
      {"gru_dropout", c.gru_dropout},
      {"dense_sizes", c.dense_sizes},
      {"dropout_dense", c.dropout_dense},
      {"out_dim", c.out_dim},
      {"feature_mode", to_string(c.feature_mode)},
      {"n_mels", c.n_mels},
      {"stft", {{"dft_size", c.stft.dft_size}, {"hop", c.stft.hop}, {"window", "hann"}, {"epsilon", c.stft.epsilon}}},
      {"use_scenario_marker", c.use_scenario_marker},
      {"use_gru", c.use_gru},
      {"seed", c.seed},
      {"input_shift", c.input_shift},
      {"input_scale", c.input_scale},
  };
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  // Partial objects override defaults key by key; unknown keys are rejected.
  static const std::vector<std::string> known = {
      "in_channels", "conv_channels", "kernel", "leaky_slope", "dropout_conv", "gru_layers", "gru_hidden",
      "gru_bidirectional", "gru_dropout", "dense_sizes", "dropout_dense", "out_dim", "feature_mode",
      "n_mels", "stft", "use_scenario_marker", "use_gru", "seed", "input_shift", "input_scale"};
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, "model config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorCode::InvalidConfig, "unknown model config key '" + key + "'");
  try {
    const auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) j.at(key).get_to(field);
    };
    get("in_channels", c.in_channels);
    get("conv_channels", c.conv_channels);
    get("kernel", c.kernel);
    get("leaky_slope", c.leaky_slope);
    get("dropout_conv", c.dropout_conv);
    get("gru_layers", c.gru_layers);
    get("gru_hidden", c.gru_hidden);
    get("gru_bidirectional", c.gru_bidirectional);
    get("gru_dropout", c.gru_dropout);
    get("dense_sizes", c.dense_sizes);
    get("dropout_dense", c.dropout_dense);
    get("out_dim", c.out_dim);
    if (j.contains("feature_mode")) c.feature_mode = feature_mode_from_string(j.at("feature_mode").get<std::string>());
    get("n_mels", c.n_mels);
    if (j.contains("stft")) {
      const auto& s = j.at("stft");
      if (s.contains("dft_size")) s.at("dft_size").get_to(c.stft.dft_size);
      if (s.contains("hop")) s.at("hop").get_to(c.stft.hop);
      if (s.contains("epsilon")) s.at("epsilon").get_to(c.stft.epsilon);
      if (s.contains("window") && s.at("window").get<std::string>() != "hann")
        throw Error(ErrorCode::InvalidConfig, "only the hann window is supported");
    }
    get("use_scenario_marker", c.use_scenario_marker);
    get("use_gru", c.use_gru);
    get("seed", c.seed);
    get("input_shift", c.input_shift);
    get("input_scale", c.input_scale);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, e.what());
  }
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.conv_channels = {2, 2, 2, 4};
  c.gru_hidden = 3;
  c.dense_sizes = {8, 8};
  c.stft.dft_size = 32;
  c.stft.hop = 16;
  return c;
}

std::vector<ParameterShape> parameter_shapes(const ModelConfig& cfg) {
  std::vector<ParameterShape> out;
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
    const std::size_t oc = cfg.conv_channels[i];
    out.push_back({"conv" + std::to_string(i) + ".weight", {oc, in, 3, 3}});
    out.push_back({"conv" + std::to_string(i) + ".bias", {oc}});
    in = oc;
  }
  if (cfg.use_gru) {
    const std::size_t h = cfg.gru_hidden;
    const std::size_t dirs = cfg.gru_bidirectional ? 2 : 1;
    std::size_t gin = cfg.conv_channels.back();
    for (std::size_t l = 0; l < cfg.gru_layers; ++l) {
      for (std::size_t d = 0; d < dirs; ++d) {
        const std::string p = "gru" + std::to_string(l) + (d == 0 ? ".fwd." : ".bwd.");
        out.push_back({p + "w_ih", {3 * h, gin}});
        out.push_back({p + "w_hh", {3 * h, h}});
        out.push_back({p + "b_ih", {3 * h}});
        out.push_back({p + "b_hh", {3 * h}});
      }
      gin = h * dirs;
    }
  }
  std::size_t din = cfg.head_input_size();
  std::vector<std::size_t> sizes = cfg.dense_sizes;
  sizes.push_back(cfg.out_dim);
  for (std::size_t j = 0; j < sizes.size(); ++j) {
    out.push_back({"dense" + std::to_string(j) + ".weight", {sizes[j], din}});
    out.push_back({"dense" + std::to_string(j) + ".bias", {sizes[j]}});
    din = sizes[j];
  }
  return out;
}

template <typename T>
ParameterSet<T> init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterSet<T> params;
  for (const auto& s : parameter_shapes(cfg)) {
    Parameter<T> p{s.name, s.shape, {}};
    const std::size_t n = std::accumulate(s.shape.begin(), s.shape.end(), std::size_t{1}, std::multiplies<>());
    p.values.assign(n, T{});
    const bool is_bias = s.shape.size() == 1;
    if (!is_bias) {
      double bound = 0.0;
      if (s.name.rfind("gru", 0) == 0) {
        bound = 1.0 / std::sqrt(static_cast<double>(cfg.gru_hidden));
      } else if (s.name.rfind("conv", 0) == 0) {
        const double fan_in = static_cast<double>(s.shape[1] * 9);
        const double fan_out = static_cast<double>(s.shape[0] * 9);
        bound = std::sqrt(6.0 / (fan_in + fan_out));
      } else {
        bound = std::sqrt(6.0 / static_cast<double>(s.shape[0] + s.shape[1]));
      }
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : p.values) v = static_cast<T>(u(rng));
    }
    params.push_back(std::move(p));
  }
  return params;
}

template ParameterSet<float> init_parameters<float>(const ModelConfig&, std::uint64_t);
template ParameterSet<double> init_parameters<double>(const ModelConfig&, std::uint64_t);

double mos_activation(double logit) {
  const double z = std::clamp(logit, -kLogitClamp, kLogitClamp);
  return 1.0 + 4.0 / (1.0 + std::exp(-z));
}

template <typename T>
Network<T>::Network(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  shapes_ = parameter_shapes(cfg_);
  std::size_t idx = 0;
  for (std::size_t i = 0; i < cfg_.conv_channels.size(); ++i) {
    conv_w_.push_back(idx++);
    conv_b_.push_back(idx++);
  }
  if (cfg_.use_gru) {
    const std::size_t dirs = cfg_.gru_bidirectional ? 2 : 1;
    for (std::size_t l = 0; l < cfg_.gru_layers; ++l) {
      std::vector<GruIdx> layer;
      for (std::size_t d = 0; d < dirs; ++d) {
        layer.push_back({idx, idx + 1, idx + 2, idx + 3});
        idx += 4;
      }
      gru_idx_.push_back(layer);
    }
  }
  for (std::size_t j = 0; j <= cfg_.dense_sizes.size(); ++j) {
    dense_w_.push_back(idx++);
    dense_b_.push_back(idx++);
  }
}

template <typename T>
void Network<T>::check_params(const ParameterSet<T>& params) const {
  if (params.size() != shapes_.size()) throw Error(ErrorCode::ShapeMismatch, "parameter count does not match config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != shapes_[i].name || params[i].shape != shapes_[i].shape)
      throw Error(ErrorCode::ShapeMismatch, "parameter '" + params[i].name + "' does not match config");
  }
}

template <typename T>
ParameterSet<T> Network<T>::zero_gradients() const {
  ParameterSet<T> g;
  for (const auto& s : shapes_) {
    const std::size_t n = std::accumulate(s.shape.begin(), s.shape.end(), std::size_t{1}, std::multiplies<>());
    g.push_back({s.name, s.shape, std::vector<T>(n, T{})});
  }
  return g;
}

template <typename T>
std::array<double, 2> Network<T>::forward(const ParameterSet<T>& params, const Tensor3<T>& features,
                                          bool training, Rng* rng, ForwardCache<T>& cache) const {
  check_params(params);
  if (features.c != cfg_.in_channels || features.w != cfg_.input_bins())
    throw Error(ErrorCode::ShapeMismatch, "features must be " + std::to_string(cfg_.in_channels) + " x frames x " +
                                              std::to_string(cfg_.input_bins()));
  if (features.h < cfg_.min_frames())
    throw Error(ErrorCode::ShapeMismatch, "need at least " + std::to_string(cfg_.min_frames()) + " frames");
  if (training && rng == nullptr) throw Error(ErrorCode::InvalidArgument, "training forward needs an rng");

  const T slope = static_cast<T>(cfg_.leaky_slope);
  const T shift = static_cast<T>(cfg_.input_shift);
  const T inv_scale = static_cast<T>(1.0 / cfg_.input_scale);

  cache = ForwardCache<T>{};
  cache.input = features;
  for (auto& v : cache.input.data) v = (v - shift) * inv_scale;

  // Conv stack.
  const Tensor3<T>* x = &cache.input;
  cache.stages.resize(cfg_.conv_channels.size());
  for (std::size_t i = 0; i < cache.stages.size(); ++i) {
    auto& st = cache.stages[i];
    k::conv3x3_forward(*x, params[conv_w_[i]].values, params[conv_b_[i]].values, st.pre);
    k::leaky_relu_forward(st.pre, slope, st.act);
    k::maxpool2x2_forward(st.act, st.pooled, st.argmax);
    st.out = st.pooled;
    if (training && cfg_.dropout_conv > 0.0) {
      fill_dropout_mask(st.mask, st.out.size(), cfg_.dropout_conv, *rng);
      for (std::size_t j = 0; j < st.out.size(); ++j) st.out.data[j] *= st.mask[j];
    }
    x = &st.out;
  }

  // Max over frequency; time stays as the sequence axis.
  const Tensor3<T>& last = *x;
  cache.steps = last.h;
  cache.seq_dim = last.c;
  cache.seq.assign(cache.steps * cache.seq_dim, T{});
  cache.seq_arg.assign(cache.steps * cache.seq_dim, 0);
  for (std::size_t t = 0; t < cache.steps; ++t) {
    for (std::size_t c = 0; c < cache.seq_dim; ++c) {
      const T* row = last.row(c, t);
      std::size_t best = 0;
      for (std::size_t f = 1; f < last.w; ++f)
        if (row[f] > row[best]) best = f;
      cache.seq[t * cache.seq_dim + c] = row[best];
      cache.seq_arg[t * cache.seq_dim + c] = static_cast<std::uint32_t>(best);
    }
  }

  const std::size_t steps = cache.steps;
  if (cfg_.use_gru) {
    const std::size_t H = cfg_.gru_hidden;
    const std::size_t dirs = cfg_.gru_bidirectional ? 2 : 1;
    std::vector<T> layer_in = cache.seq;
    std::size_t in_dim = cache.seq_dim;
    cache.gru.resize(cfg_.gru_layers);
    for (std::size_t l = 0; l < cfg_.gru_layers; ++l) {
      auto& gl = cache.gru[l];
      gl.in_dim = in_dim;
      gl.input = std::move(layer_in);
      if (l > 0 && training && cfg_.gru_dropout > 0.0) {
        fill_dropout_mask(gl.mask, gl.input.size(), cfg_.gru_dropout, *rng);
        for (std::size_t j = 0; j < gl.input.size(); ++j) gl.input[j] *= gl.mask[j];
      }
      gl.dirs.resize(dirs);
      std::vector<T> xw(steps * 3 * H);
      std::vector<T> hw(3 * H);
      for (std::size_t d = 0; d < dirs; ++d) {
        const auto& idx = gru_idx_[l][d];
        const auto& w_ih = params[idx.w_ih].values;
        const auto& w_hh = params[idx.w_hh].values;
        const auto& b_ih = params[idx.b_ih].values;
        const auto& b_hh = params[idx.b_hh].values;
        auto& gd = gl.dirs[d];
        for (auto* v : {&gd.r, &gd.z, &gd.n, &gd.hn, &gd.h}) v->assign(steps * H, T{});
        for (std::size_t t = 0; t < steps; ++t)
          affine(w_ih, b_ih, gl.input.data() + t * in_dim, in_dim, xw.data() + t * 3 * H);
        const std::vector<T> zeros(H, T{});
        for (std::size_t s = 0; s < steps; ++s) {
          const std::size_t t = d == 0 ? s : steps - 1 - s;
          const T* h_prev = s == 0 ? zeros.data() : gd.h.data() + (d == 0 ? t - 1 : t + 1) * H;
          affine(w_hh, b_hh, h_prev, H, hw.data());
          const T* a = xw.data() + t * 3 * H;
          for (std::size_t j = 0; j < H; ++j) {
            const T r = sigmoid(a[j] + hw[j]);
            const T z = sigmoid(a[H + j] + hw[H + j]);
            const T hn = hw[2 * H + j];
            const T n = std::tanh(a[2 * H + j] + r * hn);
            gd.r[t * H + j] = r;
            gd.z[t * H + j] = z;
            gd.hn[t * H + j] = hn;
            gd.n[t * H + j] = n;
            gd.h[t * H + j] = (T(1) - z) * n + z * h_prev[j];
          }
        }
      }
      in_dim = H * dirs;
      layer_in.assign(steps * in_dim, T{});
      for (std::size_t t = 0; t < steps; ++t)
        for (std::size_t d = 0; d < dirs; ++d)
          std::copy_n(gl.dirs[d].h.data() + t * H, H, layer_in.data() + t * in_dim + d * H);
    }
    const auto& top = cache.gru.back();
    cache.head_in.assign(cfg_.head_input_size(), T{});
    std::copy_n(top.dirs[0].h.data() + (steps - 1) * H, H, cache.head_in.data());
    if (dirs == 2) std::copy_n(top.dirs[1].h.data(), H, cache.head_in.data() + H);
  } else {
    cache.head_in.assign(cache.seq_dim, T{});
    cache.time_arg.assign(cache.seq_dim, 0);
    for (std::size_t c = 0; c < cache.seq_dim; ++c) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < steps; ++t)
        if (cache.seq[t * cache.seq_dim + c] > cache.seq[best * cache.seq_dim + c]) best = t;
      cache.head_in[c] = cache.seq[best * cache.seq_dim + c];
      cache.time_arg[c] = static_cast<std::uint32_t>(best);
    }
  }

  // Dense head.
  std::vector<T> h = cache.head_in;
  cache.dense.resize(cfg_.dense_sizes.size());
  for (std::size_t j = 0; j < cfg_.dense_sizes.size(); ++j) {
    auto& dl = cache.dense[j];
    dl.in = h;
    dl.pre.assign(cfg_.dense_sizes[j], T{});
    affine(params[dense_w_[j]].values, params[dense_b_[j]].values, dl.in.data(), dl.in.size(), dl.pre.data());
    dl.out.resize(dl.pre.size());
    for (std::size_t o = 0; o < dl.pre.size(); ++o) dl.out[o] = dl.pre[o] > T{} ? dl.pre[o] : slope * dl.pre[o];
    if (training && cfg_.dropout_dense > 0.0) {
      fill_dropout_mask(dl.mask, dl.out.size(), cfg_.dropout_dense, *rng);
      for (std::size_t o = 0; o < dl.out.size(); ++o) dl.out[o] *= dl.mask[o];
    }
    h = dl.out;
  }
  cache.final_in = h;
  std::array<T, 2> logits{};
  const std::size_t fj = cfg_.dense_sizes.size();
  affine(params[dense_w_[fj]].values, params[dense_b_[fj]].values, cache.final_in.data(), cache.final_in.size(),
         logits.data());
  for (std::size_t o = 0; o < 2; ++o) {
    cache.logits[o] = static_cast<double>(logits[o]);
    cache.outputs[o] = mos_activation(cache.logits[o]);
  }
  return cache.outputs;
}

template <typename T>
void Network<T>::backward(const ParameterSet<T>& params, const ForwardCache<T>& cache,
                          std::array<double, 2> d_outputs, ParameterSet<T>& grads) const {
  check_params(params);
  check_params(grads);
  const T slope = static_cast<T>(cfg_.leaky_slope);

  // Output activation.
  std::array<T, 2> d_logits{};
  for (std::size_t o = 0; o < 2; ++o) {
    const double z = cache.logits[o];
    if (std::abs(z) >= kLogitClamp) continue;
    const double s = 1.0 / (1.0 + std::exp(-z));
    d_logits[o] = static_cast<T>(d_outputs[o] * 4.0 * s * (1.0 - s));
  }

  const std::size_t fj = cfg_.dense_sizes.size();
  std::vector<T> dh(cache.final_in.size(), T{});
  affine_backward(params[dense_w_[fj]].values, cache.final_in.data(), cache.final_in.size(), d_logits.data(), 2,
                  grads[dense_w_[fj]].values, grads[dense_b_[fj]].values, dh.data());
  for (std::size_t jj = fj; jj-- > 0;) {
    const auto& dl = cache.dense[jj];
    std::vector<T> dpre(dl.pre.size());
    for (std::size_t o = 0; o < dpre.size(); ++o) {
      T g = dh[o];
      if (!dl.mask.empty()) g *= dl.mask[o];
      dpre[o] = dl.pre[o] > T{} ? g : slope * g;
    }
    std::vector<T> din(dl.in.size(), T{});
    affine_backward(params[dense_w_[jj]].values, dl.in.data(), dl.in.size(), dpre.data(), dpre.size(),
                    grads[dense_w_[jj]].values, grads[dense_b_[jj]].values, din.data());
    dh = std::move(din);
  }

  const std::size_t steps = cache.steps;
  std::vector<T> dseq(steps * cache.seq_dim, T{});
  if (cfg_.use_gru) {
    const std::size_t H = cfg_.gru_hidden;
    const std::size_t dirs = cfg_.gru_bidirectional ? 2 : 1;
    // Gradient w.r.t. the output sequence of the current layer, [steps][H*dirs].
    std::vector<T> dY(steps * H * dirs, T{});
    for (std::size_t j = 0; j < H; ++j) dY[(steps - 1) * H * dirs + j] += dh[j];
    if (dirs == 2)
      for (std::size_t j = 0; j < H; ++j) dY[H + j] += dh[H + j];

    for (std::size_t l = cfg_.gru_layers; l-- > 0;) {
      const auto& gl = cache.gru[l];
      const std::size_t in_dim = gl.in_dim;
      std::vector<T> dX(steps * in_dim, T{});
      for (std::size_t d = 0; d < dirs; ++d) {
        const auto& idx = gru_idx_[l][d];
        const auto& w_ih = params[idx.w_ih].values;
        const auto& w_hh = params[idx.w_hh].values;
        auto& g_wih = grads[idx.w_ih].values;
        auto& g_whh = grads[idx.w_hh].values;
        auto& g_bih = grads[idx.b_ih].values;
        auto& g_bhh = grads[idx.b_hh].values;
        const auto& gd = gl.dirs[d];
        const std::vector<T> zeros(H, T{});
        std::vector<T> dh_next(H, T{});
        std::vector<T> da(3 * H), dhh(3 * H), dh_prev(H);
        // Reverse of the forward visiting order.
        for (std::size_t s = steps; s-- > 0;) {
          const std::size_t t = d == 0 ? s : steps - 1 - s;
          const T* h_prev = s == 0 ? zeros.data() : gd.h.data() + (d == 0 ? t - 1 : t + 1) * H;
          for (std::size_t j = 0; j < H; ++j) {
            const T g = dY[t * H * dirs + d * H + j] + dh_next[j];
            const T r = gd.r[t * H + j], z = gd.z[t * H + j], n = gd.n[t * H + j], hn = gd.hn[t * H + j];
            const T dn = g * (T(1) - z);
            const T dz = g * (h_prev[j] - n);
            const T dan = dn * (T(1) - n * n);
            const T daz = dz * z * (T(1) - z);
            const T dar = dan * hn * r * (T(1) - r);
            da[j] = dar;
            da[H + j] = daz;
            da[2 * H + j] = dan;
            dhh[j] = dar;
            dhh[H + j] = daz;
            dhh[2 * H + j] = dan * r;
            dh_prev[j] = g * z;
          }
          affine_backward(w_ih, gl.input.data() + t * in_dim, in_dim, da.data(), 3 * H, g_wih, g_bih,
                          dX.data() + t * in_dim);
          affine_backward(w_hh, h_prev, H, dhh.data(), 3 * H, g_whh, g_bhh, dh_prev.data());
          dh_next = dh_prev;
        }
      }
      if (l > 0) {
        if (!gl.mask.empty())
          for (std::size_t j = 0; j < dX.size(); ++j) dX[j] *= gl.mask[j];
        dY = std::move(dX);
      } else {
        dseq = std::move(dX);
      }
    }
  } else {
    for (std::size_t c = 0; c < cache.seq_dim; ++c) dseq[cache.time_arg[c] * cache.seq_dim + c] += dh[c];
  }

  // Back through the frequency max into the last conv stage output.
  const auto& last_stage = cache.stages.back();
  Tensor3<T> dout(last_stage.out.c, last_stage.out.h, last_stage.out.w);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t c = 0; c < cache.seq_dim; ++c)
      dout.at(c, t, cache.seq_arg[t * cache.seq_dim + c]) += dseq[t * cache.seq_dim + c];

  Tensor3<T> dact, dprev;
  for (std::size_t i = cache.stages.size(); i-- > 0;) {
    const auto& st = cache.stages[i];
    if (!st.mask.empty())
      for (std::size_t j = 0; j < dout.size(); ++j) dout.data[j] *= st.mask[j];
    dact = Tensor3<T>(st.act.c, st.act.h, st.act.w);
    k::maxpool2x2_backward(dout, st.argmax, dact);
    k::leaky_relu_backward(st.pre, slope, dact);
    const Tensor3<T>& input = i == 0 ? cache.input : cache.stages[i - 1].out;
    k::conv3x3_backward_params(input, dact, grads[conv_w_[i]].values, grads[conv_b_[i]].values);
    if (i > 0) {
      k::conv3x3_backward_input(dact, params[conv_w_[i]].values, dprev);
      dout = std::move(dprev);
      dprev = Tensor3<T>{};
    }
  }
}

template <typename T>
std::vector<std::uint32_t> Network<T>::decision_signature(const ForwardCache<T>& cache) const {
  std::vector<std::uint32_t> sig;
  for (const auto& st : cache.stages) {
    for (const T v : st.pre.data) sig.push_back(v > T{} ? 1u : 0u);
    sig.insert(sig.end(), st.argmax.begin(), st.argmax.end());
  }
  sig.insert(sig.end(), cache.seq_arg.begin(), cache.seq_arg.end());
  sig.insert(sig.end(), cache.time_arg.begin(), cache.time_arg.end());
  for (const auto& dl : cache.dense)
    for (const T v : dl.pre) sig.push_back(v > T{} ? 1u : 0u);
  for (const double z : cache.logits) sig.push_back(std::abs(z) >= kLogitClamp ? 1u : 0u);
  return sig;
}

template class Network<float>;
template class Network<double>;

Checkpoint init_model(const ModelConfig& config) {
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.params = init_parameters<float>(config, config.seed);
  ckpt.adam.step = 0;
  for (const auto& p : ckpt.params) {
    ckpt.adam.m.emplace_back(p.values.size(), 0.0f);
    ckpt.adam.v.emplace_back(p.values.size(), 0.0f);
  }
  return ckpt;
}

Prediction forward(const Checkpoint& ckpt, const FeatureBlock& features, bool training, Rng* rng) {
  const Network<float> net(ckpt.config);
  Prediction p;
  const auto out = net.forward(ckpt.params, features, training, rng, p.cache);
  p.mos = {out[0], out[1]};
  return p;
}

namespace {

void check_targets(std::span<const TrainExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::InvalidArgument, "empty batch");
  for (const auto& ex : batch) {
    for (double t : {ex.target.echo_mos, ex.target.other_mos})
      if (!(t >= 1.0 && t <= 5.0)) throw Error(ErrorCode::RatingOutOfRange, "training target outside [1, 5]");
  }
}

}  // namespace

double train_step(Checkpoint& ckpt, std::span<const TrainExample> batch, double lr, Rng& rng,
                  const AdamHyper& hyper) {
  check_targets(batch);
  const Network<float> net(ckpt.config);
  auto grads = net.zero_gradients();
  const double scale = 1.0 / (2.0 * static_cast<double>(batch.size()));
  double loss = 0.0;
  ForwardCache<float> cache;
  for (const auto& ex : batch) {
    const auto out = net.forward(ckpt.params, ex.features, true, &rng, cache);
    const double e0 = out[0] - ex.target.echo_mos;
    const double e1 = out[1] - ex.target.other_mos;
    loss += (e0 * e0 + e1 * e1) * scale;
    net.backward(ckpt.params, cache, {2.0 * e0 * scale, 2.0 * e1 * scale}, grads);
  }
  if (!std::isfinite(loss)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");

  auto& adam = ckpt.adam;
  adam.step += 1;
  const double t = static_cast<double>(adam.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  const auto b1 = static_cast<float>(hyper.beta1);
  const auto b2 = static_cast<float>(hyper.beta2);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    auto& w = ckpt.params[i].values;
    auto& m = adam.m[i];
    auto& v = adam.v[i];
    const auto& g = grads[i].values;
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + hyper.eps));
    }
  }
  return loss;
}

double evaluate_loss(const Checkpoint& ckpt, std::span<const TrainExample> batch) {
  check_targets(batch);
  const Network<float> net(ckpt.config);
  ForwardCache<float> cache;
  double loss = 0.0;
  for (const auto& ex : batch) {
    const auto out = net.forward(ckpt.params, ex.features, false, nullptr, cache);
    const double e0 = out[0] - ex.target.echo_mos;
    const double e1 = out[1] - ex.target.other_mos;
    loss += e0 * e0 + e1 * e1;
  }
  return loss / (2.0 * static_cast<double>(batch.size()));
}

}  // namespace aeckit
