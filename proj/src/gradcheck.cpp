#include <algorithm>
#include <cmath>

#include "aeckit/error.hpp"
#include "aeckit/model.hpp"

namespace aeckit {

GradCheckReport gradient_check(const ModelConfig& config, const GradCheckOptions& options) {
  const Network<double> net(config);
  Rng rng(options.seed);

  auto params = init_parameters<double>(config, options.seed);
  // Non-zero biases so that every bias path carries a distinct gradient.
  std::uniform_real_distribution<double> bias_dist(-0.1, 0.1);
  for (auto& p : params)
    if (p.shape.size() == 1)
      for (auto& v : p.values) v = bias_dist(rng);

  Tensor3<double> input(config.in_channels, options.frames, config.input_bins());
  std::normal_distribution<double> feat(config.input_shift, config.input_scale);
  for (auto& v : input.data) v = feat(rng);
  std::uniform_real_distribution<double> target_dist(1.0, 5.0);
  const std::array<double, 2> target{target_dist(rng), target_dist(rng)};

  ForwardCache<double> cache;
  const auto loss_at = [&](std::vector<std::uint32_t>* sig) {
    const auto out = net.forward(params, input, false, nullptr, cache);
    if (sig != nullptr) *sig = net.decision_signature(cache);
    const double e0 = out[0] - target[0];
    const double e1 = out[1] - target[1];
    return (e0 * e0 + e1 * e1) / 2.0;
  };

  const auto out = net.forward(params, input, false, nullptr, cache);
  const auto base_sig = net.decision_signature(cache);
  auto grads = net.zero_gradients();
  net.backward(params, cache, {out[0] - target[0], out[1] - target[1]}, grads);

  GradCheckReport report;
  std::vector<std::uint32_t> sig_plus, sig_minus;
  const auto probe = [&](std::size_t pi, std::size_t j) {
    double& theta = params[pi].values[j];
    const double saved = theta;
    theta = saved + options.step;
    const double lp = loss_at(&sig_plus);
    theta = saved - options.step;
    const double lm = loss_at(&sig_minus);
    theta = saved;
    if (sig_plus != base_sig || sig_minus != base_sig) {
      ++report.skipped_kinks;
      return;
    }
    const double numeric = (lp - lm) / (2.0 * options.step);
    const double analytic = grads[pi].values[j];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), options.floor});
    const double rel = std::abs(analytic - numeric) / denom;
    ++report.checked;
    if (report.checked == 1 || rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_parameter = params[pi].name + "[" + std::to_string(j) + "]";
    }
  };

  // Stratified pass: every tensor gets sampled, then top up uniformly.
  const std::size_t per_tensor = std::max<std::size_t>(4, (options.min_checked + params.size() - 1) / params.size());
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::size_t n = params[pi].values.size();
    std::vector<std::size_t> idx(n);
    for (std::size_t j = 0; j < n; ++j) idx[j] = j;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(n, per_tensor));
    std::sort(idx.begin(), idx.end());
    for (std::size_t j : idx) probe(pi, j);
  }
  std::size_t total = 0;
  for (const auto& p : params) total += p.values.size();
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  for (std::size_t attempts = 0; report.checked < options.min_checked && attempts < 20 * options.min_checked;
       ++attempts) {
    std::size_t flat = pick(rng);
    std::size_t pi = 0;
    while (flat >= params[pi].values.size()) flat -= params[pi++].values.size();
    probe(pi, flat);
  }

  report.passed = report.checked >= options.min_checked && report.max_rel_err < options.tolerance;
  return report;
}

}  // namespace aeckit
