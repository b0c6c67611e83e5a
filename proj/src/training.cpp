#include "aeckit/training.hpp"

#include <algorithm>
#include <numeric>

#include "aeckit/error.hpp"

namespace aeckit {

ScoringRequest request_for(const ModelConfig& config, const ScoringRequest& req) {
  ScoringRequest out = req;
  if (!config.use_scenario_marker) out.scenario.reset();
  return out;
}

std::vector<EpochStats> train_model(Checkpoint& ckpt, std::span<const LabeledRequest> data,
                                    const TrainOptions& options) {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "no training examples");
  if (options.batch == 0) throw Error(ErrorCode::InvalidArgument, "batch must be at least 1");
  if (!(options.lr > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning rate must be positive");
  ckpt.config.validate();

  Rng order_rng(options.seed);
  Rng dropout_rng(options.seed ^ 0x5DEECE66Dull);
  Rng augment_rng(options.seed ^ 0xA5A5A5A5A5A5A5A5ull);

  const auto featurise = [&](const ScoringRequest& req) {
    return assemble_features(request_for(ckpt.config, req), ckpt.config);
  };

  std::vector<TrainExample> cached;
  if (!options.augment) {
    cached.resize(data.size());
    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(data.size()); ++i) {
      try {
        cached[i] = {featurise(data[i].request), data[i].target};
      } catch (...) {
#pragma omp critical(aeckit_train_features)
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochStats> history;
  std::vector<TrainExample> batch;
  for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    EpochStats stats{epoch, 0.0, 0};
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::size_t stop = std::min(order.size(), start + options.batch);
      batch.clear();
      for (std::size_t k = start; k < stop; ++k) {
        const auto& item = data[order[k]];
        if (options.augment)
          batch.push_back({featurise(augment_request(item.request, augment_rng)), item.target});
        else
          batch.push_back(cached[order[k]]);
      }
      stats.mean_loss += train_step(ckpt, batch, options.lr, dropout_rng, options.adam);
      stats.steps += 1;
    }
    stats.mean_loss /= static_cast<double>(stats.steps);
    history.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);
  }
  return history;
}

}  // namespace aeckit
