#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "aeckit/model.hpp"
#include "aeckit/pipeline.hpp"

namespace aeckit {

struct LabeledRequest {
  ScoringRequest request;
  MosPair target;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double mean_loss = 0.0;  // mean of the pre-update batch losses
  std::size_t steps = 0;
};

struct TrainOptions {
  std::size_t epochs = 10;
  double lr = 1e-3;
  std::size_t batch = 10;
  bool augment = false;
  std::uint64_t seed = 0;
  AdamHyper adam;
  std::function<void(const EpochStats&)> on_epoch;
};

// Mini-batch Adam over shuffled examples. Without augmentation the features
// are computed once and reused across epochs. Deterministic per seed.
std::vector<EpochStats> train_model(Checkpoint& ckpt, std::span<const LabeledRequest> data,
                                    const TrainOptions& options);

// Drops the scenario when the checkpoint was built without marker input.
ScoringRequest request_for(const ModelConfig& config, const ScoringRequest& req);

}  // namespace aeckit
