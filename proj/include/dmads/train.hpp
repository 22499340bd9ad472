#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dmads/dataset.hpp"
#include "dmads/metrics.hpp"
#include "dmads/model.hpp"
#include "dmads/optim.hpp"

namespace dmads {

// Without normalization layers the full-width network diverges at 1e-3.
inline constexpr double kDefaultLearningRate = 1e-4;

struct TrainOptions {
    AdamOptions adam{kDefaultLearningRate};
    ScheduleOptions schedule;
    std::size_t batch_size = 4;
    std::uint64_t seed = 0;          // batch order
    std::size_t max_steps = 0;       // 0: no cap
    double stop_at_dice = 0.0;       // > 0: stop after a validation reaching it
    std::filesystem::path log_path;         // JSON lines; empty: in memory only
    std::filesystem::path checkpoint_path;  // best model; empty: not saved
};

struct EpochSummary {
    std::size_t epoch = 0;
    std::size_t steps = 0;  // optimizer steps so far
    double loss = 0.0;      // mean total loss over the epoch's batches
    double final_loss = 0.0;
    double deep_loss = 0.0;
    bool validated = false;
    MetricsReport validation;
};

struct TrainResult {
    std::size_t epochs = 0;
    std::size_t steps = 0;
    double best_dice = 0.0;
    std::size_t best_epoch = 0;
    std::string stop_reason;
    std::vector<std::string> log;  // one JSON object per line
};

using EpochCallback = std::function<void(const EpochSummary&)>;

// Adam on the model's loss (kind and theta from its config) with early
// stopping on mean validation Dice. Throws NumericalError naming the epoch and
// step when a loss is not finite.
TrainResult train(nn::DmadsNet<float>& net, std::span<const Sample> train_set, std::span<const Sample> val_set,
                  const TrainOptions& options, const EpochCallback& on_epoch = {});

// Logits for a batch without recording a tape.
Tensor<float> predict_logits(const nn::DmadsNet<float>& net, const Tensor<float>& images);

// Per-sample metrics of the thresholded predictions.
MetricsReport evaluate(const nn::DmadsNet<float>& net, std::span<const Sample> samples);

}  // namespace dmads
