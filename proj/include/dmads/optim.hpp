#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "dmads/nn.hpp"

namespace dmads {

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over every tensor of a parameter store. Moment buffers
// follow the store's registration order.
template <typename T>
class Adam {
public:
    Adam(const nn::ParameterStore<T>& params, AdamOptions options = {});

    // Applies one update from the accumulated gradients. Throws AutodiffError
    // naming the first parameter without a gradient.
    void step();

    std::uint64_t steps() const { return step_; }
    const AdamOptions& options() const { return options_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return v_; }

private:
    const nn::ParameterStore<T>& params_;
    AdamOptions options_;
    std::uint64_t step_ = 0;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> v_;
};

struct ScheduleOptions {
    std::size_t max_epochs = 400;
    std::size_t eval_every = 10;
    std::size_t patience = 50;
};

// Epoch bookkeeping for validation and early stopping. Validation runs after
// every eval_every-th epoch; training stops at the first check where
// epochs_since_best() >= patience, or after max_epochs.
class EarlyStopping {
public:
    explicit EarlyStopping(ScheduleOptions options = {});

    bool is_eval_epoch(std::size_t epoch) const { return epoch % options_.eval_every == 0; }

    // Call once per finished epoch (1-based, consecutive). Returns true when a
    // validation result is due for this epoch.
    bool end_epoch(std::size_t epoch);

    // Records the validation metric for the epoch just ended. Returns true
    // when it improved on the best so far.
    bool report(double metric);

    bool should_stop() const;

    std::size_t epoch() const { return epoch_; }
    double best() const { return best_; }
    std::size_t best_epoch() const { return best_epoch_; }
    std::size_t epochs_since_best() const { return since_best_; }
    const ScheduleOptions& options() const { return options_; }

private:
    ScheduleOptions options_;
    std::size_t epoch_ = 0;
    double best_ = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    bool checked_ = false;
};

}  // namespace dmads
