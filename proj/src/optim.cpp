#include "dmads/optim.hpp"

#include <cmath>
#include <string>

#include "dmads/error.hpp"

namespace dmads {

template <typename T>
Adam<T>::Adam(const nn::ParameterStore<T>& params, AdamOptions options) : params_(params), options_(options) {
    if (!(options_.lr > 0.0) || !(options_.beta1 >= 0.0 && options_.beta1 < 1.0) ||
        !(options_.beta2 >= 0.0 && options_.beta2 < 1.0) || !(options_.eps > 0.0)) {
        throw ConfigError("adam: lr and eps must be positive, betas must lie in [0, 1)");
    }
    for (const auto& entry : params_.entries()) {
        m_.emplace_back(entry.second.numel(), T(0));
        v_.emplace_back(entry.second.numel(), T(0));
    }
}

template <typename T>
void Adam<T>::step() {
    const auto& entries = params_.entries();
    if (entries.size() != m_.size()) {
        throw ConfigError("adam: parameter store changed after construction");
    }
    for (const auto& [name, tensor] : entries) {
        if (!tensor.has_grad()) {
            throw AutodiffError("adam: parameter '" + name + "' has no gradient");
        }
    }
    ++step_;
    const T b1 = static_cast<T>(options_.beta1);
    const T b2 = static_cast<T>(options_.beta2);
    const T eps = static_cast<T>(options_.eps);
    const T lr = static_cast<T>(options_.lr);
    const T c1 = static_cast<T>(1.0 - std::pow(options_.beta1, static_cast<double>(step_)));
    const T c2 = static_cast<T>(1.0 - std::pow(options_.beta2, static_cast<double>(step_)));
    for (std::size_t p = 0; p < entries.size(); ++p) {
        Tensor<T> param = entries[p].second;
        auto w = param.mutable_data();
        auto g = param.grad();
        std::vector<T>& m = m_[p];
        std::vector<T>& v = v_[p];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = b1 * m[i] + (T(1) - b1) * g[i];
            v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
            const T m_hat = m[i] / c1;
            const T v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }
}

template class Adam<float>;
template class Adam<double>;

EarlyStopping::EarlyStopping(ScheduleOptions options) : options_(options) {
    if (options_.max_epochs == 0 || options_.eval_every == 0) {
        throw ConfigError("schedule: max_epochs and eval_every must be positive");
    }
}

bool EarlyStopping::end_epoch(std::size_t epoch) {
    if (epoch != epoch_ + 1) {
        throw ConfigError("schedule: epoch " + std::to_string(epoch) + " does not follow " + std::to_string(epoch_));
    }
    epoch_ = epoch;
    ++since_best_;
    checked_ = false;
    return is_eval_epoch(epoch_);
}

bool EarlyStopping::report(double metric) {
    checked_ = true;
    if (metric > best_) {
        best_ = metric;
        best_epoch_ = epoch_;
        since_best_ = 0;
        return true;
    }
    return false;
}

bool EarlyStopping::should_stop() const {
    if (epoch_ >= options_.max_epochs) return true;
    return checked_ && since_best_ >= options_.patience;
}

}  // namespace dmads
