#pragma once

#include <vector>

#include "dmads/model.hpp"
#include "dmads/tensor.hpp"

namespace dmads {

inline constexpr double kLossEpsilon = 1e-7;

// Mean binary cross-entropy of sigmoid(logits) against gt in {0, 1}.
// Probabilities are clamped to [eps, 1 - eps]; clamped pixels pass no gradient.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& gt);

// Per sample 1 - (sum(p g) + eps) / (sum(p) + sum(g) - sum(p g) + eps) with
// p = sigmoid(logits), averaged over the batch.
template <typename T>
Tensor<T> soft_iou_loss(const Tensor<T>& logits, const Tensor<T>& gt);

// The selected loss with its value rounded to a fixed binary grid (2^-44 in
// double, 2^-16 in float); the gradient passes straight through. Keeps the
// deep-supervision aggregation exact.
template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& logits, const Tensor<T>& gt, nn::LossKind kind);

template <typename T>
struct LossBreakdown {
    Tensor<T> total;  // scalar, differentiable
    T final_loss = T(0);
    T deep_sum = T(0);  // sum of the deep-map losses, before theta
    std::vector<T> deep_losses;
};

// total = final + theta * sum(deep), summed left to right over pixel_loss
// terms. total - final == theta * deep_sum holds bitwise whenever theta is a
// power of two (other thetas round theta * deep_sum to the grid). Deep map
// count must be 0 or kDeepSupervisionTaps.
template <typename T>
LossBreakdown<T> deep_supervised_loss(const nn::ForwardOutput<T>& out, const Tensor<T>& gt, T theta,
                                      nn::LossKind kind);

}  // namespace dmads
