#include "dmads/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dmads/error.hpp"
#include "dmads/tape.hpp"

namespace dmads {

namespace {

template <typename T>
void check_pair(const char* op, const Tensor<T>& logits, const Tensor<T>& gt) {
    if (!(logits.shape() == gt.shape())) {
        throw ShapeError(std::string(op) + ": logits " + logits.shape().str() + " vs ground truth " +
                         gt.shape().str());
    }
    if (logits.numel() == 0) {
        throw ShapeError(std::string(op) + ": empty input");
    }
    for (T g : gt.data()) {
        if (g != T(0) && g != T(1)) {
            throw DataError(std::string(op) + ": ground truth holds a value outside {0, 1}");
        }
    }
}

template <typename T>
double sigmoid_of(T z) {
    const double v = static_cast<double>(z);
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

// sigmoid'(z) = sigmoid(z) sigmoid(-z), without the cancellation in p (1 - p).
template <typename T>
double sigmoid_slope(T z) {
    return sigmoid_of(z) * sigmoid_of(-z);
}

template <typename T>
Tape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr) return nullptr;
    for (const Tensor<T>* t : inputs) {
        if (t->requires_grad()) return tape;
    }
    return nullptr;
}

// Loss values live on a 2^-e grid. Totals stay below 2^7, so sums of grid
// values (and halves of them) are exact in both precisions.
template <typename T>
constexpr int grid_exponent() {
    return sizeof(T) == sizeof(double) ? 44 : 16;
}

template <typename T>
T snap(double v, int exponent) {
    return static_cast<T>(std::ldexp(std::nearbyint(std::ldexp(v, exponent)), -exponent));
}

}  // namespace

template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& gt) {
    check_pair("bce", logits, gt);
    const std::size_t count = logits.numel();
    auto z = logits.data();
    auto g = gt.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        const double p = std::clamp(sigmoid_of(z[i]), kLossEpsilon, 1.0 - kLossEpsilon);
        acc -= g[i] == T(1) ? std::log(p) : std::log(1.0 - p);
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
    if (Tape<T>* tape = recording_tape<T>({&logits})) {
        out.set_requires_grad(true);
        tape->record("bce", [logits, gt, out]() {
            if (!out.has_grad()) return;
            const double scale = static_cast<double>(out.grad()[0]) / static_cast<double>(logits.numel());
            auto z = logits.data();
            auto g = gt.data();
            auto dz = logits.grad_buffer();
            for (std::size_t i = 0; i < dz.size(); ++i) {
                const double p = sigmoid_of(z[i]);
                if (p < kLossEpsilon || p > 1.0 - kLossEpsilon) continue;
                dz[i] += static_cast<T>(scale * (p - static_cast<double>(g[i])));
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> soft_iou_loss(const Tensor<T>& logits, const Tensor<T>& gt) {
    check_pair("soft_iou", logits, gt);
    const Shape& s = logits.shape();
    const std::size_t per = s.c * s.plane();
    auto z = logits.data();
    auto g = gt.data();
    std::vector<double> inter(s.n, 0.0), uni(s.n, 0.0);
    double acc = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
        double pg = 0.0, sp = 0.0, sg = 0.0;
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
            const double p = sigmoid_of(z[i]);
            pg += p * g[i];
            sp += p;
            sg += g[i];
        }
        inter[n] = pg + kLossEpsilon;
        uni[n] = sp + sg - pg + kLossEpsilon;
        acc += 1.0 - inter[n] / uni[n];
    }
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(s.n)));
    if (Tape<T>* tape = recording_tape<T>({&logits})) {
        out.set_requires_grad(true);
        tape->record("soft_iou", [logits, gt, out, inter, uni, per]() {
            if (!out.has_grad()) return;
            const std::size_t batch = logits.shape().n;
            const double scale = static_cast<double>(out.grad()[0]) / static_cast<double>(batch);
            auto z = logits.data();
            auto g = gt.data();
            auto dz = logits.grad_buffer();
            for (std::size_t n = 0; n < batch; ++n) {
                const double i_n = inter[n];
                const double u_n = uni[n];
                for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
                    const double gi = static_cast<double>(g[i]);
                    // d(I/U)/dp = (g U - I (1 - g)) / U^2
                    const double dratio = (gi * u_n - i_n * (1.0 - gi)) / (u_n * u_n);
                    dz[i] += static_cast<T>(-scale * dratio * sigmoid_slope(z[i]));
                }
            }
        });
    }
    return out;
}

template <typename T>
Tensor<T> pixel_loss(const Tensor<T>& logits, const Tensor<T>& gt, nn::LossKind kind) {
    const Tensor<T> raw = kind == nn::LossKind::bce ? bce_with_logits(logits, gt) : soft_iou_loss(logits, gt);
    Tensor<T> out = Tensor<T>::scalar(snap<T>(raw.item(), grid_exponent<T>()));
    if (Tape<T>* tape = recording_tape<T>({&raw})) {
        out.set_requires_grad(true);
        tape->record("snap", [raw, out]() {
            if (out.has_grad()) raw.grad_buffer()[0] += out.grad()[0];
        });
    }
    return out;
}

template <typename T>
LossBreakdown<T> deep_supervised_loss(const nn::ForwardOutput<T>& out, const Tensor<T>& gt, T theta,
                                      nn::LossKind kind) {
    const std::size_t taps = out.deep_maps.size();
    if (taps != 0 && taps != nn::kDeepSupervisionTaps) {
        throw ShapeError("deep supervision: expected 0 or " + std::to_string(nn::kDeepSupervisionTaps) +
                         " deep maps, got " + std::to_string(taps));
    }
    LossBreakdown<T> r;
    const Tensor<T> final_term = pixel_loss(out.final_map, gt, kind);
    std::vector<Tensor<T>> deep_terms;
    r.final_loss = final_term.item();
    for (const Tensor<T>& map : out.deep_maps) {
        deep_terms.push_back(pixel_loss(map, gt, kind));
        r.deep_losses.push_back(deep_terms.back().item());
    }
    // Sequential left-to-right sum; every partial sum stays on the grid.
    T deep_sum = T(0);
    for (T v : r.deep_losses) deep_sum += v;
    r.deep_sum = deep_sum;
    const T weighted = snap<T>(static_cast<double>(theta) * static_cast<double>(deep_sum), grid_exponent<T>() + 1);
    r.total = Tensor<T>::scalar(r.final_loss + weighted);

    std::vector<const Tensor<T>*> inputs{&final_term};
    for (const Tensor<T>& t : deep_terms) inputs.push_back(&t);
    Tape<T>* tape = Tape<T>::active();
    bool needs = false;
    for (const Tensor<T>* t : inputs) needs = needs || t->requires_grad();
    if (tape != nullptr && needs) {
        r.total.set_requires_grad(true);
        tape->record("deep_supervised_loss", [final_term, deep_terms, theta, total = r.total]() {
            if (!total.has_grad()) return;
            const T g = total.grad()[0];
            if (final_term.requires_grad()) final_term.grad_buffer()[0] += g;
            for (const Tensor<T>& t : deep_terms) {
                if (t.requires_grad()) t.grad_buffer()[0] += theta * g;
            }
        });
    }
    return r;
}

#define DMADS_INSTANTIATE_LOSS(T)                                                                        \
    template Tensor<T> bce_with_logits(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> soft_iou_loss(const Tensor<T>&, const Tensor<T>&);                                \
    template Tensor<T> pixel_loss(const Tensor<T>&, const Tensor<T>&, nn::LossKind);                     \
    template LossBreakdown<T> deep_supervised_loss(const nn::ForwardOutput<T>&, const Tensor<T>&, T,     \
                                                   nn::LossKind);

DMADS_INSTANTIATE_LOSS(float)
DMADS_INSTANTIATE_LOSS(double)

#undef DMADS_INSTANTIATE_LOSS

}  // namespace dmads
