#include "dmads/nn.hpp"

#include <algorithm>
#include <cmath>

#include "dmads/error.hpp"

namespace dmads::nn {

template <typename T>
void ParameterStore<T>::add(std::string name, Tensor<T> tensor) {
    if (contains(name)) {
        throw ConfigError("parameter store: duplicate name '" + name + "'");
    }
    entries_.emplace_back(std::move(name), std::move(tensor));
}

template <typename T>
const Tensor<T>& ParameterStore<T>::get(const std::string& name) const {
    for (const Entry& e : entries_) {
        if (e.first == name) return e.second;
    }
    throw ConfigError("parameter store: no parameter named '" + name + "'");
}

template <typename T>
bool ParameterStore<T>::contains(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
}

template <typename T>
std::size_t ParameterStore<T>::total_numel() const {
    std::size_t total = 0;
    for (const Entry& e : entries_) total += e.second.numel();
    return total;
}

template <typename T>
void ParameterStore<T>::zero_grad() const {
    for (const Entry& e : entries_) e.second.zero_grad();
}

template <typename T>
void ParameterStore<T>::fill(T value) {
    for (Entry& e : entries_) {
        auto d = e.second.mutable_data();
        std::fill(d.begin(), d.end(), value);
    }
}

template <typename T>
Tensor<T> ParamFactory<T>::uniform_kernel(const std::string& name, Shape shape, std::size_t fan_in) {
    Tensor<T> t(shape);
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (T& v : t.mutable_data()) v = static_cast<T>(rng_.uniform(-bound, bound));
    t.set_requires_grad(true);
    store_.add(name, t);
    return t;
}

template <typename T>
Conv<T> ParamFactory<T>::conv(const std::string& name, const ConvSpec& spec) {
    Conv<T> c;
    c.spec = spec;
    c.weight = uniform_kernel(name + ".weight", spec.weight_shape(), spec.in_channels * spec.kernel_h * spec.kernel_w);
    if (spec.bias) {
        c.bias = Tensor<T>(Shape{1, spec.out_channels, 1, 1});
        c.bias.set_requires_grad(true);
        store_.add(name + ".bias", c.bias);
    }
    return c;
}

template <typename T>
ResidualBlockParams<T> make_residual_block(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    ResidualBlockParams<T> p{f.conv(name + ".conv1", same_conv(channels, channels, 3)),
                             f.conv(name + ".conv2", same_conv(channels, channels, 3))};
    auto w = p.conv2.weight.mutable_data();
    std::fill(w.begin(), w.end(), T(0));
    return p;
}

template <typename T>
SEGateParams<T> make_se_gate(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    if (channels == 0 || channels % 2 != 0) {
        throw ConfigError("se_gate '" + name + "': channel count " + std::to_string(channels) + " must be even");
    }
    return {f.conv(name + ".w1", same_conv(channels, channels / 2, 1)),
            f.conv(name + ".w2", same_conv(channels / 2, channels, 1))};
}

template <typename T>
ESAParams<T> make_esa(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    if (channels == 0 || channels % 4 != 0) {
        throw ConfigError("esa '" + name + "': channel count " + std::to_string(channels) +
                          " must be a multiple of 4");
    }
    const std::size_t inner = channels / 4;
    ESAParams<T> p;
    p.reduce = f.conv(name + ".reduce", same_conv(channels, inner, 1));
    p.down = f.conv(name + ".down", same_conv(inner, inner, 3, 1, 2));
    p.refine1 = f.conv(name + ".refine1", same_conv(inner, inner, 3));
    p.refine2 = f.conv(name + ".refine2", same_conv(inner, inner, 3));
    p.restore = f.conv(name + ".restore", same_conv(inner, channels, 1));
    return p;
}

template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p) {
    if (x.shape().c != p.conv1.spec.in_channels) {
        throw ShapeError("residual_block: input has " + std::to_string(x.shape().c) + " channels, block expects " +
                         std::to_string(p.conv1.spec.in_channels));
    }
    const Tensor<T> branch = p.conv2(relu(p.conv1(x)));
    return relu(add(branch, x));
}

template <typename T>
Tensor<T> se_weights(const Tensor<T>& x, const SEGateParams<T>& p) {
    if (x.shape().c != p.reduce.spec.in_channels) {
        throw ShapeError("se_gate: input has " + std::to_string(x.shape().c) + " channels, gate expects " +
                         std::to_string(p.reduce.spec.in_channels));
    }
    const Tensor<T> z = global_avg_pool(x);
    return sigmoid(p.expand(relu(p.reduce(z))));
}

template <typename T>
SEGateOutput<T> se_gate(const Tensor<T>& x, const SEGateParams<T>& p) {
    Tensor<T> s = se_weights(x, p);
    return {channel_scale(x, s), s};
}

template <typename T>
Tensor<T> esa(const Tensor<T>& x, const ESAParams<T>& p) {
    const Shape& s = x.shape();
    if (s.c != p.reduce.spec.in_channels) {
        throw ShapeError("esa: input has " + std::to_string(s.c) + " channels, block expects " +
                         std::to_string(p.reduce.spec.in_channels));
    }
    if (s.h < 4 || s.w < 4) {
        throw ShapeError("esa: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " is below 4x4, the stride-2 path would vanish");
    }
    Tensor<T> t = p.down(p.reduce(x));
    // First refinement is rectified, the second linear.
    t = p.refine2(relu(p.refine1(t)));
    t = resize(t, s.h, s.w, ResizeMode::bilinear);
    const Tensor<T> mask = sigmoid(p.restore(t));
    return mul(x, mask);
}

#define DMADS_INSTANTIATE_NN(T)                                                                          \
    template class ParameterStore<T>;                                                                    \
    template class ParamFactory<T>;                                                                      \
    template ResidualBlockParams<T> make_residual_block(ParamFactory<T>&, const std::string&, std::size_t); \
    template SEGateParams<T> make_se_gate(ParamFactory<T>&, const std::string&, std::size_t);             \
    template ESAParams<T> make_esa(ParamFactory<T>&, const std::string&, std::size_t);                    \
    template Tensor<T> residual_block(const Tensor<T>&, const ResidualBlockParams<T>&);                  \
    template Tensor<T> se_weights(const Tensor<T>&, const SEGateParams<T>&);                             \
    template SEGateOutput<T> se_gate(const Tensor<T>&, const SEGateParams<T>&);                          \
    template Tensor<T> esa(const Tensor<T>&, const ESAParams<T>&);

DMADS_INSTANTIATE_NN(float)
DMADS_INSTANTIATE_NN(double)

#undef DMADS_INSTANTIATE_NN

}  // namespace dmads::nn
