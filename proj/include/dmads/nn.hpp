#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dmads/ops.hpp"
#include "dmads/rng.hpp"

namespace dmads::nn {

// Named, ordered collection of learnable tensors. Insertion order is the
// serialization and optimizer order.
template <typename T>
class ParameterStore {
public:
    using Entry = std::pair<std::string, Tensor<T>>;

    void add(std::string name, Tensor<T> tensor);
    const Tensor<T>& get(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t total_numel() const;
    const std::vector<Entry>& entries() const { return entries_; }

    void zero_grad() const;
    void fill(T value);  // test helper: overwrite every element

private:
    std::vector<Entry> entries_;
};

// Convolution layer: weight + optional bias, both registered in a store.
template <typename T>
struct Conv {
    ConvSpec spec;
    Tensor<T> weight;
    Tensor<T> bias;

    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, spec); }
};

// Deterministic initializer. Kernels ~ U(-b, b) with b = sqrt(6 / fan_in),
// biases zero; tensors are drawn in creation order from one seeded stream.
template <typename T>
class ParamFactory {
public:
    ParamFactory(ParameterStore<T>& store, std::uint64_t seed) : store_(store), rng_(seed) {}

    Conv<T> conv(const std::string& name, const ConvSpec& spec);
    Tensor<T> uniform_kernel(const std::string& name, Shape shape, std::size_t fan_in);

private:
    ParameterStore<T>& store_;
    Rng rng_;
};

template <typename T>
struct ResidualBlockParams {
    Conv<T> conv1;
    Conv<T> conv2;
};

// Gating pair of the squeeze-excitation block: W1 (C -> C/2), W2 (C/2 -> C),
// both stored as 1x1 convolutions on the pooled vector.
template <typename T>
struct SEGateParams {
    Conv<T> reduce;
    Conv<T> expand;
};

// Spatial attention: 1x1 reduce (C -> C/4), stride-2 3x3, two 3x3 refinements,
// 1x1 restore (C/4 -> C).
template <typename T>
struct ESAParams {
    Conv<T> reduce;
    Conv<T> down;
    Conv<T> refine1;
    Conv<T> refine2;
    Conv<T> restore;
};

template <typename T>
ResidualBlockParams<T> make_residual_block(ParamFactory<T>& f, const std::string& name, std::size_t channels);

// Throws ConfigError for odd channel counts.
template <typename T>
SEGateParams<T> make_se_gate(ParamFactory<T>& f, const std::string& name, std::size_t channels);

// Throws ConfigError unless channels is a positive multiple of 4.
template <typename T>
ESAParams<T> make_esa(ParamFactory<T>& f, const std::string& name, std::size_t channels);

// relu(conv2(relu(conv1(x))) + x)
template <typename T>
Tensor<T> residual_block(const Tensor<T>& x, const ResidualBlockParams<T>& p);

template <typename T>
struct SEGateOutput {
    Tensor<T> scaled;   // x * weights, broadcast over H x W
    Tensor<T> weights;  // N x C x 1 x 1, in (0, 1)
};

// sigmoid(W2 relu(W1 gap(x))) without the rescale.
template <typename T>
Tensor<T> se_weights(const Tensor<T>& x, const SEGateParams<T>& p);

template <typename T>
SEGateOutput<T> se_gate(const Tensor<T>& x, const SEGateParams<T>& p);

template <typename T>
Tensor<T> esa(const Tensor<T>& x, const ESAParams<T>& p);

}  // namespace dmads::nn
