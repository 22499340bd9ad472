#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmads/nn.hpp"

namespace dmads::nn {

// Multi-scale convolutional feature attention. Three paths of stacked residual
// blocks (3, 2, 1) closed by dilated 3x3 convolutions (rates 4, 2, 1), fused
// pairwise by 1x1 convolutions over channel concatenations and added back onto
// the input.
template <typename T>
struct MscfaParams {
    std::array<ResidualBlockParams<T>, 3> wide_path;
    std::array<ResidualBlockParams<T>, 2> mid_path;
    ResidualBlockParams<T> narrow_path;
    Conv<T> dilated4;
    Conv<T> dilated2;
    Conv<T> dilated1;
    Conv<T> fuse_wide_mid;  // 2C -> C
    Conv<T> fuse_narrow;    // 2C -> C
    Conv<T> output;         // C -> C
};

template <typename T>
MscfaParams<T> make_mscfa(ParamFactory<T>& f, const std::string& name, std::size_t channels);

template <typename T>
Tensor<T> mscfa(const Tensor<T>& x, const MscfaParams<T>& p);

// One patch-ratio branch of LFA: a shared 3x3 kernel run on every p x p tile
// independently, then a 1x1 mix.
template <typename T>
struct LfaBranch {
    std::size_t patch = 0;
    Conv<T> local;
    Conv<T> mix;
};

template <typename T>
struct LfaParams {
    SEGateParams<T> gate;
    std::array<LfaBranch<T>, 4> branches;
    Conv<T> fuse;  // 4C -> C
};

inline constexpr std::array<std::size_t, 4> kDefaultPatchRatios{4, 8, 16, 32};

// Throws ConfigError for odd channel counts or a ratio count other than 4.
template <typename T>
LfaParams<T> make_lfa(ParamFactory<T>& f, const std::string& name, std::size_t channels,
                      const std::array<std::size_t, 4>& patch_ratios);

// Requires every patch ratio <= min(H, W); throws ConfigError otherwise.
template <typename T>
Tensor<T> lfa(const Tensor<T>& x, const LfaParams<T>& p);

// The tiled convolution of one LFA branch, before its 1x1 mix.
template <typename T>
Tensor<T> patch_local_conv(const Tensor<T>& x, const LfaBranch<T>& b);

// Feature refinement and fusion. The low path yields a channel weight vector
// (residual block -> ESA -> SE gating), the deep path is upsampled, reduced to
// C channels and SE-rescaled; output = weights * (low + deep') * deep2.
template <typename T>
struct FrfbParams {
    ResidualBlockParams<T> low_block;
    ESAParams<T> low_esa;
    SEGateParams<T> low_gate;
    Conv<T> deep_reduce;  // 2C -> C, 1x1
    SEGateParams<T> deep_gate;
    ResizeMode upsample = ResizeMode::bilinear;
};

template <typename T>
FrfbParams<T> make_frfb(ParamFactory<T>& f, const std::string& name, std::size_t channels,
                        ResizeMode upsample = ResizeMode::bilinear);

// Intermediate tensors of one FRFB evaluation, exposed for inspection.
template <typename T>
struct FrfbTrace {
    Tensor<T> deep_reduced;  // deep'
    Tensor<T> low_weights;   // Low1, N x C x 1 x 1
    Tensor<T> fused;         // Fu
    Tensor<T> deep_gated;    // Deep2
    Tensor<T> out;
};

// low: N x C x H x W, deep: N x 2C x H/2 x W/2.
template <typename T>
FrfbTrace<T> frfb_trace(const Tensor<T>& low, const Tensor<T>& deep, const FrfbParams<T>& p);

template <typename T>
Tensor<T> frfb(const Tensor<T>& low, const Tensor<T>& deep, const FrfbParams<T>& p) {
    return frfb_trace(low, deep, p).out;
}

}  // namespace dmads::nn
