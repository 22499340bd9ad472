#pragma once

#include <array>
#include <string>
#include <vector>

#include "dmads/nn.hpp"

namespace dmads::nn {

enum class EncoderVariant { r18, r34 };

const char* variant_name(EncoderVariant v);

// Truncated ResNet trunk without pooling: a 3x3 stem at full resolution and
// three residual stages, the last two entered through stride-2 convolutions.
struct EncoderConfig {
    EncoderVariant variant = EncoderVariant::r18;
    std::array<std::size_t, 3> stage_channels{64, 128, 256};
    std::size_t image_channels = 3;

    // r18 -> {2, 2, 2}, r34 -> {3, 4, 6}
    std::array<std::size_t, 3> blocks_per_stage() const;
};

// First block of stages 2 and 3: stride-2 3x3 main path plus a stride-2 1x1
// projection on the skip path.
template <typename T>
struct DownBlockParams {
    Conv<T> conv1;
    Conv<T> conv2;
    Conv<T> project;
};

template <typename T>
struct EncoderParams {
    EncoderConfig config;
    Conv<T> stem;
    std::vector<ResidualBlockParams<T>> stage1;
    DownBlockParams<T> down2;
    std::vector<ResidualBlockParams<T>> stage2;  // blocks after the downsampling block
    DownBlockParams<T> down3;
    std::vector<ResidualBlockParams<T>> stage3;
};

template <typename T>
EncoderParams<T> make_encoder(ParamFactory<T>& f, const std::string& name, const EncoderConfig& cfg);

// Returns {lay1 (C1, H), lay2 (C2, H/2), lay3 (C3, H/4)}. Requires H and W
// divisible by 4 and at least 16; violations throw before any compute.
template <typename T>
std::array<Tensor<T>, 3> encode(const Tensor<T>& image, const EncoderParams<T>& p);

template <typename T>
Tensor<T> down_block(const Tensor<T>& x, const DownBlockParams<T>& p);

}  // namespace dmads::nn
