#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dmads/blocks.hpp"
#include "dmads/encoder.hpp"
#include "dmads/nn.hpp"

namespace dmads::nn {

enum class SkipWiring {
    symmetric,   // each path's decoder consumes its own encoder's skips
    as_written,  // both decoders consume the first (R18) path's skips
};

enum class LossKind { bce, soft_iou };

const char* wiring_name(SkipWiring w);
const char* loss_name(LossKind k);
SkipWiring parse_wiring(const std::string& text);
LossKind parse_loss(const std::string& text);

struct ModelConfig {
    std::size_t image_size = 256;
    std::size_t image_channels = 3;
    std::array<std::size_t, 3> stage_channels{64, 128, 256};
    double width_multiplier = 1.0;
    // Empty selects {4, 8, 16, 32} clamped to the bottleneck size; explicit
    // ratios must fit the bottleneck or construction fails.
    std::vector<std::size_t> patch_ratios;
    SkipWiring skip_wiring = SkipWiring::symmetric;
    ResizeMode upsample = ResizeMode::bilinear;

    bool disable_mscfa = false;             // variant a
    bool disable_frfb = false;              // variant b: upsample + add
    bool disable_lfa = false;               // variant c: single 3x3 conv
    bool disable_deep_supervision = false;  // variant d
    bool single_backbone_r18 = false;       // variant e: both paths on R18

    double theta = 0.5;
    LossKind loss = LossKind::soft_iou;
    std::uint64_t seed = 0;

    // Throws ConfigError when the configuration cannot be built.
    void validate() const;
    // Stage widths after the multiplier: {c1, 2*c1, 4*c1}, c1 a multiple of 4.
    std::array<std::size_t, 3> channels() const;
    std::array<std::size_t, 4> effective_patch_ratios() const;
    std::array<EncoderVariant, 2> path_variants() const;

    // Canonical text of the fields that determine parameter layout.
    std::string architecture_text() const;
    std::uint64_t digest() const;
};

inline constexpr std::size_t kDeepSupervisionTaps = 6;

template <typename T>
struct ForwardOutput {
    Tensor<T> final_map;               // N x 1 x H x W logits
    std::vector<Tensor<T>> deep_maps;  // 6 logit maps at H x W, or empty
};

// Initial bias of every logit head: log(pi / (1 - pi)) with prior pi = 0.01.
// Background pixels whose features vanish then start out negative instead of
// at 0.5.
inline constexpr double kHeadPriorBias = -4.59511985013459;

// 1x1 conv to one logit channel, bias set to kHeadPriorBias.
template <typename T>
Conv<T> make_prediction_head(ParamFactory<T>& f, const std::string& name, std::size_t channels);

template <typename T>
struct FusionParams {
    Conv<T> mix;     // 2C -> C, followed by relu
    Conv<T> logits;  // C -> 1
};

template <typename T>
FusionParams<T> make_fusion(ParamFactory<T>& f, const std::string& name, std::size_t channels);

// concat -> relu(1x1) -> 1x1 to one logit channel.
template <typename T>
Tensor<T> fusion(const Tensor<T>& out1, const Tensor<T>& out2, const FusionParams<T>& p);

// Everything one decoder path owns. Optional members are absent when an
// ablation removes them or skip wiring makes them unused.
template <typename T>
struct PathParams {
    EncoderParams<T> encoder;
    std::array<std::optional<MscfaParams<T>>, 3> mscfa;  // lay1, lay2, lay3
    std::optional<LfaParams<T>> lfa;
    std::optional<Conv<T>> lfa_replacement;                       // variant c
    std::array<std::optional<FrfbParams<T>>, 2> frfb;             // [0]: lay2 stage, [1]: lay1 stage
    std::array<std::optional<Conv<T>>, 2> frfb_replacement;       // variant b
    std::optional<Conv<T>> bottleneck_head;
    std::array<std::optional<Conv<T>>, 2> stage_heads;
};

template <typename T>
struct PathOutput {
    std::array<Tensor<T>, 3> skips;  // MSCFA-refined lay1, lay2 (lay3 slot holds the refined bottleneck)
    Tensor<T> bottleneck_tap;        // head logits at H/4, undefined without supervision
    std::array<Tensor<T>, 2> stage_taps;
    Tensor<T> out;                   // N x C1 x H x W, input to fusion
};

template <typename T>
class DmadsNet {
public:
    explicit DmadsNet(const ModelConfig& cfg);

    const ModelConfig& config() const { return config_; }
    ParameterStore<T>& parameters() { return store_; }
    const ParameterStore<T>& parameters() const { return store_; }
    std::array<PathParams<T>, 2>& paths() { return paths_; }
    const std::array<PathParams<T>, 2>& paths() const { return paths_; }
    const FusionParams<T>& fusion_params() const { return fusion_; }

    // Both paths' encoder and MSCFA stages, then their decoders.
    std::array<PathOutput<T>, 2> run_paths(const Tensor<T>& image) const;

    // Image must be N x image_channels x image_size x image_size.
    ForwardOutput<T> forward(const Tensor<T>& image) const;

    std::size_t parameter_count() const { return store_.total_numel(); }

private:
    void check_input(const Tensor<T>& image) const;

    ModelConfig config_;
    ParameterStore<T> store_;
    std::array<PathParams<T>, 2> paths_;
    FusionParams<T> fusion_;
};

template <typename T>
std::size_t count_parameters(const ParameterStore<T>& params) {
    return params.total_numel();
}

// Multiply-accumulates of every convolution in one forward pass at batch 1
// (the SE gating matrices are 1x1 convolutions and are included).
std::uint64_t estimate_macs(const ModelConfig& cfg);

// Parameter count of the configuration without allocating it.
std::uint64_t estimate_parameters(const ModelConfig& cfg);

}  // namespace dmads::nn
