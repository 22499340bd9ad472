#include "dmads/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dmads/error.hpp"

namespace dmads::nn {

const char* wiring_name(SkipWiring w) { return w == SkipWiring::symmetric ? "symmetric" : "as_written"; }

const char* loss_name(LossKind k) { return k == LossKind::bce ? "bce" : "soft_iou"; }

SkipWiring parse_wiring(const std::string& text) {
    if (text == "symmetric") return SkipWiring::symmetric;
    if (text == "as_written") return SkipWiring::as_written;
    throw ConfigError("skip_wiring must be 'symmetric' or 'as_written', got '" + text + "'");
}

LossKind parse_loss(const std::string& text) {
    if (text == "bce") return LossKind::bce;
    if (text == "soft_iou") return LossKind::soft_iou;
    throw ConfigError("loss must be 'bce' or 'soft_iou', got '" + text + "'");
}

std::array<std::size_t, 3> ModelConfig::channels() const {
    const double scaled = static_cast<double>(stage_channels[0]) * width_multiplier / 4.0;
    const std::size_t c1 = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(scaled)) * 4);
    return {c1, 2 * c1, 4 * c1};
}

std::array<std::size_t, 4> ModelConfig::effective_patch_ratios() const {
    const std::size_t bottleneck = image_size / 4;
    std::array<std::size_t, 4> ratios{};
    if (patch_ratios.empty()) {
        for (std::size_t i = 0; i < 4; ++i) ratios[i] = std::min(kDefaultPatchRatios[i], bottleneck);
    } else {
        std::copy_n(patch_ratios.begin(), std::min<std::size_t>(4, patch_ratios.size()), ratios.begin());
    }
    return ratios;
}

std::array<EncoderVariant, 2> ModelConfig::path_variants() const {
    return {EncoderVariant::r18, single_backbone_r18 ? EncoderVariant::r18 : EncoderVariant::r34};
}

void ModelConfig::validate() const {
    if (image_size < 16 || image_size % 4 != 0) {
        throw ConfigError("image_size " + std::to_string(image_size) + " must be divisible by 4 and at least 16");
    }
    if (image_channels == 0) {
        throw ConfigError("image_channels must be positive");
    }
    if (stage_channels[0] == 0 || stage_channels[1] != 2 * stage_channels[0] ||
        stage_channels[2] != 2 * stage_channels[1]) {
        throw ConfigError("stage_channels must double from stage to stage (decoder fusion halves channels)");
    }
    if (!(width_multiplier > 0.0) || !std::isfinite(width_multiplier)) {
        throw ConfigError("width_multiplier must be positive");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) {
        throw ConfigError("theta must lie in [0, 1]");
    }
    if (!patch_ratios.empty()) {
        if (patch_ratios.size() != 4) {
            throw ConfigError("patch_ratios needs exactly 4 values, got " + std::to_string(patch_ratios.size()));
        }
        const std::size_t bottleneck = image_size / 4;
        for (std::size_t p : patch_ratios) {
            if (p == 0 || p > bottleneck) {
                throw ConfigError("patch ratio " + std::to_string(p) + " does not fit the " +
                                  std::to_string(bottleneck) + "x" + std::to_string(bottleneck) + " bottleneck");
            }
        }
    }
}

std::string ModelConfig::architecture_text() const {
    const auto ch = channels();
    const auto ratios = effective_patch_ratios();
    std::ostringstream os;
    os << "image_size=" << image_size << ";image_channels=" << image_channels << ";channels=" << ch[0] << ","
       << ch[1] << "," << ch[2] << ";patch_ratios=" << ratios[0] << "," << ratios[1] << "," << ratios[2] << ","
       << ratios[3] << ";skip_wiring=" << wiring_name(skip_wiring)
       << ";upsample=" << (upsample == ResizeMode::bilinear ? "bilinear" : "nearest")
       << ";disable_mscfa=" << disable_mscfa << ";disable_frfb=" << disable_frfb << ";disable_lfa=" << disable_lfa
       << ";disable_deep_supervision=" << disable_deep_supervision
       << ";single_backbone_r18=" << single_backbone_r18;
    return os.str();
}

std::uint64_t ModelConfig::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : architecture_text()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <typename T>
Conv<T> make_prediction_head(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    Conv<T> head = f.conv(name, same_conv(channels, 1, 1));
    auto b = head.bias.mutable_data();
    std::fill(b.begin(), b.end(), static_cast<T>(kHeadPriorBias));
    return head;
}

template <typename T>
FusionParams<T> make_fusion(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    FusionParams<T> p;
    p.mix = f.conv(name + ".mix", same_conv(2 * channels, channels, 1));
    p.logits = make_prediction_head(f, name + ".logits", channels);
    return p;
}

template <typename T>
Tensor<T> fusion(const Tensor<T>& out1, const Tensor<T>& out2, const FusionParams<T>& p) {
    if (!(out1.shape() == out2.shape())) {
        throw ShapeError("fusion: path outputs differ in shape (" + out1.shape().str() + " vs " +
                         out2.shape().str() + ")");
    }
    return p.logits(relu(p.mix(concat_channels(out1, out2))));
}

template <typename T>
DmadsNet<T>::DmadsNet(const ModelConfig& cfg) : config_(cfg) {
    config_.validate();
    const auto ch = config_.channels();
    const auto variants = config_.path_variants();
    ParamFactory<T> f(store_, config_.seed);
    for (std::size_t i = 0; i < 2; ++i) {
        const std::string name = "path" + std::to_string(i + 1);
        PathParams<T>& path = paths_[i];
        EncoderConfig enc;
        enc.variant = variants[i];
        enc.stage_channels = ch;
        enc.image_channels = config_.image_channels;
        path.encoder = make_encoder(f, name + ".encoder", enc);

        const bool own_skips = i == 0 || config_.skip_wiring == SkipWiring::symmetric;
        if (!config_.disable_mscfa) {
            for (std::size_t k = 0; k < 3; ++k) {
                if (k < 2 && !own_skips) continue;
                path.mscfa[k] = make_mscfa(f, name + ".mscfa" + std::to_string(k + 1), ch[k]);
            }
        }
        if (config_.disable_lfa) {
            path.lfa_replacement = f.conv(name + ".lfa_conv", same_conv(ch[2], ch[2], 3));
        } else {
            path.lfa = make_lfa(f, name + ".lfa", ch[2], config_.effective_patch_ratios());
        }
        for (std::size_t s = 0; s < 2; ++s) {
            const std::size_t c = ch[1 - s];
            const std::string stage = name + ".frfb" + std::to_string(s + 1);
            if (config_.disable_frfb) {
                path.frfb_replacement[s] = f.conv(stage + ".reduce", same_conv(2 * c, c, 1));
            } else {
                path.frfb[s] = make_frfb(f, stage, c, config_.upsample);
            }
        }
        if (!config_.disable_deep_supervision) {
            path.bottleneck_head = make_prediction_head(f, name + ".head.bottleneck", ch[2]);
            for (std::size_t s = 0; s < 2; ++s) {
                path.stage_heads[s] = make_prediction_head(f, name + ".head.frfb" + std::to_string(s + 1), ch[1 - s]);
            }
        }
    }
    fusion_ = make_fusion(f, "fusion", ch[0]);
}

template <typename T>
void DmadsNet<T>::check_input(const Tensor<T>& image) const {
    const Shape& s = image.shape();
    if (s.c != config_.image_channels || s.h != config_.image_size || s.w != config_.image_size) {
        throw ShapeError("forward: image shape " + s.str() + " does not match configured N x " +
                         std::to_string(config_.image_channels) + " x " + std::to_string(config_.image_size) + " x " +
                         std::to_string(config_.image_size));
    }
}

template <typename T>
std::array<PathOutput<T>, 2> DmadsNet<T>::run_paths(const Tensor<T>& image) const {
    check_input(image);
    std::array<PathOutput<T>, 2> outs;
    for (std::size_t i = 0; i < 2; ++i) {
        const PathParams<T>& path = paths_[i];
        const auto lays = encode(image, path.encoder);
        for (std::size_t k = 0; k < 3; ++k) {
            if (path.mscfa[k]) {
                outs[i].skips[k] = mscfa(lays[k], *path.mscfa[k]);
            } else if (k == 2 || i == 0 || config_.skip_wiring == SkipWiring::symmetric) {
                outs[i].skips[k] = lays[k];
            } else {
                outs[i].skips[k] = outs[0].skips[k];
            }
        }
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const PathParams<T>& path = paths_[i];
        PathOutput<T>& o = outs[i];
        const Tensor<T>& bottleneck = o.skips[2];
        if (path.bottleneck_head) o.bottleneck_tap = (*path.bottleneck_head)(bottleneck);
        Tensor<T> x = path.lfa ? lfa(bottleneck, *path.lfa) : relu((*path.lfa_replacement)(bottleneck));
        for (std::size_t s = 0; s < 2; ++s) {
            const Tensor<T>& low = o.skips[1 - s];
            if (path.frfb[s]) {
                x = frfb(low, x, *path.frfb[s]);
            } else {
                x = add(low, relu((*path.frfb_replacement[s])(upsample2x(x, config_.upsample))));
            }
            if (path.stage_heads[s]) o.stage_taps[s] = (*path.stage_heads[s])(x);
        }
        o.out = x;
    }
    return outs;
}

template <typename T>
ForwardOutput<T> DmadsNet<T>::forward(const Tensor<T>& image) const {
    const auto paths = run_paths(image);
    ForwardOutput<T> result;
    result.final_map = fusion(paths[0].out, paths[1].out, fusion_);
    if (config_.disable_deep_supervision) {
        return result;
    }
    const std::size_t h = image.shape().h;
    const std::size_t w = image.shape().w;
    auto to_input_size = [&](const Tensor<T>& tap) {
        if (tap.shape().h == h && tap.shape().w == w) return tap;
        return resize(tap, h, w, ResizeMode::bilinear);
    };
    // Tap order: both bottlenecks, then each decoder stage for path 1 and path 2.
    result.deep_maps.push_back(to_input_size(paths[0].bottleneck_tap));
    result.deep_maps.push_back(to_input_size(paths[1].bottleneck_tap));
    for (std::size_t s = 0; s < 2; ++s) {
        result.deep_maps.push_back(to_input_size(paths[0].stage_taps[s]));
        result.deep_maps.push_back(to_input_size(paths[1].stage_taps[s]));
    }
    return result;
}

namespace {

// Closed-form walk over the architecture, mirroring DmadsNet's construction.
struct Tally {
    std::uint64_t macs = 0;
    std::uint64_t params = 0;

    void conv(std::uint64_t in, std::uint64_t out, std::uint64_t k, std::uint64_t out_h, std::uint64_t out_w) {
        macs += out_h * out_w * out * in * k * k;
        params += out * in * k * k + out;
    }
    void residual(std::uint64_t c, std::uint64_t h) {
        conv(c, c, 3, h, h);
        conv(c, c, 3, h, h);
    }
    void se(std::uint64_t c) {
        conv(c, c / 2, 1, 1, 1);
        conv(c / 2, c, 1, 1, 1);
    }
    void esa(std::uint64_t c, std::uint64_t h) {
        const std::uint64_t q = c / 4;
        const std::uint64_t half = (h + 1) / 2;
        conv(c, q, 1, h, h);
        conv(q, q, 3, half, half);
        conv(q, q, 3, half, half);
        conv(q, q, 3, half, half);
        conv(q, c, 1, h, h);
    }
    void encoder(EncoderVariant v, std::uint64_t img, const std::array<std::size_t, 3>& ch, std::uint64_t h) {
        EncoderConfig cfg;
        cfg.variant = v;
        const auto blocks = cfg.blocks_per_stage();
        conv(img, ch[0], 3, h, h);
        for (std::size_t b = 0; b < blocks[0]; ++b) residual(ch[0], h);
        for (std::size_t s = 1; s < 3; ++s) {
            h /= 2;
            conv(ch[s - 1], ch[s], 3, h, h);
            conv(ch[s], ch[s], 3, h, h);
            conv(ch[s - 1], ch[s], 1, h, h);
            for (std::size_t b = 1; b < blocks[s]; ++b) residual(ch[s], h);
        }
    }
    void mscfa(std::uint64_t c, std::uint64_t h) {
        for (int i = 0; i < 6; ++i) residual(c, h);
        for (int i = 0; i < 3; ++i) conv(c, c, 3, h, h);
        conv(2 * c, c, 1, h, h);
        conv(2 * c, c, 1, h, h);
        conv(c, c, 1, h, h);
    }
    void lfa(std::uint64_t c, std::uint64_t h, const std::array<std::size_t, 4>& ratios) {
        se(c);
        for (std::size_t p : ratios) {
            const std::uint64_t padded = (h + p - 1) / p * p;
            conv(c, c, 3, padded, padded);
            conv(c, c, 1, h, h);
        }
        conv(4 * c, c, 1, h, h);
    }
    void frfb(std::uint64_t c, std::uint64_t h) {
        residual(c, h);
        esa(c, h);
        se(c);
        conv(2 * c, c, 1, h, h);
        se(c);
    }
};

Tally walk(const ModelConfig& cfg) {
    cfg.validate();
    const auto ch = cfg.channels();
    const auto variants = cfg.path_variants();
    const std::uint64_t h = cfg.image_size;
    const std::array<std::uint64_t, 3> res{h, h / 2, h / 4};
    Tally t;
    for (std::size_t i = 0; i < 2; ++i) {
        t.encoder(variants[i], cfg.image_channels, ch, h);
        const bool own_skips = i == 0 || cfg.skip_wiring == SkipWiring::symmetric;
        if (!cfg.disable_mscfa) {
            for (std::size_t k = 0; k < 3; ++k) {
                if (k < 2 && !own_skips) continue;
                t.mscfa(ch[k], res[k]);
            }
        }
        if (cfg.disable_lfa) {
            t.conv(ch[2], ch[2], 3, res[2], res[2]);
        } else {
            t.lfa(ch[2], res[2], cfg.effective_patch_ratios());
        }
        for (std::size_t s = 0; s < 2; ++s) {
            const std::size_t c = ch[1 - s];
            if (cfg.disable_frfb) {
                t.conv(2 * c, c, 1, res[1 - s], res[1 - s]);
            } else {
                t.frfb(c, res[1 - s]);
            }
        }
        if (!cfg.disable_deep_supervision) {
            t.conv(ch[2], 1, 1, res[2], res[2]);
            t.conv(ch[1], 1, 1, res[1], res[1]);
            t.conv(ch[0], 1, 1, res[0], res[0]);
        }
    }
    t.conv(2 * ch[0], ch[0], 1, h, h);
    t.conv(ch[0], 1, 1, h, h);
    return t;
}

}  // namespace

std::uint64_t estimate_macs(const ModelConfig& cfg) { return walk(cfg).macs; }

std::uint64_t estimate_parameters(const ModelConfig& cfg) { return walk(cfg).params; }

template class DmadsNet<float>;
template class DmadsNet<double>;
template Conv<float> make_prediction_head(ParamFactory<float>&, const std::string&, std::size_t);
template Conv<double> make_prediction_head(ParamFactory<double>&, const std::string&, std::size_t);
template FusionParams<float> make_fusion(ParamFactory<float>&, const std::string&, std::size_t);
template FusionParams<double> make_fusion(ParamFactory<double>&, const std::string&, std::size_t);
template Tensor<float> fusion(const Tensor<float>&, const Tensor<float>&, const FusionParams<float>&);
template Tensor<double> fusion(const Tensor<double>&, const Tensor<double>&, const FusionParams<double>&);

}  // namespace dmads::nn
