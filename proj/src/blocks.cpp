#include "dmads/blocks.hpp"

#include <algorithm>

#include "dmads/error.hpp"

namespace dmads::nn {

template <typename T>
MscfaParams<T> make_mscfa(ParamFactory<T>& f, const std::string& name, std::size_t channels) {
    MscfaParams<T> p;
    for (std::size_t i = 0; i < p.wide_path.size(); ++i) {
        p.wide_path[i] = make_residual_block(f, name + ".rate4.res" + std::to_string(i), channels);
    }
    for (std::size_t i = 0; i < p.mid_path.size(); ++i) {
        p.mid_path[i] = make_residual_block(f, name + ".rate2.res" + std::to_string(i), channels);
    }
    p.narrow_path = make_residual_block(f, name + ".rate1.res0", channels);
    p.dilated4 = f.conv(name + ".rate4.conv", same_conv(channels, channels, 3, 4));
    p.dilated2 = f.conv(name + ".rate2.conv", same_conv(channels, channels, 3, 2));
    p.dilated1 = f.conv(name + ".rate1.conv", same_conv(channels, channels, 3, 1));
    p.fuse_wide_mid = f.conv(name + ".fuse12", same_conv(2 * channels, channels, 1));
    p.fuse_narrow = f.conv(name + ".fuse123", same_conv(2 * channels, channels, 1));
    p.output = f.conv(name + ".out", same_conv(channels, channels, 1));
    return p;
}

template <typename T>
Tensor<T> mscfa(const Tensor<T>& x, const MscfaParams<T>& p) {
    const Shape& s = x.shape();
    if (s.h < 2 || s.w < 2) {
        throw ShapeError("mscfa: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " is below 2x2");
    }
    Tensor<T> wide = x;
    for (const auto& b : p.wide_path) wide = residual_block(wide, b);
    wide = p.dilated4(wide);

    Tensor<T> mid = x;
    for (const auto& b : p.mid_path) mid = residual_block(mid, b);
    mid = p.dilated2(mid);

    const Tensor<T> narrow = p.dilated1(residual_block(x, p.narrow_path));

    const Tensor<T> paired = relu(p.fuse_wide_mid(concat_channels(wide, mid)));
    const Tensor<T> fused = relu(p.fuse_narrow(concat_channels(paired, narrow)));
    return add(x, relu(p.output(fused)));
}

template <typename T>
LfaParams<T> make_lfa(ParamFactory<T>& f, const std::string& name, std::size_t channels,
                      const std::array<std::size_t, 4>& patch_ratios) {
    LfaParams<T> p;
    p.gate = make_se_gate(f, name + ".se", channels);
    for (std::size_t i = 0; i < p.branches.size(); ++i) {
        if (patch_ratios[i] == 0) {
            throw ConfigError("lfa '" + name + "': patch ratio must be >= 1");
        }
        const std::string b = name + ".branch" + std::to_string(i);
        p.branches[i].patch = patch_ratios[i];
        p.branches[i].local = f.conv(b + ".local", same_conv(channels, channels, 3));
        p.branches[i].mix = f.conv(b + ".mix", same_conv(channels, channels, 1));
    }
    p.fuse = f.conv(name + ".fuse", same_conv(4 * channels, channels, 1));
    return p;
}

template <typename T>
Tensor<T> patch_local_conv(const Tensor<T>& x, const LfaBranch<T>& b) {
    const Shape& s = x.shape();
    const Tensor<T> tiles = split_patches(x, b.patch);
    return merge_patches(b.local(tiles), b.patch, s.n, s.h, s.w);
}

template <typename T>
Tensor<T> lfa(const Tensor<T>& x, const LfaParams<T>& p) {
    const Shape& s = x.shape();
    for (const auto& b : p.branches) {
        if (b.patch > std::min(s.h, s.w)) {
            throw ConfigError("lfa: patch ratio " + std::to_string(b.patch) + " exceeds feature size " +
                              std::to_string(s.h) + "x" + std::to_string(s.w));
        }
    }
    const Tensor<T> gated = se_gate(x, p.gate).scaled;
    std::vector<Tensor<T>> branches;
    branches.reserve(p.branches.size());
    for (const auto& b : p.branches) {
        branches.push_back(relu(b.mix(patch_local_conv(gated, b))));
    }
    return relu(p.fuse(concat_channels<T>(branches)));
}

template <typename T>
FrfbParams<T> make_frfb(ParamFactory<T>& f, const std::string& name, std::size_t channels, ResizeMode upsample) {
    FrfbParams<T> p;
    p.low_block = make_residual_block(f, name + ".low.res", channels);
    p.low_esa = make_esa(f, name + ".low.esa", channels);
    p.low_gate = make_se_gate(f, name + ".low.gate", channels);
    p.deep_reduce = f.conv(name + ".deep.reduce", same_conv(2 * channels, channels, 1));
    p.deep_gate = make_se_gate(f, name + ".deep.se", channels);
    p.upsample = upsample;
    return p;
}

template <typename T>
FrfbTrace<T> frfb_trace(const Tensor<T>& low, const Tensor<T>& deep, const FrfbParams<T>& p) {
    const std::size_t c = p.low_block.conv1.spec.in_channels;
    const Shape& ls = low.shape();
    const Shape& ds = deep.shape();
    if (ls.c != c) {
        throw ShapeError("frfb: low input has " + std::to_string(ls.c) + " channels, block expects " +
                         std::to_string(c));
    }
    if (ds.n != ls.n || ds.c != 2 * c || 2 * ds.h != ls.h || 2 * ds.w != ls.w) {
        throw ShapeError("frfb: deep input has shape " + ds.str() + ", expected " + std::to_string(ls.n) + "x" +
                         std::to_string(2 * c) + "x" + std::to_string(ls.h / 2) + "x" + std::to_string(ls.w / 2) +
                         " (double channels, half resolution of the low input " + ls.str() + ")");
    }
    FrfbTrace<T> t;
    t.deep_reduced = relu(p.deep_reduce(upsample2x(deep, p.upsample)));
    t.low_weights = se_weights(esa(residual_block(low, p.low_block), p.low_esa), p.low_gate);
    t.fused = add(low, t.deep_reduced);
    t.deep_gated = se_gate(t.deep_reduced, p.deep_gate).scaled;
    t.out = channel_scale(mul(t.fused, t.deep_gated), t.low_weights);
    return t;
}

#define DMADS_INSTANTIATE_BLOCKS(T)                                                                              \
    template MscfaParams<T> make_mscfa(ParamFactory<T>&, const std::string&, std::size_t);                       \
    template Tensor<T> mscfa(const Tensor<T>&, const MscfaParams<T>&);                                           \
    template LfaParams<T> make_lfa(ParamFactory<T>&, const std::string&, std::size_t,                            \
                                   const std::array<std::size_t, 4>&);                                           \
    template Tensor<T> lfa(const Tensor<T>&, const LfaParams<T>&);                                               \
    template Tensor<T> patch_local_conv(const Tensor<T>&, const LfaBranch<T>&);                                  \
    template FrfbParams<T> make_frfb(ParamFactory<T>&, const std::string&, std::size_t, ResizeMode);             \
    template FrfbTrace<T> frfb_trace(const Tensor<T>&, const Tensor<T>&, const FrfbParams<T>&);

DMADS_INSTANTIATE_BLOCKS(float)
DMADS_INSTANTIATE_BLOCKS(double)

#undef DMADS_INSTANTIATE_BLOCKS

}  // namespace dmads::nn
