#include "dmads/encoder.hpp"

#include "dmads/error.hpp"

namespace dmads::nn {

const char* variant_name(EncoderVariant v) { return v == EncoderVariant::r18 ? "r18" : "r34"; }

std::array<std::size_t, 3> EncoderConfig::blocks_per_stage() const {
    if (variant == EncoderVariant::r18) return {2, 2, 2};
    return {3, 4, 6};
}

namespace {

template <typename T>
DownBlockParams<T> make_down_block(ParamFactory<T>& f, const std::string& name, std::size_t in, std::size_t out) {
    DownBlockParams<T> p;
    p.conv1 = f.conv(name + ".conv1", same_conv(in, out, 3, 1, 2));
    p.conv2 = f.conv(name + ".conv2", same_conv(out, out, 3));
    p.project = f.conv(name + ".project", same_conv(in, out, 1, 1, 2));
    return p;
}

}  // namespace

template <typename T>
EncoderParams<T> make_encoder(ParamFactory<T>& f, const std::string& name, const EncoderConfig& cfg) {
    const auto& ch = cfg.stage_channels;
    const auto blocks = cfg.blocks_per_stage();
    EncoderParams<T> p;
    p.config = cfg;
    p.stem = f.conv(name + ".stem", same_conv(cfg.image_channels, ch[0], 3));
    for (std::size_t b = 0; b < blocks[0]; ++b) {
        p.stage1.push_back(make_residual_block(f, name + ".stage1.block" + std::to_string(b), ch[0]));
    }
    p.down2 = make_down_block(f, name + ".stage2.block0", ch[0], ch[1]);
    for (std::size_t b = 1; b < blocks[1]; ++b) {
        p.stage2.push_back(make_residual_block(f, name + ".stage2.block" + std::to_string(b), ch[1]));
    }
    p.down3 = make_down_block(f, name + ".stage3.block0", ch[1], ch[2]);
    for (std::size_t b = 1; b < blocks[2]; ++b) {
        p.stage3.push_back(make_residual_block(f, name + ".stage3.block" + std::to_string(b), ch[2]));
    }
    return p;
}

template <typename T>
Tensor<T> down_block(const Tensor<T>& x, const DownBlockParams<T>& p) {
    const Tensor<T> main = p.conv2(relu(p.conv1(x)));
    return relu(add(main, p.project(x)));
}

template <typename T>
std::array<Tensor<T>, 3> encode(const Tensor<T>& image, const EncoderParams<T>& p) {
    const Shape& s = image.shape();
    if (s.c != p.config.image_channels) {
        throw ShapeError("encode: image has " + std::to_string(s.c) + " channels, encoder expects " +
                         std::to_string(p.config.image_channels));
    }
    if (s.h % 4 != 0 || s.w % 4 != 0 || s.h < 16 || s.w < 16) {
        throw ShapeError("encode: spatial size " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " must be divisible by 4 and at least 16");
    }
    Tensor<T> x = relu(p.stem(image));
    for (const auto& b : p.stage1) x = residual_block(x, b);
    Tensor<T> lay1 = x;
    x = down_block(x, p.down2);
    for (const auto& b : p.stage2) x = residual_block(x, b);
    Tensor<T> lay2 = x;
    x = down_block(x, p.down3);
    for (const auto& b : p.stage3) x = residual_block(x, b);
    return {lay1, lay2, x};
}

template EncoderParams<float> make_encoder(ParamFactory<float>&, const std::string&, const EncoderConfig&);
template EncoderParams<double> make_encoder(ParamFactory<double>&, const std::string&, const EncoderConfig&);
template std::array<Tensor<float>, 3> encode(const Tensor<float>&, const EncoderParams<float>&);
template std::array<Tensor<double>, 3> encode(const Tensor<double>&, const EncoderParams<double>&);
template Tensor<float> down_block(const Tensor<float>&, const DownBlockParams<float>&);
template Tensor<double> down_block(const Tensor<double>&, const DownBlockParams<double>&);

}  // namespace dmads::nn
