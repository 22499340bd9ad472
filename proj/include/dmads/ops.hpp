#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

#include "dmads/tape.hpp"
#include "dmads/tensor.hpp"

namespace dmads {

struct ConvSpec {
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel_h = 3;
    std::size_t kernel_w = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t dilation = 1;
    bool bias = true;

    // floor((in + 2*pad - dil*(k-1) - 1) / stride) + 1; throws ShapeError when < 1.
    std::size_t out_h(std::size_t in_h) const;
    std::size_t out_w(std::size_t in_w) const;
    std::size_t weight_numel() const { return out_channels * in_channels * kernel_h * kernel_w; }
    Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
};

// Square kernel with "same" padding for stride 1: pad = dilation * (k - 1) / 2.
ConvSpec same_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                   std::size_t dilation = 1, std::size_t stride = 1);

enum class ResizeMode { nearest, bilinear };

// Every op below records onto Tape<T>::active() when some input requires a
// gradient, and the result then requires one too.

// bias may be an undefined Tensor; otherwise it has shape 1 x out x 1 x 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, const ConvSpec& spec);

template <typename T>
Tensor<T> relu(const Tensor<T>& x);

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor);

// x: N x C x H x W, s: N x C x 1 x 1.
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    const Tensor<T> parts[] = {a, b};
    return concat_channels<T>(std::span<const Tensor<T>>(parts));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count);

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x);

// Bilinear uses half-pixel centres (align_corners = false) with edge clamping.
template <typename T>
Tensor<T> resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, ResizeMode mode);

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x, ResizeMode mode) {
    return resize(x, x.shape().h * 2, x.shape().w * 2, mode);
}

// Zero-pads H and W up to multiples of p and moves every p x p tile into the
// batch dimension: N x C x H x W -> (N * ceil(H/p) * ceil(W/p)) x C x p x p,
// tiles ordered (n, tile_row, tile_col).
template <typename T>
Tensor<T> split_patches(const Tensor<T>& x, std::size_t patch);

// Inverse of split_patches followed by a crop to out_h x out_w.
template <typename T>
Tensor<T> merge_patches(const Tensor<T>& tiles, std::size_t patch, std::size_t batch, std::size_t out_h,
                        std::size_t out_w);

// Sum of all elements as a 1 x 1 x 1 x 1 tensor.
template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

// Debug mode: every op verifies its output is finite and throws NumericalError
// naming the op otherwise. Off by default.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// Multiply-accumulate operations executed by conv2d on this thread.
std::uint64_t& mac_counter();

}  // namespace dmads
