#include "dmads/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "dmads/error.hpp"
#include "gemm.hpp"

namespace dmads {

namespace {

std::atomic<bool> g_finite_checks{false};

std::string dim_error(const char* op, const char* what, std::size_t got, std::size_t want) {
    return std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " + std::to_string(want);
}

template <typename T>
Tape<T>* tape_for(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = Tape<T>::active();
    if (tape == nullptr) {
        return nullptr;
    }
    for (const Tensor<T>* t : inputs) {
        if (t->defined() && t->requires_grad()) {
            return tape;
        }
    }
    return nullptr;
}

template <typename T>
void check_output(const char* op, const Tensor<T>& out) {
    if (g_finite_checks.load(std::memory_order_relaxed) && !all_finite<T>(out.data())) {
        throw NumericalError(std::string(op) + ": produced a non-finite value");
    }
}

template <typename T>
void finish(const char* op, Tensor<T>& out, Tape<T>* tape, typename Tape<T>::BackwardFn fn) {
    check_output(op, out);
    if (tape != nullptr) {
        out.set_requires_grad(true);
        tape->record(op, std::move(fn));
    }
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
    if (!(a == b)) {
        throw ShapeError(std::string(op) + ": operand shapes differ (" + a.str() + " vs " + b.str() + ")");
    }
}

struct ConvGeometry {
    std::size_t channels, in_h, in_w, out_h, out_w;
    std::size_t kh, kw, stride, pad, dilation;

    std::size_t rows() const { return channels * kh * kw; }
    std::size_t cols() const { return out_h * out_w; }
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// Unfolds one image (C x H x W) into a (C*kh*kw) x (out_h*out_w) matrix.
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* col) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        const T* plane = image + c * g.in_h * g.in_w;
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
                const long di = static_cast<long>(i * g.dilation) - pad;
                const long dj = static_cast<long>(j * g.dilation) - pad;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    T* dst = row + oh * g.out_w;
                    const long ih = static_cast<long>(oh * g.stride) + di;
                    if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = plane + ih * static_cast<long>(g.in_w);
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride) + dj;
                        dst[ow] = (iw < 0 || iw >= static_cast<long>(g.in_w)) ? T(0) : src[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back onto the image gradient.
template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* image) {
    const long pad = static_cast<long>(g.pad);
    for (std::size_t c = 0; c < g.channels; ++c) {
        T* plane = image + c * g.in_h * g.in_w;
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const T* row = col + ((c * g.kh + i) * g.kw + j) * g.cols();
                const long di = static_cast<long>(i * g.dilation) - pad;
                const long dj = static_cast<long>(j * g.dilation) - pad;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride) + di;
                    if (ih < 0 || ih >= static_cast<long>(g.in_h)) {
                        continue;
                    }
                    const T* src = row + oh * g.out_w;
                    T* dst = plane + ih * static_cast<long>(g.in_w);
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const long iw = static_cast<long>(ow * g.stride) + dj;
                        if (iw >= 0 && iw < static_cast<long>(g.in_w)) {
                            dst[iw] += src[ow];
                        }
                    }
                }
            }
        }
    }
}

// dst[cols x rows] = src[rows x cols]^T, in cache-sized tiles.
template <typename T>
void transpose(const T* src, std::size_t rows, std::size_t cols, T* dst) {
    constexpr std::size_t B = 32;
    for (std::size_t r0 = 0; r0 < rows; r0 += B) {
        const std::size_t r1 = std::min(rows, r0 + B);
        for (std::size_t c0 = 0; c0 < cols; c0 += B) {
            const std::size_t c1 = std::min(cols, c0 + B);
            for (std::size_t r = r0; r < r1; ++r) {
                for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
            }
        }
    }
}

thread_local std::uint64_t t_macs = 0;

}  // namespace

std::size_t ConvSpec::out_h(std::size_t in_h) const {
    const long span = static_cast<long>(in_h + 2 * padding) - static_cast<long>(dilation * (kernel_h - 1)) - 1;
    if (stride == 0 || dilation == 0 || span < 0) {
        throw ShapeError("conv2d: output height < 1 (input height " + std::to_string(in_h) + ")");
    }
    return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t ConvSpec::out_w(std::size_t in_w) const {
    const long span = static_cast<long>(in_w + 2 * padding) - static_cast<long>(dilation * (kernel_w - 1)) - 1;
    if (stride == 0 || dilation == 0 || span < 0) {
        throw ShapeError("conv2d: output width < 1 (input width " + std::to_string(in_w) + ")");
    }
    return static_cast<std::size_t>(span) / stride + 1;
}

ConvSpec same_conv(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t dilation,
                   std::size_t stride) {
    ConvSpec spec;
    spec.in_channels = in_channels;
    spec.out_channels = out_channels;
    spec.kernel_h = kernel;
    spec.kernel_w = kernel;
    spec.stride = stride;
    spec.dilation = dilation;
    spec.padding = dilation * (kernel - 1) / 2;
    return spec;
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, const ConvSpec& spec) {
    const Shape& xs = input.shape();
    if (xs.c != spec.in_channels) {
        throw ShapeError(dim_error("conv2d", "input channel count", xs.c, spec.in_channels));
    }
    const Shape& ws = weight.shape();
    const Shape want = spec.weight_shape();
    if (ws.n != want.n) throw ShapeError(dim_error("conv2d", "weight out_channels", ws.n, want.n));
    if (ws.c != want.c) throw ShapeError(dim_error("conv2d", "weight in_channels", ws.c, want.c));
    if (ws.h != want.h) throw ShapeError(dim_error("conv2d", "weight kernel height", ws.h, want.h));
    if (ws.w != want.w) throw ShapeError(dim_error("conv2d", "weight kernel width", ws.w, want.w));
    if (spec.bias) {
        if (!bias.defined()) throw ShapeError("conv2d: spec requests a bias but none was given");
        if (bias.numel() != spec.out_channels) {
            throw ShapeError(dim_error("conv2d", "bias length", bias.numel(), spec.out_channels));
        }
    } else if (bias.defined()) {
        throw ShapeError("conv2d: bias given but spec.bias is false");
    }

    ConvGeometry g{xs.c, xs.h, xs.w, spec.out_h(xs.h), spec.out_w(xs.w),
                   spec.kernel_h, spec.kernel_w, spec.stride, spec.padding, spec.dilation};
    const std::size_t co = spec.out_channels;
    const std::size_t rows = g.rows();
    const std::size_t cols = g.cols();
    Tensor<T> out(Shape{xs.n, co, g.out_h, g.out_w});

    std::vector<T> col(g.pointwise() ? 0 : rows * cols);
    const T* x = input.data().data();
    const T* w = weight.data().data();
    T* y = out.mutable_data().data();
    for (std::size_t n = 0; n < xs.n; ++n) {
        const T* image = x + n * xs.c * xs.h * xs.w;
        const T* columns = image;
        if (!g.pointwise()) {
            im2col(image, g, col.data());
            columns = col.data();
        }
        T* yn = y + n * co * cols;
        if (spec.bias) {
            const T* b = bias.data().data();
            for (std::size_t o = 0; o < co; ++o) {
                std::fill(yn + o * cols, yn + (o + 1) * cols, b[o]);
            }
        }
        detail::gemm(co, cols, rows, w, rows, 1, columns, cols, yn, cols, spec.bias);
    }
    t_macs += static_cast<std::uint64_t>(xs.n) * co * cols * rows;

    Tape<T>* tape = tape_for<T>({&input, &weight, &bias});
    finish<T>("conv2d", out, tape, [input, weight, bias, out, g, spec]() {
        if (!out.has_grad()) return;
        const Shape& xs = input.shape();
        const std::size_t co = spec.out_channels;
        const std::size_t rows = g.rows();
        const std::size_t cols = g.cols();
        const T* dy = out.grad().data();
        const T* x = input.data().data();
        const T* w = weight.data().data();
        std::vector<T> col(g.pointwise() ? 0 : rows * cols);
        std::vector<T> col_t(weight.requires_grad() ? rows * cols : 0);
        std::vector<T> dcol(g.pointwise() ? 0 : rows * cols);
        for (std::size_t n = 0; n < xs.n; ++n) {
            const T* dyn = dy + n * co * cols;
            const T* image = x + n * xs.c * xs.h * xs.w;
            if (weight.requires_grad()) {
                const T* columns = image;
                if (!g.pointwise()) {
                    im2col(image, g, col.data());
                    columns = col.data();
                }
                // dW[co x rows] += dY[co x cols] * col^T[cols x rows]
                transpose(columns, rows, cols, col_t.data());
                detail::gemm(co, rows, cols, dyn, cols, 1, col_t.data(), rows, weight.grad_buffer().data(), rows,
                             true);
            }
            if (spec.bias && bias.requires_grad()) {
                T* db = bias.grad_buffer().data();
                for (std::size_t o = 0; o < co; ++o) {
                    T acc = T(0);
                    for (std::size_t k = 0; k < cols; ++k) acc += dyn[o * cols + k];
                    db[o] += acc;
                }
            }
            if (input.requires_grad()) {
                // dcol[rows x cols] = W^T * dY
                T* dx = input.grad_buffer().data() + n * xs.c * xs.h * xs.w;
                if (g.pointwise()) {
                    detail::gemm(rows, cols, co, w, 1, rows, dyn, cols, dx, cols, true);
                } else {
                    detail::gemm(rows, cols, co, w, 1, rows, dyn, cols, dcol.data(), cols, false);
                    col2im_add(dcol.data(), g, dx);
                }
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
    finish<T>("relu", out, tape_for<T>({&x}), [x, out]() {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto v = x.data();
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (v[i] > T(0)) dx[i] += g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const T v = src[i];
        if (v >= T(0)) {
            dst[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            dst[i] = e / (T(1) + e);
        }
    }
    finish<T>("sigmoid", out, tape_for<T>({&x}), [x, out]() {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto y = out.data();
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * y[i] * (T(1) - y[i]);
    });
    return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a.shape(), b.shape());
    Tensor<T> out(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] + pb[i];
    finish<T>("add", out, tape_for<T>({&a, &b}), [a, b, out]() {
        if (!out.has_grad()) return;
        auto g = out.grad();
        for (const Tensor<T>* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto d = t->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a.shape(), b.shape());
    Tensor<T> out(a.shape());
    auto pa = a.data();
    auto pb = b.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = pa[i] * pb[i];
    finish<T>("mul", out, tape_for<T>({&a, &b}), [a, b, out]() {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto pa = a.data();
        auto pb = b.data();
        if (a.requires_grad()) {
            auto d = a.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * pb[i];
        }
        if (b.requires_grad()) {
            auto d = b.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * pa[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    Tensor<T> out(x.shape());
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * factor;
    finish<T>("scale", out, tape_for<T>({&x}), [x, out, factor]() {
        if (!out.has_grad()) return;
        auto g = out.grad();
        auto dx = x.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
    return out;
}

template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
    const Shape& xs = x.shape();
    const Shape& ss = s.shape();
    if (ss.n != xs.n || ss.c != xs.c || ss.h != 1 || ss.w != 1) {
        throw ShapeError("channel_scale: scale shape " + ss.str() + " does not match " + std::to_string(xs.n) + "x" +
                         std::to_string(xs.c) + "x1x1");
    }
    const std::size_t plane = xs.plane();
    Tensor<T> out(xs);
    auto src = x.data();
    auto sv = s.data();
    auto dst = out.mutable_data();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
        for (std::size_t k = 0; k < plane; ++k) dst[nc * plane + k] = src[nc * plane + k] * sv[nc];
    }
    finish<T>("channel_scale", out, tape_for<T>({&x, &s}), [x, s, out]() {
        if (!out.has_grad()) return;
        const std::size_t plane = x.shape().plane();
        const std::size_t groups = x.shape().n * x.shape().c;
        auto g = out.grad();
        auto src = x.data();
        auto sv = s.data();
        if (x.requires_grad()) {
            auto dx = x.grad_buffer();
            for (std::size_t nc = 0; nc < groups; ++nc) {
                for (std::size_t k = 0; k < plane; ++k) dx[nc * plane + k] += g[nc * plane + k] * sv[nc];
            }
        }
        if (s.requires_grad()) {
            auto ds = s.grad_buffer();
            for (std::size_t nc = 0; nc < groups; ++nc) {
                T acc = T(0);
                for (std::size_t k = 0; k < plane; ++k) acc += g[nc * plane + k] * src[nc * plane + k];
                ds[nc] += acc;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
    if (parts.empty()) {
        throw ShapeError("concat_channels: no inputs");
    }
    const Shape& first = parts[0].shape();
    std::size_t channels = 0;
    for (const Tensor<T>& p : parts) {
        const Shape& s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw ShapeError("concat_channels: incompatible shapes " + first.str() + " and " + s.str());
        }
        channels += s.c;
    }
    const Shape os{first.n, channels, first.h, first.w};
    const std::size_t plane = os.plane();
    Tensor<T> out(os);
    auto dst = out.mutable_data();
    for (std::size_t n = 0; n < os.n; ++n) {
        std::size_t offset = 0;
        for (const Tensor<T>& p : parts) {
            const std::size_t block = p.shape().c * plane;
            auto src = p.data().subspan(n * block, block);
            std::copy(src.begin(), src.end(), dst.begin() + (n * channels * plane + offset));
            offset += block;
        }
    }
    Tape<T>* tape = nullptr;
    for (const Tensor<T>& p : parts) {
        if (Tape<T>* t = tape_for<T>({&p})) tape = t;
    }
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    finish<T>("concat_channels", out, tape, [inputs, out]() {
        if (!out.has_grad()) return;
        const Shape& os = out.shape();
        const std::size_t plane = os.plane();
        auto g = out.grad();
        for (std::size_t n = 0; n < os.n; ++n) {
            std::size_t offset = 0;
            for (const Tensor<T>& p : inputs) {
                const std::size_t block = p.shape().c * plane;
                if (p.requires_grad()) {
                    auto d = p.grad_buffer().subspan(n * block, block);
                    const T* src = g.data() + n * os.c * plane + offset;
                    for (std::size_t i = 0; i < block; ++i) d[i] += src[i];
                }
                offset += block;
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
    const Shape& xs = x.shape();
    if (count == 0 || begin + count > xs.c) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside " + std::to_string(xs.c) + " channels");
    }
    const std::size_t plane = xs.plane();
    Tensor<T> out(Shape{xs.n, count, xs.h, xs.w});
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t n = 0; n < xs.n; ++n) {
        auto from = src.subspan((n * xs.c + begin) * plane, count * plane);
        std::copy(from.begin(), from.end(), dst.begin() + n * count * plane);
    }
    finish<T>("slice_channels", out, tape_for<T>({&x}), [x, out, begin, count]() {
        if (!out.has_grad()) return;
        const Shape& xs = x.shape();
        const std::size_t plane = xs.plane();
        auto g = out.grad();
        auto dx = x.grad_buffer();
        for (std::size_t n = 0; n < xs.n; ++n) {
            for (std::size_t i = 0; i < count * plane; ++i) {
                dx[(n * xs.c + begin) * plane + i] += g[n * count * plane + i];
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    const Shape& xs = x.shape();
    const std::size_t plane = xs.plane();
    if (plane == 0) {
        throw ShapeError("global_avg_pool: empty spatial extent");
    }
    Tensor<T> out(Shape{xs.n, xs.c, 1, 1});
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
        T acc = T(0);
        for (std::size_t k = 0; k < plane; ++k) acc += src[nc * plane + k];
        dst[nc] = acc / static_cast<T>(plane);
    }
    finish<T>("global_avg_pool", out, tape_for<T>({&x}), [x, out]() {
        if (!out.has_grad()) return;
        const std::size_t plane = x.shape().plane();
        auto g = out.grad();
        auto dx = x.grad_buffer();
        for (std::size_t nc = 0; nc < g.size(); ++nc) {
            const T share = g[nc] / static_cast<T>(plane);
            for (std::size_t k = 0; k < plane; ++k) dx[nc * plane + k] += share;
        }
    });
    return out;
}

namespace {

// Per-axis interpolation table: out[o] = (1 - frac) * in[lo] + frac * in[hi].
struct AxisTaps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac;
};

AxisTaps axis_taps(std::size_t in, std::size_t out, ResizeMode mode) {
    AxisTaps t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
        if (mode == ResizeMode::nearest) {
            t.lo[o] = t.hi[o] = std::min(in - 1, o * in / out);
            t.frac[o] = 0.0;
            continue;
        }
        double src = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
        if (src < 0.0) src = 0.0;
        std::size_t lo = static_cast<std::size_t>(src);
        if (lo > in - 1) lo = in - 1;
        t.lo[o] = lo;
        t.hi[o] = std::min(lo + 1, in - 1);
        t.frac[o] = src - static_cast<double>(lo);
    }
    return t;
}

}  // namespace

template <typename T>
Tensor<T> resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, ResizeMode mode) {
    const Shape& xs = x.shape();
    if (xs.h == 0 || xs.w == 0 || out_h == 0 || out_w == 0) {
        throw ShapeError("resize: empty spatial extent (" + xs.str() + " -> " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + ")");
    }
    const AxisTaps ty = axis_taps(xs.h, out_h, mode);
    const AxisTaps tx = axis_taps(xs.w, out_w, mode);
    Tensor<T> out(Shape{xs.n, xs.c, out_h, out_w});
    auto src = x.data();
    auto dst = out.mutable_data();
    for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
        const T* in = src.data() + nc * xs.plane();
        T* o = dst.data() + nc * out_h * out_w;
        for (std::size_t i = 0; i < out_h; ++i) {
            const T fy = static_cast<T>(ty.frac[i]);
            const T* r0 = in + ty.lo[i] * xs.w;
            const T* r1 = in + ty.hi[i] * xs.w;
            for (std::size_t j = 0; j < out_w; ++j) {
                const T fx = static_cast<T>(tx.frac[j]);
                const T top = (T(1) - fx) * r0[tx.lo[j]] + fx * r0[tx.hi[j]];
                const T bottom = (T(1) - fx) * r1[tx.lo[j]] + fx * r1[tx.hi[j]];
                o[i * out_w + j] = (T(1) - fy) * top + fy * bottom;
            }
        }
    }
    finish<T>("resize", out, tape_for<T>({&x}), [x, out, ty, tx]() {
        if (!out.has_grad()) return;
        const Shape& xs = x.shape();
        const Shape& os = out.shape();
        auto g = out.grad();
        auto dx = x.grad_buffer();
        for (std::size_t nc = 0; nc < xs.n * xs.c; ++nc) {
            T* d = dx.data() + nc * xs.plane();
            const T* go = g.data() + nc * os.plane();
            for (std::size_t i = 0; i < os.h; ++i) {
                const T fy = static_cast<T>(ty.frac[i]);
                T* r0 = d + ty.lo[i] * xs.w;
                T* r1 = d + ty.hi[i] * xs.w;
                for (std::size_t j = 0; j < os.w; ++j) {
                    const T fx = static_cast<T>(tx.frac[j]);
                    const T v = go[i * os.w + j];
                    r0[tx.lo[j]] += (T(1) - fy) * (T(1) - fx) * v;
                    r0[tx.hi[j]] += (T(1) - fy) * fx * v;
                    r1[tx.lo[j]] += fy * (T(1) - fx) * v;
                    r1[tx.hi[j]] += fy * fx * v;
                }
            }
        }
    });
    return out;
}

namespace {

// Visits every (image element, tile element) pair of the patch layout.
template <typename F>
void for_each_patch_cell(std::size_t batch, std::size_t channels, std::size_t h, std::size_t w, std::size_t p, F&& f) {
    const std::size_t th = (h + p - 1) / p;
    const std::size_t tw = (w + p - 1) / p;
    for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t ti = 0; ti < th; ++ti) {
            for (std::size_t tj = 0; tj < tw; ++tj) {
                const std::size_t tile = (n * th + ti) * tw + tj;
                for (std::size_t c = 0; c < channels; ++c) {
                    for (std::size_t y = 0; y < p; ++y) {
                        const std::size_t iy = ti * p + y;
                        for (std::size_t x = 0; x < p; ++x) {
                            const std::size_t ix = tj * p + x;
                            const std::size_t tile_idx = ((tile * channels + c) * p + y) * p + x;
                            if (iy < h && ix < w) {
                                f(((n * channels + c) * h + iy) * w + ix, tile_idx);
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

template <typename T>
Tensor<T> split_patches(const Tensor<T>& x, std::size_t patch) {
    const Shape& xs = x.shape();
    if (patch == 0) {
        throw ShapeError("split_patches: patch size must be >= 1");
    }
    const std::size_t tiles = ((xs.h + patch - 1) / patch) * ((xs.w + patch - 1) / patch);
    Tensor<T> out(Shape{xs.n * tiles, xs.c, patch, patch});
    auto src = x.data();
    auto dst = out.mutable_data();
    for_each_patch_cell(xs.n, xs.c, xs.h, xs.w, patch, [&](std::size_t i, std::size_t t) { dst[t] = src[i]; });
    finish<T>("split_patches", out, tape_for<T>({&x}), [x, out, patch]() {
        if (!out.has_grad()) return;
        const Shape& xs = x.shape();
        auto g = out.grad();
        auto dx = x.grad_buffer();
        for_each_patch_cell(xs.n, xs.c, xs.h, xs.w, patch, [&](std::size_t i, std::size_t t) { dx[i] += g[t]; });
    });
    return out;
}

template <typename T>
Tensor<T> merge_patches(const Tensor<T>& tiles, std::size_t patch, std::size_t batch, std::size_t out_h,
                        std::size_t out_w) {
    const Shape& ts = tiles.shape();
    const std::size_t per_image = ((out_h + patch - 1) / patch) * ((out_w + patch - 1) / patch);
    if (patch == 0 || ts.h != patch || ts.w != patch || ts.n != batch * per_image) {
        throw ShapeError("merge_patches: tile tensor " + ts.str() + " does not tile " + std::to_string(batch) + " x " +
                         std::to_string(out_h) + "x" + std::to_string(out_w) + " with patch " + std::to_string(patch));
    }
    Tensor<T> out(Shape{batch, ts.c, out_h, out_w});
    auto src = tiles.data();
    auto dst = out.mutable_data();
    for_each_patch_cell(batch, ts.c, out_h, out_w, patch, [&](std::size_t i, std::size_t t) { dst[i] = src[t]; });
    finish<T>("merge_patches", out, tape_for<T>({&tiles}), [tiles, out, patch]() {
        if (!out.has_grad()) return;
        const Shape& os = out.shape();
        auto g = out.grad();
        auto dt = tiles.grad_buffer();
        for_each_patch_cell(os.n, os.c, os.h, os.w, patch, [&](std::size_t i, std::size_t t) { dt[t] += g[i]; });
    });
    return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = T(0);
    for (T v : x.data()) acc += v;
    Tensor<T> out = Tensor<T>::scalar(acc);
    finish<T>("sum", out, tape_for<T>({&x}), [x, out]() {
        if (!out.has_grad()) return;
        const T g = out.grad()[0];
        for (T& d : x.grad_buffer()) d += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) {
        throw ShapeError("mean: empty tensor");
    }
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled); }
bool finite_checks_enabled() { return g_finite_checks.load(); }

std::uint64_t& mac_counter() { return t_macs; }

#define DMADS_INSTANTIATE_OPS(T)                                                                                 \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const ConvSpec&);            \
    template Tensor<T> relu(const Tensor<T>&);                                                                   \
    template Tensor<T> sigmoid(const Tensor<T>&);                                                                \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> scale(const Tensor<T>&, T);                                                               \
    template Tensor<T> channel_scale(const Tensor<T>&, const Tensor<T>&);                                        \
    template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                              \
    template Tensor<T> slice_channels(const Tensor<T>&, std::size_t, std::size_t);                               \
    template Tensor<T> global_avg_pool(const Tensor<T>&);                                                        \
    template Tensor<T> resize(const Tensor<T>&, std::size_t, std::size_t, ResizeMode);                           \
    template Tensor<T> split_patches(const Tensor<T>&, std::size_t);                                             \
    template Tensor<T> merge_patches(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t);      \
    template Tensor<T> sum(const Tensor<T>&);                                                                    \
    template Tensor<T> mean(const Tensor<T>&);

DMADS_INSTANTIATE_OPS(float)
DMADS_INSTANTIATE_OPS(double)

#undef DMADS_INSTANTIATE_OPS

}  // namespace dmads
