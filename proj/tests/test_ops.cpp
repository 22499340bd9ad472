#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "dmads/error.hpp"
#include "dmads/ops.hpp"
#include "gradcheck.hpp"

using namespace dmads;
using dmads::testing::check_gradients;
using dmads::testing::project;
using dmads::testing::random_tensor;

namespace {

// Direct 7-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                          const ConvSpec& s) {
    const Shape& is = x.shape();
    const std::size_t oh = (is.h + 2 * s.padding - s.dilation * (s.kernel_h - 1) - 1) / s.stride + 1;
    const std::size_t ow = (is.w + 2 * s.padding - s.dilation * (s.kernel_w - 1) - 1) / s.stride + 1;
    Tensor<double> y(Shape{is.n, s.out_channels, oh, ow});
    for (std::size_t n = 0; n < is.n; ++n)
        for (std::size_t o = 0; o < s.out_channels; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double acc = b.defined() ? b.at(0, o, 0, 0) : 0.0;
                    for (std::size_t c = 0; c < is.c; ++c)
                        for (std::size_t ki = 0; ki < s.kernel_h; ++ki)
                            for (std::size_t kj = 0; kj < s.kernel_w; ++kj) {
                                const long r = long(i * s.stride + ki * s.dilation) - long(s.padding);
                                const long q = long(j * s.stride + kj * s.dilation) - long(s.padding);
                                if (r < 0 || q < 0 || r >= long(is.h) || q >= long(is.w)) continue;
                                acc += x.at(n, c, r, q) * w.at(o, c, ki, kj);
                            }
                    y.at(n, o, i, j) = acc;
                }
    return y;
}

double max_rel_diff(std::span<const double> a, std::span<const double> b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff = std::max(diff, std::abs(a[i] - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return diff / std::max(scale, 1e-300);
}

Tensor<double> requiring(Tensor<double> t) {
    t.set_requires_grad(true);
    return t;
}

}  // namespace

TEST(Conv, AllOnesPadOne) {
    ConvSpec s{1, 1, 3, 3, 1, 1, 1, false};
    const Tensor<double> y = conv2d(Tensor<double>({1, 1, 3, 3}, 1.0), Tensor<double>({1, 1, 3, 3}, 1.0),
                                    Tensor<double>(), s);
    const std::vector<double> expect{4, 6, 4, 6, 9, 6, 4, 6, 4};
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), expect);
}

TEST(Conv, CenterKernelIsIdentity) {
    Rng rng(1);
    const Tensor<double> x = random_tensor({2, 1, 7, 5}, rng);
    Tensor<double> w({1, 1, 3, 3});
    w.at(0, 0, 1, 1) = 1.0;
    ConvSpec spec = same_conv(1, 1, 3);
    spec.bias = false;
    const Tensor<double> y = conv2d(x, w, Tensor<double>(), spec);
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv, DilatedCenter) {
    ConvSpec s{1, 1, 3, 3, 1, 2, 2, false};
    const Tensor<double> y = conv2d(Tensor<double>({1, 1, 5, 5}, 1.0), Tensor<double>({1, 1, 3, 3}, 1.0),
                                    Tensor<double>(), s);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 5, 5}));
    EXPECT_EQ(y.at(0, 0, 2, 2), 9.0);
}

TEST(Conv, MatchesNaiveOracleOverGrid) {
    Rng rng(7);
    int cases = 0;
    for (std::size_t k : {1, 3})
        for (std::size_t stride : {1, 2})
            for (std::size_t pad : {0, 1, 2})
                for (std::size_t dil : {1, 2, 4})
                    for (auto [cin, cout, h, w] : {std::array<std::size_t, 4>{3, 5, 9, 11},
                                                   std::array<std::size_t, 4>{16, 24, 20, 20}}) {
                        ConvSpec s{cin, cout, k, k, stride, pad, dil, (cases % 2) == 0};
                        if (h + 2 * pad < dil * (k - 1) + 1) continue;
                        const Tensor<double> x = random_tensor({2, cin, h, w}, rng);
                        const Tensor<double> wt = random_tensor(s.weight_shape(), rng);
                        const Tensor<double> b = s.bias ? random_tensor({1, cout, 1, 1}, rng) : Tensor<double>();
                        const Tensor<double> got = conv2d(x, wt, b, s);
                        const Tensor<double> want = naive_conv(x, wt, b, s);
                        ASSERT_EQ(got.shape(), want.shape());
                        EXPECT_LE(max_rel_diff(got.data(), want.data()), 1e-12)
                            << "k=" << k << " stride=" << stride << " pad=" << pad << " dil=" << dil;

                        // The float path goes through the same kernels at lower precision.
                        Tensor<float> xf(x.shape()), wf(wt.shape()), bf;
                        for (std::size_t i = 0; i < x.numel(); ++i) xf.mutable_data()[i] = float(x.data()[i]);
                        for (std::size_t i = 0; i < wt.numel(); ++i) wf.mutable_data()[i] = float(wt.data()[i]);
                        if (s.bias) {
                            bf = Tensor<float>(b.shape());
                            for (std::size_t i = 0; i < b.numel(); ++i) bf.mutable_data()[i] = float(b.data()[i]);
                        }
                        const Tensor<float> gf = conv2d(xf, wf, bf, s);
                        std::vector<double> gd(gf.data().begin(), gf.data().end());
                        EXPECT_LE(max_rel_diff(gd, want.data()), 1e-5);
                        ++cases;
                    }
    EXPECT_GT(cases, 60);
}

TEST(Conv, ShapeErrors) {
    ConvSpec s{2, 2, 3, 3, 1, 0, 1, true};
    EXPECT_THROW(s.out_h(2), ShapeError);
    EXPECT_THROW(conv2d(Tensor<double>({1, 3, 8, 8}), Tensor<double>(s.weight_shape()), Tensor<double>(), s),
                 ShapeError);
}

TEST(Conv, MacCounter) {
    // 8 -> 8 3x3 on a 32x32 output.
    mac_counter() = 0;
    const ConvSpec s = same_conv(8, 8, 3);
    conv2d(Tensor<float>({1, 8, 32, 32}), Tensor<float>(s.weight_shape()), Tensor<float>({1, 8, 1, 1}), s);
    EXPECT_EQ(mac_counter(), 589824u);
    EXPECT_EQ(s.weight_numel() + 8, 584u);
}

TEST(Elementwise, ReluAndPooling) {
    const Tensor<double> r = relu(Tensor<double>({1, 1, 1, 3}, std::vector<double>{-1, 0, 2}));
    EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{0, 0, 2}));

    EXPECT_EQ(global_avg_pool(Tensor<double>({1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})).item(), 2.5);
    const Tensor<double> g = global_avg_pool(Tensor<double>({2, 3, 5, 4}, 0.75));
    for (double v : g.data()) EXPECT_DOUBLE_EQ(v, 0.75);
}

TEST(Elementwise, PoolIgnoresSpatialPermutation) {
    Rng rng(3);
    const Tensor<double> x = random_tensor({1, 2, 4, 4}, rng);
    Tensor<double> y = x.clone();
    std::vector<std::size_t> perm(16);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < 16; ++i) y.at(0, c, perm[i] / 4, perm[i] % 4) = x.at(0, c, i / 4, i % 4);
    const Tensor<double> a = global_avg_pool(x), b = global_avg_pool(y);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(a.data()[c], b.data()[c], 1e-15);
}

TEST(Elementwise, StableSigmoid) {
    const Tensor<double> s = sigmoid(Tensor<double>({1, 1, 1, 3}, std::vector<double>{-800, 0, 800}));
    EXPECT_EQ(s.data()[0], 0.0);
    EXPECT_EQ(s.data()[1], 0.5);
    EXPECT_EQ(s.data()[2], 1.0);
}

TEST(Channels, ConcatThenSliceIsIdentity) {
    Rng rng(4);
    const Tensor<double> a = random_tensor({2, 3, 4, 5}, rng), b = random_tensor({2, 2, 4, 5}, rng);
    const Tensor<double> c = concat_channels(a, b);
    ASSERT_EQ(c.shape(), (Shape{2, 5, 4, 5}));
    const Tensor<double> a2 = slice_channels(c, 0, 3), b2 = slice_channels(c, 3, 2);
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), a2.data().begin()));
    EXPECT_TRUE(std::equal(b.data().begin(), b.data().end(), b2.data().begin()));
}

TEST(Resize, ConstantStaysConstant) {
    for (ResizeMode m : {ResizeMode::nearest, ResizeMode::bilinear}) {
        const Tensor<double> y = upsample2x(Tensor<double>({1, 2, 3, 3}, 1.25), m);
        ASSERT_EQ(y.shape(), (Shape{1, 2, 6, 6}));
        for (double v : y.data()) EXPECT_EQ(v, 1.25);
    }
}

TEST(Resize, NearestReplicates) {
    const Tensor<double> y =
        upsample2x(Tensor<double>({1, 1, 2, 2}, std::vector<double>{0, 1, 2, 3}), ResizeMode::nearest);
    const std::vector<double> expect{0, 0, 1, 1, 0, 0, 1, 1, 2, 2, 3, 3, 2, 2, 3, 3};
    EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), expect);
}

TEST(Resize, BilinearClosedForm) {
    Rng rng(5);
    const Tensor<double> x = random_tensor({1, 1, 2, 2}, rng);
    for (std::size_t out : {3, 4, 7}) {
        const Tensor<double> y = resize(x, out, out, ResizeMode::bilinear);
        for (std::size_t i = 0; i < out; ++i)
            for (std::size_t j = 0; j < out; ++j) {
                // Half-pixel centres, clamped to the input's first and last sample.
                const double sy = std::clamp((i + 0.5) * 2.0 / double(out) - 0.5, 0.0, 1.0);
                const double sx = std::clamp((j + 0.5) * 2.0 / double(out) - 0.5, 0.0, 1.0);
                const double top = x.at(0, 0, 0, 0) * (1 - sx) + x.at(0, 0, 0, 1) * sx;
                const double bot = x.at(0, 0, 1, 0) * (1 - sx) + x.at(0, 0, 1, 1) * sx;
                EXPECT_NEAR(y.at(0, 0, i, j), top * (1 - sy) + bot * sy, 1e-14);
            }
    }
}

TEST(Patches, SplitMergeRoundTripWithRaggedEdges) {
    Rng rng(6);
    const Tensor<double> x = random_tensor({2, 3, 10, 7}, rng);
    const Tensor<double> tiles = split_patches(x, 4);
    EXPECT_EQ(tiles.shape(), (Shape{2 * 3 * 2, 3, 4, 4}));
    const Tensor<double> back = merge_patches(tiles, 4, 2, 10, 7);
    ASSERT_EQ(back.shape(), x.shape());
    EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), back.data().begin()));
    EXPECT_EQ(split_patches(Tensor<double>({1, 1, 32, 32}), 8).shape().n, 16u);
}

TEST(Autodiff, SimpleGradients) {
    Tensor<double> x = requiring(Tensor<double>({1, 1, 1, 2}, std::vector<double>{-1, 2}));
    Tape<double> tape;
    Tensor<double> loss;
    {
        TapeScope<double> scope(tape);
        loss = sum(relu(x));
    }
    tape.backward(loss);
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{0, 1}));

    x.zero_grad();
    Tape<double> tape2;
    {
        TapeScope<double> scope(tape2);
        loss = sum(mul(x, x));
    }
    tape2.backward(loss);
    EXPECT_EQ(std::vector<double>(x.grad().begin(), x.grad().end()), (std::vector<double>{-2, 4}));
}

TEST(Autodiff, NoRecordingWithoutGradInputs) {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    relu(Tensor<double>({1, 1, 2, 2}, 1.0));
    EXPECT_EQ(tape.size(), 0u);
}

TEST(Autodiff, FiniteChecksNameTheOp) {
    set_finite_checks(true);
    try {
        scale(Tensor<double>({1, 1, 1, 1}, 1e300), 1e300);
        ADD_FAILURE() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("scale"), std::string::npos) << e.what();
    }
    set_finite_checks(false);
}

// Every differentiable op, 64-bit, central differences.
class OpGradient : public ::testing::Test {
protected:
    Rng rng{11};

    void expect_ok(const dmads::testing::Fn& f, const std::vector<Tensor<double>>& inputs, double tol = 1e-6) {
        const auto r = check_gradients(project(f, rng), inputs);
        EXPECT_LE(r.rel_error, tol);
        EXPECT_GT(r.numeric_norm, 0.0);
    }
    Tensor<double> rand(Shape s) { return requiring(random_tensor(s, rng)); }
};

TEST_F(OpGradient, ConvChainedWithSigmoid) {
    const Tensor<double> x = rand({1, 2, 6, 6});
    const ConvSpec s = same_conv(2, 3, 3);
    const Tensor<double> w = rand(s.weight_shape()), b = rand({1, 3, 1, 1});
    const auto r = check_gradients([&] { return sum(sigmoid(conv2d(x, w, b, s))); }, {x, w, b}, 1e-4);
    EXPECT_LE(r.rel_error, 1e-6);
}

TEST_F(OpGradient, ConvStridedDilated) {
    for (auto [stride, pad, dil] : {std::array<std::size_t, 3>{2, 1, 1}, {1, 2, 2}, {1, 4, 4}, {2, 0, 2}}) {
        const ConvSpec s{3, 4, 3, 3, stride, pad, dil, true};
        const Tensor<double> x = rand({2, 3, 9, 9});
        const Tensor<double> w = rand(s.weight_shape()), b = rand({1, 4, 1, 1});
        expect_ok([&] { return conv2d(x, w, b, s); }, {x, w, b});
    }
}

TEST_F(OpGradient, Elementwise) {
    const Tensor<double> a = rand({2, 3, 4, 4}), b = rand({2, 3, 4, 4});
    expect_ok([&] { return relu(a); }, {a});
    expect_ok([&] { return sigmoid(scale(a, 3.0)); }, {a});
    expect_ok([&] { return add(a, b); }, {a, b});
    expect_ok([&] { return mul(a, b); }, {a, b});
    const Tensor<double> s = rand({2, 3, 1, 1});
    expect_ok([&] { return channel_scale(a, s); }, {a, s});
}

TEST_F(OpGradient, Structural) {
    const Tensor<double> a = rand({1, 3, 5, 6}), b = rand({1, 2, 5, 6});
    expect_ok([&] { return concat_channels(a, b); }, {a, b});
    expect_ok([&] { return slice_channels(a, 1, 2); }, {a});
    expect_ok([&] { return global_avg_pool(a); }, {a});
    expect_ok([&] { return mean(mul(a, a)); }, {a});
    expect_ok([&] { return sum(mul(a, a)); }, {a});
}

TEST_F(OpGradient, ResizeAndPatches) {
    const Tensor<double> a = rand({1, 2, 5, 6});
    expect_ok([&] { return resize(a, 10, 12, ResizeMode::bilinear); }, {a});
    expect_ok([&] { return resize(a, 3, 4, ResizeMode::bilinear); }, {a});
    expect_ok([&] { return resize(a, 10, 12, ResizeMode::nearest); }, {a});
    expect_ok([&] { return split_patches(a, 4); }, {a});
    const Tensor<double> t = rand({2 * 2, 2, 3, 3});
    expect_ok([&] { return merge_patches(t, 3, 1, 5, 6); }, {t});
}
