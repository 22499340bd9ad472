// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>

#include "dmads/blocks.hpp"
#include "dmads/checkpoint.hpp"
#include "dmads/cli.hpp"
#include "dmads/dataset.hpp"
#include "dmads/error.hpp"
#include "dmads/loss.hpp"
#include "dmads/metrics.hpp"
#include "dmads/model.hpp"
#include "dmads/train.hpp"
#include "gradcheck.hpp"

using namespace dmads;
using namespace dmads::nn;
using dmads::testing::all_parameters;
using dmads::testing::check_gradients;
using dmads::testing::project;
using dmads::testing::random_tensor;
using dmads::testing::randomize;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Collects failed checks; the first few are echoed on the criterion line.
struct Verdict {
    std::vector<std::string> failures;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Tensor<double> requiring(Tensor<double> t) {
    t.set_requires_grad(true);
    return t;
}

bool bitwise_equal(const Tensor<double>& a, const Tensor<double>& b) {
    return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

bool all_equal(const Tensor<double>& a, double v) {
    for (double x : a.data())
        if (x != v) return false;
    return true;
}

// ---------------------------------------------------------------- criterion 1

void gradient_suite(Verdict& v) {
    const auto t0 = Clock::now();
    Rng rng(11);
    double worst_op = 0.0, worst_block = 0.0;
    auto op = [&](const std::string& name, const dmads::testing::Fn& f, const std::vector<Tensor<double>>& in) {
        const auto r = check_gradients(project(f, rng), in);
        worst_op = std::max(worst_op, r.rel_error);
        v.require(r.rel_error <= 1e-6 && r.numeric_norm > 0.0, name);
    };
    auto rand = [&](Shape s) { return requiring(random_tensor(s, rng)); };

    {
        const Tensor<double> x = rand({1, 2, 6, 6});
        const ConvSpec s = same_conv(2, 3, 3);
        const Tensor<double> w = rand(s.weight_shape()), b = rand({1, 3, 1, 1});
        const auto r = check_gradients([&] { return sum(sigmoid(conv2d(x, w, b, s))); }, {x, w, b}, 1e-4);
        worst_op = std::max(worst_op, r.rel_error);
        v.require(r.rel_error <= 1e-6, "conv2d+sigmoid");
    }
    for (auto [stride, pad, dil] : {std::array<std::size_t, 3>{2, 1, 1}, {1, 2, 2}, {1, 4, 4}, {2, 0, 2}}) {
        const ConvSpec s{3, 4, 3, 3, stride, pad, dil, true};
        const Tensor<double> x = rand({1, 3, 9, 9}), w = rand(s.weight_shape()), b = rand({1, 4, 1, 1});
        op("conv2d", [&] { return conv2d(x, w, b, s); }, {x, w, b});
    }
    const Tensor<double> a = rand({1, 3, 5, 6}), b = rand({1, 3, 5, 6}), c = rand({1, 2, 5, 6});
    const Tensor<double> s = rand({1, 3, 1, 1});
    op("relu", [&] { return relu(a); }, {a});
    op("sigmoid", [&] { return sigmoid(scale(a, 3.0)); }, {a});
    op("add", [&] { return add(a, b); }, {a, b});
    op("mul", [&] { return mul(a, b); }, {a, b});
    op("channel_scale", [&] { return channel_scale(a, s); }, {a, s});
    op("concat", [&] { return concat_channels(a, c); }, {a, c});
    op("slice", [&] { return slice_channels(a, 1, 2); }, {a});
    op("global_avg_pool", [&] { return global_avg_pool(a); }, {a});
    op("mean", [&] { return mean(mul(a, a)); }, {a});
    op("sum", [&] { return sum(mul(a, a)); }, {a});
    op("resize bilinear", [&] { return resize(c, 10, 12, ResizeMode::bilinear); }, {c});
    op("resize nearest", [&] { return resize(c, 10, 12, ResizeMode::nearest); }, {c});
    op("split_patches", [&] { return split_patches(c, 4); }, {c});
    const Tensor<double> tiles = rand({4, 2, 3, 3});
    op("merge_patches", [&] { return merge_patches(tiles, 3, 1, 5, 6); }, {tiles});
    {
        Tensor<double> gt({1, 1, 5, 6});
        for (double& x : gt.mutable_data()) x = rng.uniform() < 0.4 ? 1.0 : 0.0;
        const Tensor<double> z = rand({1, 1, 5, 6});
        auto plain = [&](const std::string& name, const dmads::testing::Fn& f) {
            const auto r = check_gradients(f, {z});
            worst_op = std::max(worst_op, r.rel_error);
            v.require(r.rel_error <= 1e-6, name);
        };
        plain("bce", [&] { return bce_with_logits(z, gt); });
        plain("soft_iou", [&] { return soft_iou_loss(z, gt); });
    }

    auto block = [&](const std::string& name, ParameterStore<double>& store, const dmads::testing::Fn& f,
                     std::vector<Tensor<double>> inputs, std::size_t per_tensor) {
        randomize(store, rng);
        for (Tensor<double> p : all_parameters(store)) {
            p.set_requires_grad(true);
            inputs.push_back(p);
        }
        const auto r = check_gradients(project(f, rng), inputs, 1e-6, per_tensor);
        worst_block = std::max(worst_block, r.rel_error);
        v.require(r.rel_error <= 1e-5 && r.numeric_norm > 0.0, name);
    };
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_residual_block(f, "r", 4);
        const Tensor<double> x = rand({1, 4, 8, 8});
        block("residual", st, [&] { return residual_block(x, p); }, {x}, 0);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_se_gate(f, "se", 8);
        const Tensor<double> x = rand({1, 8, 6, 6});
        block("se", st, [&] { return se_gate(x, p).scaled; }, {x}, 0);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_esa(f, "esa", 8);
        const Tensor<double> x = rand({1, 8, 8, 8});
        block("esa", st, [&] { return esa(x, p); }, {x}, 0);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_mscfa(f, "m", 8);
        const Tensor<double> x = rand({1, 8, 16, 16});
        block("mscfa", st, [&] { return mscfa(x, p); }, {x}, 24);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_lfa(f, "l", 8, {2, 4, 8, 16});
        const Tensor<double> x = rand({1, 8, 16, 16});
        block("lfa", st, [&] { return lfa(x, p); }, {x}, 24);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_frfb(f, "fr", 8);
        const Tensor<double> low = rand({1, 8, 16, 16}), deep = rand({1, 16, 8, 8});
        block("frfb", st, [&] { return frfb(low, deep, p); }, {low, deep}, 24);
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 3);
        const auto p = make_fusion(f, "fusion", 8);
        const Tensor<double> o1 = rand({1, 8, 16, 16}), o2 = rand({1, 8, 16, 16});
        block("fusion", st, [&] { return fusion(o1, o2, p); }, {o1, o2}, 24);
    }
    const double secs = seconds_since(t0);
    v.require(secs < 120.0, "runtime");
    char buf[160];
    std::snprintf(buf, sizeof buf, "worst op rel err %.2e, worst block rel err %.2e, %.1f s", worst_op, worst_block,
                  secs);
    v.detail << buf;
}

// ---------------------------------------------------------------- criterion 2

void identities(Verdict& v) {
    Rng rng(7);
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 1);
        const auto p = make_mscfa(f, "m", 8);
        st.fill(0.0);
        const Tensor<double> x = random_tensor({1, 8, 32, 32}, rng);
        v.require(bitwise_equal(mscfa(x, p), x), "mscfa identity");
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 1);
        const auto se = make_se_gate(f, "se", 8);
        const auto sa = make_esa(f, "esa", 8);
        st.fill(0.0);
        const Tensor<double> x = random_tensor({2, 8, 16, 16}, rng);
        const Tensor<double> half = scale(x, 0.5);
        v.require(bitwise_equal(se_gate(x, se).scaled, half), "se half");
        v.require(bitwise_equal(esa(x, sa), half), "esa half");
    }
    {
        ParameterStore<double> st;
        ParamFactory<double> f(st, 1);
        const auto p = make_frfb(f, "fr", 8);
        st.fill(0.0);
        const Tensor<double> low = random_tensor({1, 8, 16, 16}, rng), deep = random_tensor({1, 16, 8, 8}, rng);
        v.require(all_equal(frfb(low, deep, p), 0.0), "frfb zero");
    }
    Tensor<double> gt({2, 1, 8, 8});
    for (double& x : gt.mutable_data()) x = rng.uniform() < 0.3 ? 1.0 : 0.0;
    int exact = 0;
    for (int trial = 0; trial < 50; ++trial)
        for (LossKind kind : {LossKind::bce, LossKind::soft_iou}) {
            ForwardOutput<double> out;
            out.final_map = random_tensor({2, 1, 8, 8}, rng, -4, 4);
            for (int i = 0; i < 6; ++i) out.deep_maps.push_back(random_tensor({2, 1, 8, 8}, rng, -4, 4));
            const auto b = deep_supervised_loss(out, gt, 0.5, kind);
            double sum = 0.0;
            for (double l : b.deep_losses) sum += l;
            if (b.total.item() - b.final_loss == 0.5 * sum) ++exact;
        }
    v.require(exact == 100, "loss decomposition");
    v.detail << "decomposition exact in " << exact << "/100 trials";
}

// ---------------------------------------------------------------- criterion 3

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

template <typename A>
double max_rel_diff(const A& a, std::span<const double> b) {
    double diff = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        diff = std::max(diff, std::abs(double(a[i]) - b[i]));
        scale = std::max(scale, std::abs(b[i]));
    }
    return diff / std::max(scale, 1e-300);
}

BinaryMask random_mask(Rng& rng, std::size_t h, std::size_t w) {
    BinaryMask m(h, w);
    const double density = rng.uniform();
    for (auto& x : m.values) x = rng.uniform() < density ? 1 : 0;
    return m;
}

void oracles(Verdict& v) {
    Rng rng(7);
    int cases = 0;
    double worst = 0.0;
    for (std::size_t k : {1, 3})
        for (std::size_t stride : {1, 2})
            for (std::size_t pad : {0, 1, 2})
                for (std::size_t dil : {1, 2, 4}) {
                    const ConvSpec s{6, 5, k, k, stride, pad, dil, cases % 2 == 0};
                    const Tensor<double> x = random_tensor({2, 6, 13, 11}, rng);
                    const Tensor<double> w = random_tensor(s.weight_shape(), rng);
                    const Tensor<double> b = s.bias ? random_tensor({1, 5, 1, 1}, rng) : Tensor<double>();
                    const Tensor<double> want = naive_conv(x, w, b, s);
                    Tensor<float> xf(x.shape()), wf(w.shape()), bf;
                    std::copy(x.data().begin(), x.data().end(), xf.mutable_data().begin());
                    std::copy(w.data().begin(), w.data().end(), wf.mutable_data().begin());
                    if (s.bias) {
                        bf = Tensor<float>(b.shape());
                        std::copy(b.data().begin(), b.data().end(), bf.mutable_data().begin());
                    }
                    const double e64 = max_rel_diff(conv2d(x, w, b, s).data(), want.data());
                    const double e32 = max_rel_diff(conv2d(xf, wf, bf, s).data(), want.data());
                    worst = std::max(worst, e32);
                    v.require(e64 <= 1e-5 && e32 <= 1e-5, "conv k" + std::to_string(k) + " s" +
                                                               std::to_string(stride) + " p" + std::to_string(pad) +
                                                               " d" + std::to_string(dil));
                    ++cases;
                }
    for (int trial = 0; trial < 100; ++trial) {
        const BinaryMask p = random_mask(rng, 16, 16), g = random_mask(rng, 16, 16);
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < p.values.size(); ++i) {
            tp += p.values[i] && g.values[i];
            fp += p.values[i] && !g.values[i];
            fn += !p.values[i] && g.values[i];
        }
        const SampleMetrics m = compute_metrics(p, g);
        bool ok = double(m.counts.tp) == tp && double(m.counts.fp) == fp && double(m.counts.fn) == fn;
        if (tp + fp + fn > 0) {
            ok = ok && std::abs(m.dice - 2 * tp / (2 * tp + fp + fn)) <= 1e-9;
            ok = ok && std::abs(m.iou - tp / (tp + fp + fn)) <= 1e-9;
            ok = ok && std::abs(m.iou - m.dice / (2 - m.dice)) <= 1e-9;
            if (tp + fp > 0) ok = ok && std::abs(m.precision - tp / (tp + fp)) <= 1e-9;
            if (tp + fn > 0) ok = ok && std::abs(m.recall - tp / (tp + fn)) <= 1e-9;
        }
        v.require(ok, "metrics trial " + std::to_string(trial));
    }
    char buf[120];
    std::snprintf(buf, sizeof buf, "%d conv cases, worst float rel err %.2e; 100 metric pairs", cases, worst);
    v.detail << buf;
}

// ---------------------------------------------------------------- criterion 4

void shapes_and_ablations(Verdict& v) {
    const auto t0 = Clock::now();
    for (std::size_t size : {256, 128}) {
        ModelConfig cfg;
        cfg.image_size = size;
        const DmadsNet<float> net(cfg);
        const auto out = net.forward(Tensor<float>({1, 3, size, size}, 0.5f));
        v.require(out.final_map.shape() == Shape{1, 1, size, size}, "final map at " + std::to_string(size));
        v.require(out.deep_maps.size() == 6, "deep map count at " + std::to_string(size));
        for (const auto& m : out.deep_maps)
            v.require(m.shape() == Shape{1, 1, size, size}, "deep map shape at " + std::to_string(size));
    }
    auto count = [&](const char* label, void (*modify)(ModelConfig&)) {
        ModelConfig cfg;
        cfg.image_size = 64;
        modify(cfg);
        const DmadsNet<float> net(cfg);
        const auto out = net.forward(Tensor<float>({1, 3, 64, 64}, 0.5f));
        v.require(out.final_map.shape() == Shape{1, 1, 64, 64}, std::string("variant ") + label + " runs");
        return net.parameter_count();
    };
    const std::size_t full = count("full", [](ModelConfig&) {});
    const std::size_t a = count("a", [](ModelConfig& c) { c.disable_mscfa = true; });
    const std::size_t b = count("b", [](ModelConfig& c) { c.disable_frfb = true; });
    const std::size_t c = count("c", [](ModelConfig& c) { c.disable_lfa = true; });
    const std::size_t d = count("d", [](ModelConfig& c) { c.disable_deep_supervision = true; });
    const std::size_t e = count("e", [](ModelConfig& c) { c.single_backbone_r18 = true; });
    v.require(a < full, "variant a smaller");
    v.require(c < full, "variant c smaller");
    v.require(e < full, "variant e smaller");
    char buf[200];
    std::snprintf(buf, sizeof buf, "params full %zu, a %zu, b %zu, c %zu, d %zu, e %zu; %.1f s", full, a, b, c, d, e,
                  seconds_since(t0));
    v.detail << buf;
}

// ---------------------------------------------------------------- criterion 5

// Full width costs about 30 s per step on one core, so the run uses the
// narrowest width at the learning rate the smoke test is specified with.
constexpr double kOverfitWidth = 0.125;
constexpr double kOverfitLearningRate = 1e-3;

void overfit(Verdict& v, const fs::path& work) {
    generate_synthetic(work / "overfit", 8, 64, 0);
    const std::vector<Sample> samples = load_samples(work / "overfit", 64);
    auto run = [&] {
        ModelConfig cfg;
        cfg.image_size = 64;
        cfg.width_multiplier = kOverfitWidth;
        DmadsNet<float> net(cfg);
        TrainOptions opts;
        opts.adam.lr = kOverfitLearningRate;
        opts.max_steps = 300;
        opts.stop_at_dice = 0.95;
        const auto t0 = Clock::now();
        TrainResult r = train(net, samples, samples, opts);
        const double secs = seconds_since(t0);
        const double dice = evaluate(net, samples).dice;
        return std::tuple{r, secs, dice};
    };
    const auto [r1, s1, d1] = run();
    const auto [r2, s2, d2] = run();
    v.require(d1 >= 0.95, "train Dice");
    v.require(r1.steps <= 300, "step budget");
    v.require(s1 < 600.0, "time budget");
    v.require(r1.log == r2.log && d1 == d2, "bitwise rerun");
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "width %.3g, lr %.0e, other settings default: train Dice %.4f after %zu steps in %.1f s; rerun log %s",
                  kOverfitWidth, kOverfitLearningRate, d1, r1.steps, s1, r1.log == r2.log ? "identical" : "differs");
    v.detail << buf;
}

// ---------------------------------------------------------------- criterion 6

std::size_t stop_epoch(ScheduleOptions opts, const std::function<double(std::size_t)>& metric_at,
                       std::vector<std::size_t>* evals = nullptr) {
    EarlyStopping s(opts);
    for (std::size_t e = 1;; ++e) {
        if (s.end_epoch(e)) {
            if (evals) evals->push_back(e);
            s.report(metric_at(e));
        }
        if (s.should_stop()) return e;
    }
}

void schedule(Verdict& v) {
    std::vector<std::size_t> evals;
    const std::size_t cap = stop_epoch({}, [](std::size_t e) { return double(e); }, &evals);
    v.require(cap == 400, "cap at 400");
    v.require(evals.size() == 40 && evals.front() == 10 && evals.back() == 400, "eval every 10");
    const std::size_t late = stop_epoch({}, [](std::size_t e) { return e <= 20 ? double(e) : 0.0; });
    v.require(late == 70, "patience after improvement at 20");
    const std::size_t flat = stop_epoch({}, [](std::size_t) { return 0.5; });
    v.require(flat == 60, "patience with flat metric");
    ScheduleOptions p45;
    p45.patience = 45;
    const std::size_t gran = stop_epoch(p45, [](std::size_t e) { return e == 10 ? 1.0 : 0.0; });
    v.require(gran == 60, "patience checked on eval epochs only");
    v.detail << "stops at " << cap << " (rising), " << late << " (best at 20), " << flat << " (flat), " << gran
             << " (patience 45)";
}

// ---------------------------------------------------------------- criterion 7

std::string checkpoint_error(const std::function<void()>& f) {
    try {
        f();
    } catch (const CheckpointError& e) {
        return e.what();
    }
    return {};
}

void serialization(Verdict& v, const fs::path& work) {
    ModelConfig cfg;
    cfg.image_size = 16;
    cfg.width_multiplier = 0.0625;
    const DmadsNet<float> a(cfg);
    save_checkpoint(work / "m.ckpt", a.parameters(), cfg);
    ModelConfig other = cfg;
    other.seed = 77;
    DmadsNet<float> b(other);
    load_parameters(read_checkpoint(work / "m.ckpt"), b.parameters(), b.config());
    const auto& ea = a.parameters().entries();
    const auto& eb = b.parameters().entries();
    bool same = ea.size() == eb.size();
    for (std::size_t i = 0; same && i < ea.size(); ++i)
        same = ea[i].first == eb[i].first &&
               std::memcmp(ea[i].second.data().data(), eb[i].second.data().data(),
                           ea[i].second.numel() * sizeof(float)) == 0;
    v.require(same, "bitwise round trip");

    const std::vector<std::uint8_t> good = encode_checkpoint(make_checkpoint(a.parameters(), cfg));
    const std::vector<std::uint8_t> cut(good.begin(), good.end() - 1);
    v.require(!checkpoint_error([&] { decode_checkpoint(cut); }).empty(), "truncation");
    Rng rng(3);
    std::size_t rejected = 0;
    const std::size_t trials = 200;
    for (std::size_t t = 0; t < trials; ++t) {
        std::vector<std::uint8_t> bad = good;
        bad[rng.below(bad.size())] ^= std::uint8_t(1 + rng.below(255));
        if (!checkpoint_error([&] { decode_checkpoint(bad); }).empty()) ++rejected;
    }
    v.require(rejected == trials, "mutation");
    ModelConfig changed = cfg;
    changed.disable_lfa = true;
    DmadsNet<float> c(changed);
    const std::string msg = checkpoint_error([&] { load_parameters(decode_checkpoint(good), c.parameters(), changed); });
    v.require(msg.find("incompatible") != std::string::npos, "cross-config");
    v.detail << good.size() << "-byte file; truncation rejected; " << rejected << "/" << trials
             << " single-byte mutations rejected; cross-config: " << msg;
}

// ---------------------------------------------------------------- criterion 8

void overlay(Verdict& v) {
    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        const BinaryMask p = random_mask(rng, 20, 13), g = random_mask(rng, 20, 13);
        const ConfusionCounts c = confusion(p, g);
        const RgbImage img = render_overlay(p, g);
        std::size_t red = 0, green = 0;
        for (std::size_t i = 0; i < img.height * img.width; ++i) {
            const std::uint8_t r = img.pixels[3 * i], gr = img.pixels[3 * i + 1], b = img.pixels[3 * i + 2];
            red += r == 255 && gr == 0 && b == 0;
            green += r == 0 && gr == 255 && b == 0;
        }
        v.require(red == c.fp && green == c.fn, "trial " + std::to_string(trial));
    }
    v.detail << "red = FP and green = FN on 50 random pairs";
}

// ---------------------------------------------------------------- criterion 9

void accounting(Verdict& v) {
    std::ostringstream out, err;
    const int code = run_cli({"dmads", "inspect"}, out, err);
    v.require(code == kExitOk, "inspect exit code");
    const std::string text = out.str();
    v.require(text.find("parameters: ") != std::string::npos, "parameter line");
    v.require(text.find("GMac") != std::string::npos, "GMac line");
    std::string summary;
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);)
        if (line.rfind("parameters", 0) == 0 || line.rfind("multiply", 0) == 0) summary += (summary.empty() ? "" : "; ") + line;
    v.detail << summary << " (published: 36.28M, 33.06 GMac)";
}

}  // namespace

int main() {
    const fs::path work = fs::temp_directory_path() / "dmads_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria{
        {"gradient suite", gradient_suite},
        {"analytic identities", identities},
        {"oracle equivalence", oracles},
        {"shape and count contract", shapes_and_ablations},
        {"overfit smoke test", [&](Verdict& v) { overfit(v, work); }},
        {"schedule semantics", schedule},
        {"serialization", [&](Verdict& v) { serialization(v, work); }},
        {"overlay correctness", overlay},
        {"informational accounting", accounting},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict v;
        try {
            criteria[i].second(v);
        } catch (const std::exception& e) {
            v.failures.push_back(std::string("exception: ") + e.what());
        }
        const bool ok = v.failures.empty();
        failed += !ok;
        std::string line = (ok ? "PASS" : "FAIL") + std::string(" criterion ") + std::to_string(i + 1) + " (" +
                           criteria[i].first + "): " + v.detail.str();
        if (!ok) {
            line += " | failed:";
            for (std::size_t k = 0; k < std::min<std::size_t>(v.failures.size(), 5); ++k) line += " [" + v.failures[k] + "]";
        }
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
    }
    fs::remove_all(work);
    return failed == 0 ? 0 : 1;
}
