#include <gtest/gtest.h>

#include <cmath>

#include "dmads/error.hpp"
#include "dmads/loss.hpp"
#include "dmads/optim.hpp"
#include "dmads/train.hpp"
#include "gradcheck.hpp"

using namespace dmads;
using nn::LossKind;
using dmads::testing::check_gradients;
using dmads::testing::random_tensor;

namespace {

Tensor<double> logits_of(std::initializer_list<double> v) {
    return Tensor<double>({1, 1, 1, v.size()}, std::vector<double>(v));
}

nn::ForwardOutput<double> with_maps(const Tensor<double>& final_map, std::vector<Tensor<double>> deep) {
    nn::ForwardOutput<double> out;
    out.final_map = final_map;
    out.deep_maps = std::move(deep);
    return out;
}

// Epoch at which training stops for a sequence of validation results, one
// per check.
std::size_t stop_epoch(ScheduleOptions opts, const std::function<double(std::size_t)>& metric_at) {
    EarlyStopping s(opts);
    for (std::size_t e = 1;; ++e) {
        if (s.end_epoch(e)) s.report(metric_at(e));
        if (s.should_stop()) return e;
    }
}

}  // namespace

TEST(Loss, BceKnownValues) {
    EXPECT_NEAR(bce_with_logits(logits_of({0, 0, 0}), logits_of({1, 1, 1})).item(), std::log(2.0), 1e-15);
    EXPECT_LE(bce_with_logits(logits_of({40, 40}), logits_of({1, 1})).item(), 1.01e-7);
    EXPECT_LE(bce_with_logits(logits_of({-40}), logits_of({0})).item(), 1.01e-7);
}

TEST(Loss, SoftIouKnownValues) {
    EXPECT_LE(soft_iou_loss(logits_of({50, -50, 50}), logits_of({1, 0, 1})).item(), 1e-7);
    // p = 0.5 on a single positive pixel: I = 0.5, U = 1.
    EXPECT_NEAR(soft_iou_loss(logits_of({0}), logits_of({1})).item(), 0.5, 1e-7);
}

TEST(Loss, RejectsNonBinaryTargetsAndShapeMismatch) {
    EXPECT_THROW(bce_with_logits(logits_of({0, 0}), logits_of({0.5, 1})), DataError);
    EXPECT_THROW(soft_iou_loss(logits_of({0, 0}), logits_of({1})), ShapeError);
}

TEST(Loss, Gradients) {
    Rng rng(1);
    Tensor<double> z = random_tensor({2, 1, 6, 6}, rng, -3, 3);
    z.set_requires_grad(true);
    Tensor<double> gt({2, 1, 6, 6});
    for (double& v : gt.mutable_data()) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
    EXPECT_LE(check_gradients([&] { return bce_with_logits(z, gt); }, {z}).rel_error, 1e-6);
    EXPECT_LE(check_gradients([&] { return soft_iou_loss(z, gt); }, {z}).rel_error, 1e-6);
}

TEST(Loss, DeepSupervisionDecompositionIsExact) {
    Rng rng(2);
    Tensor<double> gt({2, 1, 8, 8});
    for (double& v : gt.mutable_data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
    for (int trial = 0; trial < 50; ++trial)
        for (LossKind kind : {LossKind::bce, LossKind::soft_iou}) {
            std::vector<Tensor<double>> deep;
            for (int i = 0; i < 6; ++i) deep.push_back(random_tensor({2, 1, 8, 8}, rng, -4, 4));
            const auto b = deep_supervised_loss(with_maps(random_tensor({2, 1, 8, 8}, rng, -4, 4), deep), gt, 0.5, kind);
            double sum = 0.0;
            for (double l : b.deep_losses) sum += l;
            EXPECT_EQ(sum, b.deep_sum);
            EXPECT_EQ(b.total.item() - b.final_loss, 0.5 * b.deep_sum);
        }
}

TEST(Loss, DeepSupervisionArithmetic) {
    const Tensor<double> gt = logits_of({1, 1, 1, 1});
    const Tensor<double> z0 = logits_of({0, 0, 0, 0});
    // Each deep map at logit 0 against an all-positive target: BCE = ln 2.
    const auto b = deep_supervised_loss(with_maps(z0, std::vector<Tensor<double>>(6, z0)), gt, 0.5, LossKind::bce);
    EXPECT_NEAR(b.total.item(), std::log(2.0) * 4.0, 1e-12);
    const auto t0 = deep_supervised_loss(with_maps(z0, std::vector<Tensor<double>>(6, z0)), gt, 0.0, LossKind::bce);
    EXPECT_EQ(t0.total.item(), t0.final_loss);
    EXPECT_THROW(deep_supervised_loss(with_maps(z0, {z0, z0}), gt, 0.5, LossKind::bce), ShapeError);
    const auto none = deep_supervised_loss(with_maps(z0, {}), gt, 0.5, LossKind::bce);
    EXPECT_EQ(none.total.item(), none.final_loss);
}

TEST(Loss, DeepSupervisionGradientWeights) {
    Tensor<double> z0 = logits_of({0.3, -0.2});
    z0.set_requires_grad(true);
    std::vector<Tensor<double>> deep;
    for (int i = 0; i < 6; ++i) {
        deep.push_back(logits_of({0.3, -0.2}));
        deep.back().set_requires_grad(true);
    }
    const Tensor<double> gt = logits_of({1, 0});
    Tape<double> tape;
    LossBreakdown<double> b;
    {
        TapeScope<double> scope(tape);
        b = deep_supervised_loss(with_maps(z0, deep), gt, 0.5, LossKind::bce);
    }
    tape.backward(b.total);
    for (const auto& d : deep)
        for (std::size_t i = 0; i < 2; ++i) EXPECT_DOUBLE_EQ(d.grad()[i], 0.5 * z0.grad()[i]);
}

TEST(Adam, FirstStepClosedForm) {
    nn::ParameterStore<double> store;
    Tensor<double> p({1, 1, 1, 1}, 0.0);
    p.set_requires_grad(true);
    store.add("p", p);
    Adam<double> adam(store);
    p.grad_buffer()[0] = 1.0;
    adam.step();
    // m = 0.1, v = 0.001; m_hat = 1, v_hat = 1.
    const double m_hat = (0.1 * 1.0) / (1.0 - 0.9);
    const double v_hat = (0.001 * 1.0) / (1.0 - 0.999);
    EXPECT_NEAR(p.item(), -1e-3 * m_hat / (std::sqrt(v_hat) + 1e-8), 1e-18);
    EXPECT_NEAR(p.item(), -9.99999990e-4, 1e-12);
    EXPECT_EQ(adam.steps(), 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
    nn::ParameterStore<double> store;
    Tensor<double> p({1, 1, 1, 3}, 0.7);
    p.set_requires_grad(true);
    store.add("p", p);
    Adam<double> adam(store);
    for (int i = 0; i < 3; ++i) {
        p.zero_grad();
        p.grad_buffer();
        adam.step();
    }
    for (double v : p.data()) EXPECT_EQ(v, 0.7);
    for (double v : adam.first_moments()[0]) EXPECT_EQ(v, 0.0);
    for (double v : adam.second_moments()[0]) EXPECT_EQ(v, 0.0);
}

TEST(Adam, MissingGradientNamesTheParameter) {
    nn::ParameterStore<double> store;
    Tensor<double> p({1, 1, 1, 1});
    p.set_requires_grad(true);
    store.add("layer.weight", p);
    Adam<double> adam(store);
    try {
        adam.step();
        FAIL();
    } catch (const AutodiffError& e) {
        EXPECT_NE(std::string(e.what()).find("layer.weight"), std::string::npos);
    }
}

TEST(Adam, DeterministicRuns) {
    auto run = [] {
        Rng rng(4);
        nn::ParameterStore<double> store;
        Tensor<double> p = random_tensor({1, 2, 3, 3}, rng);
        p.set_requires_grad(true);
        store.add("p", p);
        Adam<double> adam(store);
        for (int i = 0; i < 10; ++i) {
            p.zero_grad();
            Tape<double> tape;
            Tensor<double> loss;
            {
                TapeScope<double> scope(tape);
                loss = sum(mul(sigmoid(p), p));
            }
            tape.backward(loss);
            adam.step();
        }
        return std::vector<double>(p.data().begin(), p.data().end());
    };
    EXPECT_EQ(run(), run());
}

TEST(Schedule, EvalEveryTenEpochs) {
    EarlyStopping s;
    std::vector<std::size_t> evals;
    for (std::size_t e = 1; e <= 40; ++e)
        if (s.end_epoch(e)) {
            evals.push_back(e);
            s.report(double(e));
        }
    EXPECT_EQ(evals, (std::vector<std::size_t>{10, 20, 30, 40}));
}

TEST(Schedule, PatienceStopsFiftyEpochsAfterLastImprovement) {
    EXPECT_EQ(stop_epoch({}, [](std::size_t e) { return e <= 20 ? double(e) : 0.0; }), 70u);
    EXPECT_EQ(stop_epoch({}, [](std::size_t) { return 0.5; }), 60u);
}

TEST(Schedule, CapAtMaxEpochs) {
    EXPECT_EQ(stop_epoch({}, [](std::size_t e) { return double(e); }), 400u);
}

TEST(Schedule, PatienceOnlyCheckedOnEvalEpochs) {
    ScheduleOptions opts;
    opts.patience = 45;
    // Last improvement at 10: 45 epochs elapse at 55, the next check is 60.
    EXPECT_EQ(stop_epoch(opts, [](std::size_t e) { return e == 10 ? 1.0 : 0.0; }), 60u);
}

TEST(Schedule, EqualMetricIsNotAnImprovement) {
    EarlyStopping s;
    for (std::size_t e = 1; e <= 10; ++e) s.end_epoch(e);
    EXPECT_TRUE(s.report(0.8));
    for (std::size_t e = 11; e <= 20; ++e) s.end_epoch(e);
    EXPECT_FALSE(s.report(0.8));
    EXPECT_EQ(s.best_epoch(), 10u);
    EXPECT_EQ(s.epochs_since_best(), 10u);
}

TEST(Schedule, EpochsMustBeConsecutive) {
    EarlyStopping s;
    s.end_epoch(1);
    EXPECT_ANY_THROW(s.end_epoch(3));
}
