#include "ltx/adam.hpp"
#include "ltx/error.hpp"
#include "ltx/models.hpp"
#include "ltx/objective.hpp"
#include "ltx/ops.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace ltx;
using namespace ltx::objective;
using ltx::testing::random_tensor;

namespace {

const double kClampedLog = -std::log(1e-7);

models::ModelSpec tiny_spec()
{
    models::ModelSpec s;
    s.image_size = 8;
    s.patch_size = 4;
    s.embed_dim = 4;
    s.depth = 1;
    s.heads = 2;
    s.num_classes = 3;
    return s;
}

struct Pair {
    models::Model explained;
    models::Model explainer;
};

Pair make_pair(const models::ModelSpec& spec, std::uint64_t seed)
{
    models::Model explained{spec, models::init_classifier(spec, seed)};
    models::Model explainer =
        models::init_explainer_from_explained(models::to_checkpoint(explained, "explained"), spec.family, seed + 1);
    return {explained, explainer};
}

double scalar_of(Var v)
{
    return v.value().item();
}

}  // namespace

TEST(MaskBlend, IdentitiesAreBitwise)
{
    Tape tape(false);
    const Tensor x = random_tensor({2, 5, 5}, 1, 0, 1);
    const Var z = tape.constant(Tensor::scalar(0.37));
    EXPECT_TRUE(mask_blend(tape.constant(x), tape.constant(Tensor({5, 5}, 1.0)), z).value().bitwise_equal(x));
    const Tensor zeros = mask_blend(tape.constant(x), tape.constant(Tensor({5, 5}, 0.0)), z).value();
    for (double v : zeros.data()) {
        EXPECT_EQ(v, 0.37);
    }
    const Tensor half = mask_blend(tape.constant(Tensor({1, 1, 1}, 0.8)), tape.constant(Tensor({1, 1}, 0.5)),
                                   tape.constant(Tensor::scalar(0.2)))
                            .value();
    EXPECT_EQ(half.item(), 0.5);
}

TEST(MaskBlend, ZGradientSumsOneMinusMask)
{
    Tape tape;
    const Tensor m = random_tensor({3, 4, 4}, 2, 0, 1);
    const Var x = tape.leaf(random_tensor({3, 2, 4, 4}, 3, 0, 1));
    const Var mv = tape.leaf(m);
    const Var z = tape.leaf(Tensor::scalar(0.5));
    tape.backward(ops::sum(mask_blend(x, mv, z)));
    double expected = 0.0;
    for (double v : m.data()) {
        expected += 2.0 * (1.0 - v);  // two channels share each map entry
    }
    EXPECT_NEAR(tape.grad(z).item(), expected, 1e-12);
}

TEST(MaskBlend, GradientsMatchFiniteDifferences)
{
    const ltx::testing::ScalarFn f = [](Tape& t, std::span<const Var> v) {
        return ltx::testing::weighted_sum(t, mask_blend(v[0], v[1], v[2]), 5);
    };
    const std::vector<Tensor> in{random_tensor({2, 3, 3, 4}, 1), random_tensor({2, 3, 4}, 2, 0, 1),
                                 random_tensor({1}, 3)};
    EXPECT_LT(ltx::testing::compare_with_central_differences(f, in).max_rel_error, 1e-8);
}

TEST(MaskBlend, ShapeErrors)
{
    Tape tape(false);
    const Var z = tape.constant(Tensor::scalar(0.0));
    EXPECT_THROW(mask_blend(tape.constant(Tensor({1, 4, 4})), tape.constant(Tensor({3, 4})), z), ShapeError);
    EXPECT_THROW(mask_blend(tape.constant(Tensor({2, 1, 4, 4})), tape.constant(Tensor({3, 4, 4})), z), ShapeError);
    EXPECT_THROW(mask_blend(tape.constant(Tensor({1, 4, 4})), tape.constant(Tensor({4, 4})), tape.constant(Tensor({2}))),
                 ShapeError);
}

TEST(TargetSelect, Examples)
{
    EXPECT_EQ(target_select(Tensor::vector({0.7311, 0.2689}), TargetSpec::predicted()).values(),
              (std::vector<double>{1, 0}));
    const Tensor p = Tensor::vector({0.2, 0.5, 0.3});
    EXPECT_TRUE(target_select(p, TargetSpec::distribution()).bitwise_equal(p));
    EXPECT_EQ(target_select(Tensor::vector({0.5, 0.5}), TargetSpec::for_class(1)).values(), (std::vector<double>{0, 1}));
    EXPECT_EQ(target_select(Tensor::vector({0.4, 0.4, 0.2}), TargetSpec::predicted()).values(),
              (std::vector<double>{1, 0, 0}));
    EXPECT_THROW(target_select(Tensor::vector({0.5, 0.5}), TargetSpec::for_class(2)), ContractError);
}

TEST(TargetSelect, ParsesNames)
{
    EXPECT_EQ(parse_target("predicted").mode, TargetMode::predicted_onehot);
    EXPECT_EQ(parse_target("distribution").mode, TargetMode::distribution);
    const TargetSpec c = parse_target("class:2");
    EXPECT_EQ(c.mode, TargetMode::class_index);
    EXPECT_EQ(*c.class_index, 2U);
    EXPECT_EQ(target_name(c), "class:2");
    EXPECT_THROW(parse_target("class:"), ContractError);
    EXPECT_THROW(parse_target("class:x"), ContractError);
    EXPECT_THROW(parse_target("top"), ContractError);
}

TEST(LossPred, Examples)
{
    Tape tape(false);
    EXPECT_NEAR(scalar_of(loss_pred(tape.constant(Tensor::vector({0.3, 0.3})), Tensor::vector({1, 0}))), std::log(2.0),
                1e-15);
    // p ~ [1, 0] is clamped to 1 - 1e-7
    EXPECT_NEAR(scalar_of(loss_pred(tape.constant(Tensor::vector({60, -60})), Tensor::vector({1, 0}))),
                -std::log1p(-1e-7), 1e-15);
}

TEST(LossMask, Examples)
{
    Tape tape(false);
    EXPECT_EQ(scalar_of(loss_mask(tape.constant(Tensor({3, 3}, 0.0)))), 0.0);
    EXPECT_NEAR(scalar_of(loss_mask(tape.constant(Tensor::vector({0.5})))), std::log(2.0), 1e-15);
    EXPECT_NEAR(scalar_of(loss_mask(tape.constant(Tensor({2, 2}, 1.0)))), kClampedLog, 1e-12);
    EXPECT_NEAR(kClampedLog, 16.118, 1e-3);
    EXPECT_NEAR(scalar_of(loss_mask(tape.constant(Tensor::vector({0.2, 0.6})), MaskPenalty::l1)), 0.4, 1e-15);
}

TEST(LossMask, StrictlyIncreasingInEveryCoordinate)
{
    Tape tape(false);
    const Tensor m = random_tensor({4, 4}, 3, 0.01, 0.98);
    const double base = scalar_of(loss_mask(tape.constant(m)));
    for (std::size_t i = 0; i < m.size(); ++i) {
        Tensor bumped = m;
        bumped[i] += 1e-3;
        EXPECT_GT(scalar_of(loss_mask(tape.constant(bumped))), base);
    }
}

TEST(LossInv, Examples)
{
    Tape tape(false);
    const Tensor y = Tensor::vector({1, 0});
    EXPECT_NEAR(scalar_of(loss_inv(tape.constant(Tensor::vector({-60, 60})), y)), -std::log1p(-1e-7), 1e-15);
    EXPECT_NEAR(scalar_of(loss_inv(tape.constant(Tensor::vector({0.7, 0.7})), y)), std::log(2.0), 1e-15);
    EXPECT_NEAR(scalar_of(loss_inv(tape.constant(Tensor::vector({60, -60})), y)), kClampedLog, 1e-9);
    EXPECT_THROW(loss_inv(tape.constant(Tensor::vector({0, 0})), Tensor::vector({0.5, 0.5})), ContractError);
}

TEST(LossSmooth, Examples)
{
    Tape tape(false);
    EXPECT_EQ(scalar_of(loss_smooth(tape.constant(Tensor({4, 4}, 0.3)))), 0.0);
    EXPECT_EQ(scalar_of(loss_smooth(tape.constant(Tensor::from_rows({{0, 1}, {0, 1}})))), 2.0);
    EXPECT_EQ(scalar_of(loss_smooth(tape.constant(Tensor::from_rows({{0, 1}, {1, 0}})))), 4.0);
    Tensor batch({2, 2, 2});
    batch[1] = 1;
    batch[3] = 1;
    EXPECT_EQ(scalar_of(loss_smooth(tape.constant(batch))), 1.0);
}

TEST(LossTerms, GradientsMatchFiniteDifferences)
{
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ltx::testing::ScalarFn f = [](Tape&, std::span<const Var> v) {
            return ops::add(ops::add(loss_pred(v[0], Tensor({2, 3}, std::vector<double>{0.2, 0.3, 0.5, 0, 1, 0})),
                                     loss_mask(v[1])),
                            ops::add(loss_inv(v[0], Tensor({2, 3}, std::vector<double>{1, 0, 0, 0, 0, 1})),
                                     ops::add(loss_smooth(v[1]), loss_smooth(v[1], Smoothness::l2))));
        };
        const std::vector<Tensor> in{random_tensor({2, 3}, seed, -2, 2), random_tensor({2, 3, 4}, seed + 9, 0.05, 0.95)};
        EXPECT_LT(ltx::testing::compare_with_central_differences(f, in).max_rel_error, 1e-4) << seed;
    }
}

TEST(LtxLoss, AllOnesMapReducesToCrossEntropyPlusClamp)
{
    const models::ModelSpec spec = tiny_spec();
    Pair pair = make_pair(spec, 3);
    pair.explainer.params.at("head.b2").fill(60.0);
    pair.explainer.params.at("head.w2").fill(0.0);
    const Tensor x = random_tensor({1, 1, 8, 8}, 4, 0, 1);
    const Tensor y = Tensor({1, 3}, std::vector<double>{0, 0, 1});
    Tape tape(false);
    const BoundParams phi(tape, pair.explainer.params, false);
    const BoundParams theta(tape, pair.explained.params, false);
    const LtxTerms t = ltx_loss(spec, tape.constant(x), phi, theta, y, LossWeights{});
    for (double v : t.map.value().data()) {
        ASSERT_EQ(v, std::nextafter(1.0, 0.0));
    }
    const double direct = scalar_of(loss_pred(models::classifier_logits(spec, theta, tape.constant(x)), y));
    EXPECT_NEAR(t.pred, direct, 1e-12);
    EXPECT_NEAR(t.mask, kClampedLog, 1e-9);
    EXPECT_NEAR(scalar_of(t.loss), direct + 30.0 * kClampedLog, 1e-9);
}

TEST(LtxLoss, ZeroWeightsLeavePredictionTermOnly)
{
    const models::ModelSpec spec = tiny_spec();
    const Pair pair = make_pair(spec, 5);
    const Tensor x = random_tensor({2, 1, 8, 8}, 6, 0, 1);
    const Tensor y = Tensor({2, 3}, std::vector<double>{1, 0, 0, 0, 1, 0});
    Tape tape(false);
    const BoundParams phi(tape, pair.explainer.params, false);
    const BoundParams theta(tape, pair.explained.params, false);
    LossWeights w;
    w.mask = 0.0;
    const LtxTerms t = ltx_loss(spec, tape.constant(x), phi, theta, y, w);
    EXPECT_EQ(scalar_of(t.loss), t.pred);
    EXPECT_EQ(t.mask, 0.0);
    w.mask = -1.0;
    EXPECT_THROW(ltx_loss(spec, tape.constant(x), phi, theta, y, w), ContractError);
}

TEST(LtxLoss, NonNegativeForOneHotTargets)
{
    const models::ModelSpec spec = tiny_spec();
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Pair pair = make_pair(spec, seed);
        const Tensor x = random_tensor({2, 1, 8, 8}, seed + 50, 0, 1);
        const Tensor y = Tensor({2, 3}, std::vector<double>{0, 1, 0, 0, 0, 1});
        LossWeights w;
        w.inv = 0.7;
        w.smooth = 0.3;
        Tape tape(false);
        const BoundParams phi(tape, pair.explainer.params, false);
        const BoundParams theta(tape, pair.explained.params, false);
        EXPECT_GE(scalar_of(ltx_loss(spec, tape.constant(x), phi, theta, y, w).loss), 0.0);
    }
}

TEST(LtxLoss, FullGradientMatchesFiniteDifferences)
{
    for (const bool cnn : {false, true}) {
        models::ModelSpec spec = tiny_spec();
        std::size_t stride = 1;
        std::size_t side = 8;
        if (cnn) {
            spec = models::ModelSpec{};
            spec.family = models::Family::cnn;
            side = 28;
            stride = 3;
        }
        const Pair pair = make_pair(spec, 8);
        const Tensor x = random_tensor({1, 1, side, side}, 9, 0, 1);
        Tensor target({1, spec.num_classes}, 0.0);
        target[1] = 1.0;
        LossWeights w;
        w.inv = 0.5;
        w.smooth = 0.1;
        w.smoothness = Smoothness::l2;
        const ltx::testing::ParamLossFn f = [&](Tape& tape, const BoundParams& phi) {
            const BoundParams theta(tape, pair.explained.params, false);
            return ltx_loss(spec, tape.constant(x), phi, theta, target, w).loss;
        };
        const auto r = ltx::testing::param_fd_check(f, pair.explainer.params, 1e-5, stride);
        EXPECT_LT(r.max_rel_error, 1e-4) << (cnn ? "cnn" : "patchformer");
        EXPECT_GT(r.checked, 0U);
    }
}

TEST(LtxLoss, BackwardLeavesExplainedParametersUntouched)
{
    const models::ModelSpec spec = tiny_spec();
    Pair pair = make_pair(spec, 12);
    const ParamSet before = pair.explained.params;
    const Tensor x = random_tensor({2, 1, 8, 8}, 13, 0, 1);
    const Tensor y = Tensor({2, 3}, std::vector<double>{1, 0, 0, 0, 0, 1});
    const ParamSet start = pair.explainer.params;
    AdamState adam(pair.explainer.params, AdamConfig{});
    for (int step = 0; step < 3; ++step) {
        Tape tape;
        const BoundParams phi(tape, pair.explainer.params, true);
        const BoundParams theta(tape, pair.explained.params, false);
        tape.backward(ltx_loss(spec, tape.constant(x), phi, theta, y, LossWeights{}).loss);
        adam_step(pair.explainer.params, phi.grads(), adam);
    }
    EXPECT_TRUE(pair.explained.params.bitwise_equal(before));
    EXPECT_FALSE(pair.explainer.params.bitwise_equal(start));
}
