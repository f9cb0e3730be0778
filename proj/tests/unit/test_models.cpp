#include "ltx/checkpoint.hpp"
#include "ltx/error.hpp"
#include "ltx/models.hpp"
#include "ltx/objective.hpp"
#include "ltx/ops.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace ltx;
using namespace ltx::models;

namespace {

ModelSpec tiny_patchformer()
{
    ModelSpec s;
    s.image_size = 8;
    s.patch_size = 4;
    s.embed_dim = 4;
    s.depth = 1;
    s.heads = 2;
    s.num_classes = 3;
    return s;
}

ModelSpec default_cnn()
{
    ModelSpec s;
    s.family = Family::cnn;
    return s;
}

double model_fd_error(const ModelSpec& spec, std::uint64_t seed, std::size_t stride)
{
    ParamSet params = init_classifier(spec, seed);
    for (auto& e : params.entries()) {
        if (e.name.ends_with(".b") || e.name.ends_with(".b1") || e.name.ends_with(".b2") || e.name.ends_with("beta")) {
            e.value = ltx::testing::random_tensor(e.value.dims(), seed + e.name.size(), -0.1, 0.1);
        }
    }
    const Tensor x = ltx::testing::random_tensor({1, spec.channels, spec.image_size, spec.image_size}, seed + 1, 0, 1);
    const ltx::testing::ParamLossFn f = [&](Tape& tape, const BoundParams& p) {
        return ops::sum(classifier_logits(spec, p, tape.constant(x)));
    };
    return ltx::testing::param_fd_check(f, params, 1e-5, stride).max_rel_error;
}

}  // namespace

TEST(ModelSpec, Validation)
{
    ModelSpec s;
    EXPECT_NO_THROW(s.validate());
    s.patch_size = 5;
    EXPECT_THROW(s.validate(), ShapeError);
    s = ModelSpec{};
    s.embed_dim = 33;
    EXPECT_THROW(s.validate(), ShapeError);
    s = ModelSpec{};
    s.num_classes = 1;
    EXPECT_THROW(s.validate(), ShapeError);
    EXPECT_EQ(ModelSpec{}.map_side(), 7U);
    EXPECT_EQ(default_cnn().map_side(), 6U);
}

TEST(Patchformer, LogitShapeAndSoftmaxNormalization)
{
    const ModelSpec spec;
    const Model m{spec, init_classifier(spec, 3)};
    const Tensor x = ltx::testing::random_tensor({2, 1, 28, 28}, 4, 0, 1);
    Tape tape(false);
    const BoundParams p(tape, m.params, false);
    PatchformerActivations acts;
    const Var logits = patchformer_forward(spec, p, tape.constant(x), &acts);
    EXPECT_EQ(logits.dims(), (Shape{2, 4}));
    EXPECT_EQ(acts.token_states.dims(), (Shape{2 * 49, 32}));
    EXPECT_EQ(acts.cls_state.dims(), (Shape{2, 32}));
    const Tensor probs = predict_proba(m, x);
    for (std::size_t r = 0; r < 2; ++r) {
        EXPECT_NEAR(probs.at(r, 0) + probs.at(r, 1) + probs.at(r, 2) + probs.at(r, 3), 1.0, 1e-12);
    }
}

TEST(Patchformer, ZeroAttentionAndFeedForwardLeaveEmbeddings)
{
    const ModelSpec spec = tiny_patchformer();
    ParamSet params = init_classifier(spec, 5);
    for (auto& e : params.entries()) {
        if (e.name.find(".attn.") != std::string::npos || e.name.find(".ffn.") != std::string::npos) {
            e.value.fill(0.0);
        }
    }
    const Tensor x = ltx::testing::random_tensor({1, 8, 8}, 6, 0, 1);
    Tape tape(false);
    const BoundParams p(tape, params, false);
    const Var states = patchformer_encode(spec, p, tape.constant(x));
    Var emb = ops::add_bias(ops::matmul(ops::patchify(tape.constant(x), 4), p["embed.w"]), p["embed.b"]);
    emb = ops::assemble_tokens(emb, p["cls"], p["pos"]);
    EXPECT_TRUE(states.value().bitwise_equal(emb.value()));
}

TEST(Patchformer, ShapeMismatchThrows)
{
    const ModelSpec spec;
    const Model m{spec, init_classifier(spec, 1)};
    EXPECT_THROW(predict_proba(m, Tensor({1, 1, 24, 24})), ShapeError);
}

TEST(Cnn, ZeroImageWithZeroBiasesGivesZeroLogits)
{
    const ModelSpec spec = default_cnn();
    const ParamSet params = init_classifier(spec, 2);
    Tape tape(false);
    const BoundParams p(tape, params, false);
    const Var logits = cnn_forward(spec, p, tape.constant(Tensor({1, 28, 28})));
    EXPECT_EQ(logits.dims(), (Shape{1, 4}));
    for (double v : logits.value().data()) {
        EXPECT_EQ(v, 0.0);
    }
    const Var features = cnn_features(spec, p, tape.constant(Tensor({1, 28, 28})));
    EXPECT_EQ(features.dims(), (Shape{1, 16, 6, 6}));
}

TEST(Explainer, CnnZeroHeadGivesHalfMap)
{
    const ModelSpec spec = default_cnn();
    const Model explained{spec, init_classifier(spec, 1)};
    Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), Family::cnn, 2);
    e.params.at("head.w").fill(0.0);
    const Tensor maps = explain_pixels(e, ltx::testing::random_tensor({2, 1, 28, 28}, 3, 0, 1));
    EXPECT_EQ(maps.dims(), (Shape{2, 28, 28}));
    for (double v : maps.data()) {
        EXPECT_EQ(v, 0.5);
    }
}

TEST(Explainer, MapsLieStrictlyInsideUnitInterval)
{
    for (const ModelSpec spec : {ModelSpec{}, default_cnn()}) {
        const Model explained{spec, init_classifier(spec, 7)};
        const Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), spec.family, 8);
        Tape tape(false);
        const BoundParams p(tape, e.params, false);
        const Var native = explainer_native_map(spec, p, tape.constant(ltx::testing::random_tensor({1, 28, 28}, 9, 0, 1)));
        EXPECT_EQ(native.dims(), (Shape{1, spec.map_side(), spec.map_side()}));
        for (double v : native.value().data()) {
            EXPECT_GT(v, 0.0);
            EXPECT_LT(v, 1.0);
        }
    }
}

TEST(Explainer, LargeNegativeFinalBiasDrivesScoresToZero)
{
    const ModelSpec spec;
    const Model explained{spec, init_classifier(spec, 1)};
    Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), Family::patchformer, 2);
    e.params.at("head.b2").fill(-60.0);
    Tape tape(false);
    const BoundParams p(tape, e.params, false);
    const Var scores = explainer_vit_forward(spec, p, tape.constant(ltx::testing::random_tensor({1, 28, 28}, 3, 0, 1)));
    EXPECT_EQ(scores.dims(), (Shape{1, 49}));
    for (double v : scores.value().data()) {
        EXPECT_LT(v, 1e-20);
    }
}

TEST(Explainer, IdenticalPatchesScoreEquallyWithoutPositions)
{
    const ModelSpec spec = tiny_patchformer();
    const Model explained{spec, init_classifier(spec, 11)};
    Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), Family::patchformer, 12);
    e.params.at("pos").fill(0.0);
    Tensor x = ltx::testing::random_tensor({1, 8, 8}, 13, 0, 1);
    // copy patch 0 (rows 0-3, cols 0-3) into patch 3 (rows 4-7, cols 4-7)
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            x[(i + 4) * 8 + j + 4] = x[i * 8 + j];
        }
    }
    Tape tape(false);
    const BoundParams p(tape, e.params, false);
    const Tensor s = explainer_vit_forward(spec, p, tape.constant(x)).value();
    EXPECT_NEAR(s[0], s[3], 1e-14);
    EXPECT_NE(s[0], s[1]);
}

TEST(Explainer, CloneCopiesBackboneBitwiseAndIsSeeded)
{
    for (const ModelSpec spec : {ModelSpec{}, default_cnn()}) {
        const Model explained{spec, init_classifier(spec, 21)};
        const Checkpoint ckpt = to_checkpoint(explained, "explained");
        const Model a = init_explainer_from_explained(ckpt, spec.family, 5);
        const Model b = init_explainer_from_explained(ckpt, spec.family, 5);
        EXPECT_TRUE(a.params.bitwise_equal(b.params));
        for (const auto& e : explained.params.entries()) {
            if (is_backbone_param(e.name)) {
                EXPECT_TRUE(a.params.at(e.name).bitwise_equal(e.value)) << e.name;
            } else {
                EXPECT_FALSE(a.params.contains(e.name)) << e.name;
            }
        }
        EXPECT_EQ(a.params.at(kMaskParam).item(), 0.5);
        const Family other = spec.family == Family::cnn ? Family::patchformer : Family::cnn;
        EXPECT_THROW(init_explainer_from_explained(ckpt, other, 5), FormatError);
    }
}

TEST(Explainer, HeadBiasesStartAtZero)
{
    const ModelSpec spec;
    const Model explained{spec, init_classifier(spec, 1)};
    const Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), Family::patchformer, 3);
    EXPECT_EQ(e.params.at("head.b2").item(), 0.0);
    for (double v : e.params.at("head.b1").data()) {
        EXPECT_EQ(v, 0.0);
    }
}

TEST(Explainer, LossGradientReachesCnnHead)
{
    const ModelSpec spec = default_cnn();
    const Model explained{spec, init_classifier(spec, 1)};
    const Model e = init_explainer_from_explained(to_checkpoint(explained, "explained"), Family::cnn, 3);
    Tape tape;
    const BoundParams phi(tape, e.params, true);
    const BoundParams frozen(tape, explained.params, false);
    const Tensor x = ltx::testing::random_tensor({1, 1, 28, 28}, 4, 0, 1);
    const Tensor y({1, 4}, std::vector<double>{0, 1, 0, 0});
    const auto terms = objective::ltx_loss(spec, tape.constant(x), phi, frozen, y, objective::LossWeights{});
    tape.backward(terms.loss);
    const Tensor g = phi.grads()[e.params.index_of("head.w")];
    double mag = 0.0;
    for (double v : g.data()) {
        mag += std::abs(v);
    }
    EXPECT_GT(mag, 0.0);
}

TEST(Models, PatchformerGradientsMatchFiniteDifferences)
{
    EXPECT_LT(model_fd_error(tiny_patchformer(), 1, 1), 1e-4);
    EXPECT_LT(model_fd_error(ModelSpec{}, 2, 13), 1e-4);
}

TEST(Models, CnnGradientsMatchFiniteDifferences)
{
    EXPECT_LT(model_fd_error(default_cnn(), 3, 7), 1e-4);
}

TEST(TrainExplained, OneClassCorpusReachesPerfectAccuracy)
{
    data::GenOptions o;
    o.n = 16;
    o.classes = 1;
    const data::Dataset ds = data::gen_synthetic(o);
    ModelSpec spec = default_cnn();
    spec.num_classes = 2;
    TrainOptions t;
    t.epochs = 1;
    const TrainedClassifier r = train_explained(ds, spec, t);
    EXPECT_EQ(r.train_accuracy, 1.0);
    EXPECT_EQ(r.epoch_loss.size(), 1U);
}

TEST(TrainExplained, SameSeedSameCheckpointBytes)
{
    data::GenOptions o;
    o.n = 24;
    const data::Dataset ds = data::gen_synthetic(o);
    ModelSpec s28;
    s28.embed_dim = 8;
    s28.depth = 1;
    TrainOptions t;
    t.epochs = 2;
    t.seed = 4;
    const auto a = encode_checkpoint(to_checkpoint(train_explained(ds, s28, t).model, "explained"));
    const auto b = encode_checkpoint(to_checkpoint(train_explained(ds, s28, t).model, "explained"));
    EXPECT_EQ(a, b);
}

TEST(TrainExplained, ZeroEpochsKeepsInitialization)
{
    data::GenOptions o;
    o.n = 8;
    const data::Dataset ds = data::gen_synthetic(o);
    const ModelSpec spec = default_cnn();
    TrainOptions t;
    t.epochs = 0;
    t.seed = 9;
    const TrainedClassifier r = train_explained(ds, spec, t);
    EXPECT_TRUE(r.model.params.bitwise_equal(init_classifier(spec, derive_seed(9, 1))));
}

TEST(Checkpoint, ModelRoundTripPreservesSpecAndParams)
{
    ModelSpec spec;
    spec.embed_dim = 8;
    spec.heads = 4;
    const Model m{spec, init_classifier(spec, 3)};
    const Checkpoint c = decode_checkpoint(encode_checkpoint(to_checkpoint(m, "explained", {{"epoch", "4"}})));
    const Model back = from_checkpoint(c, "explained");
    EXPECT_TRUE(back.params.bitwise_equal(m.params));
    EXPECT_EQ(back.spec.embed_dim, 8U);
    EXPECT_EQ(back.spec.heads, 4U);
    EXPECT_EQ(c.meta.at("epoch"), "4");
    EXPECT_THROW(from_checkpoint(c, "explainer"), FormatError);
}
