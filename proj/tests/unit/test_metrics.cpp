#include "ltx/error.hpp"
#include "ltx/metrics.hpp"
#include "ltx/models.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace ltx;
using namespace ltx::metrics;
using ltx::testing::random_tensor;

namespace {

// Two-class model with logits (w . x, -w . x) over the flattened image.
ProbabilityFn linear_model(std::vector<double> w)
{
    return [w](const Tensor& images) {
        const std::size_t n = images.dim(0);
        const std::size_t per = images.size() / n;
        Tensor out({n, 2});
        for (std::size_t b = 0; b < n; ++b) {
            double s = 0.0;
            for (std::size_t i = 0; i < per; ++i) {
                s += w[i] * images[b * per + i];
            }
            const double p0 = 1.0 / (1.0 + std::exp(-2.0 * s));
            out.at(b, 0) = p0;
            out.at(b, 1) = 1.0 - p0;
        }
        return out;
    };
}

Curve make_curve(std::vector<double> fractions, std::vector<double> values)
{
    return Curve{std::move(fractions), std::move(values), TrackKind::top_class_probability};
}

data::Dataset tiny_corpus(std::size_t n, std::uint64_t seed)
{
    data::GenOptions o;
    o.n = n;
    o.size = 12;
    o.seed = seed;
    return data::gen_synthetic(o);
}

models::Model tiny_cnn(std::uint64_t seed)
{
    models::ModelSpec s;
    s.family = models::Family::cnn;
    s.image_size = 12;
    return {s, models::init_classifier(s, seed)};
}

}  // namespace

TEST(PixelOrder, Examples)
{
    EXPECT_EQ(pixel_order(Tensor::from_rows({{0.9, 0.1}, {0.5, 0.5}}), Direction::decreasing),
              (std::vector<std::size_t>{0, 2, 3, 1}));
    EXPECT_EQ(pixel_order(Tensor({3, 3}, 0.2), Direction::increasing),
              (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8}));
    EXPECT_EQ(pixel_order(Tensor::from_rows({{0.9, 0.1}, {0.5, 0.5}}), Direction::increasing),
              (std::vector<std::size_t>{1, 2, 3, 0}));
}

TEST(Auc, Examples)
{
    const std::vector<double> grid = default_fractions();
    EXPECT_NEAR(auc(make_curve(grid, std::vector<double>(10, 1.0))), 1.0, 1e-15);
    std::vector<double> linear;
    for (double f : grid) {
        linear.push_back(1.0 - f / 0.9);
    }
    EXPECT_NEAR(auc(make_curve(grid, linear)), 0.5, 1e-15);
    EXPECT_NEAR(auc(make_curve({0, 0.1, 0.2, 0.3}, {1, 1, 0, 0})), 0.5, 1e-15);
    EXPECT_THROW(auc(make_curve({0}, {1})), ContractError);
}

TEST(Fractions, Validation)
{
    EXPECT_EQ(default_fractions().size(), 10U);
    EXPECT_EQ(default_fractions()[3], 0.3);
    EXPECT_THROW(validate_fractions(std::vector<double>{}), ContractError);
    EXPECT_THROW(validate_fractions(std::vector<double>{0.1, 0.2}), ContractError);
    EXPECT_THROW(validate_fractions(std::vector<double>{0, 0.5, 0.5}), ContractError);
    EXPECT_THROW(validate_fractions(std::vector<double>{0, 1.0}), ContractError);
    EXPECT_NO_THROW(validate_fractions(std::vector<double>{0, 0.25, 0.5}));
}

TEST(Names, ParseAndDirection)
{
    for (Metric m : {Metric::neg, Metric::pos, Metric::ins, Metric::del}) {
        EXPECT_EQ(parse_metric(metric_name(m)), m);
    }
    EXPECT_THROW(parse_metric("foo"), ContractError);
    EXPECT_EQ(parse_mode("T"), Mode::target);
    EXPECT_THROW(parse_mode("X"), ContractError);
    EXPECT_EQ(metric_direction(Metric::neg), Direction::increasing);
    EXPECT_EQ(metric_direction(Metric::del), Direction::decreasing);
    EXPECT_EQ(metric_track(Metric::ins), TrackKind::top_class_probability);
    EXPECT_TRUE(lower_is_better(Metric::pos));
    EXPECT_FALSE(lower_is_better(Metric::neg));
}

TEST(PerturbCurve, UnperturbedTopClassScoresOne)
{
    const ProbabilityFn model = linear_model({1, -2, 0.5, 3});
    const Tensor x({1, 2, 2}, std::vector<double>{0.3, 0.1, 0.8, 0.6});
    const Tensor probs = model(x.reshaped({1, 1, 2, 2}));
    const std::size_t top = probs.at(0, 0) >= probs.at(0, 1) ? 0 : 1;
    const std::size_t order[] = {3, 2, 1, 0};
    const Curve c = perturb_curve(model, x, order, std::vector<double>{0, 0.5}, TrackKind::top_class_unchanged, top);
    EXPECT_EQ(c.values[0], 1.0);
}

TEST(PerturbCurve, BlackImageIsFixedPoint)
{
    const ProbabilityFn model = linear_model({1, -2, 0.5, 3, 1, 1, -1, 0.2, 0.1});
    const Tensor x({1, 3, 3}, 0.0);
    const std::size_t order[] = {4, 0, 8, 1, 7, 2, 6, 3, 5};
    const Curve c = perturb_curve(model, x, order, default_fractions(), TrackKind::top_class_probability, 1);
    for (double v : c.values) {
        EXPECT_EQ(v, c.values.front());
    }
    EXPECT_THROW(perturb_curve(model, x, order, std::vector<double>{}, TrackKind::top_class_probability, 1),
                 ContractError);
}

TEST(PerturbCurve, MatchesBruteForceBlackoutPrefixes)
{
    for (std::size_t side : {2U, 3U}) {
        const std::size_t P = side * side;
        std::vector<double> w(P);
        SplitMix64 rng(side);
        for (double& v : w) {
            v = rng.uniform(-3, 3);
        }
        const ProbabilityFn model = linear_model(w);
        const Tensor x = random_tensor({1, side, side}, side + 10, 0, 1);
        std::vector<std::size_t> order(P);
        std::iota(order.begin(), order.end(), 0);
        const std::vector<double> grid{0, 0.25, 0.5, 0.75};
        for (TrackKind track : {TrackKind::top_class_unchanged, TrackKind::top_class_probability}) {
            for (std::size_t cls = 0; cls < 2; ++cls) {
                const Curve c = perturb_curve(model, x, order, grid, track, cls);
                for (std::size_t f = 0; f < grid.size(); ++f) {
                    Tensor y = x;
                    const auto k = static_cast<std::size_t>(std::floor(grid[f] * static_cast<double>(P)));
                    for (std::size_t q = 0; q < k; ++q) {
                        y[order[q]] = 0.0;
                    }
                    const Tensor p = model(y.reshaped({1, 1, side, side}));
                    const std::size_t top = p.at(0, 0) >= p.at(0, 1) ? 0 : 1;
                    const double expected =
                        track == TrackKind::top_class_probability ? p.at(0, cls) : (top == cls ? 1.0 : 0.0);
                    EXPECT_EQ(c.values[f], expected);
                }
            }
        }
    }
}

TEST(ClassRank, TiesGoToLowerIndex)
{
    const std::vector<double> p{0.3, 0.3, 0.4};
    EXPECT_EQ(class_rank(p, 2), 0U);
    EXPECT_EQ(class_rank(p, 0), 1U);
    EXPECT_EQ(class_rank(p, 1), 2U);
}

TEST(ImageAuc, RankKeptEqualsTopUnchangedForTopClass)
{
    const models::Model m = tiny_cnn(3);
    const ProbabilityFn prob = probability_fn(m);
    const data::Dataset ds = tiny_corpus(6, 4);
    for (const auto& s : ds.samples) {
        const Tensor map = random_tensor({12, 12}, s.label + 77, 0, 1);
        const Tensor p = prob(s.image.reshaped({1, 1, 12, 12}));
        const std::size_t top = static_cast<std::size_t>(std::max_element(p.ptr(), p.ptr() + 4) - p.ptr());
        const auto grid = default_fractions();
        EXPECT_EQ(image_auc(prob, s.image, map, Metric::pos, TrackKind::class_rank_kept, top, grid),
                  image_auc(prob, s.image, map, Metric::pos, std::nullopt, grid));
    }
}

TEST(EvaluateDataset, SingletonMatchesImageAucAndMeanIsExact)
{
    const models::Model m = tiny_cnn(5);
    const data::Dataset ds = tiny_corpus(8, 6);
    const Tensor maps = random_tensor({8, 12, 12}, 7, 0, 1);
    const Metric all[] = {Metric::neg, Metric::pos, Metric::ins, Metric::del};
    const MetricReport r = evaluate_dataset(m, maps, ds, all, Mode::predicted);
    const ProbabilityFn prob = probability_fn(m);
    for (const auto& res : r.results) {
        double sum = 0.0;
        for (std::size_t i = 0; i < 8; ++i) {
            const Tensor map(Shape{12, 12}, std::vector<double>(maps.ptr() + i * 144, maps.ptr() + (i + 1) * 144));
            EXPECT_EQ(res.per_image[i], image_auc(prob, ds.samples[i].image, map, res.metric, std::nullopt,
                                                  default_fractions()));
            EXPECT_GE(res.per_image[i], 0.0);
            EXPECT_LE(res.per_image[i], 1.0);
            sum += res.per_image[i];
        }
        EXPECT_NEAR(res.auc, sum / 8.0, 1e-12);
    }
    const data::Dataset one = ds.slice(2, 1);
    const Tensor map1(Shape{1, 12, 12}, std::vector<double>(maps.ptr() + 2 * 144, maps.ptr() + 3 * 144));
    const MetricReport single = evaluate_dataset(m, map1, one, all, Mode::predicted);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(single.results[j].auc, r.results[j].per_image[2]);
    }
}

TEST(EvaluateDataset, DuplicatedCorpusGivesSameMean)
{
    const models::Model m = tiny_cnn(5);
    const data::Dataset ds = tiny_corpus(4, 9);
    data::Dataset twice = ds;
    twice.samples.insert(twice.samples.end(), ds.samples.begin(), ds.samples.end());
    const Tensor maps = random_tensor({4, 12, 12}, 8, 0, 1);
    Tensor maps2({8, 12, 12});
    std::copy_n(maps.ptr(), maps.size(), maps2.ptr());
    std::copy_n(maps.ptr(), maps.size(), maps2.ptr() + maps.size());
    const Metric pos[] = {Metric::pos};
    EXPECT_NEAR(evaluate_dataset(m, maps, ds, pos, Mode::predicted).results[0].auc,
                evaluate_dataset(m, maps2, twice, pos, Mode::predicted).results[0].auc, 1e-15);
}

TEST(EvaluateDataset, OrderInvarianceAndFlip)
{
    const models::Model m = tiny_cnn(11);
    const data::Dataset ds = tiny_corpus(6, 12);
    const Tensor maps = random_tensor({6, 12, 12}, 13, -1, 1);
    Tensor cubed = maps;
    Tensor negated = maps;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        cubed[i] = maps[i] * maps[i] * maps[i];
        negated[i] = -maps[i];
    }
    const Metric all[] = {Metric::neg, Metric::pos, Metric::ins, Metric::del};
    EvalOptions opts;
    opts.keep_curves = true;
    const MetricReport a = evaluate_dataset(m, maps, ds, all, Mode::predicted, opts);
    const MetricReport b = evaluate_dataset(m, cubed, ds, all, Mode::predicted, opts);
    const MetricReport c = evaluate_dataset(m, negated, ds, all, Mode::predicted, opts);
    EXPECT_EQ(encode_report_csv(a), encode_report_csv(b));
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(a.results[j].per_image, b.results[j].per_image);
    }
    EXPECT_EQ(a.at(Metric::neg).per_image, c.at(Metric::pos).per_image);
    EXPECT_EQ(a.at(Metric::pos).per_image, c.at(Metric::neg).per_image);
    EXPECT_EQ(a.at(Metric::ins).per_image, c.at(Metric::del).per_image);
}

TEST(EvaluateDataset, TargetModeUsesLabels)
{
    const models::Model m = tiny_cnn(14);
    const data::Dataset ds = tiny_corpus(8, 15);
    const ProbabilityFn prob = probability_fn(m);
    const auto labels = reference_classes(prob, ds, Mode::target);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(labels[i], ds.samples[i].label);
    }
    const Tensor maps = random_tensor({8, 12, 12}, 16, 0, 1);
    const Metric ins[] = {Metric::ins};
    const MetricReport r = evaluate_dataset(m, maps, ds, ins, Mode::target);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Tensor map(Shape{12, 12}, std::vector<double>(maps.ptr() + i * 144, maps.ptr() + (i + 1) * 144));
        EXPECT_EQ(r.results[0].per_image[i], image_auc(prob, ds.samples[i].image, map, Metric::ins,
                                                       std::optional<std::size_t>(ds.samples[i].label),
                                                       default_fractions()));
    }
    EXPECT_EQ(r.mode, Mode::target);
}

TEST(EvaluateDataset, ErrorsAndCsv)
{
    const models::Model m = tiny_cnn(1);
    const data::Dataset ds = tiny_corpus(3, 2);
    const Metric pos[] = {Metric::pos};
    EXPECT_THROW(evaluate_dataset(m, Tensor({2, 12, 12}), ds, pos, Mode::predicted), ContractError);
    EvalOptions opts;
    opts.keep_curves = true;
    opts.fractions = {0, 0.5};
    const MetricReport r = evaluate_dataset(m, random_tensor({3, 12, 12}, 4, 0, 1), ds, pos, Mode::predicted, opts);
    const std::string csv = encode_report_csv(r);
    EXPECT_EQ(csv.rfind("metric,mode,auc\npos,P,", 0), 0U);
    const std::string curves = encode_curves_csv(r, Metric::pos);
    EXPECT_EQ(curves.rfind("image_index,fraction,value\n0,0,1\n", 0), 0U);
    EXPECT_EQ(std::count(curves.begin(), curves.end(), '\n'), 1 + 3 * 2);
    EXPECT_THROW(encode_curves_csv(evaluate_dataset(m, random_tensor({3, 12, 12}, 4, 0, 1), ds, pos, Mode::predicted),
                                   Metric::pos),
                 ContractError);
}

TEST(EvaluateDataset, DeterministicAcrossRuns)
{
    const models::Model m = tiny_cnn(21);
    const data::Dataset ds = tiny_corpus(5, 22);
    const Tensor maps = random_tensor({5, 12, 12}, 23, 0, 1);
    const Metric all[] = {Metric::neg, Metric::pos, Metric::ins, Metric::del};
    EXPECT_EQ(encode_report_csv(evaluate_dataset(m, maps, ds, all, Mode::predicted)),
              encode_report_csv(evaluate_dataset(m, maps, ds, all, Mode::predicted)));
}
