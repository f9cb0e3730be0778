#include "ltx/autodiff.hpp"
#include "ltx/data.hpp"
#include "ltx/metrics.hpp"
#include "ltx/models.hpp"
#include "ltx/objective.hpp"
#include "ltx/ops.hpp"
#include "ltx/rng.hpp"
#include "ltx/training.hpp"

#include <benchmark/benchmark.h>

#include <numeric>

using namespace ltx;

namespace {

Tensor uniform_tensor(Shape dims, std::uint64_t seed)
{
    SplitMix64 rng(seed);
    Tensor t(std::move(dims));
    for (double& v : t.values()) {
        v = rng.uniform(-1, 1);
    }
    return t;
}

data::Dataset corpus(std::size_t n)
{
    data::GenOptions o;
    o.n = n;
    o.seed = 1;
    return data::gen_synthetic(o);
}

models::Model patchformer()
{
    const models::ModelSpec spec;
    return {spec, models::init_classifier(spec, 2)};
}

}  // namespace

static void BM_Matmul(benchmark::State& state)
{
    const auto n = static_cast<std::size_t>(state.range(0));
    const Tensor a = uniform_tensor({n, n}, 1);
    const Tensor b = uniform_tensor({n, n}, 2);
    for (auto _ : state) {
        Tape tape(false);
        benchmark::DoNotOptimize(ops::matmul(tape.constant(a), tape.constant(b)).value().ptr());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_Attention(benchmark::State& state)
{
    const std::size_t seq = 50;
    const Tensor qkv = uniform_tensor({seq, 3 * 32}, 3);
    for (auto _ : state) {
        Tape tape(false);
        benchmark::DoNotOptimize(ops::multi_head_attention(tape.constant(qkv), seq, 2).value().ptr());
    }
}
BENCHMARK(BM_Attention);

static void BM_AttentionBackward(benchmark::State& state)
{
    const std::size_t seq = 50;
    const Tensor qkv = uniform_tensor({seq, 3 * 32}, 3);
    for (auto _ : state) {
        Tape tape;
        const Var x = tape.leaf(qkv);
        tape.backward(ops::sum(ops::multi_head_attention(x, seq, 2)));
        benchmark::DoNotOptimize(tape.grad(x).ptr());
    }
}
BENCHMARK(BM_AttentionBackward);

static void BM_PatchformerForward(benchmark::State& state)
{
    const models::Model model = patchformer();
    const auto batch = static_cast<std::size_t>(state.range(0));
    const data::Dataset ds = corpus(batch);
    std::vector<std::size_t> idx(batch);
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor images = ds.batch(idx);
    for (auto _ : state) {
        benchmark::DoNotOptimize(models::predict_proba(model, images).ptr());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch));
}
BENCHMARK(BM_PatchformerForward)->Arg(1)->Arg(32);

static void BM_LtxLossStep(benchmark::State& state)
{
    const models::Model explained = patchformer();
    const models::Model explainer =
        models::init_explainer_from_explained(models::to_checkpoint(explained, "explained"), explained.spec.family, 3);
    const data::Dataset ds = corpus(32);
    std::vector<std::size_t> idx(32);
    std::iota(idx.begin(), idx.end(), 0);
    const Tensor images = ds.batch(idx);
    const Tensor y = objective::target_select(models::predict_proba(explained, images), objective::TargetSpec::predicted());
    for (auto _ : state) {
        Tape tape;
        const BoundParams phi(tape, explainer.params, true);
        const BoundParams theta(tape, explained.params, false);
        const auto terms = objective::ltx_loss(explained.spec, tape.constant(images), phi, theta, y, {});
        tape.backward(terms.loss);
        benchmark::DoNotOptimize(phi.grads().front().ptr());
    }
}
BENCHMARK(BM_LtxLossStep);

static void BM_PerturbCurve(benchmark::State& state)
{
    const models::Model model = patchformer();
    const metrics::ProbabilityFn prob = metrics::probability_fn(model);
    const data::Dataset ds = corpus(1);
    const Tensor map = uniform_tensor({28, 28}, 4);
    const auto order = metrics::pixel_order(map, metrics::Direction::decreasing);
    const auto grid = metrics::default_fractions();
    for (auto _ : state) {
        benchmark::DoNotOptimize(metrics::perturb_curve(prob, ds.samples[0].image, order, grid,
                                                        metrics::TrackKind::top_class_unchanged, 0)
                                     .values.data());
    }
}
BENCHMARK(BM_PerturbCurve);

static void BM_FinetuneInstance(benchmark::State& state)
{
    const models::Model explained = patchformer();
    const models::Model explainer =
        models::init_explainer_from_explained(models::to_checkpoint(explained, "explained"), explained.spec.family, 3);
    const data::Dataset ds = corpus(1);
    training::FinetuneConfig config;
    config.max_steps = 5;
    for (auto _ : state) {
        benchmark::DoNotOptimize(training::finetune_instance(explained, explainer, ds.samples[0].image, config).map.ptr());
    }
}
BENCHMARK(BM_FinetuneInstance);

BENCHMARK_MAIN();
