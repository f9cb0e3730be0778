#include "ltx/training.hpp"

#include "ltx/adam.hpp"
#include "ltx/error.hpp"
#include "ltx/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace ltx::training {

namespace {

void check_monitor(metrics::Metric m)
{
    if (m != metrics::Metric::pos && m != metrics::Metric::neg) {
        throw ContractError("monitor must be pos or neg, got '" + std::string(metrics::metric_name(m)) + "'");
    }
}

void check_matches(const models::ModelSpec& spec, const data::Dataset& ds, const char* what)
{
    if (ds.empty()) {
        throw ContractError(std::string(what) + " dataset is empty");
    }
    if (ds.channels != spec.channels || ds.height != spec.image_size || ds.width != spec.image_size) {
        throw ShapeError(std::string(what) + " images do not match the explained model");
    }
}

Tensor single_batch(const Tensor& x)
{
    return x.rank() == 3 ? x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}) : x;
}

}  // namespace

void PretrainConfig::validate() const
{
    if (!(learning_rate > 0.0)) {
        throw ContractError("pretrain: learning rate must be positive");
    }
    if (batch_size == 0) {
        throw ContractError("pretrain: batch size must be at least 1");
    }
    if (target.mode == objective::TargetMode::class_index) {
        throw ContractError("pretrain: target must be predicted or distribution");
    }
    check_monitor(monitor);
    metrics::validate_fractions(fractions);
}

void FinetuneConfig::validate() const
{
    if (max_steps == 0) {
        throw ContractError("finetune: max steps must be at least 1");
    }
    if (!(learning_rate >= 0.0)) {
        throw ContractError("finetune: learning rate must be non-negative");
    }
    check_monitor(monitor);
    metrics::validate_fractions(fractions);
}

std::string encode_metric_log(const std::vector<LogEntry>& log)
{
    std::string out = "index,metric,value,is_best\n";
    for (const auto& e : log) {
        out += std::to_string(e.index) + "," + std::string(metrics::metric_name(e.metric)) + "," +
               (std::isnan(e.value) ? std::string("nan") : format_double(e.value)) + "," + (e.is_best ? "1" : "0") +
               "\n";
    }
    return out;
}

bool improves(metrics::Metric metric, double candidate, double incumbent)
{
    return metrics::lower_is_better(metric) ? candidate < incumbent : candidate > incumbent;
}

double monitor_eval(const models::Model& explainer, const models::Model& explained, const data::Dataset& dataset,
                    metrics::Metric metric, metrics::Mode mode, const std::vector<double>& fractions)
{
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor maps = models::explain_pixels(explainer, dataset.batch(all));
    const metrics::Metric which[] = {metric};
    metrics::EvalOptions options;
    options.fractions = fractions;
    return metrics::evaluate_dataset(explained, maps, dataset, which, mode, options).results.front().auc;
}

PretrainResult pretrain(const Checkpoint& explained_ckpt, const data::Dataset& train, const data::Dataset& val,
                        const PretrainConfig& config)
{
    config.validate();
    const models::Model explained = models::from_checkpoint(explained_ckpt, "explained");
    const models::ModelSpec& spec = explained.spec;
    check_matches(spec, train, "training");
    check_matches(spec, val, "validation");

    models::Model current =
        models::init_explainer_from_explained(explained_ckpt, spec.family, derive_seed(config.seed, 1));
    PretrainResult result{current, current, {}, {}, 0, std::nullopt};
    quantize_to_float(result.last.params);

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const Tensor targets = objective::target_select(models::predict_proba(explained, train.batch(order)), config.target);
    const std::size_t k = spec.num_classes;

    AdamState adam(current.params, AdamConfig{config.learning_rate});
    SplitMix64 shuffle_rng(derive_seed(config.seed, 2));

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, count);
            Tensor y({count, k});
            for (std::size_t b = 0; b < count; ++b) {
                std::copy_n(targets.ptr() + idx[b] * k, k, y.ptr() + b * k);
            }
            Tape tape;
            const BoundParams phi(tape, current.params, true);
            const BoundParams frozen(tape, explained.params, false);
            const objective::LtxTerms terms =
                objective::ltx_loss(spec, tape.constant(train.batch(idx)), phi, frozen, y, config.weights);
            const double value = terms.loss.value().item();
            if (!std::isfinite(value)) {
                throw TrainingError("pretrain: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch starting at position " + std::to_string(start));
            }
            tape.backward(terms.loss);
            adam_step(current.params, phi.grads(), adam);
        }
        models::Model snapshot = current;
        quantize_to_float(snapshot.params);
        const double value = monitor_eval(snapshot, explained, val, config.monitor, metrics::Mode::predicted,
                                          config.fractions);
        result.log.push_back({epoch, config.monitor, value, false});
        if (!result.best_value || improves(config.monitor, value, *result.best_value)) {
            result.best_value = value;
            result.best_epoch = epoch;
            result.explainer = snapshot;
        }
        result.last = std::move(snapshot);
    }
    if (result.best_epoch > 0) {
        result.log[result.best_epoch - 1].is_best = true;
    }

    std::map<std::string, std::string> meta{
        {"epoch", std::to_string(result.best_epoch)},
        {"monitor", std::string(metrics::metric_name(config.monitor))},
        {"seed", std::to_string(config.seed)},
        {"target", objective::target_name(config.target)},
        {"lambda_mask", format_double(config.weights.mask)},
    };
    if (result.best_value) {
        meta["monitor_value"] = format_double(*result.best_value);
    }
    result.checkpoint = models::to_checkpoint(result.explainer, "explainer", meta);
    return result;
}

double instance_monitor(const metrics::ProbabilityFn& model, const Tensor& x, const Tensor& map,
                        metrics::Metric metric, const objective::TargetSpec& target,
                        const std::vector<double>& fractions)
{
    if (target.mode == objective::TargetMode::class_index) {
        return metrics::image_auc(model, x, map, metric, metrics::TrackKind::class_rank_kept, target.class_index,
                                  fractions);
    }
    return metrics::image_auc(model, x, map, metric, std::nullopt, fractions);
}

FinetuneResult finetune_instance(const models::Model& explained, const models::Model& pretrained, const Tensor& x,
                                 const FinetuneConfig& config)
{
    config.validate();
    const models::ModelSpec& spec = explained.spec;
    const Shape want{spec.channels, spec.image_size, spec.image_size};
    if (x.dims() != want) {
        throw ShapeError("finetune: image " + shape_string(x.dims()) + " does not match " + shape_string(want));
    }
    const std::size_t S = spec.image_size;
    const metrics::ProbabilityFn prob = metrics::probability_fn(explained);
    const Tensor batch = single_batch(x);
    const Tensor y = objective::target_select(prob(batch), config.target);

    models::Model current = pretrained;
    AdamState adam(current.params, AdamConfig{config.learning_rate});
    FinetuneResult result;

    for (std::size_t step = 0;; ++step) {
        Tape tape;
        const BoundParams phi(tape, current.params, true);
        const BoundParams frozen(tape, explained.params, false);
        const objective::LtxTerms terms = objective::ltx_loss(spec, tape.constant(batch), phi, frozen, y, config.weights);
        const double loss = terms.loss.value().item();

        Tensor map = terms.map.value().reshaped({S, S});
        const bool finite = std::isfinite(loss) && std::all_of(map.data().begin(), map.data().end(),
                                                               [](double v) { return std::isfinite(v); });
        if (!finite) {
            result.diverged = true;
            result.log.push_back({step, config.monitor, std::numeric_limits<double>::quiet_NaN(), false});
            if (step == 0) {
                result.pretrained_map = map;
                result.map = std::move(map);
                result.pretrained_value = result.best_value = std::numeric_limits<double>::quiet_NaN();
            }
            result.steps_run = step;
            break;
        }
        const double value = instance_monitor(prob, x, map, config.monitor, config.target, config.fractions);
        result.log.push_back({step, config.monitor, value, false});
        if (step == 0) {
            result.pretrained_map = map;
            result.pretrained_value = value;
            result.map = std::move(map);
            result.best_value = value;
        } else if (improves(config.monitor, value, result.best_value)) {
            result.map = std::move(map);
            result.best_value = value;
            result.best_step = step;
        }
        result.steps_run = step;
        if (step == config.max_steps) {
            break;
        }
        tape.backward(terms.loss);
        adam_step(current.params, phi.grads(), adam);
    }
    result.log[result.best_step].is_best = true;
    return result;
}

FinetuneResult class_specific_explain(const models::Model& explained, const models::Model& pretrained, const Tensor& x,
                                      std::size_t class_index, FinetuneConfig config)
{
    if (class_index >= explained.spec.num_classes) {
        throw ContractError("class " + std::to_string(class_index) + " out of range for " +
                            std::to_string(explained.spec.num_classes) + " classes");
    }
    config.target = objective::TargetSpec::for_class(class_index);
    return finetune_instance(explained, pretrained, x, config);
}

}  // namespace ltx::training
