#pragma once

#include "ltx/checkpoint.hpp"
#include "ltx/data.hpp"
#include "ltx/metrics.hpp"
#include "ltx/models.hpp"
#include "ltx/objective.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ltx::training {

struct PretrainConfig {
    double learning_rate = 2e-3;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    objective::LossWeights weights;
    metrics::Metric monitor = metrics::Metric::pos;
    objective::TargetSpec target = objective::TargetSpec::predicted();
    std::uint64_t seed = 0;
    std::vector<double> fractions = metrics::default_fractions();

    /// Throws ContractError on a non-positive rate, zero batch, a monitor
    /// other than pos/neg, or a class target.
    void validate() const;
};

struct FinetuneConfig {
    std::size_t max_steps = 25;
    double learning_rate = 2e-3;
    objective::LossWeights weights;
    metrics::Metric monitor = metrics::Metric::pos;
    objective::TargetSpec target = objective::TargetSpec::predicted();
    std::vector<double> fractions = metrics::default_fractions();

    /// Throws ContractError on zero steps, a negative rate or a monitor other
    /// than pos/neg.
    void validate() const;
};

/// One line of a metric log: epoch (pretraining) or step (finetuning).
struct LogEntry {
    std::size_t index = 0;
    metrics::Metric metric = metrics::Metric::pos;
    double value = 0.0;  // NaN when the step diverged
    bool is_best = false;
};

/// `index,metric,value,is_best` header plus one row per entry.
std::string encode_metric_log(const std::vector<LogEntry>& log);

/// True when `candidate` beats `incumbent` for `metric` (strictly).
bool improves(metrics::Metric metric, double candidate, double incumbent);

struct PretrainResult {
    models::Model explainer;  // best epoch, float32-exact
    models::Model last;       // after the final epoch, float32-exact
    Checkpoint checkpoint;
    std::vector<LogEntry> log;
    std::size_t best_epoch = 0;  // 0: no epoch ran
    std::optional<double> best_value;
};

/// Dataset-level explainer training: Adam over the explainer parameters and
/// `mask.z` on `train`, monitor on `val` after every epoch, keep the best
/// epoch (earliest on ties). Throws TrainingError with epoch and batch context
/// on a non-finite loss.
PretrainResult pretrain(const Checkpoint& explained, const data::Dataset& train, const data::Dataset& val,
                        const PretrainConfig& config);

/// Mean monitor AUC of the explainer's maps on `dataset`.
double monitor_eval(const models::Model& explainer, const models::Model& explained, const data::Dataset& dataset,
                    metrics::Metric metric, metrics::Mode mode = metrics::Mode::predicted,
                    const std::vector<double>& fractions = metrics::default_fractions());

struct FinetuneResult {
    Tensor map;             // [S,S], best map seen
    Tensor pretrained_map;  // [S,S], step-0 map
    double pretrained_value = 0.0;
    double best_value = 0.0;
    std::size_t best_step = 0;
    std::size_t steps_run = 0;
    bool diverged = false;
    std::vector<LogEntry> log;  // step 0 .. steps_run

    bool reverted() const { return best_step == 0; }
};

/// Per-instance refinement of a copy of `pretrained` on the [C,S,S] image
/// `x`. The monitor is evaluated on the step-0 map and after every update;
/// the best map is returned (earliest on ties), so its monitor value is never
/// worse than the pretrained map's. A non-finite loss stops the run and
/// keeps the best map so far.
FinetuneResult finetune_instance(const models::Model& explained, const models::Model& pretrained, const Tensor& x,
                                 const FinetuneConfig& config);

/// Finetuning towards `class_index`. The monitor follows that class's rank
/// instead of the top class. Throws ContractError when the class is out of
/// range.
FinetuneResult class_specific_explain(const models::Model& explained, const models::Model& pretrained, const Tensor& x,
                                      std::size_t class_index, FinetuneConfig config);

/// Monitor of one map on one image, as used by finetuning.
double instance_monitor(const metrics::ProbabilityFn& model, const Tensor& x, const Tensor& map,
                        metrics::Metric metric, const objective::TargetSpec& target,
                        const std::vector<double>& fractions);

}  // namespace ltx::training
