#pragma once

#include "ltx/data.hpp"
#include "ltx/models.hpp"
#include "ltx/tensor.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltx::metrics {

enum class Direction { increasing, decreasing };
/// `class_rank_kept` scores 1 while the reference class ranks no lower than
/// on the unperturbed image; for the top class it equals
/// `top_class_unchanged`.
enum class TrackKind { top_class_unchanged, top_class_probability, class_rank_kept };
enum class Metric { neg, pos, ins, del };
enum class Mode { predicted, target };

std::string_view metric_name(Metric metric);
/// Throws ContractError for names other than neg, pos, ins, del.
Metric parse_metric(std::string_view name);
std::string_view mode_name(Mode mode);  // "P" / "T"
Mode parse_mode(std::string_view name);

Direction metric_direction(Metric metric);
TrackKind metric_track(Metric metric);
/// True when a lower AUC is better (pos, del).
bool lower_is_better(Metric metric);

/// {0, 0.1, ..., 0.9}.
std::vector<double> default_fractions();
/// Throws ContractError unless the grid is non-empty, starts at 0, is strictly
/// increasing and stays in [0,1).
void validate_fractions(std::span<const double> fractions);

/// Pixel indices sorted by map value; ties keep ascending row-major order.
std::vector<std::size_t> pixel_order(std::span<const double> map, Direction direction);
std::vector<std::size_t> pixel_order(const Tensor& map, Direction direction);

/// Softmax probabilities [B x k] for a batch of images [B,C,H,W].
using ProbabilityFn = std::function<Tensor(const Tensor& images)>;

ProbabilityFn probability_fn(const models::Model& classifier);

struct Curve {
    std::vector<double> fractions;
    std::vector<double> values;
    TrackKind track = TrackKind::top_class_unchanged;
};

/// Blackout curve of one [C,H,W] image. At fraction f the first
/// floor(f * H*W) pixels of `order` are set to 0 in every channel.
Curve perturb_curve(const ProbabilityFn& model, const Tensor& image, std::span<const std::size_t> order,
                    std::span<const double> fractions, TrackKind track, std::size_t class_index);

/// Trapezoidal area divided by the fraction span. Needs at least two points.
double auc(const Curve& curve);

/// AUC of one image for one metric. Without a class, the reference is the
/// top class of the unperturbed image (P mode). The result is identical to
/// that image's entry in evaluate_dataset.
double image_auc(const ProbabilityFn& model, const Tensor& image, const Tensor& map, Metric metric,
                 std::optional<std::size_t> class_index, std::span<const double> fractions);
/// Same, with the metric's track replaced by `track`.
double image_auc(const ProbabilityFn& model, const Tensor& image, const Tensor& map, Metric metric,
                 TrackKind track, std::optional<std::size_t> class_index, std::span<const double> fractions);

/// Position of `cls` when classes are sorted by decreasing probability, ties
/// resolved towards the lower index.
std::size_t class_rank(std::span<const double> probs, std::size_t cls);

struct MetricResult {
    Metric metric;
    double auc = 0.0;
    std::vector<double> per_image;
    std::vector<Curve> curves;  // filled when curves are kept
};

struct MetricReport {
    Mode mode = Mode::predicted;
    std::vector<MetricResult> results;

    const MetricResult& at(Metric metric) const;
};

struct EvalOptions {
    std::vector<double> fractions = default_fractions();
    bool keep_curves = false;
};

/// Reference class per image: argmax of the unperturbed prediction (P) or
/// the dataset label (T).
std::vector<std::size_t> reference_classes(const ProbabilityFn& model, const data::Dataset& dataset, Mode mode);

/// Mean per-image AUC of each requested metric. `maps` is [N,H,W] with one
/// pixel-resolution map per dataset image.
MetricReport evaluate_dataset(const ProbabilityFn& model, const Tensor& maps, const data::Dataset& dataset,
                              std::span<const Metric> which, Mode mode, const EvalOptions& options = {});
MetricReport evaluate_dataset(const models::Model& explained, const Tensor& maps, const data::Dataset& dataset,
                              std::span<const Metric> which, Mode mode, const EvalOptions& options = {});

/// `metric,mode,auc` with one row per metric.
std::string encode_report_csv(const MetricReport& report);
/// `image_index,fraction,value` rows for one metric; needs kept curves.
std::string encode_curves_csv(const MetricReport& report, Metric metric);

}  // namespace ltx::metrics
