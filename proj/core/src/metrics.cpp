#include "ltx/metrics.hpp"

#include "ltx/checkpoint.hpp"
#include "ltx/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

namespace ltx::metrics {

namespace {


struct CurveJob {
    const Tensor* image = nullptr;
    std::vector<std::size_t> order;
    TrackKind track = TrackKind::top_class_unchanged;
    std::optional<std::size_t> class_index;  // none: argmax at fraction 0
};

std::size_t argmax_row(const double* row, std::size_t k)
{
    return static_cast<std::size_t>(std::max_element(row, row + k) - row);
}

std::vector<Curve> run_jobs(const ProbabilityFn& model, std::span<const CurveJob> jobs,
                            std::span<const double> fractions)
{
    validate_fractions(fractions);
    std::vector<Curve> curves(jobs.size());
    if (jobs.empty()) {
        return curves;
    }
    const std::size_t F = fractions.size();
    const Shape& dims = jobs.front().image->dims();
    if (dims.size() != 3) {
        throw ShapeError("perturb_curve: expected a [C,H,W] image, got " + shape_string(dims));
    }
    const std::size_t channels = dims[0];
    const std::size_t plane = dims[1] * dims[2];
    const std::size_t per = channels * plane;
    const std::size_t group = 1;  // images per inference call

    for (std::size_t first = 0; first < jobs.size(); first += group) {
        const std::size_t count = std::min(group, jobs.size() - first);
        Tensor batch({count * F, dims[0], dims[1], dims[2]});
        for (std::size_t j = 0; j < count; ++j) {
            const CurveJob& job = jobs[first + j];
            if (job.image->dims() != dims) {
                throw ShapeError("perturb_curve: images of different shapes in one evaluation");
            }
            if (job.order.size() != plane) {
                throw ContractError("perturb_curve: order has " + std::to_string(job.order.size()) +
                                    " entries for " + std::to_string(plane) + " pixels");
            }
            for (std::size_t f = 0; f < F; ++f) {
                double* dst = batch.ptr() + (j * F + f) * per;
                std::copy_n(job.image->ptr(), per, dst);
                const auto blacked = static_cast<std::size_t>(std::floor(fractions[f] * static_cast<double>(plane)));
                for (std::size_t q = 0; q < blacked; ++q) {
                    const std::size_t pixel = job.order[q];
                    for (std::size_t c = 0; c < channels; ++c) {
                        dst[c * plane + pixel] = 0.0;
                    }
                }
            }
        }
        const Tensor probs = model(batch);
        if (probs.rank() != 2 || probs.dim(0) != count * F) {
            throw ShapeError("perturb_curve: model returned " + shape_string(probs.dims()));
        }
        const std::size_t k = probs.dim(1);
        for (std::size_t j = 0; j < count; ++j) {
            const CurveJob& job = jobs[first + j];
            const double* rows = probs.ptr() + j * F * k;
            const std::size_t cls = job.class_index.value_or(argmax_row(rows, k));
            if (cls >= k) {
                throw ContractError("perturb_curve: class " + std::to_string(cls) + " out of range for " +
                                    std::to_string(k) + " classes");
            }
            Curve& curve = curves[first + j];
            curve.fractions.assign(fractions.begin(), fractions.end());
            curve.track = job.track;
            curve.values.resize(F);
            const std::size_t rank0 = class_rank({rows, k}, cls);
            for (std::size_t f = 0; f < F; ++f) {
                const double* row = rows + f * k;
                switch (job.track) {
                case TrackKind::top_class_unchanged: curve.values[f] = argmax_row(row, k) == cls ? 1.0 : 0.0; break;
                case TrackKind::top_class_probability: curve.values[f] = row[cls]; break;
                case TrackKind::class_rank_kept: curve.values[f] = class_rank({row, k}, cls) <= rank0 ? 1.0 : 0.0; break;
                }
            }
        }
    }
    return curves;
}

}  // namespace

std::size_t class_rank(std::span<const double> probs, std::size_t cls)
{
    std::size_t rank = 0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] > probs[cls] || (probs[j] == probs[cls] && j < cls)) {
            ++rank;
        }
    }
    return rank;
}

std::string_view metric_name(Metric metric)
{
    switch (metric) {
    case Metric::neg: return "neg";
    case Metric::pos: return "pos";
    case Metric::ins: return "ins";
    case Metric::del: return "del";
    }
    return "neg";
}

Metric parse_metric(std::string_view name)
{
    for (Metric m : {Metric::neg, Metric::pos, Metric::ins, Metric::del}) {
        if (metric_name(m) == name) {
            return m;
        }
    }
    throw ContractError("unknown metric '" + std::string(name) + "' (expected neg, pos, ins or del)");
}

std::string_view mode_name(Mode mode)
{
    return mode == Mode::predicted ? "P" : "T";
}

Mode parse_mode(std::string_view name)
{
    if (name == "P") {
        return Mode::predicted;
    }
    if (name == "T") {
        return Mode::target;
    }
    throw ContractError("unknown mode '" + std::string(name) + "' (expected P or T)");
}

Direction metric_direction(Metric metric)
{
    return metric == Metric::neg || metric == Metric::ins ? Direction::increasing : Direction::decreasing;
}

TrackKind metric_track(Metric metric)
{
    return metric == Metric::neg || metric == Metric::pos ? TrackKind::top_class_unchanged
                                                          : TrackKind::top_class_probability;
}

bool lower_is_better(Metric metric)
{
    return metric == Metric::pos || metric == Metric::del;
}

std::vector<double> default_fractions()
{
    std::vector<double> f(10);
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = static_cast<double>(i) / 10.0;
    }
    return f;
}

void validate_fractions(std::span<const double> fractions)
{
    if (fractions.empty()) {
        throw ContractError("fraction grid is empty");
    }
    if (fractions.front() != 0.0) {
        throw ContractError("fraction grid must start at 0");
    }
    for (std::size_t i = 0; i < fractions.size(); ++i) {
        if (!(fractions[i] >= 0.0 && fractions[i] < 1.0)) {
            throw ContractError("fraction " + format_double(fractions[i]) + " outside [0,1)");
        }
        if (i > 0 && !(fractions[i] > fractions[i - 1])) {
            throw ContractError("fraction grid must be strictly increasing");
        }
    }
}

std::vector<std::size_t> pixel_order(std::span<const double> map, Direction direction)
{
    std::vector<std::size_t> order(map.size());
    std::iota(order.begin(), order.end(), 0);
    if (direction == Direction::increasing) {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return map[a] < map[b]; });
    } else {
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return map[a] > map[b]; });
    }
    return order;
}

std::vector<std::size_t> pixel_order(const Tensor& map, Direction direction)
{
    return pixel_order(map.data(), direction);
}

ProbabilityFn probability_fn(const models::Model& classifier)
{
    return [&classifier](const Tensor& images) { return models::predict_proba(classifier, images); };
}

Curve perturb_curve(const ProbabilityFn& model, const Tensor& image, std::span<const std::size_t> order,
                    std::span<const double> fractions, TrackKind track, std::size_t class_index)
{
    const CurveJob job{&image, {order.begin(), order.end()}, track, class_index};
    return run_jobs(model, std::span(&job, 1), fractions).front();
}

double auc(const Curve& curve)
{
    const auto& f = curve.fractions;
    const auto& v = curve.values;
    if (f.size() < 2 || v.size() != f.size()) {
        throw ContractError("auc: need at least two curve points");
    }
    double area = 0.0;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        area += (f[i + 1] - f[i]) * (v[i] + v[i + 1]) / 2.0;
    }
    return area / (f.back() - f.front());
}

double image_auc(const ProbabilityFn& model, const Tensor& image, const Tensor& map, Metric metric,
                 std::optional<std::size_t> class_index, std::span<const double> fractions)
{
    return image_auc(model, image, map, metric, metric_track(metric), class_index, fractions);
}

double image_auc(const ProbabilityFn& model, const Tensor& image, const Tensor& map, Metric metric,
                 TrackKind track, std::optional<std::size_t> class_index, std::span<const double> fractions)
{
    if (map.size() * (image.rank() == 3 ? image.dim(0) : 0) != image.size()) {
        throw ShapeError("image_auc: map " + shape_string(map.dims()) + " does not cover image " +
                         shape_string(image.dims()));
    }
    const CurveJob job{&image, pixel_order(map, metric_direction(metric)), track, class_index};
    return auc(run_jobs(model, std::span(&job, 1), fractions).front());
}

const MetricResult& MetricReport::at(Metric metric) const
{
    for (const auto& r : results) {
        if (r.metric == metric) {
            return r;
        }
    }
    throw ContractError("report has no '" + std::string(metric_name(metric)) + "' entry");
}

std::vector<std::size_t> reference_classes(const ProbabilityFn& model, const data::Dataset& dataset, Mode mode)
{
    std::vector<std::size_t> out(dataset.size());
    if (mode == Mode::target) {
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            out[i] = dataset.samples[i].label;
        }
        return out;
    }
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor probs = model(dataset.batch(all));
    const std::size_t k = probs.dim(1);
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        out[i] = argmax_row(probs.ptr() + i * k, k);
    }
    return out;
}

MetricReport evaluate_dataset(const ProbabilityFn& model, const Tensor& maps, const data::Dataset& dataset,
                              std::span<const Metric> which, Mode mode, const EvalOptions& options)
{
    validate_fractions(options.fractions);
    const std::size_t n = dataset.size();
    if (n == 0) {
        throw ContractError("evaluate_dataset: empty dataset");
    }
    const std::size_t plane = dataset.height * dataset.width;
    if (maps.rank() != 3 || maps.dim(0) != n || maps.dim(1) != dataset.height || maps.dim(2) != dataset.width) {
        throw ContractError("evaluate_dataset: maps " + shape_string(maps.dims()) + " do not match " +
                            std::to_string(n) + " images of " + std::to_string(dataset.height) + "x" +
                            std::to_string(dataset.width));
    }
    MetricReport report;
    report.mode = mode;
    for (Metric metric : which) {
        std::vector<CurveJob> jobs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::span<const double> map(maps.ptr() + i * plane, plane);
            jobs[i].image = &dataset.samples[i].image;
            jobs[i].order = pixel_order(map, metric_direction(metric));
            jobs[i].track = metric_track(metric);
            if (mode == Mode::target) {
                jobs[i].class_index = dataset.samples[i].label;
            }
        }
        std::vector<Curve> curves = run_jobs(model, jobs, options.fractions);
        MetricResult result{metric, 0.0, std::vector<double>(n), {}};
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            result.per_image[i] = auc(curves[i]);
            total += result.per_image[i];
        }
        result.auc = total / static_cast<double>(n);
        if (options.keep_curves) {
            result.curves = std::move(curves);
        }
        report.results.push_back(std::move(result));
    }
    return report;
}

MetricReport evaluate_dataset(const models::Model& explained, const Tensor& maps, const data::Dataset& dataset,
                              std::span<const Metric> which, Mode mode, const EvalOptions& options)
{
    return evaluate_dataset(probability_fn(explained), maps, dataset, which, mode, options);
}

std::string encode_report_csv(const MetricReport& report)
{
    std::string out = "metric,mode,auc\n";
    for (const auto& r : report.results) {
        out += std::string(metric_name(r.metric)) + "," + std::string(mode_name(report.mode)) + "," +
               format_double(r.auc) + "\n";
    }
    return out;
}

std::string encode_curves_csv(const MetricReport& report, Metric metric)
{
    const MetricResult& r = report.at(metric);
    if (r.curves.size() != r.per_image.size()) {
        throw ContractError("report was produced without per-image curves");
    }
    std::string out = "image_index,fraction,value\n";
    for (std::size_t i = 0; i < r.curves.size(); ++i) {
        const Curve& c = r.curves[i];
        for (std::size_t f = 0; f < c.fractions.size(); ++f) {
            out += std::to_string(i) + "," + format_double(c.fractions[f]) + "," + format_double(c.values[f]) + "\n";
        }
    }
    return out;
}

}  // namespace ltx::metrics
