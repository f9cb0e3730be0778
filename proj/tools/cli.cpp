#include "cli.hpp"

#include "CLI11.hpp"
#include "ltx/checkpoint.hpp"
#include "ltx/data.hpp"
#include "ltx/error.hpp"
#include "ltx/metrics.hpp"
#include "ltx/models.hpp"
#include "ltx/training.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <numeric>
#include <ostream>

namespace ltx::cli {

namespace {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::vector<double> parse_fractions(const std::string& text)
{
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        const std::string item = trim(std::string_view(text).substr(start, comma - start));
        double v = 0.0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
            throw UsageError("bad fraction '" + item + "' in '" + text + "'");
        }
        out.push_back(v);
        start = comma + 1;
    }
    try {
        metrics::validate_fractions(out);
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    return out;
}

std::vector<metrics::Metric> parse_metric_list(const std::string& text)
{
    std::vector<metrics::Metric> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t comma = std::min(text.find(',', start), text.size());
        const std::string item = trim(std::string_view(text).substr(start, comma - start));
        try {
            const metrics::Metric m = metrics::parse_metric(item);
            if (std::find(out.begin(), out.end(), m) != out.end()) {
                throw UsageError("metric '" + item + "' listed twice");
            }
            out.push_back(m);
        } catch (const ContractError& e) {
            throw UsageError(e.what());
        }
        start = comma + 1;
    }
    return out;
}

objective::TargetSpec parse_target_flag(const std::string& text)
{
    try {
        return objective::parse_target(text);
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
}

fs::path sidecar(const fs::path& output, std::string_view suffix)
{
    return fs::path(output.string() + std::string(suffix));
}

void write_resolved_config(const CLI::App& sub, const fs::path& output)
{
    std::string text;
    for (const CLI::Option* opt : sub.get_options()) {
        if (!opt->get_configurable() || opt->get_lnames().empty()) {
            continue;
        }
        std::string value;
        if (opt->count() > 0) {
            for (const std::string& r : opt->results()) {
                value += (value.empty() ? "" : ",") + r;
            }
        } else {
            value = opt->get_default_str();
        }
        if (!value.empty()) {
            text += opt->get_lnames().front() + "=" + value + "\n";
        }
    }
    data::write_file(sidecar(output, ".config"), text);
}

models::Model load_model(const std::string& path, std::string_view role)
{
    return models::from_checkpoint(read_checkpoint(path), role);
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

// Every subcommand: options bound to these fields, then `run`.
struct GenArgs {
    std::string out;
    std::size_t n = 2000;
    std::size_t classes = 4;
    std::size_t size = 28;
    std::size_t channels = 1;
    std::uint64_t seed = 0;
    bool two_object = false;
};

struct TrainArgs {
    std::string data;
    std::string model = "patchformer";
    std::size_t epochs = 30;
    std::size_t batch = 32;
    double lr = 2e-3;
    std::uint64_t seed = 0;
    std::string out;
    std::size_t patch_size = 4;
    std::size_t embed_dim = 32;
    std::size_t depth = 2;
    std::size_t heads = 2;
};

struct PretrainArgs {
    std::string explained;
    std::string train;
    std::string val;
    std::string family = "auto";
    double lambda_mask = 30.0;
    double lambda_inv = 0.0;
    double lambda_smooth = 0.0;
    double lr = 2e-3;
    std::size_t batch = 32;
    std::string monitor = "pos";
    std::size_t epochs = 20;
    std::string target = "predicted";
    std::uint64_t seed = 0;
    std::string fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    std::string out;
};

struct ExplainArgs {
    std::string explained;
    std::string explainer;
    std::string data;
    std::size_t index = 0;
    std::string target = "predicted";
    std::size_t max_steps = 25;
    double lr = 2e-3;
    double lambda_mask = 30.0;
    double lambda_inv = 0.0;
    double lambda_smooth = 0.0;
    std::string monitor = "pos";
    std::string fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    std::string out_map;
    std::string out_pgm;
};

struct EvaluateArgs {
    std::string explained;
    std::string explainer;
    std::string data;
    std::string metrics = "neg,pos,ins,del";
    std::string mode = "P";
    bool finetune = false;
    std::size_t max_steps = 25;
    double lr = 2e-3;
    double lambda_mask = 30.0;
    std::string monitor = "pos";
    std::string fractions = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
    bool curves = false;
    std::string out;
};

int cmd_gen_data(const CLI::App& sub, const GenArgs& a, std::ostream& out)
{
    data::GenOptions o;
    o.n = a.n;
    o.classes = a.classes;
    o.size = a.size;
    o.channels = a.channels;
    o.seed = a.seed;
    o.two_object = a.two_object;
    data::Dataset ds;
    try {
        ds = data::gen_synthetic(o);
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    data::write_dataset(ds, a.out);
    write_resolved_config(sub, a.out);
    out << "wrote " << ds.size() << " samples to " << a.out << "\n";
    return kExitOk;
}

int cmd_train_explained(const CLI::App& sub, const TrainArgs& a, std::ostream& out)
{
    models::ModelSpec spec;
    try {
        spec.family = models::parse_family(a.model);
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    const data::Dataset ds = data::read_dataset(a.data);
    spec.image_size = ds.height;
    spec.channels = ds.channels;
    spec.num_classes = std::max<std::size_t>(2, ds.classes);
    spec.patch_size = a.patch_size;
    spec.embed_dim = a.embed_dim;
    spec.depth = a.depth;
    spec.heads = a.heads;
    if (ds.height != ds.width) {
        throw ShapeError("dataset images are not square");
    }
    try {
        spec.validate();
    } catch (const ShapeError& e) {
        throw UsageError(e.what());
    }
    models::TrainOptions t;
    t.epochs = a.epochs;
    t.batch_size = a.batch;
    t.learning_rate = a.lr;
    t.seed = a.seed;
    const models::TrainedClassifier trained = models::train_explained(ds, spec, t);
    const Checkpoint ckpt = models::to_checkpoint(trained.model, "explained",
                                                  {{"epoch", std::to_string(a.epochs)},
                                                   {"seed", std::to_string(a.seed)},
                                                   {"train_accuracy", format_double(trained.train_accuracy)}});
    write_checkpoint(ckpt, a.out);
    write_resolved_config(sub, a.out);
    out << "train accuracy " << fixed(trained.train_accuracy) << "\n";
    out << "wrote " << a.out << "\n";
    return kExitOk;
}

objective::LossWeights weights_of(double mask, double inv, double smooth)
{
    if (mask < 0.0 || inv < 0.0 || smooth < 0.0) {
        throw UsageError("loss weights must be non-negative");
    }
    objective::LossWeights w;
    w.mask = mask;
    w.inv = inv;
    w.smooth = smooth;
    return w;
}

int cmd_pretrain(const CLI::App& sub, const PretrainArgs& a, std::ostream& out)
{
    training::PretrainConfig cfg;
    cfg.learning_rate = a.lr;
    cfg.batch_size = a.batch;
    cfg.epochs = a.epochs;
    cfg.weights = weights_of(a.lambda_mask, a.lambda_inv, a.lambda_smooth);
    cfg.monitor = metrics::parse_metric(a.monitor);
    cfg.target = parse_target_flag(a.target);
    cfg.seed = a.seed;
    cfg.fractions = parse_fractions(a.fractions);
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    const Checkpoint explained = read_checkpoint(a.explained);
    if (a.family != "auto") {
        const models::Family wanted = models::parse_family(a.family);
        const std::string have = explained.meta_or("family", "");
        if (have != models::family_name(wanted)) {
            throw FormatError("explained checkpoint is a '" + have + "' model, cannot build a " + a.family +
                              " explainer");
        }
    }
    const data::Dataset train = data::read_dataset(a.train);
    const data::Dataset val = data::read_dataset(a.val);
    const training::PretrainResult result = training::pretrain(explained, train, val, cfg);
    write_checkpoint(result.checkpoint, a.out);
    const fs::path log_path = fs::path(a.out).parent_path() / "metrics.log";
    data::write_file(log_path, training::encode_metric_log(result.log));
    write_resolved_config(sub, a.out);
    if (result.best_value) {
        out << "best epoch " << result.best_epoch << " " << a.monitor << " " << format_double(*result.best_value)
            << "\n";
    } else {
        out << "no epochs run; wrote the initial explainer\n";
    }
    out << "wrote " << a.out << " and " << log_path.string() << "\n";
    return kExitOk;
}

int cmd_explain(const CLI::App& sub, const ExplainArgs& a, std::ostream& out)
{
    training::FinetuneConfig cfg;
    cfg.max_steps = a.max_steps;
    cfg.learning_rate = a.lr;
    cfg.weights = weights_of(a.lambda_mask, a.lambda_inv, a.lambda_smooth);
    cfg.monitor = metrics::parse_metric(a.monitor);
    cfg.target = parse_target_flag(a.target);
    cfg.fractions = parse_fractions(a.fractions);
    if (cfg.target.mode == objective::TargetMode::distribution) {
        throw UsageError("explain target must be predicted or class:K");
    }
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    const models::Model explained = load_model(a.explained, "explained");
    const models::Model explainer = load_model(a.explainer, "explainer");
    const data::Dataset ds = data::read_dataset(a.data);
    if (a.index >= ds.size()) {
        throw UsageError("index " + std::to_string(a.index) + " out of range for " + std::to_string(ds.size()) +
                         " samples");
    }
    if (cfg.target.mode == objective::TargetMode::class_index && *cfg.target.class_index >= explained.spec.num_classes) {
        throw UsageError("class " + std::to_string(*cfg.target.class_index) + " out of range for " +
                         std::to_string(explained.spec.num_classes) + " classes");
    }
    const training::FinetuneResult r =
        training::finetune_instance(explained, explainer, ds.samples[a.index].image, cfg);
    write_map_csv(r.map, a.out_map);
    if (!a.out_pgm.empty()) {
        write_pgm(r.map, a.out_pgm);
    }
    write_resolved_config(sub, a.out_map);
    out << "pretrained " << a.monitor << " " << format_double(r.pretrained_value) << "\n";
    out << "final " << a.monitor << " " << format_double(r.best_value) << " (step " << r.best_step << " of "
        << r.steps_run << ")\n";
    out << "reverted " << (r.reverted() ? "yes" : "no") << "\n";
    if (r.diverged) {
        out << "warning: loss diverged; kept the best map before divergence\n";
    }
    return kExitOk;
}

int cmd_evaluate(const CLI::App& sub, const EvaluateArgs& a, std::ostream& out)
{
    const std::vector<metrics::Metric> which = parse_metric_list(a.metrics);
    metrics::Mode mode;
    try {
        mode = metrics::parse_mode(a.mode);
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }
    metrics::EvalOptions options;
    options.fractions = parse_fractions(a.fractions);
    options.keep_curves = a.curves;
    training::FinetuneConfig cfg;
    cfg.max_steps = a.max_steps;
    cfg.learning_rate = a.lr;
    cfg.weights = weights_of(a.lambda_mask, 0.0, 0.0);
    cfg.monitor = metrics::parse_metric(a.monitor);
    cfg.fractions = options.fractions;
    try {
        cfg.validate();
    } catch (const ContractError& e) {
        throw UsageError(e.what());
    }

    const models::Model explained = load_model(a.explained, "explained");
    const models::Model explainer = load_model(a.explainer, "explainer");
    const data::Dataset ds = data::read_dataset(a.data);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), 0);
    Tensor maps = models::explain_pixels(explainer, ds.batch(all));
    if (a.finetune) {
        const std::size_t plane = ds.height * ds.width;
        for (std::size_t i = 0; i < ds.size(); ++i) {
            training::FinetuneConfig per = cfg;
            per.target = mode == metrics::Mode::target ? objective::TargetSpec::for_class(ds.samples[i].label)
                                                       : objective::TargetSpec::predicted();
            const training::FinetuneResult r = training::finetune_instance(explained, explainer, ds.samples[i].image, per);
            std::copy_n(r.map.ptr(), plane, maps.ptr() + i * plane);
        }
    }
    const metrics::MetricReport report = metrics::evaluate_dataset(explained, maps, ds, which, mode, options);
    data::write_file(a.out, metrics::encode_report_csv(report));
    if (a.curves) {
        for (metrics::Metric m : which) {
            data::write_file(sidecar(a.out, "." + std::string(metrics::metric_name(m)) + ".curves.csv"),
                             metrics::encode_curves_csv(report, m));
        }
    }
    write_resolved_config(sub, a.out);
    out << "metric  mode  auc\n";
    for (const auto& r : report.results) {
        out << std::left << std::setw(8) << metrics::metric_name(r.metric) << std::setw(6)
            << metrics::mode_name(report.mode) << fixed(r.auc) << "\n";
    }
    out << "wrote " << a.out << "\n";
    return kExitOk;
}

}  // namespace

std::map<std::string, std::string> parse_run_config(const std::string& text)
{
    std::map<std::string, std::string> out;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t end = std::min(text.find('\n', start), text.size());
        const std::string line = trim(std::string_view(text).substr(start, end - start));
        start = end + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError("config line " + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty()) {
            throw ContractError("config line " + std::to_string(line_no) + ": empty key");
        }
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            value = value.substr(1, value.size() - 2);
        }
        if (!out.emplace(key, value).second) {
            throw ContractError("config line " + std::to_string(line_no) + ": key '" + key + "' repeated");
        }
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Learning-to-explain toolkit: data, explained models, explainers, metrics", "ltx"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);

    GenArgs gen;
    TrainArgs trn;
    PretrainArgs pre;
    ExplainArgs exp;
    EvaluateArgs ev;
    std::string config_path;

    auto add_config = [&config_path](CLI::App* sub) {
        sub->add_option("--config", config_path, "key=value file; flags override its values")
            ->configurable(false);
    };

    CLI::App* g = app.add_subcommand("gen-data", "Generate a synthetic shape dataset");
    g->add_option("--out", gen.out, "Output dataset path")->required();
    g->add_option("--n", gen.n, "Number of samples")->capture_default_str()->check(CLI::PositiveNumber);
    g->add_option("--classes", gen.classes, "Number of shape classes (1-4)")->capture_default_str();
    g->add_option("--size", gen.size, "Image side")->capture_default_str();
    g->add_option("--channels", gen.channels, "Image channels")->capture_default_str();
    g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
    g->add_flag("--two-object", gen.two_object, "Two different shapes per image");
    add_config(g);

    CLI::App* t = app.add_subcommand("train-explained", "Train the classifier to be explained");
    t->add_option("--data", trn.data, "Training dataset")->required();
    t->add_option("--model", trn.model, "patchformer or cnn")->capture_default_str();
    t->add_option("--epochs", trn.epochs, "Training epochs")->capture_default_str();
    t->add_option("--batch", trn.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    t->add_option("--lr", trn.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    t->add_option("--seed", trn.seed, "Initialization and shuffling seed")->capture_default_str();
    t->add_option("--patch-size", trn.patch_size, "Patch side (patchformer)")->capture_default_str();
    t->add_option("--embed-dim", trn.embed_dim, "Token width (patchformer)")->capture_default_str();
    t->add_option("--depth", trn.depth, "Encoder layers (patchformer)")->capture_default_str();
    t->add_option("--heads", trn.heads, "Attention heads (patchformer)")->capture_default_str();
    t->add_option("--out", trn.out, "Output checkpoint")->required();
    add_config(t);

    CLI::App* p = app.add_subcommand("pretrain", "Pretrain an explainer on a dataset");
    p->add_option("--explained", pre.explained, "Explained-model checkpoint")->required();
    p->add_option("--train", pre.train, "Training dataset")->required();
    p->add_option("--val", pre.val, "Validation dataset for the monitor")->required();
    p->add_option("--family", pre.family, "Expected explainer family (auto, patchformer, cnn)")->capture_default_str();
    p->add_option("--lambda-mask", pre.lambda_mask, "Mask sparsity weight")->capture_default_str();
    p->add_option("--lambda-inv", pre.lambda_inv, "Inverse-mask weight")->capture_default_str();
    p->add_option("--lambda-smooth", pre.lambda_smooth, "Smoothness weight")->capture_default_str();
    p->add_option("--lr", pre.lr, "Adam learning rate")->capture_default_str()->check(CLI::PositiveNumber);
    p->add_option("--batch", pre.batch, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    p->add_option("--monitor", pre.monitor, "pos or neg")->capture_default_str()->check(CLI::IsMember({"pos", "neg"}));
    p->add_option("--epochs", pre.epochs, "Pretraining epochs")->capture_default_str();
    p->add_option("--target", pre.target, "predicted or distribution")
        ->capture_default_str()
        ->check(CLI::IsMember({"predicted", "distribution"}));
    p->add_option("--seed", pre.seed, "Head initialization and shuffling seed")->capture_default_str();
    p->add_option("--fractions", pre.fractions, "Comma-separated blackout fractions")->capture_default_str();
    p->add_option("--out", pre.out, "Output explainer checkpoint")->required();
    add_config(p);

    CLI::App* x = app.add_subcommand("explain", "Finetune the explainer on one image and export its map");
    x->add_option("--explained", exp.explained, "Explained-model checkpoint")->required();
    x->add_option("--explainer", exp.explainer, "Pretrained explainer checkpoint")->required();
    x->add_option("--data", exp.data, "Dataset holding the image")->required();
    x->add_option("--index", exp.index, "Image index")->capture_default_str();
    x->add_option("--target", exp.target, "predicted or class:K")->capture_default_str();
    x->add_option("--max-steps", exp.max_steps, "Finetuning steps")->capture_default_str()->check(CLI::PositiveNumber);
    x->add_option("--lr", exp.lr, "Adam learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
    x->add_option("--lambda-mask", exp.lambda_mask, "Mask sparsity weight")->capture_default_str();
    x->add_option("--lambda-inv", exp.lambda_inv, "Inverse-mask weight")->capture_default_str();
    x->add_option("--lambda-smooth", exp.lambda_smooth, "Smoothness weight")->capture_default_str();
    x->add_option("--monitor", exp.monitor, "pos or neg")->capture_default_str()->check(CLI::IsMember({"pos", "neg"}));
    x->add_option("--fractions", exp.fractions, "Comma-separated blackout fractions")->capture_default_str();
    x->add_option("--out-map", exp.out_map, "Output map CSV")->required();
    x->add_option("--out-pgm", exp.out_pgm, "Optional PGM heatmap");
    add_config(x);

    CLI::App* e = app.add_subcommand("evaluate", "Perturbation metrics of explainer maps on a dataset");
    e->add_option("--explained", ev.explained, "Explained-model checkpoint")->required();
    e->add_option("--explainer", ev.explainer, "Explainer checkpoint")->required();
    e->add_option("--data", ev.data, "Evaluation dataset")->required();
    e->add_option("--metrics", ev.metrics, "Comma list of neg,pos,ins,del")->capture_default_str();
    e->add_option("--mode", ev.mode, "P (predicted class) or T (label)")->capture_default_str();
    e->add_flag("--finetune", ev.finetune, "Finetune the explainer per image first");
    e->add_option("--max-steps", ev.max_steps, "Finetuning steps")->capture_default_str()->check(CLI::PositiveNumber);
    e->add_option("--lr", ev.lr, "Finetuning learning rate")->capture_default_str()->check(CLI::NonNegativeNumber);
    e->add_option("--lambda-mask", ev.lambda_mask, "Finetuning mask weight")->capture_default_str();
    e->add_option("--monitor", ev.monitor, "Finetuning monitor, pos or neg")
        ->capture_default_str()
        ->check(CLI::IsMember({"pos", "neg"}));
    e->add_option("--fractions", ev.fractions, "Comma-separated blackout fractions")->capture_default_str();
    e->add_flag("--curves", ev.curves, "Also write per-image curves");
    e->add_option("--out", ev.out, "Output report CSV")->required();
    add_config(e);

    std::vector<std::string> argv = args;
    try {
        // Config values go first so that explicit flags, parsed later, win.
        if (!argv.empty()) {
            CLI::App* sub = app.get_subcommand_no_throw(argv.front());
            std::vector<std::string> rest(argv.begin() + 1, argv.end());
            std::optional<std::string> cfg;
            for (std::size_t i = 0; i < rest.size(); ++i) {
                if (rest[i] == "--config" && i + 1 < rest.size()) {
                    cfg = rest[i + 1];
                } else if (rest[i].starts_with("--config=")) {
                    cfg = rest[i].substr(9);
                }
            }
            if (sub != nullptr && cfg) {
                std::map<std::string, std::string> values;
                try {
                    values = parse_run_config(data::read_file(*cfg));
                } catch (const ContractError& ex) {
                    throw UsageError(*cfg + ": " + ex.what());
                }
                std::vector<std::string> injected{argv.front()};
                for (const auto& [key, value] : values) {
                    const CLI::Option* opt = sub->get_option_no_throw("--" + key);
                    if (opt == nullptr || !opt->get_configurable()) {
                        throw UsageError(*cfg + ": unknown key '" + key + "' for " + argv.front());
                    }
                    injected.push_back("--" + key + "=" + value);
                }
                injected.insert(injected.end(), rest.begin(), rest.end());
                argv = std::move(injected);
            }
        }
        std::reverse(argv.begin(), argv.end());
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& ex) {
        err << "error: " << ex.what() << "\n";
        if (!app.get_subcommands().empty()) {
            err << app.get_subcommands().front()->help();
        } else {
            err << app.help();
        }
        return kExitUsage;
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const Error& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }

    try {
        if (g->parsed()) {
            return cmd_gen_data(*g, gen, out);
        }
        if (t->parsed()) {
            return cmd_train_explained(*t, trn, out);
        }
        if (p->parsed()) {
            return cmd_pretrain(*p, pre, out);
        }
        if (x->parsed()) {
            return cmd_explain(*x, exp, out);
        }
        return cmd_evaluate(*e, ev, out);
    } catch (const UsageError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const ContractError& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace ltx::cli
