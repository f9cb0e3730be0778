#include "ltx/models.hpp"

#include "ltx/adam.hpp"
#include "ltx/error.hpp"
#include "ltx/objective.hpp"
#include "ltx/ops.hpp"
#include "ltx/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

namespace ltx::models {

namespace {

Tensor xavier(Shape dims, std::size_t fan_in, std::size_t fan_out, SplitMix64& rng)
{
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(std::move(dims));
    for (double& v : t.values()) {
        v = rng.uniform(-a, a);
    }
    return t;
}

Tensor small_uniform(Shape dims, double a, SplitMix64& rng)
{
    Tensor t(std::move(dims));
    for (double& v : t.values()) {
        v = rng.uniform(-a, a);
    }
    return t;
}

std::string layer_key(std::size_t layer, std::string_view leaf)
{
    return "layer" + std::to_string(layer) + "." + std::string(leaf);
}

void add_patchformer_backbone(const ModelSpec& s, ParamSet& p, SplitMix64& rng)
{
    const std::size_t d = s.embed_dim;
    const std::size_t in = s.channels * s.patch_size * s.patch_size;
    p.add("embed.w", xavier({in, d}, in, d, rng));
    p.add("embed.b", Tensor({d}, 0.0));
    p.add("cls", small_uniform({1, d}, 0.02, rng));
    p.add("pos", small_uniform({s.seq_len(), d}, 0.02, rng));
    for (std::size_t l = 0; l < s.depth; ++l) {
        p.add(layer_key(l, "ln1.gamma"), Tensor({d}, 1.0));
        p.add(layer_key(l, "ln1.beta"), Tensor({d}, 0.0));
        p.add(layer_key(l, "attn.qkv.w"), xavier({d, 3 * d}, d, 3 * d, rng));
        p.add(layer_key(l, "attn.qkv.b"), Tensor({3 * d}, 0.0));
        p.add(layer_key(l, "attn.out.w"), xavier({d, d}, d, d, rng));
        p.add(layer_key(l, "attn.out.b"), Tensor({d}, 0.0));
        p.add(layer_key(l, "ln2.gamma"), Tensor({d}, 1.0));
        p.add(layer_key(l, "ln2.beta"), Tensor({d}, 0.0));
        p.add(layer_key(l, "ffn.w1"), xavier({d, 4 * d}, d, 4 * d, rng));
        p.add(layer_key(l, "ffn.b1"), Tensor({4 * d}, 0.0));
        p.add(layer_key(l, "ffn.w2"), xavier({4 * d, d}, 4 * d, d, rng));
        p.add(layer_key(l, "ffn.b2"), Tensor({d}, 0.0));
    }
}

std::size_t cnn_side(const ModelSpec& s)
{
    return ((s.image_size - 2) / 2 - 1) / 2;
}

void add_cnn_backbone(const ModelSpec& s, ParamSet& p, SplitMix64& rng)
{
    const std::size_t c1 = kCnnConv1Channels;
    const std::size_t c2 = kCnnConv2Channels;
    p.add("conv1.w", xavier({c1, s.channels, 3, 3}, s.channels * 9, c1 * 9, rng));
    p.add("conv1.b", Tensor({c1}, 0.0));
    p.add("conv2.w", xavier({c2, c1, 2, 2}, c1 * 4, c2 * 4, rng));
    p.add("conv2.b", Tensor({c2}, 0.0));
}

std::size_t parse_size(const Checkpoint& ckpt, const std::string& key)
{
    const auto it = ckpt.meta.find(key);
    if (it == ckpt.meta.end()) {
        throw FormatError("checkpoint metadata lacks '" + key + "'");
    }
    std::size_t v = 0;
    const auto res = std::from_chars(it->second.data(), it->second.data() + it->second.size(), v);
    if (res.ec != std::errc{} || res.ptr != it->second.data() + it->second.size()) {
        throw FormatError("checkpoint metadata '" + key + "' is not an integer: '" + it->second + "'");
    }
    return v;
}

}  // namespace

std::string_view family_name(Family family)
{
    return family == Family::patchformer ? "patchformer" : "cnn";
}

Family parse_family(std::string_view name)
{
    if (name == "patchformer") {
        return Family::patchformer;
    }
    if (name == "cnn") {
        return Family::cnn;
    }
    throw ContractError("unknown model family '" + std::string(name) + "' (expected patchformer or cnn)");
}

void ModelSpec::validate() const
{
    if (num_classes < 2) {
        throw ShapeError("model needs at least 2 classes, got " + std::to_string(num_classes));
    }
    if (channels < 1 || image_size < 1) {
        throw ShapeError("model image dims must be positive");
    }
    if (family == Family::patchformer) {
        if (patch_size == 0 || image_size % patch_size != 0) {
            throw ShapeError("patchformer: image size " + std::to_string(image_size) + " not divisible by patch size " +
                             std::to_string(patch_size));
        }
        if (heads == 0 || embed_dim == 0 || embed_dim % heads != 0) {
            throw ShapeError("patchformer: embed dim " + std::to_string(embed_dim) + " not divisible by " +
                             std::to_string(heads) + " heads");
        }
        if (depth == 0) {
            throw ShapeError("patchformer: depth must be positive");
        }
    } else {
        // 3x3 conv and pool need an even size, the 2x2 conv then needs an odd
        // pooled size: image_size = 4*m with m >= 3.
        if (image_size < 12 || image_size % 4 != 0) {
            throw ShapeError("cnn: image size must be a multiple of 4 and at least 12, got " +
                             std::to_string(image_size));
        }
    }
}

std::size_t ModelSpec::map_side() const
{
    return family == Family::patchformer ? grid() : cnn_side(*this);
}

bool is_backbone_param(std::string_view name)
{
    return !name.starts_with("classifier.") && !name.starts_with("head.") && name != kMaskParam;
}

ParamSet init_classifier(const ModelSpec& spec, std::uint64_t seed)
{
    spec.validate();
    SplitMix64 rng(seed);
    ParamSet p;
    if (spec.family == Family::patchformer) {
        add_patchformer_backbone(spec, p, rng);
        p.add("classifier.w", xavier({spec.embed_dim, spec.num_classes}, spec.embed_dim, spec.num_classes, rng));
    } else {
        add_cnn_backbone(spec, p, rng);
        const std::size_t r = cnn_side(spec);
        const std::size_t flat = kCnnConv2Channels * r * r;
        p.add("classifier.w", xavier({flat, spec.num_classes}, flat, spec.num_classes, rng));
    }
    p.add("classifier.b", Tensor({spec.num_classes}, 0.0));
    quantize_to_float(p);
    return p;
}

namespace {

Var as_batch(const ModelSpec& spec, Var images)
{
    const Shape& d = images.dims();
    const Shape want{spec.channels, spec.image_size, spec.image_size};
    if (d.size() == 3 && d == want) {
        return ops::reshape(images, {1, spec.channels, spec.image_size, spec.image_size});
    }
    if (d.size() == 4 && Shape(d.begin() + 1, d.end()) == want) {
        return images;
    }
    throw ShapeError("model expects images " + shape_string(want) + " (optionally batched), got " + shape_string(d));
}

}  // namespace

Var patchformer_encode(const ModelSpec& spec, const BoundParams& p, Var images)
{
    if (spec.family != Family::patchformer) {
        throw ShapeError("patchformer_encode called with a cnn spec");
    }
    const Var batch = as_batch(spec, images);
    const std::size_t T = spec.seq_len();
    Var x = ops::add_bias(ops::matmul(ops::patchify(batch, spec.patch_size), p["embed.w"]), p["embed.b"]);
    x = ops::assemble_tokens(x, p["cls"], p["pos"]);
    for (std::size_t l = 0; l < spec.depth; ++l) {
        Var h = ops::layer_norm_rows(x, p[layer_key(l, "ln1.gamma")], p[layer_key(l, "ln1.beta")]);
        h = ops::add_bias(ops::matmul(h, p[layer_key(l, "attn.qkv.w")]), p[layer_key(l, "attn.qkv.b")]);
        h = ops::multi_head_attention(h, T, spec.heads);
        h = ops::add_bias(ops::matmul(h, p[layer_key(l, "attn.out.w")]), p[layer_key(l, "attn.out.b")]);
        x = ops::add(x, h);
        h = ops::layer_norm_rows(x, p[layer_key(l, "ln2.gamma")], p[layer_key(l, "ln2.beta")]);
        h = ops::relu(ops::add_bias(ops::matmul(h, p[layer_key(l, "ffn.w1")]), p[layer_key(l, "ffn.b1")]));
        h = ops::add_bias(ops::matmul(h, p[layer_key(l, "ffn.w2")]), p[layer_key(l, "ffn.b2")]);
        x = ops::add(x, h);
    }
    return x;
}

Var patchformer_forward(const ModelSpec& spec, const BoundParams& p, Var images, PatchformerActivations* acts)
{
    const Var states = patchformer_encode(spec, p, images);
    const Var cls = ops::group_rows(states, spec.seq_len(), 0);
    if (acts != nullptr) {
        acts->token_states = ops::drop_group_head(states, spec.seq_len());
        acts->cls_state = cls;
    }
    return ops::add_bias(ops::matmul(cls, p["classifier.w"]), p["classifier.b"]);
}

Var cnn_features(const ModelSpec& spec, const BoundParams& p, Var images)
{
    if (spec.family != Family::cnn) {
        throw ShapeError("cnn_features called with a patchformer spec");
    }
    Var x = as_batch(spec, images);
    x = ops::maxpool2(ops::relu(ops::conv2d(x, p["conv1.w"], p["conv1.b"])));
    x = ops::maxpool2(ops::relu(ops::conv2d(x, p["conv2.w"], p["conv2.b"])));
    return x;
}

Var cnn_forward(const ModelSpec& spec, const BoundParams& p, Var images)
{
    const Var features = cnn_features(spec, p, images);
    const std::size_t batch = features.dims()[0];
    const std::size_t flat = features.value().size() / batch;
    const Var rows = ops::reshape(features, {batch, flat});
    return ops::add_bias(ops::matmul(rows, p["classifier.w"]), p["classifier.b"]);
}

Var classifier_logits(const ModelSpec& spec, const BoundParams& p, Var images)
{
    return spec.family == Family::patchformer ? patchformer_forward(spec, p, images) : cnn_forward(spec, p, images);
}

Var explainer_vit_forward(const ModelSpec& spec, const BoundParams& p, Var images)
{
    const Var states = patchformer_encode(spec, p, images);
    const Var tokens = ops::drop_group_head(states, spec.seq_len());
    Var h = ops::tanh(ops::add_bias(ops::matmul(tokens, p["head.w1"]), p["head.b1"]));
    h = ops::sigmoid(ops::add_bias(ops::matmul(h, p["head.w2"]), p["head.b2"]));
    const std::size_t batch = tokens.dims()[0] / spec.num_patches();
    return ops::reshape(h, {batch, spec.num_patches()});
}

Var explainer_cnn_forward(const ModelSpec& spec, const BoundParams& p, Var images)
{
    const Var features = cnn_features(spec, p, images);
    const Var logits = ops::conv2d(features, p["head.w"], p["head.b"]);
    const Shape& d = logits.dims();
    return ops::sigmoid(ops::reshape(logits, {d[0], d[2], d[3]}));
}

Var explainer_native_map(const ModelSpec& spec, const BoundParams& p, Var images)
{
    if (spec.family == Family::patchformer) {
        const Var scores = explainer_vit_forward(spec, p, images);
        return ops::reshape(scores, {scores.dims()[0], spec.grid(), spec.grid()});
    }
    return explainer_cnn_forward(spec, p, images);
}

Var explainer_pixel_map(const ModelSpec& spec, const BoundParams& p, Var images)
{
    return ops::bilinear_upsample(explainer_native_map(spec, p, images), spec.image_size, spec.image_size);
}

Model init_explainer_from_explained(const Checkpoint& explained, Family family, std::uint64_t seed)
{
    Model source = from_checkpoint(explained, "explained");
    if (source.spec.family != family) {
        throw FormatError("explained checkpoint is a " + std::string(family_name(source.spec.family)) +
                          ", cannot build a " + std::string(family_name(family)) + " explainer");
    }
    const ModelSpec& spec = source.spec;
    // Reference parameter layout; only used for the names and shapes.
    const ParamSet layout = init_classifier(spec, 0);
    Model out{spec, {}};
    for (const auto& e : layout.entries()) {
        if (!is_backbone_param(e.name)) {
            continue;
        }
        const Tensor& src = source.params.at(e.name);
        if (src.dims() != e.value.dims()) {
            throw FormatError("explained tensor '" + e.name + "' has dims " + shape_string(src.dims()) + ", expected " +
                              shape_string(e.value.dims()));
        }
        out.params.add(e.name, src);
    }
    SplitMix64 rng(seed);
    if (family == Family::patchformer) {
        const std::size_t d = spec.embed_dim;
        out.params.add("head.w1", xavier({d, d}, d, d, rng));
        out.params.add("head.b1", Tensor({d}, 0.0));
        out.params.add("head.w2", xavier({d, 1}, d, 1, rng));
        out.params.add("head.b2", Tensor({1}, 0.0));
    } else {
        out.params.add("head.w", xavier({1, kCnnConv2Channels, 1, 1}, kCnnConv2Channels, 1, rng));
        out.params.add("head.b", Tensor({1}, 0.0));
    }
    out.params.add(std::string(kMaskParam), Tensor({1}, 0.5));
    for (auto& e : out.params.entries()) {
        if (e.name.starts_with("head.")) {
            quantize_to_float(e.value);
        }
    }
    return out;
}

Tensor predict_proba(const Model& classifier, const Tensor& images, std::size_t chunk)
{
    const std::size_t n = images.rank() == 4 ? images.dim(0) : 1;
    const std::size_t per = images.size() / n;
    const std::size_t k = classifier.spec.num_classes;
    const Shape tail(images.dims().end() - 3, images.dims().end());
    Tensor out({n, k});
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        Tape tape(false);
        const BoundParams p(tape, classifier.params, false);
        Tensor part({count, tail[0], tail[1], tail[2]});
        std::copy_n(images.ptr() + start * per, count * per, part.ptr());
        const Var probs = ops::softmax_rows(classifier_logits(classifier.spec, p, tape.constant(std::move(part))));
        std::copy_n(probs.value().ptr(), count * k, out.ptr() + start * k);
    }
    return out;
}

Tensor explain_pixels(const Model& explainer, const Tensor& images, std::size_t chunk)
{
    const std::size_t n = images.rank() == 4 ? images.dim(0) : 1;
    const std::size_t per = images.size() / n;
    const std::size_t S = explainer.spec.image_size;
    const Shape tail(images.dims().end() - 3, images.dims().end());
    Tensor out({n, S, S});
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t count = std::min(chunk, n - start);
        Tape tape(false);
        const BoundParams p(tape, explainer.params, false);
        Tensor part({count, tail[0], tail[1], tail[2]});
        std::copy_n(images.ptr() + start * per, count * per, part.ptr());
        const Var map = explainer_pixel_map(explainer.spec, p, tape.constant(std::move(part)));
        std::copy_n(map.value().ptr(), count * S * S, out.ptr() + start * S * S);
    }
    return out;
}

Checkpoint to_checkpoint(const Model& model, std::string_view role, const std::map<std::string, std::string>& extra)
{
    Checkpoint ckpt;
    ckpt.tensors = model.params;
    quantize_to_float(ckpt.tensors);
    const ModelSpec& s = model.spec;
    ckpt.meta["role"] = std::string(role);
    ckpt.meta["family"] = std::string(family_name(s.family));
    ckpt.meta["image_size"] = std::to_string(s.image_size);
    ckpt.meta["channels"] = std::to_string(s.channels);
    ckpt.meta["num_classes"] = std::to_string(s.num_classes);
    if (s.family == Family::patchformer) {
        ckpt.meta["patch_size"] = std::to_string(s.patch_size);
        ckpt.meta["embed_dim"] = std::to_string(s.embed_dim);
        ckpt.meta["depth"] = std::to_string(s.depth);
        ckpt.meta["heads"] = std::to_string(s.heads);
    }
    for (const auto& [k, v] : extra) {
        ckpt.meta[k] = v;
    }
    return ckpt;
}

Model from_checkpoint(const Checkpoint& ckpt, std::string_view expected_role)
{
    const auto role = ckpt.meta.find("role");
    if (role != ckpt.meta.end() && role->second != expected_role) {
        throw FormatError("checkpoint role is '" + role->second + "', expected '" + std::string(expected_role) + "'");
    }
    const auto family = ckpt.meta.find("family");
    if (family == ckpt.meta.end()) {
        throw FormatError("checkpoint metadata lacks 'family'");
    }
    ModelSpec spec;
    try {
        spec.family = parse_family(family->second);
    } catch (const ContractError& e) {
        throw FormatError(e.what());
    }
    spec.image_size = parse_size(ckpt, "image_size");
    spec.channels = parse_size(ckpt, "channels");
    spec.num_classes = parse_size(ckpt, "num_classes");
    if (spec.family == Family::patchformer) {
        spec.patch_size = parse_size(ckpt, "patch_size");
        spec.embed_dim = parse_size(ckpt, "embed_dim");
        spec.depth = parse_size(ckpt, "depth");
        spec.heads = parse_size(ckpt, "heads");
    }
    try {
        spec.validate();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint describes an invalid model: ") + e.what());
    }
    if (expected_role == "explainer" && !ckpt.tensors.contains(kMaskParam)) {
        throw FormatError("explainer checkpoint lacks the '" + std::string(kMaskParam) + "' tensor");
    }
    return Model{spec, ckpt.tensors};
}

double accuracy(const Model& classifier, const data::Dataset& dataset)
{
    if (dataset.empty()) {
        return 0.0;
    }
    std::vector<std::size_t> all(dataset.size());
    std::iota(all.begin(), all.end(), 0);
    const Tensor probs = predict_proba(classifier, dataset.batch(all));
    const std::size_t k = classifier.spec.num_classes;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const double* row = probs.ptr() + i * k;
        const auto arg = static_cast<std::size_t>(std::max_element(row, row + k) - row);
        correct += arg == dataset.samples[i].label ? 1 : 0;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

TrainedClassifier train_explained(const data::Dataset& dataset, const ModelSpec& spec, const TrainOptions& options)
{
    spec.validate();
    if (dataset.empty()) {
        throw ContractError("train_explained: empty dataset");
    }
    if (dataset.channels != spec.channels || dataset.height != spec.image_size || dataset.width != spec.image_size) {
        throw ShapeError("train_explained: dataset images do not match the model spec");
    }
    for (const auto& s : dataset.samples) {
        if (s.label >= spec.num_classes) {
            throw ContractError("train_explained: label " + std::to_string(s.label) + " out of range for " +
                                std::to_string(spec.num_classes) + " classes");
        }
    }
    if (options.batch_size == 0) {
        throw ContractError("train_explained: batch size must be positive");
    }
    TrainedClassifier out{Model{spec, init_classifier(spec, derive_seed(options.seed, 1))}, 0.0, {}};
    AdamState adam(out.model.params, AdamConfig{options.learning_rate});
    SplitMix64 shuffle_rng(derive_seed(options.seed, 2));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t k = spec.num_classes;

    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);
        }
        double total = 0.0;
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t count = std::min(options.batch_size, order.size() - start);
            const std::span<const std::size_t> idx(order.data() + start, count);
            Tensor y({count, k}, 0.0);
            for (std::size_t b = 0; b < count; ++b) {
                y.at(b, dataset.samples[idx[b]].label) = 1.0;
            }
            Tape tape;
            const BoundParams p(tape, out.model.params, true);
            const Var logits = classifier_logits(spec, p, tape.constant(dataset.batch(idx)));
            const Var loss = objective::loss_pred(logits, y);
            const double value = loss.value().item();
            if (!std::isfinite(value)) {
                throw TrainingError("train_explained: non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch starting at " + std::to_string(start));
            }
            total += value * static_cast<double>(count);
            tape.backward(loss);
            adam_step(out.model.params, p.grads(), adam);
        }
        out.epoch_loss.push_back(total / static_cast<double>(order.size()));
    }
    quantize_to_float(out.model.params);
    out.train_accuracy = accuracy(out.model, dataset);
    return out;
}

}  // namespace ltx::models
