#pragma once

#include "ltx/autodiff.hpp"
#include "ltx/checkpoint.hpp"
#include "ltx/data.hpp"
#include "ltx/params.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ltx::models {

enum class Family { patchformer, cnn };

std::string_view family_name(Family family);
/// Throws ContractError for anything but "patchformer" / "cnn".
Family parse_family(std::string_view name);

/// Architecture of an explained classifier. The explainer built from it
/// shares every field.
struct ModelSpec {
    Family family = Family::patchformer;
    std::size_t image_size = 28;
    std::size_t channels = 1;
    std::size_t num_classes = 4;
    std::size_t patch_size = 4;  // patchformer only
    std::size_t embed_dim = 32;  // patchformer only
    std::size_t depth = 2;       // patchformer only
    std::size_t heads = 2;       // patchformer only

    /// Throws ShapeError when the fields do not describe a buildable model.
    void validate() const;

    std::size_t grid() const { return image_size / patch_size; }
    std::size_t num_patches() const { return grid() * grid(); }
    std::size_t seq_len() const { return num_patches() + 1; }
    /// Side of the explainer's native map: the patch grid, or r for the CNN.
    std::size_t map_side() const;
};

/// Fixed CNN plan: conv3x3(8) relu pool, conv2x2(16) relu pool, dense.
inline constexpr std::size_t kCnnConv1Channels = 8;
inline constexpr std::size_t kCnnConv2Channels = 16;

/// Parameters plus the architecture they belong to.
struct Model {
    ModelSpec spec;
    ParamSet params;
};

struct PatchformerActivations {
    Var token_states;  // [B*n x d], CLS rows removed
    Var cls_state;     // [B x d]
};

/// Parameter tensors for a freshly initialized classifier: weights uniform in
/// +-sqrt(6/(fan_in+fan_out)), biases zero, layer-norm gains one, token and
/// position embeddings uniform in +-0.02. Values are rounded to float32.
ParamSet init_classifier(const ModelSpec& spec, std::uint64_t seed);

/// Encoder stack output for [B,C,S,S] (or [C,S,S]) images: [B*(n+1) x d]
/// with each sequence's CLS row first.
Var patchformer_encode(const ModelSpec& spec, const BoundParams& p, Var images);

/// Patch-transformer logits [B x k].
Var patchformer_forward(const ModelSpec& spec, const BoundParams& p, Var images,
                        PatchformerActivations* acts = nullptr);

/// Convolutional feature map [B, 16, r, r] (the part cloned into the explainer).
Var cnn_features(const ModelSpec& spec, const BoundParams& p, Var images);

/// CNN logits [B x k].
Var cnn_forward(const ModelSpec& spec, const BoundParams& p, Var images);

/// Logits of either family.
Var classifier_logits(const ModelSpec& spec, const BoundParams& p, Var images);

/// Explainer scores at native resolution: [B, g, g] per-patch scores for the
/// patchformer, [B, r, r] for the CNN. Values in (0,1).
Var explainer_native_map(const ModelSpec& spec, const BoundParams& p, Var images);

/// Native map bilinearly resized to [B, S, S].
Var explainer_pixel_map(const ModelSpec& spec, const BoundParams& p, Var images);

/// Per-token scores of the patch-transformer explainer, [B x n].
Var explainer_vit_forward(const ModelSpec& spec, const BoundParams& p, Var images);

/// r x r map of the CNN explainer, [B, r, r].
Var explainer_cnn_forward(const ModelSpec& spec, const BoundParams& p, Var images);

/// Explainer parameters: the explained backbone copied bitwise, a new head,
/// and `mask.z` = 0.5. Throws FormatError when the checkpoint's family
/// differs from `family` or a backbone tensor is missing.
Model init_explainer_from_explained(const Checkpoint& explained, Family family, std::uint64_t seed);

/// Names of the explained model's parameters that are cloned into the
/// explainer.
bool is_backbone_param(std::string_view name);

inline constexpr std::string_view kMaskParam = "mask.z";

/// Softmax probabilities [B x k] without recording gradients. Images are
/// processed in chunks of `chunk` to bound memory.
Tensor predict_proba(const Model& classifier, const Tensor& images, std::size_t chunk = 64);

/// Pixel-resolution explanation maps [B, S, S] without recording gradients.
Tensor explain_pixels(const Model& explainer, const Tensor& images, std::size_t chunk = 64);

/// Model <-> checkpoint. Metadata carries the ModelSpec fields and `role`
/// (explained / explainer); `extra` entries are merged in.
Checkpoint to_checkpoint(const Model& model, std::string_view role,
                         const std::map<std::string, std::string>& extra = {});
/// Throws FormatError when the metadata is incomplete or, for
/// role == "explainer", when `mask.z` is missing.
Model from_checkpoint(const Checkpoint& ckpt, std::string_view expected_role);

struct TrainOptions {
    std::size_t epochs = 30;
    std::size_t batch_size = 32;
    double learning_rate = 2e-3;
    std::uint64_t seed = 0;
};

struct TrainedClassifier {
    Model model;
    double train_accuracy = 0.0;
    std::vector<double> epoch_loss;
};

/// Adam + cross-entropy training of an explained classifier. The returned
/// parameters are rounded to float32 so they match their checkpoint bytes.
/// Throws TrainingError on a non-finite loss.
TrainedClassifier train_explained(const data::Dataset& dataset, const ModelSpec& spec, const TrainOptions& options);

/// Fraction of samples whose argmax prediction equals the label.
double accuracy(const Model& classifier, const data::Dataset& dataset);

}  // namespace ltx::models
