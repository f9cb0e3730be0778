#pragma once

#include "ltx/autodiff.hpp"
#include "ltx/models.hpp"
#include "ltx/params.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace ltx::objective {

/// Lower bound used wherever the log of a probability-like quantity is taken.
inline constexpr double kLogClamp = 1e-7;

enum class MaskPenalty { bce_zero, l1 };
enum class Smoothness { l1, l2 };

struct LossWeights {
    double mask = 30.0;
    double inv = 0.0;
    double smooth = 0.0;
    MaskPenalty mask_penalty = MaskPenalty::bce_zero;
    Smoothness smoothness = Smoothness::l1;
};

enum class TargetMode { predicted_onehot, distribution, class_index };

struct TargetSpec {
    TargetMode mode = TargetMode::predicted_onehot;
    std::optional<std::size_t> class_index;

    static TargetSpec predicted() { return {TargetMode::predicted_onehot, std::nullopt}; }
    static TargetSpec distribution() { return {TargetMode::distribution, std::nullopt}; }
    static TargetSpec for_class(std::size_t k) { return {TargetMode::class_index, k}; }
};

std::string target_name(const TargetSpec& spec);
/// "predicted", "distribution" or "class:K".
TargetSpec parse_target(std::string_view text);

/// x * m + z * (1 - m). `x` is [C,H,W] or [B,C,H,W]; `m` is [H,W] or
/// [B,H,W] and is shared by all channels; `z` is a single element.
Var mask_blend(Var x, Var m, Var z);

/// Target vector(s) from predicted distributions [k] or [B x k]. Argmax ties
/// resolve to the lowest index. Throws ContractError for an out-of-range
/// class.
Tensor target_select(const Tensor& pred_dist, const TargetSpec& spec);

/// Mean over rows of -sum_i y_i log clamp(softmax(logits)_i). `logits` is
/// [k] or [B x k]; `y` has the same element count.
Var loss_pred(Var logits, const Tensor& y);

/// Mean over entries of -log(max(1 - m, eps)) (bce_zero) or of m (l1).
Var loss_mask(Var m, MaskPenalty penalty = MaskPenalty::bce_zero);

/// Mean over rows of -log(1 - clamp(p_y)) where y is one-hot per row.
/// Throws ContractError for soft targets.
Var loss_inv(Var logits_inverse, const Tensor& y);

/// Anisotropic total variation of each [H,W] map, averaged over the batch.
Var loss_smooth(Var m, Smoothness kind = Smoothness::l1);

struct LtxTerms {
    Var loss;    // scalar, batch mean
    Var map;     // [B,S,S] pixel-resolution explanation
    Var masked;  // [B,C,S,S] blended input
    double pred = 0.0;
    double mask = 0.0;
    double inv = 0.0;
    double smooth = 0.0;
};

/// Full objective on a batch.
///
/// `explainer` must be bound on the same tape as `images`, and contain the
/// `mask.z` parameter. `explained` should be bound as constants. Terms with a
/// zero weight are not evaluated.
LtxTerms ltx_loss(const models::ModelSpec& spec, Var images, const BoundParams& explainer,
                  const BoundParams& explained, const Tensor& targets, const LossWeights& weights);

}  // namespace ltx::objective
