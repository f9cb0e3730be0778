#pragma once

#include "ltx/params.hpp"
#include "ltx/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ltx {

struct AdamConfig {
    double learning_rate = 2e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Moment buffers for one parameter list. Moments start at zero, `step`
/// counts completed updates.
struct AdamState {
    AdamConfig config;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
    std::uint64_t step = 0;

    AdamState() = default;
    AdamState(std::span<const Tensor> params, AdamConfig cfg);
    AdamState(const ParamSet& params, AdamConfig cfg);
};

/// One bias-corrected Adam update. Throws ShapeError when params, grads and
/// moments disagree.
void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state);
void adam_step(ParamSet& params, std::span<const Tensor> grads, AdamState& state);

}  // namespace ltx
