#pragma once

#include "ltx/autodiff.hpp"
#include "ltx/tensor.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace ltx {

/// Builds a scalar loss on `tape` from parameter nodes (one per tensor).
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckOptions {
    double step = 1e-5;
    /// 0 checks every coordinate; otherwise at most this many evenly spaced
    /// coordinates per tensor.
    std::size_t max_coords_per_tensor = 0;
};

struct GradCheckReport {
    double max_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_tensor = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients with central differences. The error of a
/// coordinate is |analytic - numeric| / max(1, |numeric|).
GradCheckReport grad_check(const LossBuilder& f, std::vector<Tensor> params, GradCheckOptions options = {});

}  // namespace ltx
