#pragma once

#include "ltx/autodiff.hpp"
#include "ltx/ops.hpp"
#include "ltx/params.hpp"
#include "ltx/rng.hpp"
#include "ltx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ltx::testing {

inline Tensor random_tensor(Shape dims, std::uint64_t seed, double lo = -1.0, double hi = 1.0)
{
    SplitMix64 rng(seed);
    Tensor t(std::move(dims));
    for (double& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

/// Scalar function of a list of tensors, evaluated on a fresh tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

inline double eval_scalar(const ScalarFn& f, const std::vector<Tensor>& inputs)
{
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& t : inputs) {
        vars.push_back(tape.constant(t));
    }
    return f(tape, vars).value().item();
}

/// Reverse-mode gradients of f with every input a trainable leaf.
inline std::vector<Tensor> tape_gradients(const ScalarFn& f, const std::vector<Tensor>& inputs)
{
    Tape tape;
    std::vector<Var> vars;
    for (const auto& t : inputs) {
        vars.push_back(tape.leaf(t));
    }
    const Var loss = f(tape, vars);
    tape.backward(loss);
    std::vector<Tensor> out;
    for (const Var& v : vars) {
        out.push_back(tape.grad(v));
    }
    return out;
}

/// Central differences, written independently of the library's checker.
/// `stride` > 1 samples every stride-th coordinate.
struct FdResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t kinks = 0;
    double max_central_error = 0.0;  // before kink handling
};

inline double fd_rel(double a, double b)
{
    const double e = std::abs(a - b) / std::max(1.0, std::abs(b));
    return std::isnan(e) ? INFINITY : e;
}

inline FdResult compare_with_central_differences(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5,
                                                 std::size_t stride = 1)
{
    const std::vector<Tensor> analytic = tape_gradients(f, inputs);
    FdResult r;
    std::vector<Tensor> probe = inputs;
    for (std::size_t t = 0; t < probe.size(); ++t) {
        for (std::size_t i = 0; i < probe[t].size(); i += stride) {
            const double x0 = probe[t][i];
            probe[t][i] = x0 + h;
            const double up = eval_scalar(f, probe);
            probe[t][i] = x0 - h;
            const double down = eval_scalar(f, probe);
            probe[t][i] = x0;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
            r.max_rel_error = std::max(r.max_rel_error, std::isnan(err) ? INFINITY : err);
            ++r.checked;
        }
    }
    return r;
}

/// Weighted sum with fixed pseudo-random weights: a generic scalar probe of
/// a tensor-valued op.
inline Var weighted_sum(Tape& tape, Var x, std::uint64_t seed)
{
    return ops::sum(ops::mul(x, tape.constant(random_tensor(x.dims(), seed))));
}

/// Scalar function of a bound parameter set.
using ParamLossFn = std::function<Var(Tape&, const BoundParams&)>;

/// Tape gradients w.r.t. every tensor of `params` against central
/// differences, visiting every `stride`-th coordinate in ParamSet order.
///
/// With `kink_tol` > 0, a coordinate whose central error reaches `kink_tol`
/// and whose forward and backward slopes disagree by at least `kink_tol`
/// straddles a non-differentiable point (a ReLU or max switching inside
/// [x-h, x+h]). Its error is then measured against the nearer one-sided
/// slope and it is counted in `kinks`.
inline FdResult param_fd_check(const ParamLossFn& f, ParamSet params, double h = 1e-5, std::size_t stride = 1,
                               double kink_tol = 0.0)
{
    std::vector<Tensor> analytic;
    {
        Tape tape;
        const BoundParams bound(tape, params, true);
        tape.backward(f(tape, bound));
        analytic = bound.grads();
    }
    const auto eval = [&]() {
        Tape tape(false);
        const BoundParams bound(tape, params, false);
        return f(tape, bound).value().item();
    };
    const double f0 = eval();
    FdResult r;
    std::size_t counter = 0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& v = params.entries()[t].value;
        for (std::size_t i = 0; i < v.size(); ++i, ++counter) {
            if (counter % stride != 0) {
                continue;
            }
            const double x0 = v[i];
            v[i] = x0 + h;
            const double up = eval();
            v[i] = x0 - h;
            const double down = eval();
            v[i] = x0;
            const double a = analytic[t][i];
            double err = fd_rel(a, (up - down) / (2.0 * h));
            r.max_central_error = std::max(r.max_central_error, err);
            if (kink_tol > 0.0 && err >= kink_tol) {
                const double forward = (up - f0) / h;
                const double backward = (f0 - down) / h;
                if (fd_rel(forward, backward) >= kink_tol) {
                    err = std::min(fd_rel(a, forward), fd_rel(a, backward));
                    ++r.kinks;
                }
            }
            r.max_rel_error = std::max(r.max_rel_error, err);
            ++r.checked;
        }
    }
    return r;
}

}  // namespace ltx::testing
