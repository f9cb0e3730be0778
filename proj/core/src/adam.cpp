#include "ltx/adam.hpp"

#include "ltx/error.hpp"

#include <cmath>

namespace ltx {

AdamState::AdamState(std::span<const Tensor> params, AdamConfig cfg) : config(cfg)
{
    for (const Tensor& p : params) {
        first_moment.emplace_back(p.dims(), 0.0);
        second_moment.emplace_back(p.dims(), 0.0);
    }
}

AdamState::AdamState(const ParamSet& params, AdamConfig cfg) : config(cfg)
{
    for (const auto& e : params.entries()) {
        first_moment.emplace_back(e.value.dims(), 0.0);
        second_moment.emplace_back(e.value.dims(), 0.0);
    }
}

void adam_step(std::span<Tensor> params, std::span<const Tensor> grads, AdamState& state)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ShapeError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.first_moment.size()) + " moment buffers");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].dims() != grads[i].dims() || params[i].dims() != state.first_moment[i].dims()) {
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                             shape_string(params[i].dims()) + " vs grad " + shape_string(grads[i].dims()));
        }
    }
    const AdamConfig& c = state.config;
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(c.beta1, t);
    const double correct2 = 1.0 - std::pow(c.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& g = grads[i];
        Tensor& m = state.first_moment[i];
        Tensor& v = state.second_moment[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
            v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
            const double m_hat = m[j] / correct1;
            const double v_hat = v[j] / correct2;
            p[j] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
        }
    }
}

void adam_step(ParamSet& params, std::span<const Tensor> grads, AdamState& state)
{
    if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
        throw ShapeError("adam_step: parameter set and gradient list differ in length");
    }
    std::vector<Tensor> scratch;
    scratch.reserve(params.size());
    for (auto& e : params.entries()) {
        scratch.push_back(std::move(e.value));
    }
    try {
        adam_step(std::span<Tensor>(scratch), grads, state);
    } catch (...) {
        for (std::size_t i = 0; i < scratch.size(); ++i) {
            params.entries()[i].value = std::move(scratch[i]);
        }
        throw;
    }
    for (std::size_t i = 0; i < scratch.size(); ++i) {
        params.entries()[i].value = std::move(scratch[i]);
    }
}

}  // namespace ltx
