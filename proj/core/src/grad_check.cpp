#include "ltx/grad_check.hpp"

#include "ltx/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltx {

namespace {

double evaluate(const LossBuilder& f, const std::vector<Tensor>& params)
{
    Tape tape(false);
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (const Tensor& p : params) {
        vars.push_back(tape.constant(p));
    }
    return f(tape, vars).value().item();
}

std::vector<std::size_t> coordinates(std::size_t size, std::size_t limit)
{
    std::vector<std::size_t> out;
    if (limit == 0 || limit >= size) {
        out.resize(size);
        for (std::size_t i = 0; i < size; ++i) {
            out[i] = i;
        }
        return out;
    }
    for (std::size_t i = 0; i < limit; ++i) {
        out.push_back(i * size / limit);
    }
    return out;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& f, std::vector<Tensor> params, GradCheckOptions options)
{
    if (!(options.step > 0.0)) {
        throw ContractError("grad_check: step must be positive");
    }
    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Var> vars;
        vars.reserve(params.size());
        for (const Tensor& p : params) {
            vars.push_back(tape.leaf(p));
        }
        const Var loss = f(tape, vars);
        tape.backward(loss);
        for (const Var& v : vars) {
            analytic.push_back(tape.grad(v));
        }
    }

    GradCheckReport report;
    const double h = options.step;
    for (std::size_t t = 0; t < params.size(); ++t) {
        for (std::size_t i : coordinates(params[t].size(), options.max_coords_per_tensor)) {
            const double saved = params[t][i];
            params[t][i] = saved + h;
            const double up = evaluate(f, params);
            params[t][i] = saved - h;
            const double down = evaluate(f, params);
            params[t][i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double err = std::abs(analytic[t][i] - numeric) / std::max(1.0, std::abs(numeric));
            ++report.coords_checked;
            if (err > report.max_error || std::isnan(err)) {
                report.max_error = std::isnan(err) ? std::numeric_limits<double>::infinity() : err;
                report.worst_tensor = t;
                report.worst_index = i;
                report.worst_analytic = analytic[t][i];
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

}  // namespace ltx
