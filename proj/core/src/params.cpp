#include "ltx/params.hpp"

#include "ltx/error.hpp"

namespace ltx {

void ParamSet::add(std::string name, Tensor value)
{
    if (name.empty()) {
        throw FormatError("parameter names must be non-empty");
    }
    if (index_.contains(name)) {
        throw FormatError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back(Entry{std::move(name), std::move(value)});
}

bool ParamSet::contains(std::string_view name) const
{
    return index_.find(name) != index_.end();
}

std::size_t ParamSet::index_of(std::string_view name) const
{
    const auto it = index_.find(name);
    if (it == index_.end()) {
        throw FormatError("missing parameter '" + std::string(name) + "'");
    }
    return it->second;
}

Tensor& ParamSet::at(std::string_view name)
{
    return entries_[index_of(name)].value;
}

const Tensor& ParamSet::at(std::string_view name) const
{
    return entries_[index_of(name)].value;
}

std::size_t ParamSet::scalar_count() const
{
    std::size_t n = 0;
    for (const auto& e : entries_) {
        n += e.value.size();
    }
    return n;
}

bool ParamSet::bitwise_equal(const ParamSet& other) const
{
    if (entries_.size() != other.entries_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other.entries_[i].name || !entries_[i].value.bitwise_equal(other.entries_[i].value)) {
            return false;
        }
    }
    return true;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool trainable) : tape_(&tape), params_(&params)
{
    vars_.reserve(params.size());
    for (const auto& e : params.entries()) {
        vars_.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
    }
}

Var BoundParams::operator[](std::string_view name) const
{
    return vars_[params_->index_of(name)];
}

std::vector<Tensor> BoundParams::grads() const
{
    std::vector<Tensor> out;
    out.reserve(vars_.size());
    for (const Var& v : vars_) {
        out.push_back(tape_->grad(v));
    }
    return out;
}

void quantize_to_float(ParamSet& params)
{
    for (auto& e : params.entries()) {
        quantize_to_float(e.value);
    }
}

}  // namespace ltx
