#pragma once

#include "ltx/autodiff.hpp"
#include "ltx/tensor.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ltx {

/// Ordered collection of uniquely named tensors (model parameters).
class ParamSet {
public:
    struct Entry {
        std::string name;
        Tensor value;
    };

    /// Throws FormatError for empty or duplicate names.
    void add(std::string name, Tensor value);

    bool contains(std::string_view name) const;
    Tensor& at(std::string_view name);
    const Tensor& at(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t scalar_count() const;

    std::vector<Entry>& entries() noexcept { return entries_; }
    const std::vector<Entry>& entries() const noexcept { return entries_; }

    bool bitwise_equal(const ParamSet& other) const;

private:
    std::vector<Entry> entries_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Parameters placed on a tape, either as trainable leaves or as constants.
class BoundParams {
public:
    BoundParams(Tape& tape, const ParamSet& params, bool trainable);

    Var operator[](std::string_view name) const;
    const ParamSet& params() const noexcept { return *params_; }

    /// Gradients from the last backward pass, in ParamSet order.
    std::vector<Tensor> grads() const;

private:
    Tape* tape_;
    const ParamSet* params_;
    std::vector<Var> vars_;
};

void quantize_to_float(ParamSet& params);

}  // namespace ltx
