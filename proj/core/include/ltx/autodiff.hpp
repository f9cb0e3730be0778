#pragma once

#include "ltx/tensor.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace ltx {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& dims() const { return value().dims(); }
    bool requires_grad() const;
};

/// Reverse-mode computation record.
///
/// Nodes are appended in execution order, so the node vector is already a
/// topological order. `backward` walks it once in reverse. A tape built with
/// `recording == false` evaluates values only; every node is treated as a
/// constant and no backward closures are kept.
///
/// A tape and its nodes belong to one thread at a time.
class Tape {
public:
    /// Accumulates into the gradients of the node's inputs. Called with the
    /// tape and the node's own id.
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    explicit Tape(bool recording = true) : recording_(recording) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    bool recording() const noexcept { return recording_; }

    /// Input that never receives a gradient.
    Var constant(Tensor value);
    /// Trainable leaf; receives a gradient on backward.
    Var leaf(Tensor value);

    /// Append an operation result. `requires_grad` should be the OR of the
    /// inputs' flags; when false (or when not recording) `fn` is dropped.
    Var push(Tensor value, bool requires_grad, BackwardFn fn);

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient of the last backward pass with respect to `v`. Nodes not
    /// connected to the loss report zeros.
    Tensor grad(Var v) const;

    /// Mutable gradient buffer for use inside backward closures; allocated
    /// (zero-filled) on first access.
    Tensor& grad_buffer(std::size_t id);
    /// Gradient of the node currently being processed (read-only).
    const Tensor& output_grad(std::size_t id) const { return nodes_[id].grad; }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad node.
    /// Gradients from a previous call are discarded first, so replaying is
    /// deterministic. Throws ContractError if `loss` is not a scalar.
    void backward(Var loss);

    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        BackwardFn backward;
    };

    bool recording_;
    std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const
{
    return tape->value(id);
}

inline bool Var::requires_grad() const
{
    return tape->requires_grad(id);
}

}  // namespace ltx
