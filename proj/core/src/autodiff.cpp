#include "ltx/autodiff.hpp"

#include "ltx/error.hpp"

namespace ltx {

Var Tape::constant(Tensor value)
{
    nodes_.push_back(Node{std::move(value), Tensor{}, false, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value)
{
    nodes_.push_back(Node{std::move(value), Tensor{}, recording_, {}});
    return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, bool requires_grad, BackwardFn fn)
{
    const bool keep = recording_ && requires_grad;
    nodes_.push_back(Node{std::move(value), Tensor{}, keep, keep ? std::move(fn) : BackwardFn{}});
    return Var{this, nodes_.size() - 1};
}

Tensor Tape::grad(Var v) const
{
    const Node& node = nodes_.at(v.id);
    if (node.grad.empty()) {
        return Tensor(node.value.dims(), 0.0);
    }
    return node.grad;
}

Tensor& Tape::grad_buffer(std::size_t id)
{
    Node& node = nodes_[id];
    if (node.grad.empty()) {
        node.grad = Tensor(node.value.dims(), 0.0);
    }
    return node.grad;
}

void Tape::backward(Var loss)
{
    if (loss.tape != this || loss.id >= nodes_.size()) {
        throw ContractError("backward: loss node does not belong to this tape");
    }
    if (!nodes_[loss.id].value.is_scalar()) {
        throw ContractError("backward: loss must be a scalar, got " + shape_string(nodes_[loss.id].value.dims()));
    }
    for (Node& node : nodes_) {
        node.grad = Tensor{};
    }
    if (!nodes_[loss.id].requires_grad) {
        return;
    }
    grad_buffer(loss.id)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.backward && !node.grad.empty()) {
            node.backward(*this, i);
        }
    }
}

}  // namespace ltx
