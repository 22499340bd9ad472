#include "dmads/tape.hpp"

#include "dmads/error.hpp"

namespace dmads {

template <typename T>
Tape<T>*& Tape<T>::active_slot() {
    thread_local Tape<T>* slot = nullptr;
    return slot;
}

template <typename T>
Tape<T>* Tape<T>::active() {
    return active_slot();
}

template <typename T>
Tape<T>::~Tape() {
    if (active_slot() == this) {
        active_slot() = nullptr;
    }
}

template <typename T>
void Tape<T>::record(std::string_view op, BackwardFn fn) {
    if (consumed_ || replaying_) {
        throw AutodiffError("tape: cannot record '" + std::string(op) + "' after backward (double backward is not supported)");
    }
    nodes_.push_back(Node{std::string(op), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
    if (consumed_) {
        throw AutodiffError("backward: tape already replayed (double backward is not supported)");
    }
    if (!loss.defined() || loss.numel() != 1) {
        throw AutodiffError("backward: loss must be a scalar, got shape " +
                            (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        throw AutodiffError("backward: loss does not depend on any tensor that requires a gradient");
    }
    consumed_ = true;
    replaying_ = true;
    NoGradScope<T> no_grad;
    loss.grad_buffer()[0] += T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        it->backward();
        it->backward = nullptr;  // releases captured activations
    }
    replaying_ = false;
}

template <typename T>
std::vector<std::string> Tape<T>::op_names() const {
    std::vector<std::string> names;
    names.reserve(nodes_.size());
    for (const Node& node : nodes_) {
        names.push_back(node.op);
    }
    return names;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dmads
