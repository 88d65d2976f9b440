#include "pixmamba/autodiff.hpp"

#include <utility>

namespace pixmamba {

namespace {

template <typename T>
GradTape<T>*& current_tape() {
    thread_local GradTape<T>* tape = nullptr;
    return tape;
}

}  // namespace

template <typename T>
GradTape<T>::GradTape() : previous_(current_tape<T>()) {
    current_tape<T>() = this;
}

template <typename T>
GradTape<T>::~GradTape() {
    current_tape<T>() = previous_;
}

template <typename T>
GradTape<T>* GradTape<T>::active() noexcept {
    return current_tape<T>();
}

template <typename T>
GradTape<T>* GradTape<T>::exchange_active(GradTape* tape) noexcept {
    return std::exchange(current_tape<T>(), tape);
}

template <typename T>
void GradTape<T>::record(const char* op_name, std::function<void()> backward_fn) {
    entries_.push_back({op_name, std::move(backward_fn)});
}

template <typename T>
void GradTape<T>::register_leaf(const Tensor<T>& leaf) {
    if (leaf_ids_.insert(leaf.impl().get()).second) leaves_.push_back(leaf);
}

template <typename T>
void GradTape<T>::backward(const Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw UsageError("backward() needs a scalar loss, got shape " +
                         (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    if (entries_.empty()) throw UsageError("backward() called on an empty tape");
    if (!loss.requires_grad()) throw UsageError("loss is not connected to any tensor that requires a gradient");

    loss.grad_buffer()[0] += T(1);
    trace_.clear();
    trace_.reserve(entries_.size());
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        trace_.emplace_back(it->name);
        it->fn();
    }
    for (auto& leaf : leaves_) leaf.grad_buffer();
    clear();
}

template <typename T>
void GradTape<T>::clear() {
    entries_.clear();
    leaves_.clear();
    leaf_ids_.clear();
}

template <typename T>
std::vector<std::string> GradTape<T>::op_names() const {
    std::vector<std::string> names;
    names.reserve(entries_.size());
    for (const auto& e : entries_) names.emplace_back(e.name);
    return names;
}

template class GradTape<float>;
template class GradTape<double>;

}  // namespace pixmamba
