#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pixmamba/tensor.hpp"

namespace pixmamba {

/// Reverse-mode gradient tape.
///
/// Constructing a tape makes it the active tape of the calling thread for its
/// element type; destroying it restores whatever was active before. While a
/// tape is active, every operation with at least one input that requires a
/// gradient appends a backward closure. `backward()` runs the closures in
/// exact reverse execution order and then clears the tape, so one tape can
/// serve a whole training loop (one forward/backward per step).
///
/// Leaf gradients accumulate across calls until `Tensor::zero_grad()`.
template <typename T>
class GradTape {
public:
    GradTape();
    ~GradTape();
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    static GradTape* active() noexcept;
    // Installs `tape` (may be null) as the active tape; returns the previous one.
    static GradTape* exchange_active(GradTape* tape) noexcept;

    void record(const char* op_name, std::function<void()> backward_fn);
    void register_leaf(const Tensor<T>& leaf);

    void backward(const Tensor<T>& loss);
    void clear();

    std::size_t size() const noexcept { return entries_.size(); }
    std::vector<std::string> op_names() const;
    // Op names in the order the most recent backward() visited them.
    const std::vector<std::string>& last_trace() const noexcept { return trace_; }

private:
    struct Entry {
        const char* name;
        std::function<void()> fn;
    };

    std::vector<Entry> entries_;
    std::vector<Tensor<T>> leaves_;
    std::unordered_set<const TensorImpl<T>*> leaf_ids_;
    std::vector<std::string> trace_;
    GradTape* previous_ = nullptr;
};

extern template class GradTape<float>;
extern template class GradTape<double>;

// Suspends recording on the calling thread for its lifetime.
template <typename T>
class NoGradGuard {
public:
    NoGradGuard() : saved_(GradTape<T>::exchange_active(nullptr)) {}
    ~NoGradGuard() { GradTape<T>::exchange_active(saved_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    GradTape<T>* saved_;
};

namespace autograd {

// Gradient sink of an op input: empty when the input does not need one.
template <typename T>
std::span<T> sink(const Tensor<T>& t) {
    if (!t.defined() || !t.requires_grad()) return {};
    return t.grad_buffer();
}

/// Attaches `backward` to `out` when an active tape exists and any input
/// requires a gradient. `backward` receives the upstream gradient of `out`
/// and must accumulate (never assign) into the inputs' sinks.
template <typename T, typename Fn>
Tensor<T> record(const char* name, Tensor<T> out, std::initializer_list<Tensor<T>> inputs, Fn&& backward) {
    auto* tape = GradTape<T>::active();
    if (tape == nullptr) return out;
    bool any = false;
    for (const auto& in : inputs) {
        if (in.defined() && in.requires_grad()) {
            any = true;
            if (in.is_leaf()) tape->register_leaf(in);
        }
    }
    if (!any) return out;
    out.mark_recorded();
    auto node = out.impl();
    tape->record(name, [node, fn = std::forward<Fn>(backward)]() mutable {
        if (node->grad.empty()) return;
        fn(std::span<const T>(node->grad.data(), node->grad.size()));
    });
    return out;
}

}  // namespace autograd

}  // namespace pixmamba
