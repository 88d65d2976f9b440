#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pixmamba/errors.hpp"

namespace pixmamba {

using Shape = std::vector<std::int64_t>;

std::int64_t numel_of(const Shape& shape);
std::string to_string(const Shape& shape);

template <typename T>
struct TensorImpl {
    Shape shape;
    std::shared_ptr<std::vector<T>> storage;
    std::vector<T> grad;
    bool requires_grad = false;
    bool is_leaf = true;
};

/// Dense row-major n-d array with an optional gradient buffer.
///
/// `Tensor` is a handle: copies share the same underlying node, which is what
/// lets the gradient tape write gradients that callers later read through
/// their own handle. Values are never modified by operations; the only
/// mutable entry points are `mutable_data()` (used by optimizers on
/// parameters) and the gradient accessors.
///
/// A rank-0 tensor (empty shape) holds one element and is the result type of
/// full reductions such as `sum`.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    // Reinterprets existing storage under a new shape; used by reshape.
    static Tensor view(Shape shape, std::shared_ptr<std::vector<T>> storage);

    bool defined() const noexcept { return impl_ != nullptr; }

    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t dim(int axis) const;
    std::int64_t numel() const { return static_cast<std::int64_t>(impl_->storage->size()); }

    std::span<const T> data() const { return {impl_->storage->data(), impl_->storage->size()}; }
    std::span<T> mutable_data() { return {impl_->storage->data(), impl_->storage->size()}; }
    const std::shared_ptr<std::vector<T>>& storage() const { return impl_->storage; }

    T item() const;
    T at(std::int64_t flat_index) const { return (*impl_->storage)[static_cast<std::size_t>(flat_index)]; }

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    Tensor& set_requires_grad(bool flag);
    bool is_leaf() const { return impl_->is_leaf; }

    bool has_grad() const { return impl_ && !impl_->grad.empty(); }
    std::span<const T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
    Tensor grad_tensor() const;
    // Gradient storage, zero-filled on first access.
    std::span<T> grad_buffer() const;
    void zero_grad();

    Tensor detach() const;
    Tensor clone() const;

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data().begin(), data().end());
        return Tensor<U>(shape(), std::move(out));
    }

    const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

    // Marks a freshly computed op result as part of the differentiable graph.
    void mark_recorded();

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace pixmamba
