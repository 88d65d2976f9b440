#include "pixmamba/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace pixmamba {

std::int64_t numel_of(const Shape& shape) {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

namespace {

void check_extents(const Shape& shape) {
    for (auto d : shape) {
        if (d <= 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
    }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape) {
    check_extents(shape);
    auto n = static_cast<std::size_t>(numel_of(shape));
    impl_ = std::make_shared<TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->storage = std::make_shared<std::vector<T>>(n, T(0));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) {
    check_extents(shape);
    if (numel_of(shape) != static_cast<std::int64_t>(values.size())) {
        throw DimensionError("shape " + to_string(shape) + " needs " + std::to_string(numel_of(shape)) +
                             " values, got " + std::to_string(values.size()));
    }
    impl_ = std::make_shared<TensorImpl<T>>();
    impl_->shape = std::move(shape);
    impl_->storage = std::make_shared<std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.impl_->storage->begin(), t.impl_->storage->end(), value);
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::view(Shape shape, std::shared_ptr<std::vector<T>> storage) {
    check_extents(shape);
    if (numel_of(shape) != static_cast<std::int64_t>(storage->size())) {
        throw DimensionError("cannot view " + std::to_string(storage->size()) + " elements as " + to_string(shape));
    }
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl<T>>();
    t.impl_->shape = std::move(shape);
    t.impl_->storage = std::move(storage);
    return t;
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
    const int r = rank();
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(shape()));
    }
    return impl_->shape[static_cast<std::size_t>(axis)];
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw UsageError("item() needs a single-element tensor, got " + to_string(shape()));
    return (*impl_->storage)[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    return *this;
}

template <typename T>
Tensor<T> Tensor<T>::grad_tensor() const {
    if (!has_grad()) return Tensor(shape());
    return Tensor(shape(), impl_->grad);
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->storage->size(), T(0));
    return {impl_->grad.data(), impl_->grad.size()};
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
    return view(shape(), impl_->storage);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(shape(), *impl_->storage);
}

template <typename T>
void Tensor<T>::mark_recorded() {
    impl_->requires_grad = true;
    impl_->is_leaf = false;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pixmamba
