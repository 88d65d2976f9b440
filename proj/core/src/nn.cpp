#include "pixmamba/nn.hpp"

#include <cmath>

namespace pixmamba {

template <typename T>
const Tensor<T>& ParameterRegistry<T>::add(const std::string& path, Tensor<T> t) {
    if (find(path) != nullptr) throw UsageError("duplicate parameter path: " + path);
    t.set_requires_grad(true);
    entries_.emplace_back(path, std::move(t));
    return entries_.back().second;
}

template <typename T>
const Tensor<T>* ParameterRegistry<T>::find(const std::string& path) const {
    for (const auto& [p, t] : entries_) {
        if (p == path) return &t;
    }
    return nullptr;
}

template <typename T>
const Tensor<T>& ParameterRegistry<T>::at(const std::string& path) const {
    const auto* t = find(path);
    if (t == nullptr) throw UsageError("no parameter named " + path);
    return *t;
}

template <typename T>
std::int64_t ParameterRegistry<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.second.numel();
    return n;
}

template <typename T>
std::vector<std::string> ParameterRegistry<T>::paths() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.first);
    return out;
}

template <typename T>
void ParameterRegistry<T>::zero_grad() {
    for (auto& e : entries_) e.second.zero_grad();
}

template <typename T>
ParamFactory<T> ParamFactory<T>::sub(const std::string& name) const {
    return ParamFactory(*registry_, *rng_, prefix_.empty() ? name : prefix_ + "." + name);
}

template <typename T>
Tensor<T> ParamFactory<T>::add(const std::string& name, Tensor<T> t) {
    return registry_->add(prefix_.empty() ? name : prefix_ + "." + name, std::move(t));
}

template <typename T>
Tensor<T> ParamFactory<T>::trunc_normal(const std::string& name, Shape shape, double std) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
    for (auto& x : v) {
        double z = rng_->normal();
        while (std::abs(z) > 2.0) z = rng_->normal();
        x = static_cast<T>(z * std);
    }
    return add(name, Tensor<T>(std::move(shape), std::move(v)));
}

template <typename T>
Tensor<T> ParamFactory<T>::uniform(const std::string& name, Shape shape, double lo, double hi) {
    std::vector<T> v(static_cast<std::size_t>(numel_of(shape)));
    for (auto& x : v) x = static_cast<T>(rng_->uniform(lo, hi));
    return add(name, Tensor<T>(std::move(shape), std::move(v)));
}

template <typename T>
Tensor<T> ParamFactory<T>::constant(const std::string& name, Shape shape, double value) {
    return add(name, Tensor<T>::full(std::move(shape), static_cast<T>(value)));
}

template <typename T>
Tensor<T> ParamFactory<T>::from_values(const std::string& name, Shape shape, std::vector<T> values) {
    return add(name, Tensor<T>(std::move(shape), std::move(values)));
}

template <typename T>
Linear<T>::Linear(ParamFactory<T> f, std::int64_t in, std::int64_t out, bool with_bias) {
    weight = f.trunc_normal("weight", {in, out}, 0.02);
    if (with_bias) bias = f.constant("bias", {out}, 0.0);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamFactory<T> f, std::int64_t dim) {
    gamma = f.constant("weight", {dim}, 1.0);
    beta = f.constant("bias", {dim}, 0.0);
}

template <typename T>
Conv2d<T>::Conv2d(ParamFactory<T> f, std::int64_t in, std::int64_t out, int kernel, Conv2dOptions o) : opt(o) {
    if (o.groups < 1 || in % o.groups != 0 || out % o.groups != 0) {
        throw ConfigError("conv2d: channels must be divisible by groups");
    }
    const std::int64_t fan_in = in / o.groups * kernel * kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    weight = f.uniform("weight", {out, in / o.groups, kernel, kernel}, -bound, bound);
    bias = f.uniform("bias", {out}, -bound, bound);
}

template <typename T>
TransposeConv2d<T>::TransposeConv2d(ParamFactory<T> f, std::int64_t in, std::int64_t out, int kernel, int s)
    : stride(s) {
    const std::int64_t fan_in = out * kernel * kernel;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    weight = f.uniform("weight", {in, out, kernel, kernel}, -bound, bound);
    bias = f.uniform("bias", {out}, -bound, bound);
}

#define PIXMAMBA_INSTANTIATE(T)          \
    template class ParameterRegistry<T>; \
    template class ParamFactory<T>;      \
    template struct Linear<T>;           \
    template struct LayerNorm<T>;        \
    template struct Conv2d<T>;           \
    template struct TransposeConv2d<T>;

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
