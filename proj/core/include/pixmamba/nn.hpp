#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pixmamba/ops.hpp"
#include "pixmamba/rng.hpp"

namespace pixmamba {

/// Ordered map from hierarchical parameter path ("emnet.enc0.blk1.proj_in.weight")
/// to tensor. Registration order is the canonical order used by optimizers
/// and checkpoints.
template <typename T>
class ParameterRegistry {
public:
    const Tensor<T>& add(const std::string& path, Tensor<T> t);

    const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }
    // Null when absent.
    const Tensor<T>* find(const std::string& path) const;
    const Tensor<T>& at(const std::string& path) const;
    std::int64_t parameter_count() const;
    std::vector<std::string> paths() const;
    void zero_grad();

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

/// Creates parameters under a path prefix and registers them.
template <typename T>
class ParamFactory {
public:
    ParamFactory(ParameterRegistry<T>& registry, Rng& rng, std::string prefix = "")
        : registry_(&registry), rng_(&rng), prefix_(std::move(prefix)) {}

    ParamFactory sub(const std::string& name) const;
    Rng& rng() const { return *rng_; }
    const std::string& prefix() const { return prefix_; }

    // Normal(0, std) redrawn outside +-2 std.
    Tensor<T> trunc_normal(const std::string& name, Shape shape, double std);
    Tensor<T> uniform(const std::string& name, Shape shape, double lo, double hi);
    Tensor<T> constant(const std::string& name, Shape shape, double value);
    Tensor<T> from_values(const std::string& name, Shape shape, std::vector<T> values);

private:
    Tensor<T> add(const std::string& name, Tensor<T> t);

    ParameterRegistry<T>* registry_;
    Rng* rng_;
    std::string prefix_;
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // [in, out]
    Tensor<T> bias;    // [out] or undefined

    Linear() = default;
    Linear(ParamFactory<T> f, std::int64_t in, std::int64_t out, bool with_bias = true);
    Tensor<T> operator()(const Tensor<T>& x) const { return linear(x, weight, bias); }
};

// Normalizes the trailing axis.
template <typename T>
struct LayerNorm {
    Tensor<T> gamma;
    Tensor<T> beta;
    T eps = T(1e-5);

    LayerNorm() = default;
    LayerNorm(ParamFactory<T> f, std::int64_t dim);
    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, eps); }
};

template <typename T>
struct Conv2d {
    Tensor<T> weight;  // [out, in/groups, k, k]
    Tensor<T> bias;
    Conv2dOptions opt;

    Conv2d() = default;
    Conv2d(ParamFactory<T> f, std::int64_t in, std::int64_t out, int kernel, Conv2dOptions opt = {});
    Tensor<T> operator()(const Tensor<T>& x) const { return conv2d(x, weight, bias, opt); }
};

template <typename T>
struct TransposeConv2d {
    Tensor<T> weight;  // [in, out, k, k]
    Tensor<T> bias;
    int stride = 1;

    TransposeConv2d() = default;
    TransposeConv2d(ParamFactory<T> f, std::int64_t in, std::int64_t out, int kernel, int stride);
    Tensor<T> operator()(const Tensor<T>& x) const { return transpose_conv2d(x, weight, bias, stride); }
};

// NCHW <-> NHWC
template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x) {
    return permute(x, {0, 2, 3, 1});
}
template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x) {
    return permute(x, {0, 3, 1, 2});
}

// Sets every element of a parameter in place (test and ablation helper).
template <typename T>
void fill_parameter(const Tensor<T>& p, T value) {
    auto t = p;
    for (auto& v : t.mutable_data()) v = value;
}

}  // namespace pixmamba
