#pragma once

#include <cstdint>
#include <vector>

#include "pixmamba/autodiff.hpp"
#include "pixmamba/tensor.hpp"

// Differentiable tensor operations. Every function here records a backward
// closure on the active GradTape when one of its inputs requires a gradient.
namespace pixmamba {

// ---- elementwise arithmetic ------------------------------------------------
// Binary ops broadcast numpy-style (right-aligned, size-1 extents expand).

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> mul_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> neg(const Tensor<T>& a);

template <typename T> Tensor<T> exp(const Tensor<T>& a);
// Defined for a >= 0; the gradient at 0 is not finite.
template <typename T> Tensor<T> sqrt(const Tensor<T>& a);
template <typename T> Tensor<T> square(const Tensor<T>& a);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& a);
template <typename T> Tensor<T> silu(const Tensor<T>& a);
template <typename T> Tensor<T> softplus(const Tensor<T>& a);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---- reductions ------------------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::vector<int> axes, bool keepdim = false);
template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::vector<int> axes, bool keepdim = false);

// ---- linear algebra --------------------------------------------------------

/// a[..., m, k] x b[..., k, n] -> [..., m, n]. Batch dims must match, or b
/// may be a plain matrix shared by every batch entry.
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

/// x[..., in] W[in, out] (+ bias[out]). `bias` may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// ---- shape -----------------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order);
// Slice [start, start + length) along `axis`.
template <typename T> Tensor<T> narrow(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t length);

// ---- normalization ---------------------------------------------------------

/// Normalizes over the trailing axis, then applies gamma/beta (shape [C]).
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps);

// ---- spatial ---------------------------------------------------------------

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
    int groups = 1;
};

/// x[B,C,H,W] * w[O,C/groups,kh,kw] (+ bias[O]) -> [B,O,H',W'] with
/// H' = (H + 2*padding - kh) / stride + 1.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dOptions opt = {});

/// Adjoint of conv2d w.r.t. its input. x[B,Cin,H,W], w[Cin,Cout,kh,kw];
/// output extent (H - 1) * stride - 2 * padding + kh.
template <typename T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                           int padding = 0);

/// Causal depthwise convolution along the sequence axis: x[B,L,C], w[C,k].
/// out[t] = sum_j w[j] * x[t - (k - 1) + j], zero history.
template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

/// [B,C,H,W] -> [B,C]
template <typename T> Tensor<T> global_avg_pool2d(const Tensor<T>& x);

/// Bilinear resampling [B,C,h,w] -> [B,C,H,W], half-pixel centers
/// (align_corners = false). Only upsampling is supported.
template <typename T> Tensor<T> bilinear_upsample(const Tensor<T>& x, std::int64_t H, std::int64_t W);

// ---- non-differentiable helpers --------------------------------------------

template <typename T> Tensor<T> clamp(const Tensor<T>& a, T lo, T hi);
template <typename T> bool all_finite(const Tensor<T>& a);

}  // namespace pixmamba
