#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

#include "pixmamba/tensor.hpp"

// Selective state-space scan (S6) with a diagonal state matrix.
//
// Shapes: x, delta [B, L, Dm]; A [Dm, N]; Bmat, Cmat [B, L, N]; D [Dm].
// For every batch b, channel d and state n:
//
//     h_t = exp(delta_t * A) * h_{t-1} + phi(delta_t, A) * Bmat_t * x_t,  h_0 = 0
//     y_t = sum_n Cmat_t * h_t + D * x_t
//
// where phi is the zero-order-hold factor (exp(delta A) - 1) / A, or plain
// delta for the Euler form.
namespace pixmamba::ssm {

enum class Discretization { Zoh, Euler };
enum class ScanAlgorithm { Sequential, Parallel };

template <typename T>
struct ScanInput {
    Tensor<T> x;
    Tensor<T> delta;
    Tensor<T> A;
    Tensor<T> Bmat;
    Tensor<T> Cmat;
    Tensor<T> D;
};

template <typename T>
struct ScanOutput {
    Tensor<T> y;        // [B, L, Dm]
    Tensor<T> h_final;  // [B, Dm, N]
    Tensor<T> states;   // [B, L, Dm, N]; only with ScanOptions::keep_states
};

template <typename T>
struct ScanGradients {
    Tensor<T> x;
    Tensor<T> delta;
    Tensor<T> A;
    Tensor<T> Bmat;
    Tensor<T> Cmat;
    Tensor<T> D;
};

struct ScanOptions {
    Discretization discretization = Discretization::Zoh;
    bool keep_states = false;
};

struct ScanDims {
    std::int64_t batch;
    std::int64_t length;
    std::int64_t channels;
    std::int64_t state;
};

/// Checks shape consistency, delta > 0 and A < 0.
template <typename T>
ScanDims validate(const ScanInput<T>& in);

// ---- discretization ---------------------------------------------------------

// Below this |delta * A| the ZOH factor switches to its Taylor expansion.
inline constexpr double kSeriesThreshold = 1e-8;

template <typename T>
struct Discretized {
    T abar;
    T phi;  // Bbar = phi * B
};

template <typename T>
Discretized<T> zoh_series(T delta, T a) {
    const T z = delta * a;
    return {T(1) + z + z * z / T(2), delta * (T(1) + z / T(2) + z * z / T(6))};
}

template <typename T>
Discretized<T> zoh_exact(T delta, T a) {
    const T z = delta * a;
    return {std::exp(z), std::expm1(z) / a};
}

template <typename T>
inline Discretized<T> discretize(T delta, T a, Discretization mode) {
    const T z = delta * a;
    if (mode == Discretization::Euler) return {std::exp(z), delta};
    if (std::abs(z) < T(kSeriesThreshold)) return zoh_series(delta, a);
    // One transcendental per element: expm1 near zero, exp elsewhere.
    if (z > T(-0.5)) {
        const T em1 = std::expm1(z);
        return {em1 + T(1), em1 / a};
    }
    const T abar = std::exp(z);
    return {abar, (abar - T(1)) / a};
}

/// Elementwise ZOH: delta [.., Dm], A [Dm, N], Bmat [.., N] (same leading
/// dims as delta) -> (Abar, Bbar), each [.., Dm, N].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> zoh_discretize(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bmat,
                                               Discretization mode = Discretization::Zoh);

// ---- scan ---------------------------------------------------------------------

/// Element of the first-order linear recurrence h -> a * h + b.
template <typename T>
struct Affine {
    T a;
    T b;
};

/// Composition "p, then q": (a1, b1) o (a2, b2) = (a1 a2, a2 b1 + b2).
template <typename T>
constexpr Affine<T> combine(Affine<T> p, Affine<T> q) {
    return {p.a * q.a, q.a * p.b + q.b};
}

template <typename T>
ScanOutput<T> selective_scan_sequential(const ScanInput<T>& in, const ScanOptions& opt = {});

/// Same recurrence through a work-efficient Blelloch up/down sweep over L
/// with the `combine` operator.
template <typename T>
ScanOutput<T> selective_scan_parallel(const ScanInput<T>& in, const ScanOptions& opt = {});

/// Adjoint of the recurrence via a reverse scan.
template <typename T>
ScanGradients<T> selective_scan_backward(const ScanInput<T>& in, const Tensor<T>& grad_y, const ScanOptions& opt = {});

/// Differentiable scan returning y; gradients flow to every operand through
/// selective_scan_backward.
template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bmat,
                         const Tensor<T>& Cmat, const Tensor<T>& D,
                         ScanAlgorithm algorithm = ScanAlgorithm::Sequential,
                         Discretization discretization = Discretization::Zoh);

// Running total of state updates (B * L * Dm * N per forward scan) across
// all threads; used to assert cost accounting.
std::uint64_t state_update_count();
void reset_state_update_count();

}  // namespace pixmamba::ssm
