#include <algorithm>
#include <cmath>

#include "broadcast.hpp"
#include "fast_math.hpp"
#include "pixmamba/ops.hpp"

namespace pixmamba {

namespace {

// Accumulates `gout` (laid out as the broadcast output) into `dst`, which has
// the shape of one operand.
template <typename T>
void reduce_into(std::span<T> dst, std::span<const T> gout, const BroadcastPlan& plan, bool operand_a, T scale) {
    if (dst.empty()) return;
    const auto kind = operand_a ? plan.a_kind : plan.b_kind;
    const auto n = static_cast<std::int64_t>(gout.size());
    if (kind == BroadcastKind::Same) {
        for (std::int64_t i = 0; i < n; ++i) dst[i] += scale * gout[i];
        return;
    }
    if (kind == BroadcastKind::Suffix) {
        const auto m = static_cast<std::int64_t>(dst.size());
        for (std::int64_t i = 0; i < n; ++i) dst[i % m] += scale * gout[i];
        return;
    }
    plan.for_each([&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
        dst[operand_a ? ia : ib] += scale * gout[io];
    });
}

template <typename T, typename F>
std::vector<T> broadcast_apply(const Tensor<T>& a, const Tensor<T>& b, const BroadcastPlan& plan, F f) {
    auto da = a.data();
    auto db = b.data();
    std::vector<T> out(static_cast<std::size_t>(numel_of(plan.out)));
    const auto n = static_cast<std::int64_t>(out.size());
    if (plan.a_kind == BroadcastKind::Same && plan.b_kind == BroadcastKind::Same) {
        for (std::int64_t i = 0; i < n; ++i) out[i] = f(da[i], db[i]);
    } else if (plan.a_kind == BroadcastKind::Same && plan.b_kind == BroadcastKind::Suffix) {
        const auto m = static_cast<std::int64_t>(db.size());
        for (std::int64_t i = 0; i < n; i += m) {
            for (std::int64_t j = 0; j < m; ++j) out[i + j] = f(da[i + j], db[j]);
        }
    } else if (plan.a_kind == BroadcastKind::Suffix && plan.b_kind == BroadcastKind::Same) {
        const auto m = static_cast<std::int64_t>(da.size());
        for (std::int64_t i = 0; i < n; i += m) {
            for (std::int64_t j = 0; j < m; ++j) out[i + j] = f(da[j], db[i + j]);
        }
    } else {
        plan.for_each([&](std::int64_t io, std::int64_t ia, std::int64_t ib) { out[io] = f(da[ia], db[ib]); });
    }
    return out;
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const char* name, const Tensor<T>& a, F f, DF df) {
    auto src = a.data();
    std::vector<T> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = f(src[i]);
    Tensor<T> result(a.shape(), std::move(out));
    return autograd::record(name, result, {a}, [a, result, df](std::span<const T> g) {
        auto ga = autograd::sink(a);
        auto x = a.data();
        auto y = result.data();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
    });
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    auto plan = plan_broadcast(a.shape(), b.shape());
    Tensor<T> out(plan.out, broadcast_apply(a, b, plan, [](T x, T y) { return x + y; }));
    return autograd::record("add", out, {a, b}, [a, b, plan](std::span<const T> g) {
        reduce_into(autograd::sink(a), g, plan, true, T(1));
        reduce_into(autograd::sink(b), g, plan, false, T(1));
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    auto plan = plan_broadcast(a.shape(), b.shape());
    Tensor<T> out(plan.out, broadcast_apply(a, b, plan, [](T x, T y) { return x - y; }));
    return autograd::record("sub", out, {a, b}, [a, b, plan](std::span<const T> g) {
        reduce_into(autograd::sink(a), g, plan, true, T(1));
        reduce_into(autograd::sink(b), g, plan, false, T(-1));
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    auto plan = plan_broadcast(a.shape(), b.shape());
    Tensor<T> out(plan.out, broadcast_apply(a, b, plan, [](T x, T y) { return x * y; }));
    return autograd::record("mul", out, {a, b}, [a, b, plan](std::span<const T> g) {
        auto ga = autograd::sink(a);
        auto gb = autograd::sink(b);
        auto da = a.data();
        auto db = b.data();
        if (plan.a_kind == BroadcastKind::Same && plan.b_kind == BroadcastKind::Same) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (!ga.empty()) ga[i] += g[i] * db[i];
                if (!gb.empty()) gb[i] += g[i] * da[i];
            }
            return;
        }
        plan.for_each([&](std::int64_t io, std::int64_t ia, std::int64_t ib) {
            if (!ga.empty()) ga[ia] += g[io] * db[ib];
            if (!gb.empty()) gb[ib] += g[io] * da[ia];
        });
    });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
    return unary("add_scalar", a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T s) {
    return unary("mul_scalar", a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
    return unary("neg", a, [](T x) { return -x; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary("exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
    for (auto v : a.data()) {
        if (v < T(0)) throw DomainError("sqrt of a negative value");
    }
    return unary("sqrt", a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& a) {
    return unary("square", a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
    return unary(
        "sigmoid", a, [](T x) { return T(1) / (T(1) + fastmath::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    return unary(
        "silu", a, [](T x) { return x / (T(1) + fastmath::exp(-x)); },
        [](T x, T) {
            const T s = T(1) / (T(1) + fastmath::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& a) {
    // max(x, 0) + log(1 + e^-|x|) never overflows.
    return unary(
        "softplus", a, [](T x) { return std::max(x, T(0)) + fastmath::log1p(fastmath::exp(-std::abs(x))); },
        [](T x, T) { return T(1) / (T(1) + fastmath::exp(-x)); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v = std::clamp(v, lo, hi);
    return Tensor<T>(a.shape(), std::move(out));
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

#define PIXMAMBA_INSTANTIATE(T)                                        \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);        \
    template Tensor<T> add_scalar(const Tensor<T>&, T);                \
    template Tensor<T> mul_scalar(const Tensor<T>&, T);                \
    template Tensor<T> neg(const Tensor<T>&);                          \
    template Tensor<T> exp(const Tensor<T>&);                          \
    template Tensor<T> sqrt(const Tensor<T>&);                         \
    template Tensor<T> square(const Tensor<T>&);                       \
    template Tensor<T> sigmoid(const Tensor<T>&);                      \
    template Tensor<T> silu(const Tensor<T>&);                         \
    template Tensor<T> softplus(const Tensor<T>&);                     \
    template Tensor<T> clamp(const Tensor<T>&, T, T);                  \
    template bool all_finite(const Tensor<T>&);

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
