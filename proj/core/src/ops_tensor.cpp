#include <algorithm>
#include <cmath>
#include <numeric>

#include "pixmamba/ops.hpp"

namespace pixmamba {

namespace {

std::vector<std::int64_t> contiguous_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

int normalize_axis(int axis, int rank, const Shape& shape) {
    if (axis < 0) axis += rank;
    if (axis < 0 || axis >= rank) {
        throw DimensionError("axis out of range for shape " + to_string(shape));
    }
    return axis;
}

// Visits every element of `shape` in row-major order, passing its flat index
// and the flat index obtained with `mapped_strides`.
template <typename F>
void for_each_mapped(const Shape& shape, const std::vector<std::int64_t>& mapped_strides, F&& f) {
    const int r = static_cast<int>(shape.size());
    const std::int64_t n = numel_of(shape);
    std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
    std::int64_t j = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        f(i, j);
        for (int d = r - 1; d >= 0; --d) {
            const auto du = static_cast<std::size_t>(d);
            ++idx[du];
            j += mapped_strides[du];
            if (idx[du] < shape[du]) break;
            j -= mapped_strides[du] * shape[du];
            idx[du] = 0;
        }
    }
}

template <typename T>
Tensor<T> reduce_impl(const char* name, const Tensor<T>& a, std::vector<int> axes, bool keepdim, bool average) {
    const int r = a.rank();
    std::vector<bool> reduced(static_cast<std::size_t>(r), false);
    for (int ax : axes) reduced[static_cast<std::size_t>(normalize_axis(ax, r, a.shape()))] = true;

    Shape kept;
    Shape out_shape;
    std::int64_t count = 1;
    for (int d = 0; d < r; ++d) {
        const auto du = static_cast<std::size_t>(d);
        if (reduced[du]) {
            count *= a.shape()[du];
            if (keepdim) out_shape.push_back(1);
        } else {
            kept.push_back(a.shape()[du]);
            out_shape.push_back(a.shape()[du]);
        }
    }
    auto kept_strides = contiguous_strides(kept);
    std::vector<std::int64_t> map(static_cast<std::size_t>(r), 0);
    for (int d = 0, k = 0; d < r; ++d) {
        if (!reduced[static_cast<std::size_t>(d)]) map[static_cast<std::size_t>(d)] = kept_strides[static_cast<std::size_t>(k++)];
    }

    std::vector<T> out(static_cast<std::size_t>(numel_of(kept)), T(0));
    auto src = a.data();
    for_each_mapped(a.shape(), map, [&](std::int64_t i, std::int64_t j) { out[j] += src[i]; });
    const T scale = average ? T(1) / static_cast<T>(count) : T(1);
    if (average) {
        for (auto& v : out) v *= scale;
    }
    Tensor<T> result(out_shape, std::move(out));
    return autograd::record(name, result, {a}, [a, map, scale](std::span<const T> g) {
        auto ga = autograd::sink(a);
        for_each_mapped(a.shape(), map, [&](std::int64_t i, std::int64_t j) { ga[i] += scale * g[j]; });
    });
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    std::vector<int> axes(static_cast<std::size_t>(a.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_impl("sum", a, axes, false, false);
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    std::vector<int> axes(static_cast<std::size_t>(a.rank()));
    std::iota(axes.begin(), axes.end(), 0);
    return reduce_impl("mean", a, axes, false, true);
}

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, std::vector<int> axes, bool keepdim) {
    return reduce_impl("reduce_sum", a, std::move(axes), keepdim, false);
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& a, std::vector<int> axes, bool keepdim) {
    return reduce_impl("reduce_mean", a, std::move(axes), keepdim, true);
}

// ---- matmul ------------------------------------------------------------------

namespace {

// Copies the rows of src [rows, n] into rows of width W, zero padded.
template <int W, typename T>
std::vector<T> pad_rows(const T* src, std::int64_t rows, std::int64_t n) {
    std::vector<T> out(static_cast<std::size_t>(rows * W), T(0));
    for (std::int64_t i = 0; i < rows; ++i) std::copy(src + i * n, src + i * n + n, out.begin() + i * W);
    return out;
}

// Narrow outputs (n <= W): R output rows stay in registers while k is summed
// in order, so results match the plain loop bit for bit.
template <int W, typename T>
void gemm_narrow(const T* __restrict a, const T* __restrict b, T* __restrict c, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
    constexpr int R = 4;
    const auto bp = pad_rows<W>(b, k, n);
    const T* __restrict pb = bp.data();
    const std::int64_t blocks = (m + R - 1) / R;
#pragma omp parallel for schedule(static) if (m * k * n > (1 << 18))
    for (std::int64_t ib = 0; ib < blocks; ++ib) {
        const std::int64_t i0 = ib * R;
        const int rows = static_cast<int>(std::min<std::int64_t>(R, m - i0));
        T acc[R][W] = {};
        for (int r = 0; r < rows; ++r) std::copy(c + (i0 + r) * n, c + (i0 + r) * n + n, acc[r]);
        if (rows == R) {
            for (std::int64_t p = 0; p < k; ++p) {
                const T* brow = pb + p * W;
                for (int r = 0; r < R; ++r) {
                    const T av = a[(i0 + r) * k + p];
#pragma omp simd
                    for (int j = 0; j < W; ++j) acc[r][j] += av * brow[j];
                }
            }
        } else {
            for (int r = 0; r < rows; ++r) {
                for (std::int64_t p = 0; p < k; ++p) {
                    const T av = a[(i0 + r) * k + p];
                    const T* brow = pb + p * W;
#pragma omp simd
                    for (int j = 0; j < W; ++j) acc[r][j] += av * brow[j];
                }
            }
        }
        for (int r = 0; r < rows; ++r) std::copy(acc[r], acc[r] + n, c + (i0 + r) * n);
    }
}

// c[m,n] += a[m,k] b[k,n], rows of a processed independently.
template <typename T>
void gemm_rows(const T* __restrict a, const T* __restrict b, T* __restrict c, std::int64_t m, std::int64_t k, std::int64_t n) {
    if (k >= 4 && n > 16 && n <= 32) return gemm_narrow<32>(a, b, c, m, k, n);
    if (k >= 4 && n > 32 && n <= 64) return gemm_narrow<64>(a, b, c, m, k, n);
    if (k >= 4 && n <= 16) return gemm_narrow<16>(a, b, c, m, k, n);
#pragma omp parallel for schedule(static) if (m * k * n > (1 << 18))
    for (std::int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        const T* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = arow[p];
            const T* brow = b + p * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// db[k,n] += a[m,k]^T g[m,n] for n <= W, rows of a summed in order. Four
// rows of db are accumulated together to overlap their dependency chains.
template <int W, typename T>
void at_b_narrow(const T* __restrict a, const T* __restrict g, T* __restrict db, std::int64_t m, std::int64_t k,
                 std::int64_t n) {
    constexpr int P = 4;
    const auto gp = pad_rows<W>(g, m, n);
    const T* __restrict pg = gp.data();
    for (std::int64_t p0 = 0; p0 < k; p0 += P) {
        const int cnt = static_cast<int>(std::min<std::int64_t>(P, k - p0));
        T acc[P][W] = {};
        for (int q = 0; q < cnt; ++q) std::copy(db + (p0 + q) * n, db + (p0 + q) * n + n, acc[q]);
        if (cnt == P) {
            for (std::int64_t i = 0; i < m; ++i) {
                const T* ar = a + i * k + p0;
                const T* gr = pg + i * W;
                for (int q = 0; q < P; ++q) {
                    const T av = ar[q];
#pragma omp simd
                    for (int j = 0; j < W; ++j) acc[q][j] += av * gr[j];
                }
            }
        } else {
            for (int q = 0; q < cnt; ++q) {
                for (std::int64_t i = 0; i < m; ++i) {
                    const T av = a[i * k + p0 + q];
#pragma omp simd
                    for (int j = 0; j < W; ++j) acc[q][j] += av * pg[i * W + j];
                }
            }
        }
        for (int q = 0; q < cnt; ++q) std::copy(acc[q], acc[q] + n, db + (p0 + q) * n);
    }
}

template <typename T>
void at_b_rows(const T* __restrict a, const T* __restrict g, T* __restrict db, std::int64_t m, std::int64_t k,
               std::int64_t n) {
    if (k >= 4 && n <= 16) return at_b_narrow<16>(a, g, db, m, k, n);
    if (k >= 4 && n <= 32) return at_b_narrow<32>(a, g, db, m, k, n);
    if (k >= 4 && n <= 64) return at_b_narrow<64>(a, g, db, m, k, n);
    for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const T av = a[i * k + p];
            T* drow = db + p * n;
            const T* grow = g + i * n;
            for (std::int64_t j = 0; j < n; ++j) drow[j] += av * grow[j];
        }
    }
}

template <typename T>
std::vector<T> transpose2d(const T* src, std::int64_t rows, std::int64_t cols) {
    std::vector<T> out(static_cast<std::size_t>(rows * cols));
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < cols; ++j) out[j * rows + i] = src[i * cols + j];
    }
    return out;
}

// db[k,n] += a[m,k]^T g[m,n]. Rows are summed in fixed-size chunks whose
// partials are combined in chunk order, independent of the thread count.
template <typename T>
void gemm_at_b(const T* __restrict a, const T* __restrict g, T* __restrict db, std::int64_t m, std::int64_t k, std::int64_t n) {
    constexpr std::int64_t chunk = 512;
    const std::int64_t chunks = (m + chunk - 1) / chunk;
    if (chunks <= 1) {
        at_b_rows(a, g, db, m, k, n);
        return;
    }
    std::vector<T> partial(static_cast<std::size_t>(chunks * k * n), T(0));
#pragma omp parallel for schedule(static)
    for (std::int64_t c = 0; c < chunks; ++c) {
        const std::int64_t i0 = c * chunk;
        const std::int64_t rows = std::min(m, i0 + chunk) - i0;
        at_b_rows(a + i0 * k, g + i0 * n, partial.data() + c * k * n, rows, k, n);
    }
    for (std::int64_t c = 0; c < chunks; ++c) {
        const T* part = partial.data() + c * k * n;
        for (std::int64_t i = 0; i < k * n; ++i) db[i] += part[i];
    }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) {
        throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(a.shape()) + " and " +
                             to_string(b.shape()));
    }
    const std::int64_t m = a.dim(-2);
    const std::int64_t k = a.dim(-1);
    const std::int64_t n = b.dim(-1);
    if (b.dim(-2) != k) {
        throw DimensionError("matmul inner dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    Shape a_batch(a.shape().begin(), a.shape().end() - 2);
    Shape b_batch(b.shape().begin(), b.shape().end() - 2);
    const bool b_shared = b_batch.empty();
    const bool a_shared = a_batch.empty();
    if (!a_shared && !b_shared && a_batch != b_batch) {
        throw DimensionError("matmul batch dimensions differ: " + to_string(a.shape()) + " x " + to_string(b.shape()));
    }
    Shape out_shape = b_shared ? a_batch : b_batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    const std::int64_t batch = numel_of(b_shared ? a_batch : b_batch);

    std::vector<T> out(static_cast<std::size_t>(batch * m * n), T(0));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    if (b_shared) {
        gemm_rows(pa, pb, out.data(), batch * m, k, n);
    } else {
        for (std::int64_t s = 0; s < batch; ++s) {
            gemm_rows(pa + (a_shared ? 0 : s * m * k), pb + s * k * n, out.data() + s * m * n, m, k, n);
        }
    }
    Tensor<T> result(out_shape, std::move(out));
    return autograd::record("matmul", result, {a, b}, [a, b, m, k, n, batch, a_shared, b_shared](std::span<const T> g) {
        auto ga = autograd::sink(a);
        auto gb = autograd::sink(b);
        const T* pa = a.data().data();
        const T* pb = b.data().data();
        for (std::int64_t s = 0; s < (b_shared ? 1 : batch); ++s) {
            const T* bs = pb + s * k * n;
            const std::int64_t rows = b_shared ? batch * m : m;
            const std::int64_t a_off = a_shared ? 0 : s * m * k;
            const T* gs = g.data() + (b_shared ? 0 : s * m * n);
            if (!ga.empty()) {
                auto bt = transpose2d(bs, k, n);
                if (a_shared && !b_shared) {
                    std::vector<T> tmp(static_cast<std::size_t>(m * k), T(0));
                    gemm_rows(gs, bt.data(), tmp.data(), rows, n, k);
                    for (std::int64_t i = 0; i < m * k; ++i) ga[i] += tmp[i];
                } else {
                    gemm_rows(gs, bt.data(), ga.data() + a_off, rows, n, k);
                }
            }
            if (!gb.empty()) gemm_at_b(pa + a_off, gs, gb.data() + (b_shared ? 0 : s * k * n), rows, k, n);
        }
    });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
    if (weight.rank() != 2) throw DimensionError("linear weight must be [in, out], got " + to_string(weight.shape()));
    Tensor<T> y;
    if (x.rank() == 1) {
        y = reshape(matmul(reshape(x, Shape{1, x.dim(0)}), weight), Shape{weight.dim(1)});
    } else {
        const Shape& xs = x.shape();
        if (x.rank() > 2) {
            Shape flat{numel_of(xs) / xs.back(), xs.back()};
            Shape out_shape(xs.begin(), xs.end() - 1);
            out_shape.push_back(weight.dim(1));
            y = reshape(matmul(reshape(x, flat), weight), out_shape);
        } else {
            y = matmul(x, weight);
        }
    }
    if (bias.defined()) y = add(y, bias);
    return y;
}

// ---- shape ---------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    std::int64_t known = 1;
    int infer = -1;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw DimensionError("reshape allows a single -1 extent");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0 && known > 0) shape[static_cast<std::size_t>(infer)] = a.numel() / known;
    if (numel_of(shape) != a.numel()) {
        throw DimensionError("cannot reshape " + to_string(a.shape()) + " to " + to_string(shape));
    }
    auto out = Tensor<T>::view(shape, a.storage());
    return autograd::record("reshape", out, {a}, [a](std::span<const T> g) {
        auto ga = autograd::sink(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& order) {
    const int r = a.rank();
    if (static_cast<int>(order.size()) != r) {
        throw DimensionError("permute order length does not match rank of " + to_string(a.shape()));
    }
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (int o : order) {
        if (o < 0 || o >= r || seen[static_cast<std::size_t>(o)]) throw DimensionError("invalid permutation");
        seen[static_cast<std::size_t>(o)] = true;
    }
    auto in_strides = contiguous_strides(a.shape());
    Shape out_shape(static_cast<std::size_t>(r));
    std::vector<std::int64_t> map(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) {
        out_shape[static_cast<std::size_t>(i)] = a.shape()[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        map[static_cast<std::size_t>(i)] = in_strides[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    }
    std::vector<T> out(static_cast<std::size_t>(a.numel()));
    auto src = a.data();
    for_each_mapped(out_shape, map, [&](std::int64_t i, std::int64_t j) { out[i] = src[j]; });
    Tensor<T> result(out_shape, std::move(out));
    return autograd::record("permute", result, {a}, [a, out_shape, map](std::span<const T> g) {
        auto ga = autograd::sink(a);
        for_each_mapped(out_shape, map, [&](std::int64_t i, std::int64_t j) { ga[j] += g[i]; });
    });
}

template <typename T>
Tensor<T> narrow(const Tensor<T>& a, int axis, std::int64_t start, std::int64_t length) {
    axis = normalize_axis(axis, a.rank(), a.shape());
    const std::int64_t extent = a.dim(axis);
    if (start < 0 || length <= 0 || start + length > extent) {
        throw DimensionError("narrow [" + std::to_string(start) + ", " + std::to_string(start + length) +
                             ") out of range for axis of extent " + std::to_string(extent));
    }
    std::int64_t outer = 1;
    std::int64_t inner = 1;
    for (int d = 0; d < axis; ++d) outer *= a.dim(d);
    for (int d = axis + 1; d < a.rank(); ++d) inner *= a.dim(d);
    Shape out_shape = a.shape();
    out_shape[static_cast<std::size_t>(axis)] = length;
    std::vector<T> out(static_cast<std::size_t>(outer * length * inner));
    auto src = a.data();
    for (std::int64_t o = 0; o < outer; ++o) {
        std::copy_n(src.data() + (o * extent + start) * inner, length * inner, out.data() + o * length * inner);
    }
    Tensor<T> result(out_shape, std::move(out));
    return autograd::record("narrow", result, {a}, [a, outer, inner, extent, start, length](std::span<const T> g) {
        auto ga = autograd::sink(a);
        for (std::int64_t o = 0; o < outer; ++o) {
            T* dst = ga.data() + (o * extent + start) * inner;
            const T* gs = g.data() + o * length * inner;
            for (std::int64_t i = 0; i < length * inner; ++i) dst[i] += gs[i];
        }
    });
}

// ---- layer norm ------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    if (!(eps > T(0))) throw DomainError("layer_norm eps must be positive");
    const std::int64_t c = x.dim(-1);
    if (gamma.numel() != c || beta.numel() != c) {
        throw DimensionError("layer_norm affine parameters must have " + std::to_string(c) + " elements, got " +
                             to_string(gamma.shape()) + " and " + to_string(beta.shape()));
    }
    const std::int64_t rows = x.numel() / c;
    auto src = x.data();
    auto pg = gamma.data();
    auto pb = beta.data();
    std::vector<T> out(src.size());
    std::vector<T> rstd(static_cast<std::size_t>(rows));
#pragma omp parallel for schedule(static) if (rows * c > (1 << 16))
    for (std::int64_t r = 0; r < rows; ++r) {
        const T* xr = src.data() + r * c;
        T mu = 0;
        for (std::int64_t i = 0; i < c; ++i) mu += xr[i];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::int64_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
        var /= static_cast<T>(c);
        const T rs = T(1) / std::sqrt(var + eps);
        rstd[static_cast<std::size_t>(r)] = rs;
        T* yr = out.data() + r * c;
        for (std::int64_t i = 0; i < c; ++i) yr[i] = (xr[i] - mu) * rs * pg[i] + pb[i];
    }
    Tensor<T> result(x.shape(), std::move(out));
    return autograd::record("layer_norm", result, {x, gamma, beta},
                            [x, gamma, beta, rstd = std::move(rstd), rows, c](std::span<const T> g) {
        auto gx = autograd::sink(x);
        auto gg = autograd::sink(gamma);
        auto gb = autograd::sink(beta);
        auto src = x.data();
        auto pg = gamma.data();
        std::vector<T> xhat(static_cast<std::size_t>(c));
        for (std::int64_t r = 0; r < rows; ++r) {
            const T* xr = src.data() + r * c;
            const T* gr = g.data() + r * c;
            const T rs = rstd[static_cast<std::size_t>(r)];
            T mu = 0;
            for (std::int64_t i = 0; i < c; ++i) mu += xr[i];
            mu /= static_cast<T>(c);
            T mean_dxhat = 0;
            T mean_dxhat_xhat = 0;
            for (std::int64_t i = 0; i < c; ++i) {
                xhat[static_cast<std::size_t>(i)] = (xr[i] - mu) * rs;
                const T dxh = gr[i] * pg[i];
                mean_dxhat += dxh;
                mean_dxhat_xhat += dxh * xhat[static_cast<std::size_t>(i)];
                if (!gg.empty()) gg[i] += gr[i] * xhat[static_cast<std::size_t>(i)];
                if (!gb.empty()) gb[i] += gr[i];
            }
            if (gx.empty()) continue;
            mean_dxhat /= static_cast<T>(c);
            mean_dxhat_xhat /= static_cast<T>(c);
            T* gxr = gx.data() + r * c;
            for (std::int64_t i = 0; i < c; ++i) {
                gxr[i] += rs * (gr[i] * pg[i] - mean_dxhat - xhat[static_cast<std::size_t>(i)] * mean_dxhat_xhat);
            }
        }
    });
}

#define PIXMAMBA_INSTANTIATE(T)                                                           \
    template Tensor<T> sum(const Tensor<T>&);                                             \
    template Tensor<T> mean(const Tensor<T>&);                                            \
    template Tensor<T> reduce_sum(const Tensor<T>&, std::vector<int>, bool);              \
    template Tensor<T> reduce_mean(const Tensor<T>&, std::vector<int>, bool);             \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                        \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                  \
    template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);                \
    template Tensor<T> narrow(const Tensor<T>&, int, std::int64_t, std::int64_t);         \
    template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
