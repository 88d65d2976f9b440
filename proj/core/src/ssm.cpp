#include "pixmamba/ssm.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <functional>
#include <memory>
#include <vector>

#include "pixmamba/autodiff.hpp"
#include "pixmamba/parallel.hpp"
#include "fast_math.hpp"

namespace pixmamba::ssm {

namespace {

std::atomic<std::uint64_t> g_state_updates{0};

void count_updates(const ScanDims& d) {
    g_state_updates.fetch_add(static_cast<std::uint64_t>(d.batch * d.length * d.channels * d.state),
                              std::memory_order_relaxed);
}

// d(phi)/d(A) of the ZOH factor; series form where the closed form cancels.
template <typename T>
inline T dphi_da(T delta, T a, T abar, T phi) {
    const T z = delta * a;
    if (std::abs(z) < T(1e-2)) {
        return delta * delta *
               (T(0.5) + z * (T(1) / T(3) + z * (T(1) / T(8) + z * (T(1) / T(30) + z * (T(1) / T(144))))));
    }
    return (delta * abar - phi) / a;
}


// Per-element coefficients: abar, phi and, in the backward pass, d(phi)/d(A).
template <typename T>
struct Coeff {
    T abar, phi, slope;
};

template <bool Zoh, bool Slope, typename T>
inline Coeff<T> coeff(T delta, T a, T /*inv_a*/) {
    const auto c = discretize(delta, a, Zoh ? Discretization::Zoh : Discretization::Euler);
    T s = T(0);
    if constexpr (Zoh && Slope) s = dphi_da(delta, a, c.abar, c.phi);
    return {c.abar, c.phi, s};
}

// Float kernels use branch-free arithmetic the compiler can vectorize over
// channels: exp by range reduction plus polynomial, and p(z) = expm1(z) / z
// by its Taylor polynomial on -0.5 < z < 0, where it is exact to float
// precision.
inline float expm1_ratio(float z) {
    return 1.0f + z * (1.0f / 2 + z * (1.0f / 6 + z * (1.0f / 24 + z * (1.0f / 120 + z * (1.0f / 720 + z * (1.0f / 5040 + z * (1.0f / 40320)))))));
}

// p'(z)
inline float expm1_ratio_slope(float z) {
    return 1.0f / 2 + z * (1.0f / 3 + z * (1.0f / 8 + z * (1.0f / 30 + z * (1.0f / 144 + z * (1.0f / 840 + z * (1.0f / 5760 + z * (1.0f / 45360)))))));
}

template <bool Zoh, bool Slope>
inline Coeff<float> coeff_f(float delta, float a, float inv_a) {
    const float z = delta * a;
    const float e = fastmath::exp_poly(z);
    if constexpr (!Zoh) return {e, delta, 0.0f};
    const bool small = z > -0.5f;
    const float abar = small ? 1.0f + z * expm1_ratio(z) : e;
    const float phi = small ? delta * expm1_ratio(z) : (e - 1.0f) * inv_a;
    float s = 0.0f;
    if constexpr (Slope) s = small ? delta * delta * expm1_ratio_slope(z) : (delta * abar - phi) * inv_a;
    return {abar, phi, s};
}

template <>
inline Coeff<float> coeff<true, false, float>(float delta, float a, float inv_a) { return coeff_f<true, false>(delta, a, inv_a); }
template <>
inline Coeff<float> coeff<true, true, float>(float delta, float a, float inv_a) { return coeff_f<true, true>(delta, a, inv_a); }
template <>
inline Coeff<float> coeff<false, false, float>(float delta, float a, float inv_a) { return coeff_f<false, false>(delta, a, inv_a); }
template <>
inline Coeff<float> coeff<false, true, float>(float delta, float a, float inv_a) { return coeff_f<false, true>(delta, a, inv_a); }

template <typename T>
inline Coeff<T> coeff_rt(T delta, T a, Discretization mode) {
    const T inv_a = T(1) / a;
    return mode == Discretization::Zoh ? coeff<true, false>(delta, a, inv_a) : coeff<false, false>(delta, a, inv_a);
}

// Channels are processed in blocks of kLanes. A block's operands are copied
// into [L, kLanes] scratch so every inner loop has a fixed trip count; padded
// lanes carry x = 0, delta = 1, A = -1 and g = 0, which keeps their states and
// every gradient contribution at exactly zero.
constexpr std::int64_t kLanes = 16;

// Scratch that every caller fully overwrites; skips zero-filling.
template <typename T>
std::unique_ptr<T[]> scratch(std::size_t n) {
    return std::unique_ptr<T[]>(new T[n]);
}

template <typename T>
struct LaneBlock {
    std::int64_t d0 = 0, dn = 0;
    std::vector<T> x, delta, a, inv_a, d;  // a and inv_a are [N, kLanes]

    LaneBlock(std::int64_t L, std::int64_t N)
        : x(static_cast<std::size_t>(L * kLanes)), delta(x.size()), a(static_cast<std::size_t>(N * kLanes)),
          inv_a(a.size()), d(static_cast<std::size_t>(kLanes)) {}

    void load(const T* xs, const T* dls, const T* A, const T* D, std::int64_t L, std::int64_t Dm, std::int64_t N,
              std::int64_t first) {
        d0 = first;
        dn = std::min(kLanes, Dm - d0);
        for (std::int64_t t = 0; t < L; ++t) {
            for (std::int64_t j = 0; j < kLanes; ++j) {
                const bool live = j < dn;
                x[t * kLanes + j] = live ? xs[t * Dm + d0 + j] : T(0);
                delta[t * kLanes + j] = live ? dls[t * Dm + d0 + j] : T(1);
            }
        }
        for (std::int64_t n = 0; n < N; ++n) {
            for (std::int64_t j = 0; j < kLanes; ++j) {
                a[n * kLanes + j] = j < dn ? A[(d0 + j) * N + n] : T(-1);
                inv_a[n * kLanes + j] = T(1) / a[n * kLanes + j];
            }
        }
        for (std::int64_t j = 0; j < kLanes; ++j) d[j] = j < dn ? D[d0 + j] : T(0);
    }
};

// Forward recurrence of one block; h is [N, kLanes], y is [L, kLanes].
template <bool Zoh, typename T>
void forward_lanes(std::int64_t L, std::int64_t N, const LaneBlock<T>& blk, const T* __restrict Bm,
                   const T* __restrict Cm, T* __restrict y, T* __restrict h, T* __restrict hs) {
    constexpr std::int64_t W = kLanes;
    const T* __restrict xs = blk.x.data();
    const T* __restrict ds = blk.delta.data();
    const T* __restrict as = blk.a.data();
    const T* __restrict ias = blk.inv_a.data();
    for (std::int64_t t = 0; t < L; ++t) {
        const T* xr = xs + t * W;
        const T* dr = ds + t * W;
        T acc[W] = {};
        for (std::int64_t n = 0; n < N; ++n) {
            const T bn = Bm[t * N + n];
            const T cn = Cm[t * N + n];
            const T* an = as + n * W;
            const T* ian = ias + n * W;
            T* hn = h + n * W;
#pragma omp simd
            for (std::int64_t j = 0; j < W; ++j) {
                const auto c = coeff<Zoh, false>(dr[j], an[j], ian[j]);
                hn[j] = c.abar * hn[j] + c.phi * bn * xr[j];
                acc[j] += cn * hn[j];
            }
            if (hs != nullptr) std::copy(hn, hn + W, hs + (t * N + n) * W);
        }
        for (std::int64_t j = 0; j < W; ++j) y[t * W + j] = acc[j] + blk.d[j] * xr[j];
    }
}

}  // namespace

template <typename T>
ScanDims validate(const ScanInput<T>& in) {
    auto fail = [](const std::string& msg) { throw DimensionError("selective scan: " + msg); };
    if (!in.x.defined() || !in.delta.defined() || !in.A.defined() || !in.Bmat.defined() || !in.Cmat.defined() ||
        !in.D.defined()) {
        fail("all six operands are required");
    }
    if (in.x.rank() != 3) fail("x must be [B, L, Dm], got " + to_string(in.x.shape()));
    ScanDims d{in.x.dim(0), in.x.dim(1), in.x.dim(2), 0};
    if (in.A.rank() != 2 || in.A.dim(0) != d.channels) fail("A must be [Dm, N], got " + to_string(in.A.shape()));
    d.state = in.A.dim(1);
    if (in.delta.shape() != in.x.shape()) fail("delta shape " + to_string(in.delta.shape()) + " != x shape");
    const Shape bl{d.batch, d.length, d.state};
    if (in.Bmat.shape() != bl) fail("Bmat must be " + to_string(bl) + ", got " + to_string(in.Bmat.shape()));
    if (in.Cmat.shape() != bl) fail("Cmat must be " + to_string(bl) + ", got " + to_string(in.Cmat.shape()));
    if (in.D.numel() != d.channels) fail("D must have Dm elements, got " + to_string(in.D.shape()));
    for (auto v : in.delta.data()) {
        if (!(v > T(0))) throw DomainError("selective scan: delta must be positive");
    }
    for (auto v : in.A.data()) {
        if (!(v < T(0))) throw DomainError("selective scan: A must be strictly negative");
    }
    return d;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> zoh_discretize(const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bmat,
                                               Discretization mode) {
    if (A.rank() != 2) throw DimensionError("zoh_discretize: A must be [Dm, N], got " + to_string(A.shape()));
    const std::int64_t dm = A.dim(0);
    const std::int64_t n = A.dim(1);
    if (delta.dim(-1) != dm || Bmat.dim(-1) != n || delta.numel() / dm != Bmat.numel() / n) {
        throw DimensionError("zoh_discretize: incompatible shapes " + to_string(delta.shape()) + ", " +
                             to_string(A.shape()) + ", " + to_string(Bmat.shape()));
    }
    for (auto v : delta.data()) {
        if (!(v > T(0))) throw DomainError("zoh_discretize: delta must be positive");
    }
    const std::int64_t rows = delta.numel() / dm;
    Shape out_shape(delta.shape().begin(), delta.shape().end());
    out_shape.push_back(n);
    std::vector<T> abar(static_cast<std::size_t>(rows * dm * n));
    std::vector<T> bbar(abar.size());
    auto pd = delta.data();
    auto pa = A.data();
    auto pb = Bmat.data();
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t d = 0; d < dm; ++d) {
            for (std::int64_t k = 0; k < n; ++k) {
                const auto c = discretize(pd[r * dm + d], pa[d * n + k], mode);
                const auto i = static_cast<std::size_t>((r * dm + d) * n + k);
                abar[i] = c.abar;
                bbar[i] = c.phi * pb[r * n + k];
            }
        }
    }
    return {Tensor<T>(out_shape, std::move(abar)), Tensor<T>(out_shape, std::move(bbar))};
}

template <typename T>
ScanOutput<T> selective_scan_sequential(const ScanInput<T>& in, const ScanOptions& opt) {
    const auto dims = validate(in);
    count_updates(dims);
    const std::int64_t Bn = dims.batch, L = dims.length, Dm = dims.channels, N = dims.state;
    const T* x = in.x.data().data();
    const T* dl = in.delta.data().data();
    const T* A = in.A.data().data();
    const T* Bm = in.Bmat.data().data();
    const T* Cm = in.Cmat.data().data();
    const T* D = in.D.data().data();

    std::vector<T> y(static_cast<std::size_t>(Bn * L * Dm));
    std::vector<T> hfin(static_cast<std::size_t>(Bn * Dm * N));
    std::vector<T> states(opt.keep_states ? static_cast<std::size_t>(Bn * L * Dm * N) : 0);

    const bool zoh = opt.discretization == Discretization::Zoh;
    const std::int64_t blocks = (Dm + kLanes - 1) / kLanes;
#pragma omp parallel for collapse(2) schedule(static) if (Bn * Dm * L * N > (1 << 16))
    for (std::int64_t b = 0; b < Bn; ++b) {
        for (std::int64_t k = 0; k < blocks; ++k) {
            const std::int64_t off = b * L;
            LaneBlock<T> blk(L, N);
            blk.load(x + off * Dm, dl + off * Dm, A, D, L, Dm, N, k * kLanes);
            std::vector<T> h(static_cast<std::size_t>(N * kLanes), T(0));
            auto yb = scratch<T>(static_cast<std::size_t>(L * kLanes));
            auto hs = scratch<T>(opt.keep_states ? static_cast<std::size_t>(L * N * kLanes) : 0);
            T* hsp = opt.keep_states ? hs.get() : nullptr;
            if (zoh) {
                forward_lanes<true>(L, N, blk, Bm + off * N, Cm + off * N, yb.get(), h.data(), hsp);
            } else {
                forward_lanes<false>(L, N, blk, Bm + off * N, Cm + off * N, yb.get(), h.data(), hsp);
            }
            const std::int64_t d0 = blk.d0, dn = blk.dn;
            for (std::int64_t t = 0; t < L; ++t) {
                for (std::int64_t j = 0; j < dn; ++j) y[static_cast<std::size_t>((off + t) * Dm + d0 + j)] = yb[t * kLanes + j];
            }
            for (std::int64_t j = 0; j < dn; ++j) {
                for (std::int64_t n = 0; n < N; ++n) {
                    hfin[static_cast<std::size_t>((b * Dm + d0 + j) * N + n)] = h[static_cast<std::size_t>(n * kLanes + j)];
                    for (std::int64_t t = 0; t < L && opt.keep_states; ++t) {
                        states[static_cast<std::size_t>(((off + t) * Dm + d0 + j) * N + n)] = hs[(t * N + n) * kLanes + j];
                    }
                }
            }
        }
    }
    ScanOutput<T> out;
    out.y = Tensor<T>(in.x.shape(), std::move(y));
    out.h_final = Tensor<T>(Shape{Bn, Dm, N}, std::move(hfin));
    if (opt.keep_states) out.states = Tensor<T>(Shape{Bn, L, Dm, N}, std::move(states));
    return out;
}

namespace {

// In-place Blelloch exclusive scan over a power-of-two array. Each level's
// updates touch disjoint elements, so splitting a level across threads does
// not change any result bit.
template <typename T>
void blelloch_exclusive(std::vector<Affine<T>>& e, bool threaded) {
    const auto n = static_cast<std::int64_t>(e.size());
    for (std::int64_t stride = 1; stride < n; stride *= 2) {
        const std::int64_t step = 2 * stride;
#pragma omp parallel for schedule(static) if (threaded && n / step > 1024)
        for (std::int64_t i = step - 1; i < n; i += step) e[i] = combine(e[i - stride], e[i]);
    }
    e[static_cast<std::size_t>(n - 1)] = {T(1), T(0)};
    for (std::int64_t stride = n / 2; stride >= 1; stride /= 2) {
        const std::int64_t step = 2 * stride;
#pragma omp parallel for schedule(static) if (threaded && n / step > 1024)
        for (std::int64_t i = step - 1; i < n; i += step) {
            const Affine<T> left = e[i - stride];
            e[i - stride] = e[i];
            e[i] = combine(e[i], left);
        }
    }
}

}  // namespace

template <typename T>
ScanOutput<T> selective_scan_parallel(const ScanInput<T>& in, const ScanOptions& opt) {
    const auto dims = validate(in);
    count_updates(dims);
    const std::int64_t Bn = dims.batch, L = dims.length, Dm = dims.channels, N = dims.state;
    const T* x = in.x.data().data();
    const T* dl = in.delta.data().data();
    const T* A = in.A.data().data();
    const T* Bm = in.Bmat.data().data();
    const T* Cm = in.Cmat.data().data();
    const T* D = in.D.data().data();

    const auto padded = static_cast<std::int64_t>(std::bit_ceil(static_cast<std::uint64_t>(L)));
    std::vector<T> y(static_cast<std::size_t>(Bn * L * Dm));
    std::vector<T> hfin(static_cast<std::size_t>(Bn * Dm * N));
    std::vector<T> states(opt.keep_states ? static_cast<std::size_t>(Bn * L * Dm * N) : 0);

    // Few long lanes: parallelize inside each sweep level. Many lanes:
    // parallelize across lanes.
    const std::int64_t lanes = Bn * Dm;
    const bool inner_threads = lanes < 4 * num_threads();
#pragma omp parallel for collapse(2) schedule(static) if (!inner_threads && lanes * L * N > (1 << 16))
    for (std::int64_t b = 0; b < Bn; ++b) {
        for (std::int64_t d = 0; d < Dm; ++d) {
            std::vector<Affine<T>> elem(static_cast<std::size_t>(L));
            std::vector<Affine<T>> e(static_cast<std::size_t>(padded));
            std::vector<T> acc(static_cast<std::size_t>(L), T(0));
            for (std::int64_t n = 0; n < N; ++n) {
                const T a_dn = A[d * N + n];
                for (std::int64_t t = 0; t < L; ++t) {
                    const std::int64_t row = b * L + t;
                    const auto c = coeff_rt(dl[row * Dm + d], a_dn, opt.discretization);
                    elem[static_cast<std::size_t>(t)] = {c.abar, c.phi * Bm[row * N + n] * x[row * Dm + d]};
                }
                std::copy(elem.begin(), elem.end(), e.begin());
                std::fill(e.begin() + L, e.end(), Affine<T>{T(1), T(0)});
                blelloch_exclusive(e, inner_threads);
                for (std::int64_t t = 0; t < L; ++t) {
                    const auto& el = elem[static_cast<std::size_t>(t)];
                    const T h = el.a * e[static_cast<std::size_t>(t)].b + el.b;
                    const std::int64_t row = b * L + t;
                    acc[static_cast<std::size_t>(t)] += Cm[row * N + n] * h;
                    if (opt.keep_states) states[static_cast<std::size_t>((row * Dm + d) * N + n)] = h;
                    if (t == L - 1) hfin[static_cast<std::size_t>((b * Dm + d) * N + n)] = h;
                }
            }
            for (std::int64_t t = 0; t < L; ++t) {
                const std::int64_t row = b * L + t;
                y[static_cast<std::size_t>(row * Dm + d)] = acc[static_cast<std::size_t>(t)] + D[d] * x[row * Dm + d];
            }
        }
    }
    ScanOutput<T> out;
    out.y = Tensor<T>(in.x.shape(), std::move(y));
    out.h_final = Tensor<T>(Shape{Bn, Dm, N}, std::move(hfin));
    if (opt.keep_states) out.states = Tensor<T>(Shape{Bn, L, Dm, N}, std::move(states));
    return out;
}

namespace {

// Reverse-scan adjoint of one block. hs [L, N, kLanes] holds the forward
// states; coefficients are recomputed. Outputs are [L, kLanes] for gx and
// gdelta, [L, N] for gB and gC (accumulated), [N, kLanes] for gA and
// [kLanes] for gD.
template <bool Zoh, typename T>
void reverse_lanes(std::int64_t L, std::int64_t N, const LaneBlock<T>& blk, const T* __restrict Bm,
                   const T* __restrict Cm, const T* __restrict gy, const T* __restrict hs, T* __restrict gx,
                   T* __restrict gdelta, T* __restrict gA, T* __restrict gB, T* __restrict gC, T* __restrict gD) {
    constexpr std::int64_t W = kLanes;
    const T* __restrict xs = blk.x.data();
    const T* __restrict ds = blk.delta.data();
    const T* __restrict as = blk.a.data();
    const T* __restrict ias = blk.inv_a.data();
    std::vector<T> carry(static_cast<std::size_t>(N * W), T(0));
    T* __restrict cr = carry.data();
    const T zeros[W] = {};
    for (std::int64_t t = L - 1; t >= 0; --t) {
        const T* xr = xs + t * W;
        const T* dr = ds + t * W;
        const T* gr = gy + t * W;
        T px[W], pdel[W] = {};
        for (std::int64_t j = 0; j < W; ++j) {
            px[j] = blk.d[j] * gr[j];
            gD[j] += gr[j] * xr[j];
        }
        for (std::int64_t n = 0; n < N; ++n) {
            const T bn = Bm[t * N + n];
            const T cn = Cm[t * N + n];
            const T* an = as + n * W;
            const T* ian = ias + n * W;
            const T* hn = hs + (t * N + n) * W;
            const T* hp = t > 0 ? hn - N * W : zeros;
            T* cn_carry = cr + n * W;
            T* gan = gA + n * W;
            T db = T(0), dc = T(0);
#pragma omp simd reduction(+ : db, dc)
            for (std::int64_t j = 0; j < W; ++j) {
                const auto c = coeff<Zoh, true>(dr[j], an[j], ian[j]);
                const T gh = cn * gr[j] + cn_carry[j];
                const T da = gh * hp[j];
                const T dphi = gh * xr[j] * bn;
                dc += gr[j] * hn[j];
                db += gh * xr[j] * c.phi;
                px[j] += gh * c.phi * bn;
                pdel[j] += da * an[j] * c.abar + dphi * (Zoh ? c.abar : T(1));
                gan[j] += da * dr[j] * c.abar + dphi * c.slope;
                cn_carry[j] = gh * c.abar;
            }
            gB[t * N + n] += db;
            gC[t * N + n] += dc;
        }
        for (std::int64_t j = 0; j < W; ++j) {
            gx[t * W + j] = px[j];
            gdelta[t * W + j] = pdel[j];
        }
    }
}

// Output spans may be empty to skip a gradient; all non-empty spans are
// accumulated into.
template <typename T>
void backward_kernel(const ScanInput<T>& in, const ScanDims& dims, const T* gy, Discretization mode, std::span<T> gx,
                     std::span<T> gdelta, std::span<T> gA, std::span<T> gB, std::span<T> gC, std::span<T> gD) {
    const std::int64_t Bn = dims.batch, L = dims.length, Dm = dims.channels, N = dims.state;
    const T* x = in.x.data().data();
    const T* dl = in.delta.data().data();
    const T* A = in.A.data().data();
    const T* Bm = in.Bmat.data().data();
    const T* Cm = in.Cmat.data().data();
    const T* D = in.D.data().data();
    const bool zoh = mode == Discretization::Zoh;
    const std::int64_t blocks = (Dm + kLanes - 1) / kLanes;

    // Gradients land in local buffers first; dA and dD are summed over the
    // batch in order.
    const auto rows = static_cast<std::size_t>(Bn * L);
    auto bx = scratch<T>(rows * Dm), bdel = scratch<T>(rows * Dm);
    std::vector<T> bB(rows * N), bC(rows * N);
    std::vector<T> part_A(static_cast<std::size_t>(Bn * N * Dm), T(0));
    std::vector<T> part_D(static_cast<std::size_t>(Bn * Dm), T(0));

#pragma omp parallel for schedule(static) if (Bn > 1 && Bn * L * Dm * N > (1 << 16))
    for (std::int64_t b = 0; b < Bn; ++b) {
        const std::int64_t off = b * L;
        const auto lw = static_cast<std::size_t>(L * kLanes);
        LaneBlock<T> blk(L, N);
        std::vector<T> h(static_cast<std::size_t>(N * kLanes)), gab(static_cast<std::size_t>(N * kLanes)), gdd(kLanes);
        auto yb = scratch<T>(lw), hs = scratch<T>(lw * static_cast<std::size_t>(N));
        auto gyb = scratch<T>(lw), gxb = scratch<T>(lw), gdb = scratch<T>(lw);
        for (std::int64_t k = 0; k < blocks; ++k) {
            blk.load(x + off * Dm, dl + off * Dm, A, D, L, Dm, N, k * kLanes);
            const std::int64_t d0 = blk.d0, dn = blk.dn;
            for (std::int64_t t = 0; t < L; ++t) {
                for (std::int64_t j = 0; j < kLanes; ++j) gyb[t * kLanes + j] = j < dn ? gy[(off + t) * Dm + d0 + j] : T(0);
            }
            std::fill(h.begin(), h.end(), T(0));
            std::fill(gab.begin(), gab.end(), T(0));
            std::fill(gdd.begin(), gdd.end(), T(0));
            T* pB = bB.data() + off * N;
            T* pC = bC.data() + off * N;
            if (zoh) {
                forward_lanes<true>(L, N, blk, Bm + off * N, Cm + off * N, yb.get(), h.data(), hs.get());
                reverse_lanes<true>(L, N, blk, Bm + off * N, Cm + off * N, gyb.get(), hs.get(), gxb.get(), gdb.get(),
                                    gab.data(), pB, pC, gdd.data());
            } else {
                forward_lanes<false>(L, N, blk, Bm + off * N, Cm + off * N, yb.get(), h.data(), hs.get());
                reverse_lanes<false>(L, N, blk, Bm + off * N, Cm + off * N, gyb.get(), hs.get(), gxb.get(), gdb.get(),
                                     gab.data(), pB, pC, gdd.data());
            }
            for (std::int64_t t = 0; t < L; ++t) {
                for (std::int64_t j = 0; j < dn; ++j) {
                    const auto src = static_cast<std::size_t>(t * kLanes + j);
                    const auto dst = static_cast<std::size_t>((off + t) * Dm + d0 + j);
                    bx[dst] = gxb[src];
                    bdel[dst] = gdb[src];
                }
            }
            for (std::int64_t j = 0; j < dn; ++j) {
                for (std::int64_t n = 0; n < N; ++n) part_A[static_cast<std::size_t>((b * Dm + d0 + j) * N + n)] = gab[static_cast<std::size_t>(n * kLanes + j)];
                part_D[static_cast<std::size_t>(b * Dm + d0 + j)] = gdd[static_cast<std::size_t>(j)];
            }
        }
    }
    auto add = [](std::span<T> dst, const T* src) {
        if (!dst.empty()) std::transform(dst.begin(), dst.end(), src, dst.begin(), std::plus<>());
    };
    add(gx, bx.get());
    add(gdelta, bdel.get());
    add(gB, bB.data());
    add(gC, bC.data());
    for (std::int64_t b = 0; b < Bn; ++b) {
        if (!gA.empty()) {
            for (std::int64_t i = 0; i < Dm * N; ++i) gA[i] += part_A[static_cast<std::size_t>(b * Dm * N + i)];
        }
        if (!gD.empty()) {
            for (std::int64_t i = 0; i < Dm; ++i) gD[i] += part_D[static_cast<std::size_t>(b * Dm + i)];
        }
    }
}

}  // namespace

template <typename T>
ScanGradients<T> selective_scan_backward(const ScanInput<T>& in, const Tensor<T>& grad_y, const ScanOptions& opt) {
    const auto dims = validate(in);
    if (grad_y.shape() != in.x.shape()) {
        throw DimensionError("selective scan backward: grad_y shape " + to_string(grad_y.shape()) +
                             " != y shape " + to_string(in.x.shape()));
    }
    ScanGradients<T> g{Tensor<T>(in.x.shape()),    Tensor<T>(in.delta.shape()), Tensor<T>(in.A.shape()),
                       Tensor<T>(in.Bmat.shape()), Tensor<T>(in.Cmat.shape()),  Tensor<T>(in.D.shape())};
    backward_kernel(in, dims, grad_y.data().data(), opt.discretization, g.x.mutable_data(), g.delta.mutable_data(),
                    g.A.mutable_data(), g.Bmat.mutable_data(), g.Cmat.mutable_data(), g.D.mutable_data());
    return g;
}

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& x, const Tensor<T>& delta, const Tensor<T>& A, const Tensor<T>& Bmat,
                         const Tensor<T>& Cmat, const Tensor<T>& D, ScanAlgorithm algorithm,
                         Discretization discretization) {
    ScanInput<T> in{x, delta, A, Bmat, Cmat, D};
    ScanOptions opt;
    opt.discretization = discretization;
    auto out = algorithm == ScanAlgorithm::Parallel ? selective_scan_parallel(in, opt)
                                                    : selective_scan_sequential(in, opt);
    return autograd::record("selective_scan", out.y, {x, delta, A, Bmat, Cmat, D},
                            [in, discretization](std::span<const T> g) {
        const ScanDims dims{in.x.dim(0), in.x.dim(1), in.x.dim(2), in.A.dim(1)};
        backward_kernel(in, dims, g.data(), discretization, autograd::sink(in.x), autograd::sink(in.delta),
                        autograd::sink(in.A), autograd::sink(in.Bmat), autograd::sink(in.Cmat),
                        autograd::sink(in.D));
    });
}

std::uint64_t state_update_count() {
    return g_state_updates.load(std::memory_order_relaxed);
}

void reset_state_update_count() {
    g_state_updates.store(0, std::memory_order_relaxed);
}

#define PIXMAMBA_INSTANTIATE(T)                                                                                    \
    template ScanDims validate(const ScanInput<T>&);                                                               \
    template std::pair<Tensor<T>, Tensor<T>> zoh_discretize(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                                            Discretization);                                      \
    template ScanOutput<T> selective_scan_sequential(const ScanInput<T>&, const ScanOptions&);                     \
    template ScanOutput<T> selective_scan_parallel(const ScanInput<T>&, const ScanOptions&);                       \
    template ScanGradients<T> selective_scan_backward(const ScanInput<T>&, const Tensor<T>&, const ScanOptions&);  \
    template Tensor<T> selective_scan(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                      const Tensor<T>&, const Tensor<T>&, ScanAlgorithm, Discretization);

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba::ssm
