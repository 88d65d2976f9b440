#include <algorithm>
#include <cmath>

#include "pixmamba/ops.hpp"

namespace pixmamba {

namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
    if (s.size() != rank) {
        throw DimensionError(std::string(what) + " expects a rank-" + std::to_string(rank) + " tensor, got " +
                             to_string(s));
    }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, Conv2dOptions opt) {
    require_rank(x.shape(), 4, "conv2d input");
    require_rank(w.shape(), 4, "conv2d weight");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::int64_t O = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t g = opt.groups, s = opt.stride, pad = opt.padding;
    if (g < 1 || C % g != 0 || O % g != 0 || Cg != C / g) {
        throw ConfigError("conv2d: invalid group count " + std::to_string(g) + " for input " + to_string(x.shape()) +
                          " and weight " + to_string(w.shape()));
    }
    if (s < 1 || pad < 0) throw ConfigError("conv2d: stride must be >= 1 and padding >= 0");
    if (kh > H + 2 * pad || kw > W + 2 * pad) {
        throw ConfigError("conv2d: kernel " + to_string(w.shape()) + " larger than padded input " + to_string(x.shape()));
    }
    if (bias.defined() && bias.numel() != O) throw DimensionError("conv2d bias must have " + std::to_string(O) + " elements");
    const std::int64_t Ho = (H + 2 * pad - kh) / s + 1;
    const std::int64_t Wo = (W + 2 * pad - kw) / s + 1;
    const std::int64_t Og = O / g;

    std::vector<T> out(static_cast<std::size_t>(B * O * Ho * Wo));
    const T* px = x.data().data();
    const T* pw = w.data().data();
    const T* pb = bias.defined() ? bias.data().data() : nullptr;
#pragma omp parallel for collapse(2) schedule(static) if (B * O * Ho * Wo * Cg * kh * kw > (1 << 18))
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < O; ++o) {
            const std::int64_t c0 = (o / Og) * Cg;
            T* po = out.data() + (b * O + o) * Ho * Wo;
            for (std::int64_t i = 0; i < Ho; ++i) {
                for (std::int64_t j = 0; j < Wo; ++j) {
                    T acc = pb ? pb[o] : T(0);
                    for (std::int64_t c = 0; c < Cg; ++c) {
                        const T* xc = px + (b * C + c0 + c) * H * W;
                        const T* wc = pw + (o * Cg + c) * kh * kw;
                        for (std::int64_t p = 0; p < kh; ++p) {
                            const std::int64_t ii = i * s - pad + p;
                            if (ii < 0 || ii >= H) continue;
                            for (std::int64_t q = 0; q < kw; ++q) {
                                const std::int64_t jj = j * s - pad + q;
                                if (jj < 0 || jj >= W) continue;
                                acc += wc[p * kw + q] * xc[ii * W + jj];
                            }
                        }
                    }
                    po[i * Wo + j] = acc;
                }
            }
        }
    }
    Tensor<T> result(Shape{B, O, Ho, Wo}, std::move(out));
    return autograd::record("conv2d", result, {x, w, bias},
                            [x, w, bias, B, C, H, W, O, Cg, kh, kw, s, pad, Ho, Wo, Og](std::span<const T> gout) {
        auto gx = autograd::sink(x);
        auto gw = autograd::sink(w);
        auto gb = autograd::sink(bias);
        const T* px = x.data().data();
        const T* pw = w.data().data();
        const T* g = gout.data();
        if (!gb.empty()) {
            for (std::int64_t o = 0; o < O; ++o) {
                T acc = 0;
                for (std::int64_t b = 0; b < B; ++b) {
                    const T* go = g + (b * O + o) * Ho * Wo;
                    for (std::int64_t i = 0; i < Ho * Wo; ++i) acc += go[i];
                }
                gb[o] += acc;
            }
        }
        if (!gx.empty()) {
#pragma omp parallel for schedule(static) if (B > 1)
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t o = 0; o < O; ++o) {
                    const std::int64_t c0 = (o / Og) * Cg;
                    const T* go = g + (b * O + o) * Ho * Wo;
                    for (std::int64_t c = 0; c < Cg; ++c) {
                        T* gxc = gx.data() + (b * C + c0 + c) * H * W;
                        const T* wc = pw + (o * Cg + c) * kh * kw;
                        for (std::int64_t i = 0; i < Ho; ++i) {
                            for (std::int64_t j = 0; j < Wo; ++j) {
                                const T gv = go[i * Wo + j];
                                for (std::int64_t p = 0; p < kh; ++p) {
                                    const std::int64_t ii = i * s - pad + p;
                                    if (ii < 0 || ii >= H) continue;
                                    for (std::int64_t q = 0; q < kw; ++q) {
                                        const std::int64_t jj = j * s - pad + q;
                                        if (jj < 0 || jj >= W) continue;
                                        gxc[ii * W + jj] += gv * wc[p * kw + q];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        if (!gw.empty()) {
#pragma omp parallel for schedule(static) if (O > 1)
            for (std::int64_t o = 0; o < O; ++o) {
                const std::int64_t c0 = (o / Og) * Cg;
                for (std::int64_t c = 0; c < Cg; ++c) {
                    T* gwc = gw.data() + (o * Cg + c) * kh * kw;
                    for (std::int64_t p = 0; p < kh; ++p) {
                        for (std::int64_t q = 0; q < kw; ++q) {
                            T acc = 0;
                            for (std::int64_t b = 0; b < B; ++b) {
                                const T* xc = px + (b * C + c0 + c) * H * W;
                                const T* go = g + (b * O + o) * Ho * Wo;
                                for (std::int64_t i = 0; i < Ho; ++i) {
                                    const std::int64_t ii = i * s - pad + p;
                                    if (ii < 0 || ii >= H) continue;
                                    for (std::int64_t j = 0; j < Wo; ++j) {
                                        const std::int64_t jj = j * s - pad + q;
                                        if (jj < 0 || jj >= W) continue;
                                        acc += go[i * Wo + j] * xc[ii * W + jj];
                                    }
                                }
                            }
                            gwc[p * kw + q] += acc;
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> transpose_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride, int padding) {
    require_rank(x.shape(), 4, "transpose_conv2d input");
    require_rank(w.shape(), 4, "transpose_conv2d weight");
    if (stride < 1 || padding < 0) throw ConfigError("transpose_conv2d: stride must be >= 1 and padding >= 0");
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (w.dim(0) != C) {
        throw ConfigError("transpose_conv2d: weight " + to_string(w.shape()) + " does not match input channels of " +
                          to_string(x.shape()));
    }
    const std::int64_t O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::int64_t s = stride, pad = padding;
    const std::int64_t Ho = (H - 1) * s - 2 * pad + kh;
    const std::int64_t Wo = (W - 1) * s - 2 * pad + kw;
    if (Ho <= 0 || Wo <= 0) throw ConfigError("transpose_conv2d: padding leaves an empty output");
    if (bias.defined() && bias.numel() != O) {
        throw DimensionError("transpose_conv2d bias must have " + std::to_string(O) + " elements");
    }

    std::vector<T> out(static_cast<std::size_t>(B * O * Ho * Wo));
    const T* px = x.data().data();
    const T* pw = w.data().data();
    const T* pb = bias.defined() ? bias.data().data() : nullptr;
#pragma omp parallel for collapse(2) schedule(static) if (B * O * H * W * C * kh * kw > (1 << 18))
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t o = 0; o < O; ++o) {
            T* po = out.data() + (b * O + o) * Ho * Wo;
            std::fill(po, po + Ho * Wo, pb ? pb[o] : T(0));
            for (std::int64_t c = 0; c < C; ++c) {
                const T* xc = px + (b * C + c) * H * W;
                const T* wc = pw + (c * O + o) * kh * kw;
                for (std::int64_t i = 0; i < H; ++i) {
                    for (std::int64_t j = 0; j < W; ++j) {
                        const T xv = xc[i * W + j];
                        for (std::int64_t p = 0; p < kh; ++p) {
                            const std::int64_t oi = i * s - pad + p;
                            if (oi < 0 || oi >= Ho) continue;
                            for (std::int64_t q = 0; q < kw; ++q) {
                                const std::int64_t oj = j * s - pad + q;
                                if (oj < 0 || oj >= Wo) continue;
                                po[oi * Wo + oj] += xv * wc[p * kw + q];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor<T> result(Shape{B, O, Ho, Wo}, std::move(out));
    return autograd::record("transpose_conv2d", result, {x, w, bias},
                            [x, w, bias, B, C, H, W, O, kh, kw, s, pad, Ho, Wo](std::span<const T> gout) {
        auto gx = autograd::sink(x);
        auto gw = autograd::sink(w);
        auto gb = autograd::sink(bias);
        const T* px = x.data().data();
        const T* pw = w.data().data();
        const T* g = gout.data();
        if (!gb.empty()) {
            for (std::int64_t o = 0; o < O; ++o) {
                T acc = 0;
                for (std::int64_t b = 0; b < B; ++b) {
                    const T* go = g + (b * O + o) * Ho * Wo;
                    for (std::int64_t i = 0; i < Ho * Wo; ++i) acc += go[i];
                }
                gb[o] += acc;
            }
        }
        if (!gx.empty()) {
#pragma omp parallel for collapse(2) schedule(static) if (B * C > 1)
            for (std::int64_t b = 0; b < B; ++b) {
                for (std::int64_t c = 0; c < C; ++c) {
                    T* gxc = gx.data() + (b * C + c) * H * W;
                    for (std::int64_t i = 0; i < H; ++i) {
                        for (std::int64_t j = 0; j < W; ++j) {
                            T acc = 0;
                            for (std::int64_t o = 0; o < O; ++o) {
                                const T* go = g + (b * O + o) * Ho * Wo;
                                const T* wc = pw + (c * O + o) * kh * kw;
                                for (std::int64_t p = 0; p < kh; ++p) {
                                    const std::int64_t oi = i * s - pad + p;
                                    if (oi < 0 || oi >= Ho) continue;
                                    for (std::int64_t q = 0; q < kw; ++q) {
                                        const std::int64_t oj = j * s - pad + q;
                                        if (oj < 0 || oj >= Wo) continue;
                                        acc += go[oi * Wo + oj] * wc[p * kw + q];
                                    }
                                }
                            }
                            gxc[i * W + j] += acc;
                        }
                    }
                }
            }
        }
        if (!gw.empty()) {
#pragma omp parallel for schedule(static) if (C > 1)
            for (std::int64_t c = 0; c < C; ++c) {
                for (std::int64_t o = 0; o < O; ++o) {
                    T* gwc = gw.data() + (c * O + o) * kh * kw;
                    for (std::int64_t p = 0; p < kh; ++p) {
                        for (std::int64_t q = 0; q < kw; ++q) {
                            T acc = 0;
                            for (std::int64_t b = 0; b < B; ++b) {
                                const T* xc = px + (b * C + c) * H * W;
                                const T* go = g + (b * O + o) * Ho * Wo;
                                for (std::int64_t i = 0; i < H; ++i) {
                                    const std::int64_t oi = i * s - pad + p;
                                    if (oi < 0 || oi >= Ho) continue;
                                    for (std::int64_t j = 0; j < W; ++j) {
                                        const std::int64_t oj = j * s - pad + q;
                                        if (oj < 0 || oj >= Wo) continue;
                                        acc += xc[i * W + j] * go[oi * Wo + oj];
                                    }
                                }
                            }
                            gwc[p * kw + q] += acc;
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
    require_rank(x.shape(), 3, "causal_conv1d input");
    require_rank(w.shape(), 2, "causal_conv1d weight");
    const std::int64_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
    if (w.dim(0) != C) throw DimensionError("causal_conv1d weight must be [C, k], got " + to_string(w.shape()));
    if (bias.defined() && bias.numel() != C) throw DimensionError("causal_conv1d bias must have C elements");
    const std::int64_t k = w.dim(1);
    const T* px = x.data().data();
    const T* pw = w.data().data();
    const T* pb = bias.defined() ? bias.data().data() : nullptr;
    std::vector<T> out(static_cast<std::size_t>(B * L * C));
#pragma omp parallel for collapse(2) schedule(static) if (B * L * C * k > (1 << 18))
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t t = 0; t < L; ++t) {
            T* yo = out.data() + (b * L + t) * C;
            for (std::int64_t c = 0; c < C; ++c) yo[c] = pb ? pb[c] : T(0);
            for (std::int64_t j = 0; j < k; ++j) {
                const std::int64_t src = t - (k - 1) + j;
                if (src < 0) continue;
                const T* xi = px + (b * L + src) * C;
                for (std::int64_t c = 0; c < C; ++c) yo[c] += pw[c * k + j] * xi[c];
            }
        }
    }
    Tensor<T> result(x.shape(), std::move(out));
    return autograd::record("causal_conv1d", result, {x, w, bias}, [x, w, bias, B, L, C, k](std::span<const T> g) {
        auto gx = autograd::sink(x);
        auto gw = autograd::sink(w);
        auto gb = autograd::sink(bias);
        const T* px = x.data().data();
        const T* pw = w.data().data();
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t t = 0; t < L; ++t) {
                const T* gt = g.data() + (b * L + t) * C;
                if (!gb.empty()) {
                    for (std::int64_t c = 0; c < C; ++c) gb[c] += gt[c];
                }
                for (std::int64_t j = 0; j < k; ++j) {
                    const std::int64_t src = t - (k - 1) + j;
                    if (src < 0) continue;
                    const T* xi = px + (b * L + src) * C;
                    if (!gx.empty()) {
                        T* gxi = gx.data() + (b * L + src) * C;
                        for (std::int64_t c = 0; c < C; ++c) gxi[c] += pw[c * k + j] * gt[c];
                    }
                    if (!gw.empty()) {
                        for (std::int64_t c = 0; c < C; ++c) gw[c * k + j] += xi[c] * gt[c];
                    }
                }
            }
        }
    });
}

template <typename T>
Tensor<T> global_avg_pool2d(const Tensor<T>& x) {
    require_rank(x.shape(), 4, "global_avg_pool2d input");
    return reduce_mean(x, {2, 3}, false);
}

namespace {

struct Tap {
    std::int64_t i0;
    std::int64_t i1;
    double w0;
    double w1;
};

// Half-pixel-center source taps for every output index along one axis.
std::vector<Tap> bilinear_taps(std::int64_t in, std::int64_t out) {
    std::vector<Tap> taps(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::int64_t i = 0; i < out; ++i) {
        double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
        if (src < 0) src = 0;
        auto i0 = static_cast<std::int64_t>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const std::int64_t i1 = std::min(i0 + 1, in - 1);
        const double l1 = src - static_cast<double>(i0);
        taps[static_cast<std::size_t>(i)] = {i0, i1, 1.0 - l1, l1};
    }
    return taps;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, std::int64_t H, std::int64_t W) {
    require_rank(x.shape(), 4, "bilinear_upsample input");
    const std::int64_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (H < h || W < w) {
        throw ConfigError("bilinear_upsample target " + std::to_string(H) + "x" + std::to_string(W) +
                          " smaller than source " + std::to_string(h) + "x" + std::to_string(w));
    }
    auto ty = bilinear_taps(h, H);
    auto tx = bilinear_taps(w, W);
    std::vector<T> out(static_cast<std::size_t>(B * C * H * W));
    const T* px = x.data().data();
    for (std::int64_t bc = 0; bc < B * C; ++bc) {
        const T* src = px + bc * h * w;
        T* dst = out.data() + bc * H * W;
        for (std::int64_t i = 0; i < H; ++i) {
            const auto& a = ty[static_cast<std::size_t>(i)];
            for (std::int64_t j = 0; j < W; ++j) {
                const auto& b = tx[static_cast<std::size_t>(j)];
                dst[i * W + j] = static_cast<T>(a.w0 * (b.w0 * src[a.i0 * w + b.i0] + b.w1 * src[a.i0 * w + b.i1]) +
                                                a.w1 * (b.w0 * src[a.i1 * w + b.i0] + b.w1 * src[a.i1 * w + b.i1]));
            }
        }
    }
    Tensor<T> result(Shape{B, C, H, W}, std::move(out));
    return autograd::record("bilinear_upsample", result, {x}, [x, ty, tx, B, C, h, w, H, W](std::span<const T> g) {
        auto gx = autograd::sink(x);
        for (std::int64_t bc = 0; bc < B * C; ++bc) {
            T* dst = gx.data() + bc * h * w;
            const T* gs = g.data() + bc * H * W;
            for (std::int64_t i = 0; i < H; ++i) {
                const auto& a = ty[static_cast<std::size_t>(i)];
                for (std::int64_t j = 0; j < W; ++j) {
                    const auto& b = tx[static_cast<std::size_t>(j)];
                    const double gv = gs[i * W + j];
                    dst[a.i0 * w + b.i0] += static_cast<T>(gv * a.w0 * b.w0);
                    dst[a.i0 * w + b.i1] += static_cast<T>(gv * a.w0 * b.w1);
                    dst[a.i1 * w + b.i0] += static_cast<T>(gv * a.w1 * b.w0);
                    dst[a.i1 * w + b.i1] += static_cast<T>(gv * a.w1 * b.w1);
                }
            }
        }
    });
}

#define PIXMAMBA_INSTANTIATE(T)                                                                         \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dOptions);     \
    template Tensor<T> transpose_conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int); \
    template Tensor<T> causal_conv1d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);             \
    template Tensor<T> global_avg_pool2d(const Tensor<T>&);                                             \
    template Tensor<T> bilinear_upsample(const Tensor<T>&, std::int64_t, std::int64_t);

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
