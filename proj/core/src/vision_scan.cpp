#include "pixmamba/vision_scan.hpp"

#include <cmath>
#include <sstream>

namespace pixmamba {

std::string to_string(ScanDirection d) {
    switch (d) {
        case ScanDirection::RowForward: return "row_forward";
        case ScanDirection::RowBackward: return "row_backward";
        case ScanDirection::ColumnForward: return "column_forward";
        case ScanDirection::ColumnBackward: return "column_backward";
    }
    return "unknown";
}

ScanDirection parse_scan_direction(const std::string& name) {
    for (auto d : default_directions(4)) {
        if (to_string(d) == name) return d;
    }
    throw ConfigError("unknown scan direction '" + name + "'");
}

std::vector<ScanDirection> parse_scan_directions(const std::string& list) {
    std::vector<ScanDirection> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(parse_scan_direction(item));
    }
    if (out.empty()) throw ConfigError("scan direction list is empty");
    return out;
}

std::string to_string(const std::vector<ScanDirection>& dirs) {
    std::string s;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        if (i > 0) s += ',';
        s += to_string(dirs[i]);
    }
    return s;
}

std::vector<ScanDirection> default_directions(int count) {
    switch (count) {
        case 1: return {ScanDirection::RowForward};
        case 2: return {ScanDirection::RowForward, ScanDirection::ColumnForward};
        case 4:
            return {ScanDirection::RowForward, ScanDirection::RowBackward, ScanDirection::ColumnForward,
                    ScanDirection::ColumnBackward};
        default: throw ConfigError("direction count must be 1, 2 or 4, got " + std::to_string(count));
    }
}

std::vector<std::int64_t> scan_order(std::int64_t H, std::int64_t W, ScanDirection dir) {
    const std::int64_t n = H * W;
    std::vector<std::int64_t> order(static_cast<std::size_t>(n));
    const bool by_column = dir == ScanDirection::ColumnForward || dir == ScanDirection::ColumnBackward;
    const bool reversed = dir == ScanDirection::RowBackward || dir == ScanDirection::ColumnBackward;
    for (std::int64_t k = 0; k < n; ++k) {
        const std::int64_t idx = by_column ? (k % H) * W + k / H : k;
        order[static_cast<std::size_t>(reversed ? n - 1 - k : k)] = idx;
    }
    return order;
}

template <typename T>
Tensor<T> scan_flatten(const Tensor<T>& x, ScanDirection dir) {
    if (x.rank() != 4) throw DimensionError("scan_flatten expects [B,C,H,W], got " + to_string(x.shape()));
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3), L = H * W;
    auto order = scan_order(H, W, dir);
    std::vector<T> out(static_cast<std::size_t>(B * L * C));
    auto src = x.data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t k = 0; k < L; ++k) {
            const std::int64_t p = order[static_cast<std::size_t>(k)];
            T* dst = out.data() + (b * L + k) * C;
            for (std::int64_t c = 0; c < C; ++c) dst[c] = src[(b * C + c) * L + p];
        }
    }
    return autograd::record("scan_flatten", Tensor<T>(Shape{B, L, C}, std::move(out)), {x},
                            [x, order = std::move(order), B, C, L](std::span<const T> g) {
        auto gx = autograd::sink(x);
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t k = 0; k < L; ++k) {
                const std::int64_t p = order[static_cast<std::size_t>(k)];
                const T* gk = g.data() + (b * L + k) * C;
                for (std::int64_t c = 0; c < C; ++c) gx[(b * C + c) * L + p] += gk[c];
            }
        }
    });
}

template <typename T>
Tensor<T> scan_unflatten(const Tensor<T>& seq, std::int64_t H, std::int64_t W, ScanDirection dir) {
    if (seq.rank() != 3 || seq.dim(1) != H * W) {
        throw DimensionError("scan_unflatten expects [B," + std::to_string(H * W) + ",C], got " +
                             to_string(seq.shape()));
    }
    const std::int64_t B = seq.dim(0), L = H * W, C = seq.dim(2);
    auto order = scan_order(H, W, dir);
    std::vector<T> out(static_cast<std::size_t>(B * C * L));
    auto src = seq.data();
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t k = 0; k < L; ++k) {
            const std::int64_t p = order[static_cast<std::size_t>(k)];
            const T* s = src.data() + (b * L + k) * C;
            for (std::int64_t c = 0; c < C; ++c) out[static_cast<std::size_t>((b * C + c) * L + p)] = s[c];
        }
    }
    return autograd::record("scan_unflatten", Tensor<T>(Shape{B, C, H, W}, std::move(out)), {seq},
                            [seq, order = std::move(order), B, C, L](std::span<const T> g) {
        auto gs = autograd::sink(seq);
        for (std::int64_t b = 0; b < B; ++b) {
            for (std::int64_t k = 0; k < L; ++k) {
                const std::int64_t p = order[static_cast<std::size_t>(k)];
                T* d = gs.data() + (b * L + k) * C;
                for (std::int64_t c = 0; c < C; ++c) d[c] += g[(b * C + c) * L + p];
            }
        }
    });
}

std::int64_t EmbConfig::inner_dim() const {
    const double e = static_cast<double>(dim) * expand;
    const auto r = static_cast<std::int64_t>(std::llround(e));
    if (std::abs(e - static_cast<double>(r)) > 1e-9 || r < 1) {
        throw ConfigError("dim * expand must be a positive integer, got " + std::to_string(e));
    }
    return r;
}

void EmbConfig::validate() const {
    if (dim < 1 || d_state < 1) throw ConfigError("EMB dim and d_state must be positive");
    inner_dim();
    if (dwconv_kernel < 1 || dwconv_kernel % 2 == 0) throw ConfigError("dwconv_kernel must be odd");
    if (directions.empty()) throw ConfigError("at least one scan direction is required");
}

template <typename T>
SpatialChannelAttention<T>::SpatialChannelAttention(ParamFactory<T> f, std::int64_t channels)
    : fc1(f.sub("fc1"), channels, std::max<std::int64_t>(1, channels / 4)),
      fc2(f.sub("fc2"), std::max<std::int64_t>(1, channels / 4), channels),
      spatial(f.sub("spatial"), channels, 1) {}

template <typename T>
Tensor<T> SpatialChannelAttention<T>::operator()(const Tensor<T>& x) const {
    auto pooled = reduce_mean(x, {1}, true);
    auto channel_gate = sigmoid(fc2(silu(fc1(pooled))));
    auto spatial_gate = sigmoid(spatial(x));
    return x * channel_gate * spatial_gate;
}

template <typename T>
SelectiveSsm<T>::SelectiveSsm(ParamFactory<T> f, std::int64_t channels, std::int64_t n, ssm::Discretization disc,
                              ssm::ScanAlgorithm algo)
    : dt_rank((channels + 15) / 16), d_state(n), discretization(disc), algorithm(algo) {
    x_proj = Linear<T>(f.sub("x_proj"), channels, dt_rank + 2 * n, false);
    const double bound = 1.0 / std::sqrt(static_cast<double>(dt_rank));
    auto dtf = f.sub("dt_proj");
    dt_proj.weight = dtf.uniform("weight", {dt_rank, channels}, -bound, bound);
    std::vector<T> dt_bias(static_cast<std::size_t>(channels));
    for (auto& v : dt_bias) {
        const double dt = f.rng().uniform(1e-3, 1e-1);
        v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
    }
    dt_proj.bias = dtf.from_values("bias", {channels}, std::move(dt_bias));
    std::vector<T> a_log(static_cast<std::size_t>(channels * n));
    for (std::int64_t e = 0; e < channels; ++e) {
        for (std::int64_t k = 0; k < n; ++k) a_log[static_cast<std::size_t>(e * n + k)] = static_cast<T>(std::log(double(k + 1)));
    }
    A_log = f.from_values("A_log", {channels, n}, std::move(a_log));
    D = f.constant("D", {channels}, 1.0);
}

template <typename T>
Tensor<T> SelectiveSsm<T>::operator()(const Tensor<T>& seq) const {
    auto xdbl = x_proj(seq);
    auto dt_in = narrow(xdbl, -1, 0, dt_rank);
    auto Bm = narrow(xdbl, -1, dt_rank, d_state);
    auto Cm = narrow(xdbl, -1, dt_rank + d_state, d_state);
    auto delta = softplus(dt_proj(dt_in));
    auto A = neg(exp(A_log));
    return ssm::selective_scan(seq, delta, A, Bm, Cm, D, algorithm, discretization);
}

template <typename T>
Ess2d<T>::Ess2d(ParamFactory<T> f, const EmbConfig& cfg)
    : directions(cfg.directions), identity_scan(cfg.identity_scan) {
    const auto E = cfg.inner_dim();
    for (std::size_t i = 0; i < directions.size(); ++i) {
        branches.emplace_back(f.sub("scan" + std::to_string(i)), E, cfg.d_state, cfg.discretization, cfg.algorithm);
    }
    attention = SpatialChannelAttention<T>(f.sub("attn"), E);
}

template <typename T>
Tensor<T> Ess2d<T>::operator()(const Tensor<T>& x) const {
    const std::int64_t H = x.dim(2), W = x.dim(3);
    Tensor<T> out;
    for (std::size_t i = 0; i < directions.size(); ++i) {
        auto seq = scan_flatten(x, directions[i]);
        auto y = identity_scan ? seq : branches[i](seq);
        auto merged = scan_unflatten(attention(y), H, W, directions[i]);
        out = out.defined() ? out + merged : merged;
    }
    return out;
}

template <typename T>
EmbBlock<T>::EmbBlock(ParamFactory<T> f, const EmbConfig& cfg) {
    cfg.validate();
    const auto E = cfg.inner_dim();
    norm = LayerNorm<T>(f.sub("norm"), cfg.dim);
    proj_in = Linear<T>(f.sub("proj_in"), cfg.dim, E, false);
    Conv2dOptions o;
    o.padding = cfg.dwconv_kernel / 2;
    o.groups = static_cast<int>(E);
    dwconv = Conv2d<T>(f.sub("dwconv"), E, E, cfg.dwconv_kernel, o);
    ess2d = Ess2d<T>(f.sub("ess2d"), cfg);
    proj_out = Linear<T>(f.sub("proj_out"), E, cfg.dim, false);
}

template <typename T>
Tensor<T> EmbBlock<T>::operator()(const Tensor<T>& x) const {
    auto h = to_channels_first(proj_in(norm(to_channels_last(x))));
    h = ess2d(silu(dwconv(h)));
    return x + to_channels_first(proj_out(to_channels_last(h)));
}

template <typename T>
MubBlock<T>::MubBlock(ParamFactory<T> f, const EmbConfig& cfg) {
    if (cfg.dim % 2 != 0) throw ConfigError("MUB needs an even channel count, got " + std::to_string(cfg.dim));
    proj = Linear<T>(f.sub("proj"), cfg.dim, cfg.dim);
    emb = EmbBlock<T>(f.sub("emb"), cfg);
    up = TransposeConv2d<T>(f.sub("up"), cfg.dim, cfg.dim / 2, 2, 2);
    norm = LayerNorm<T>(f.sub("norm"), cfg.dim / 2);
}

template <typename T>
Tensor<T> MubBlock<T>::operator()(const Tensor<T>& x) const {
    auto h = emb(to_channels_first(proj(to_channels_last(x))));
    return to_channels_first(norm(to_channels_last(up(h))));
}

template <typename T>
PatchExpand<T>::PatchExpand(ParamFactory<T> f, std::int64_t channels) {
    if (channels % 2 != 0) throw ConfigError("patch expand needs an even channel count, got " + std::to_string(channels));
    proj = Linear<T>(f.sub("proj"), channels, 2 * channels, false);
    norm = LayerNorm<T>(f.sub("norm"), channels / 2);
}

template <typename T>
Tensor<T> PatchExpand<T>::operator()(const Tensor<T>& x) const {
    const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    auto h = reshape(proj(to_channels_last(x)), {B, H, W, 2, 2, C / 2});
    h = reshape(permute(h, {0, 1, 3, 2, 4, 5}), {B, 2 * H, 2 * W, C / 2});
    return to_channels_first(norm(h));
}

#define PIXMAMBA_INSTANTIATE(T)                                                                  \
    template Tensor<T> scan_flatten(const Tensor<T>&, ScanDirection);                            \
    template Tensor<T> scan_unflatten(const Tensor<T>&, std::int64_t, std::int64_t, ScanDirection); \
    template struct SpatialChannelAttention<T>;                                                  \
    template struct SelectiveSsm<T>;                                                             \
    template struct Ess2d<T>;                                                                    \
    template struct EmbBlock<T>;                                                                 \
    template struct MubBlock<T>;                                                                 \
    template struct PatchExpand<T>;

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
