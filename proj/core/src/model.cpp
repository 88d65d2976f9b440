#include "pixmamba/model.hpp"

#include <cmath>
#include <sstream>

#include "pixmamba/config.hpp"

namespace pixmamba {

namespace {

std::string join(const std::array<std::int64_t, 3>& v) {
    return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

std::array<std::int64_t, 3> parse_depths(const std::string& key, const std::string& value) {
    auto v = parse_int_list(key, value);
    if (v.size() != 3) throw ConfigError(key + ": expected three comma-separated integers");
    return {v[0], v[1], v[2]};
}

std::string real_text(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

ModelConfig ModelConfig::full_scale() {
    ModelConfig c;
    c.image_height = 256;
    c.image_width = 256;
    c.patch_size = 4;
    c.base_dim = 64;
    c.encoder_depths = {2, 2, 4};
    c.decoder_depths = {4, 2, 2};
    c.pixnet_layers = 4;
    c.pixnet_dim = 32;
    c.pixnet_expand = 2.0;
    c.bpe_block = 16;
    c.d_state = 16;
    return c;
}

void ModelConfig::validate() const {
    if (image_height < 1 || image_width < 1 || patch_size < 1 || base_dim < 1 || d_state < 1) {
        throw ConfigError("image size, patch_size, base_dim and d_state must be positive");
    }
    for (auto d : encoder_depths) {
        if (d < 1) throw ConfigError("encoder_depths entries must be positive");
    }
    for (auto d : decoder_depths) {
        if (d < 1) throw ConfigError("decoder_depths entries must be positive");
    }
    if (image_height % (4 * patch_size) != 0 || image_width % (4 * patch_size) != 0) {
        throw ConfigError("image size " + std::to_string(image_height) + "x" + std::to_string(image_width) +
                          " must be divisible by 4 * patch_size = " + std::to_string(4 * patch_size));
    }
    emb(base_dim).validate();
    if (use_bpe && !use_pixnet) throw ConfigError("use_bpe requires use_pixnet");
    if (use_pixnet) {
        if (pixnet_layers < 0 || pixnet_dim < 1) throw ConfigError("pixnet_layers must be >= 0 and pixnet_dim > 0");
        pixnet_inner_dim();
    }
    if (use_bpe) {
        if (bpe_block < 1 || image_height % bpe_block != 0 || image_width % bpe_block != 0) {
            throw ConfigError("image size must be divisible by bpe_block = " + std::to_string(bpe_block));
        }
    }
}

EmbConfig ModelConfig::emb(std::int64_t dim) const {
    EmbConfig e;
    e.dim = dim;
    e.d_state = d_state;
    e.expand = expand;
    e.dwconv_kernel = dwconv_kernel;
    e.directions = scan_directions;
    e.discretization = discretization;
    e.algorithm = scan_algorithm;
    return e;
}

std::int64_t ModelConfig::pixnet_inner_dim() const {
    const double e = static_cast<double>(pixnet_dim) * pixnet_expand;
    const auto r = static_cast<std::int64_t>(std::llround(e));
    if (std::abs(e - static_cast<double>(r)) > 1e-9 || r < 1) {
        throw ConfigError("pixnet_dim * pixnet_expand must be a positive integer");
    }
    return r;
}

std::vector<std::string> ModelConfig::keys() {
    return {"image_height",  "image_width",    "patch_size",   "base_dim",       "encoder_depths",
            "decoder_depths", "pixnet_layers", "pixnet_dim",   "pixnet_expand",  "bpe_block",
            "d_state",       "expand",         "dwconv_kernel", "scan_directions", "discretization",
            "scan_algorithm", "use_mub",       "use_pixnet",   "use_bpe"};
}

bool ModelConfig::set(const std::string& key, const std::string& value) {
    if (key == "image_height") image_height = parse_int(key, value);
    else if (key == "image_width") image_width = parse_int(key, value);
    else if (key == "image_size") image_height = image_width = parse_int(key, value);
    else if (key == "patch_size") patch_size = parse_int(key, value);
    else if (key == "base_dim") base_dim = parse_int(key, value);
    else if (key == "encoder_depths") encoder_depths = parse_depths(key, value);
    else if (key == "decoder_depths") decoder_depths = parse_depths(key, value);
    else if (key == "pixnet_layers") pixnet_layers = parse_int(key, value);
    else if (key == "pixnet_dim") pixnet_dim = parse_int(key, value);
    else if (key == "pixnet_expand") pixnet_expand = parse_real(key, value);
    else if (key == "bpe_block") bpe_block = parse_int(key, value);
    else if (key == "d_state") d_state = parse_int(key, value);
    else if (key == "expand") expand = parse_real(key, value);
    else if (key == "dwconv_kernel") dwconv_kernel = static_cast<int>(parse_int(key, value));
    else if (key == "scan_directions") {
        // A bare count selects the canonical set.
        if (value == "1" || value == "2" || value == "4") scan_directions = default_directions(std::stoi(value));
        else scan_directions = parse_scan_directions(value);
    } else if (key == "discretization") {
        if (value == "zoh") discretization = ssm::Discretization::Zoh;
        else if (value == "euler") discretization = ssm::Discretization::Euler;
        else throw ConfigError("discretization must be zoh or euler, got '" + value + "'");
    } else if (key == "scan_algorithm") {
        if (value == "sequential") scan_algorithm = ssm::ScanAlgorithm::Sequential;
        else if (value == "parallel") scan_algorithm = ssm::ScanAlgorithm::Parallel;
        else throw ConfigError("scan_algorithm must be sequential or parallel, got '" + value + "'");
    } else if (key == "use_mub") use_mub = parse_bool(key, value);
    else if (key == "use_pixnet") use_pixnet = parse_bool(key, value);
    else if (key == "use_bpe") use_bpe = parse_bool(key, value);
    else return false;
    return true;
}

std::string ModelConfig::to_text() const {
    std::ostringstream os;
    os << "image_height=" << image_height << '\n'
       << "image_width=" << image_width << '\n'
       << "patch_size=" << patch_size << '\n'
       << "base_dim=" << base_dim << '\n'
       << "encoder_depths=" << join(encoder_depths) << '\n'
       << "decoder_depths=" << join(decoder_depths) << '\n'
       << "pixnet_layers=" << pixnet_layers << '\n'
       << "pixnet_dim=" << pixnet_dim << '\n'
       << "pixnet_expand=" << real_text(pixnet_expand) << '\n'
       << "bpe_block=" << bpe_block << '\n'
       << "d_state=" << d_state << '\n'
       << "expand=" << real_text(expand) << '\n'
       << "dwconv_kernel=" << dwconv_kernel << '\n'
       << "scan_directions=" << to_string(scan_directions) << '\n'
       << "discretization=" << (discretization == ssm::Discretization::Zoh ? "zoh" : "euler") << '\n'
       << "scan_algorithm=" << (scan_algorithm == ssm::ScanAlgorithm::Parallel ? "parallel" : "sequential") << '\n'
       << "use_mub=" << (use_mub ? "true" : "false") << '\n'
       << "use_pixnet=" << (use_pixnet ? "true" : "false") << '\n'
       << "use_bpe=" << (use_bpe ? "true" : "false") << '\n';
    return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig c;
    for (const auto& [k, v] : parse_key_values(text)) {
        if (!c.set(k, v)) throw ConfigError("unknown model key '" + k + "'");
    }
    return c;
}

template <typename T>
Tensor<T> bpe_sample(const Tensor<T>& bpe, std::int64_t H, std::int64_t W, std::int64_t block) {
    if (block < 1 || H % block != 0 || W % block != 0) {
        throw ConfigError("bpe_sample: " + std::to_string(H) + "x" + std::to_string(W) +
                          " is not divisible into blocks of " + std::to_string(block));
    }
    const std::int64_t gh = H / block, gw = W / block;
    if (bpe.rank() != 2 || bpe.dim(0) != gh * gw) {
        throw DimensionError("bpe_sample: expected [" + std::to_string(gh * gw) + ", Dp], got " +
                             to_string(bpe.shape()));
    }
    const std::int64_t dp = bpe.dim(1);
    auto grid = permute(reshape(bpe, {1, gh, gw, dp}), {0, 3, 1, 2});
    auto up = bilinear_upsample(grid, H, W);
    return reshape(permute(up, {0, 2, 3, 1}), {H * W, dp});
}

template <typename T>
MambaLayer<T>::MambaLayer(ParamFactory<T> f, const ModelConfig& cfg) : inner(cfg.pixnet_inner_dim()) {
    const std::int64_t dp = cfg.pixnet_dim;
    norm = LayerNorm<T>(f.sub("norm"), dp);
    in_proj = Linear<T>(f.sub("in_proj"), dp, 2 * inner, false);
    auto cf = f.sub("conv1d");
    conv_w = cf.uniform("weight", {inner, 4}, -0.5, 0.5);
    conv_b = cf.uniform("bias", {inner}, -0.5, 0.5);
    ssm = SelectiveSsm<T>(f.sub("ssm"), inner, cfg.d_state, cfg.discretization, cfg.scan_algorithm);
    out_proj = Linear<T>(f.sub("out_proj"), inner, dp, false);
}

template <typename T>
Tensor<T> MambaLayer<T>::operator()(const Tensor<T>& x) const {
    auto xz = in_proj(norm(x));
    auto u = silu(causal_conv1d(narrow(xz, -1, 0, inner), conv_w, conv_b));
    auto z = narrow(xz, -1, inner, inner);
    return x + out_proj(ssm(u) * silu(z));
}

template <typename T>
EmNet<T>::EmNet(ParamFactory<T> f, const ModelConfig& cfg) : patch(cfg.patch_size), use_mub(cfg.use_mub) {
    const std::int64_t D = cfg.base_dim;
    const int P = static_cast<int>(cfg.patch_size);
    patch_embed = Conv2d<T>(f.sub("patch_embed.proj"), 3, D, P, Conv2dOptions{P, 0, 1});
    patch_norm = LayerNorm<T>(f.sub("patch_embed.norm"), D);
    const std::array<std::int64_t, 3> dims{D, 2 * D, 4 * D};
    for (int s = 0; s < 3; ++s) {
        auto sf = f.sub("enc" + std::to_string(s));
        for (std::int64_t i = 0; i < cfg.encoder_depths[s]; ++i) {
            encoder[s].emplace_back(sf.sub("blk" + std::to_string(i)), cfg.emb(dims[s]));
        }
        if (s < 2) {
            down[s] = Conv2d<T>(f.sub("down" + std::to_string(s) + ".conv"), dims[s], dims[s + 1], 2,
                                Conv2dOptions{2, 0, 1});
            down_norm[s] = LayerNorm<T>(f.sub("down" + std::to_string(s) + ".norm"), dims[s + 1]);
        }
    }
    // Decoder stage s works at encoder resolution 2 - s.
    for (int s = 0; s < 3; ++s) {
        const std::int64_t c = dims[2 - s];
        if (s > 0) {
            auto uf = f.sub("up" + std::to_string(s));
            if (use_mub) mub[s - 1] = MubBlock<T>(uf, cfg.emb(dims[3 - s]));
            else expand[s - 1] = PatchExpand<T>(uf, dims[3 - s]);
        }
        auto sf = f.sub("dec" + std::to_string(s));
        for (std::int64_t i = 0; i < cfg.decoder_depths[s]; ++i) {
            decoder[s].emplace_back(sf.sub("blk" + std::to_string(i)), cfg.emb(c));
        }
    }
    head = Linear<T>(f.sub("head"), D, P * P * 3);
}

template <typename T>
Tensor<T> EmNet<T>::patch_features(const Tensor<T>& image) const {
    return to_channels_first(patch_norm(to_channels_last(patch_embed(image))));
}

template <typename T>
Tensor<T> EmNet<T>::operator()(const Tensor<T>& image) const {
    std::array<Tensor<T>, 3> skips;
    auto h = patch_features(image);
    for (int s = 0; s < 3; ++s) {
        for (const auto& blk : encoder[s]) h = blk(h);
        skips[s] = h;
        if (s < 2) h = to_channels_first(down_norm[s](to_channels_last(down[s](h))));
    }
    for (int s = 0; s < 3; ++s) {
        if (s > 0) {
            h = use_mub ? mub[s - 1](h) : expand[s - 1](h);
            h = h + skips[2 - s];
        }
        for (const auto& blk : decoder[s]) h = blk(h);
    }
    const std::int64_t B = h.dim(0), gh = h.dim(2), gw = h.dim(3), P = patch;
    auto out = reshape(head(to_channels_last(h)), {B, gh, gw, P, P, 3});
    return reshape(permute(out, {0, 5, 1, 3, 2, 4}), {B, 3, gh * P, gw * P});
}

template <typename T>
PixNet<T>::PixNet(ParamFactory<T> f, const ModelConfig& cfg) : bpe_block(cfg.bpe_block), use_bpe(cfg.use_bpe) {
    const std::int64_t dp = cfg.pixnet_dim;
    embed = Linear<T>(f.sub("embed"), 3, dp);
    if (use_bpe) {
        const std::int64_t blocks = (cfg.image_height / bpe_block) * (cfg.image_width / bpe_block);
        bpe = f.trunc_normal("bpe", {blocks, dp}, 0.02);
    }
    for (std::int64_t l = 0; l < cfg.pixnet_layers; ++l) layers.emplace_back(f.sub("layer" + std::to_string(l)), cfg);
    norm = LayerNorm<T>(f.sub("norm"), dp);
    head = Linear<T>(f.sub("head"), dp, 3);
}

template <typename T>
Tensor<T> PixNet<T>::operator()(const Tensor<T>& image) const {
    const std::int64_t B = image.dim(0), H = image.dim(2), W = image.dim(3);
    auto h = embed(reshape(to_channels_last(image), {B, H * W, 3}));
    if (use_bpe) h = h + bpe_sample(bpe, H, W, bpe_block);
    for (const auto& layer : layers) h = layer(h);
    auto out = head(norm(h));
    return to_channels_first(reshape(out, {B, H, W, 3}));
}

template <typename T>
PixMamba<T>::PixMamba(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    ParamFactory<T> root(registry_, rng);
    emnet_ = EmNet<T>(root.sub("emnet"), cfg_);
    if (cfg_.use_pixnet) pixnet_.emplace(root.sub("pixnet"), cfg_);
}

template <typename T>
void PixMamba<T>::check_input(const Tensor<T>& image) const {
    if (image.rank() != 4 || image.dim(1) != 3) {
        throw DimensionError("expected an image batch [B,3,H,W], got " + to_string(image.shape()));
    }
    if (image.dim(2) != cfg_.image_height || image.dim(3) != cfg_.image_width) {
        throw ConfigError("image is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)) +
                          " but the model is configured for " + std::to_string(cfg_.image_height) + "x" +
                          std::to_string(cfg_.image_width));
    }
}

template <typename T>
Tensor<T> PixMamba<T>::forward(const Tensor<T>& image) const {
    check_input(image);
    auto out = emnet_(image);
    if (pixnet_) out = out + (*pixnet_)(image);
    return out;
}

template <typename T>
Tensor<T> PixMamba<T>::enhance(const Tensor<T>& image) const {
    NoGradGuard<T> guard;
    return clamp(forward(image), T(0), T(1));
}

#define PIXMAMBA_INSTANTIATE(T)                                                              \
    template Tensor<T> bpe_sample(const Tensor<T>&, std::int64_t, std::int64_t, std::int64_t); \
    template struct MambaLayer<T>;                                                           \
    template struct EmNet<T>;                                                                \
    template struct PixNet<T>;                                                               \
    template class PixMamba<T>;

PIXMAMBA_INSTANTIATE(float)
PIXMAMBA_INSTANTIATE(double)

}  // namespace pixmamba
