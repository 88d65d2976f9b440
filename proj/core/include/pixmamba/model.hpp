#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pixmamba/vision_scan.hpp"

namespace pixmamba {

struct ModelConfig {
    std::int64_t image_height = 64;
    std::int64_t image_width = 64;
    std::int64_t patch_size = 8;
    std::int64_t base_dim = 16;
    std::array<std::int64_t, 3> encoder_depths{2, 2, 2};
    std::array<std::int64_t, 3> decoder_depths{2, 2, 2};
    std::int64_t pixnet_layers = 4;
    std::int64_t pixnet_dim = 16;
    double pixnet_expand = 1.0;
    std::int64_t bpe_block = 16;
    std::int64_t d_state = 8;
    double expand = 2.0;
    int dwconv_kernel = 3;
    std::vector<ScanDirection> scan_directions = default_directions(2);
    ssm::Discretization discretization = ssm::Discretization::Zoh;
    ssm::ScanAlgorithm scan_algorithm = ssm::ScanAlgorithm::Sequential;
    bool use_mub = true;
    bool use_pixnet = true;
    bool use_bpe = true;

    // 256x256 profile with wider stages.
    static ModelConfig full_scale();

    void validate() const;
    EmbConfig emb(std::int64_t dim) const;
    std::int64_t pixnet_inner_dim() const;

    // Returns false when `key` is not a model key.
    bool set(const std::string& key, const std::string& value);
    // key=value lines in a fixed order; parse(to_text()) round-trips.
    std::string to_text() const;
    static ModelConfig parse(const std::string& text);
    static std::vector<std::string> keys();
};

/// Block-wise positional embedding [HW/B^2, Dp] -> per-pixel [HW, Dp] by
/// bilinear upsampling of the block grid.
template <typename T>
Tensor<T> bpe_sample(const Tensor<T>& bpe, std::int64_t H, std::int64_t W, std::int64_t block);

/// Residual Mamba block over a pixel sequence [B,L,Dp].
template <typename T>
struct MambaLayer {
    LayerNorm<T> norm;
    Linear<T> in_proj;    // Dp -> 2E, no bias
    Tensor<T> conv_w;     // [E, 4]
    Tensor<T> conv_b;     // [E]
    SelectiveSsm<T> ssm;
    Linear<T> out_proj;   // E -> Dp, no bias
    std::int64_t inner = 1;

    MambaLayer() = default;
    MambaLayer(ParamFactory<T> f, const ModelConfig& cfg);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct EmNet {
    Conv2d<T> patch_embed;
    LayerNorm<T> patch_norm;
    std::array<std::vector<EmbBlock<T>>, 3> encoder;
    std::array<Conv2d<T>, 2> down;
    std::array<LayerNorm<T>, 2> down_norm;
    std::array<std::vector<EmbBlock<T>>, 3> decoder;
    // Upsamplers feeding decoder stages 1 and 2; one of the two is used.
    std::array<MubBlock<T>, 2> mub;
    std::array<PatchExpand<T>, 2> expand;
    Linear<T> head;  // D -> P*P*3
    std::int64_t patch = 1;
    bool use_mub = true;

    EmNet() = default;
    EmNet(ParamFactory<T> f, const ModelConfig& cfg);
    Tensor<T> patch_features(const Tensor<T>& image) const;
    // [B,3,H,W] -> [B,3,H,W]
    Tensor<T> operator()(const Tensor<T>& image) const;
};

template <typename T>
struct PixNet {
    Linear<T> embed;  // 3 -> Dp
    Tensor<T> bpe;    // [HW/B^2, Dp] when enabled
    std::vector<MambaLayer<T>> layers;
    LayerNorm<T> norm;
    Linear<T> head;   // Dp -> 3
    std::int64_t bpe_block = 1;
    bool use_bpe = false;

    PixNet() = default;
    PixNet(ParamFactory<T> f, const ModelConfig& cfg);
    // [B,3,H,W] -> [B,3,H,W]
    Tensor<T> operator()(const Tensor<T>& image) const;
};

/// Dual-level network: output = EMNet(I) + PixNet(I).
template <typename T>
class PixMamba {
public:
    explicit PixMamba(ModelConfig cfg, std::uint64_t seed = 0);

    const ModelConfig& config() const { return cfg_; }
    ParameterRegistry<T>& parameters() { return registry_; }
    const ParameterRegistry<T>& parameters() const { return registry_; }
    const EmNet<T>& emnet() const { return emnet_; }
    const std::optional<PixNet<T>>& pixnet() const { return pixnet_; }

    // Unclamped output used by the loss.
    Tensor<T> forward(const Tensor<T>& image) const;
    // Output clamped to [0, 1]; records nothing.
    Tensor<T> enhance(const Tensor<T>& image) const;

private:
    void check_input(const Tensor<T>& image) const;

    ModelConfig cfg_;
    ParameterRegistry<T> registry_;
    EmNet<T> emnet_;
    std::optional<PixNet<T>> pixnet_;
};

extern template class PixMamba<float>;
extern template class PixMamba<double>;

}  // namespace pixmamba
