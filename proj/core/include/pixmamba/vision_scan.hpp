#pragma once

#include <string>
#include <vector>

#include "pixmamba/nn.hpp"
#include "pixmamba/ssm.hpp"

namespace pixmamba {

enum class ScanDirection { RowForward, RowBackward, ColumnForward, ColumnBackward };

std::string to_string(ScanDirection d);
ScanDirection parse_scan_direction(const std::string& name);
// Comma-separated list, e.g. "row_forward,column_forward".
std::vector<ScanDirection> parse_scan_directions(const std::string& list);
std::string to_string(const std::vector<ScanDirection>& dirs);
// Canonical direction sets for 1, 2 and 4 scans.
std::vector<ScanDirection> default_directions(int count);

/// order[k] = row-major grid index visited at step k.
std::vector<std::int64_t> scan_order(std::int64_t H, std::int64_t W, ScanDirection dir);

/// [B,C,H,W] -> [B,H*W,C] in the traversal order of `dir`.
template <typename T>
Tensor<T> scan_flatten(const Tensor<T>& x, ScanDirection dir);
/// Inverse of scan_flatten: [B,H*W,C] -> [B,C,H,W].
template <typename T>
Tensor<T> scan_unflatten(const Tensor<T>& seq, std::int64_t H, std::int64_t W, ScanDirection dir);

struct EmbConfig {
    std::int64_t dim = 16;
    std::int64_t d_state = 8;
    double expand = 2.0;
    int dwconv_kernel = 3;
    std::vector<ScanDirection> directions = default_directions(2);
    ssm::Discretization discretization = ssm::Discretization::Zoh;
    ssm::ScanAlgorithm algorithm = ssm::ScanAlgorithm::Sequential;
    // Replaces every selective scan by the identity map.
    bool identity_scan = false;

    std::int64_t inner_dim() const;
    void validate() const;
};

/// out = x * sigmoid(fc2(silu(fc1(mean_L x)))) * sigmoid(spatial(x)) on [B,L,C].
template <typename T>
struct SpatialChannelAttention {
    Linear<T> fc1;      // C -> max(1, C/4)
    Linear<T> fc2;      // -> C
    Linear<T> spatial;  // C -> 1

    SpatialChannelAttention() = default;
    SpatialChannelAttention(ParamFactory<T> f, std::int64_t channels);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Projections producing the per-token selective-scan operands of one
/// sequence, followed by the scan itself.
template <typename T>
struct SelectiveSsm {
    Linear<T> x_proj;   // E -> R + 2N, no bias
    Linear<T> dt_proj;  // R -> E
    Tensor<T> A_log;    // [E, N]
    Tensor<T> D;        // [E]
    std::int64_t dt_rank = 1;
    std::int64_t d_state = 1;
    ssm::Discretization discretization = ssm::Discretization::Zoh;
    ssm::ScanAlgorithm algorithm = ssm::ScanAlgorithm::Sequential;

    SelectiveSsm() = default;
    SelectiveSsm(ParamFactory<T> f, std::int64_t channels, std::int64_t d_state, ssm::Discretization disc,
                 ssm::ScanAlgorithm algo);
    // seq [B,L,E] -> [B,L,E]
    Tensor<T> operator()(const Tensor<T>& seq) const;
};

/// Efficient 2D selective scan over a subset of traversal directions. Each
/// branch runs its own scan parameters; branch outputs pass through one
/// shared attention module and are summed.
template <typename T>
struct Ess2d {
    std::vector<ScanDirection> directions;
    std::vector<SelectiveSsm<T>> branches;
    SpatialChannelAttention<T> attention;
    bool identity_scan = false;

    Ess2d() = default;
    Ess2d(ParamFactory<T> f, const EmbConfig& cfg);
    // [B,E,H,W] -> [B,E,H,W]
    Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Efficient Mamba Block: x + proj_out(ess2d(silu(dwconv(proj_in(norm(x)))))).
template <typename T>
struct EmbBlock {
    LayerNorm<T> norm;
    Linear<T> proj_in;   // C -> E
    Conv2d<T> dwconv;    // depthwise on E
    Ess2d<T> ess2d;
    Linear<T> proj_out;  // E -> C

    EmbBlock() = default;
    EmbBlock(ParamFactory<T> f, const EmbConfig& cfg);
    // [B,C,H,W] -> [B,C,H,W]
    Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Mamba Upsampling Block: norm(transpose_conv(emb(linear(x)))),
/// [B,C,H,W] -> [B,C/2,2H,2W].
template <typename T>
struct MubBlock {
    Linear<T> proj;  // C -> C
    EmbBlock<T> emb;
    TransposeConv2d<T> up;  // C -> C/2, kernel = stride = 2
    LayerNorm<T> norm;

    MubBlock() = default;
    MubBlock(ParamFactory<T> f, const EmbConfig& cfg);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Plain upsampling used when the MUB is ablated: linear C -> 2C, pixel
/// shuffle to [B,C/2,2H,2W], norm.
template <typename T>
struct PatchExpand {
    Linear<T> proj;
    LayerNorm<T> norm;

    PatchExpand() = default;
    PatchExpand(ParamFactory<T> f, std::int64_t channels);
    Tensor<T> operator()(const Tensor<T>& x) const;
};

}  // namespace pixmamba
