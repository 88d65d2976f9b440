#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "pixmamba/errors.hpp"
#include "pixmamba/ssm.hpp"
#include "pixmamba/vision_scan.hpp"
#include "test_util.hpp"

using namespace pixmamba;
using pixmamba::testing::random_tensor;

namespace {

const std::vector<ScanDirection> kAll = default_directions(4);

void zero_attention_gates(SpatialChannelAttention<double>& att) {
    fill_parameter(att.fc2.weight, 0.0);
    fill_parameter(att.fc2.bias, 0.0);
    fill_parameter(att.spatial.weight, 0.0);
    fill_parameter(att.spatial.bias, 0.0);
}

}  // namespace

TEST(ScanOrder, TwoByTwoPermutations) {
    EXPECT_EQ(scan_order(2, 2, ScanDirection::RowForward), (std::vector<std::int64_t>{0, 1, 2, 3}));
    EXPECT_EQ(scan_order(2, 2, ScanDirection::RowBackward), (std::vector<std::int64_t>{3, 2, 1, 0}));
    EXPECT_EQ(scan_order(2, 2, ScanDirection::ColumnForward), (std::vector<std::int64_t>{0, 2, 1, 3}));
    EXPECT_EQ(scan_order(2, 2, ScanDirection::ColumnBackward), (std::vector<std::int64_t>{3, 1, 2, 0}));
}

TEST(ScanOrder, EveryOrderIsAPermutation) {
    for (auto dir : kAll) {
        auto order = scan_order(3, 5, dir);
        std::sort(order.begin(), order.end());
        for (std::int64_t i = 0; i < 15; ++i) EXPECT_EQ(order[static_cast<std::size_t>(i)], i);
    }
}

TEST(ScanOrder, DirectionsPairwiseDistinct) {
    std::set<std::vector<std::int64_t>> seen;
    for (auto dir : kAll) seen.insert(scan_order(3, 5, dir));
    EXPECT_EQ(seen.size(), 4u);
}

TEST(ScanFlatten, RoundTripOnRectangularGrid) {
    Rng rng(1);
    auto x = random_tensor({2, 3, 3, 5}, rng);
    for (auto dir : kAll) {
        auto seq = scan_flatten(x, dir);
        EXPECT_EQ(seq.shape(), (Shape{2, 15, 3}));
        auto back = scan_unflatten(seq, 3, 5, dir);
        ASSERT_EQ(back.shape(), x.shape());
        EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), back.data().begin())) << to_string(dir);
    }
}

TEST(ScanFlatten, SingleRowMatchesRawTranspose) {
    Rng rng(2);
    auto x = random_tensor({1, 2, 1, 6}, rng);
    auto seq = scan_flatten(x, ScanDirection::RowForward);
    for (std::int64_t k = 0; k < 6; ++k) {
        for (std::int64_t c = 0; c < 2; ++c) EXPECT_EQ(seq.at(k * 2 + c), x.at(c * 6 + k));
    }
}

TEST(ScanFlatten, RejectsWrongRank) {
    Tensor<double> x({2, 3, 4});
    EXPECT_THROW(scan_flatten(x, ScanDirection::RowForward), DimensionError);
    EXPECT_THROW(scan_unflatten(x, 2, 3, ScanDirection::RowForward), DimensionError);
}

TEST(ScanDirections, ParseAndPrint) {
    const auto dirs = parse_scan_directions("row_forward,column_backward");
    ASSERT_EQ(dirs.size(), 2u);
    EXPECT_EQ(dirs[0], ScanDirection::RowForward);
    EXPECT_EQ(dirs[1], ScanDirection::ColumnBackward);
    EXPECT_EQ(to_string(dirs), "row_forward,column_backward");
    EXPECT_THROW(parse_scan_direction("diagonal"), ConfigError);
    EXPECT_THROW(parse_scan_directions(""), ConfigError);
    EXPECT_THROW(default_directions(3), ConfigError);
}

TEST(Attention, ZeroedGatesHalveTwice) {
    ParameterRegistry<double> reg;
    Rng init(3);
    SpatialChannelAttention<double> att(ParamFactory<double>(reg, init), 8);
    zero_attention_gates(att);
    Rng rng(4);
    auto x = random_tensor({2, 10, 8}, rng);
    auto y = att(x);
    for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.at(i), x.at(i) / 4);
}

TEST(Ess2d, IdentityScanSumsAttentionOverBranches) {
    for (int count : {1, 2, 4}) {
        ParameterRegistry<double> reg;
        Rng init(5);
        EmbConfig cfg;
        cfg.dim = 4;
        cfg.directions = default_directions(count);
        cfg.identity_scan = true;
        Ess2d<double> ess(ParamFactory<double>(reg, init), cfg);
        zero_attention_gates(ess.attention);
        Rng rng(6);
        auto x = random_tensor({1, cfg.inner_dim(), 3, 4}, rng);
        auto y = ess(x);
        for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_DOUBLE_EQ(y.at(i), count * x.at(i) / 4);
    }
}

TEST(Ess2d, TwoAndFourDirectionsDiffer) {
    Rng rng(7);
    auto x = random_tensor({1, 8, 4, 4}, rng);
    std::vector<Tensor<double>> outs;
    for (int count : {2, 4}) {
        ParameterRegistry<double> reg;
        Rng init(8);
        EmbConfig cfg;
        cfg.dim = 4;
        cfg.directions = default_directions(count);
        Ess2d<double> ess(ParamFactory<double>(reg, init), cfg);
        outs.push_back(ess(x));
    }
    EXPECT_GT(pixmamba::testing::max_rel_diff(outs[0].data(), outs[1].data()), 1e-6);
}

TEST(Ess2d, CostLinearInDirections) {
    Rng rng(9);
    auto x = random_tensor({1, 8, 4, 6}, rng);
    for (int count : {1, 2, 4}) {
        ParameterRegistry<double> reg;
        Rng init(10);
        EmbConfig cfg;
        cfg.dim = 4;
        cfg.d_state = 3;
        cfg.directions = default_directions(count);
        Ess2d<double> ess(ParamFactory<double>(reg, init), cfg);
        ssm::reset_state_update_count();
        ess(x);
        EXPECT_EQ(ssm::state_update_count(), static_cast<std::uint64_t>(count * 4 * 6 * 8 * 3));
    }
}

TEST(EmbBlock, PreservesShape) {
    for (auto [H, W] : {std::pair<std::int64_t, std::int64_t>{8, 8}, {7, 9}}) {
        ParameterRegistry<double> reg;
        Rng init(11);
        EmbConfig cfg;
        cfg.dim = 6;
        cfg.d_state = 4;
        EmbBlock<double> blk(ParamFactory<double>(reg, init), cfg);
        Rng rng(12);
        auto x = random_tensor({2, 6, H, W}, rng);
        auto y = blk(x);
        EXPECT_EQ(y.shape(), x.shape());
        EXPECT_TRUE(all_finite(y));
    }
}

TEST(EmbBlock, ZeroOutputProjectionIsIdentity) {
    ParameterRegistry<double> reg;
    Rng init(13);
    EmbConfig cfg;
    cfg.dim = 8;
    EmbBlock<double> blk(ParamFactory<double>(reg, init), cfg);
    fill_parameter(blk.proj_out.weight, 0.0);
    Rng rng(14);
    auto x = random_tensor({1, 8, 5, 3}, rng);
    auto y = blk(x);
    EXPECT_TRUE(std::equal(x.data().begin(), x.data().end(), y.data().begin()));
}

TEST(EmbConfig, Validation) {
    EmbConfig cfg;
    cfg.dim = 3;
    cfg.expand = 1.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.expand = 2.0;
    EXPECT_NO_THROW(cfg.validate());
    cfg.dwconv_kernel = 4;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.dwconv_kernel = 3;
    cfg.directions.clear();
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg.directions = default_directions(1);
    cfg.d_state = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MubBlock, HalvesChannelsDoublesExtent) {
    ParameterRegistry<double> reg;
    Rng init(15);
    EmbConfig cfg;
    cfg.dim = 8;
    cfg.d_state = 4;
    MubBlock<double> mub(ParamFactory<double>(reg, init), cfg);
    Rng rng(16);
    auto y = mub(random_tensor({2, 8, 3, 5}, rng));
    EXPECT_EQ(y.shape(), (Shape{2, 4, 6, 10}));
}

TEST(MubBlock, OddChannelsRejected) {
    ParameterRegistry<double> reg;
    Rng init(17);
    EmbConfig cfg;
    cfg.dim = 5;
    EXPECT_THROW(MubBlock<double>(ParamFactory<double>(reg, init), cfg), ConfigError);
    EXPECT_THROW(PatchExpand<double>(ParamFactory<double>(reg, init), 5), ConfigError);
}

TEST(MubBlock, OneHotPlumbingIsNormalizedExpansion) {
    constexpr std::int64_t C = 4, H = 2, W = 3, Ch = C / 2;
    ParameterRegistry<double> reg;
    Rng init(18);
    EmbConfig cfg;
    cfg.dim = C;
    cfg.d_state = 2;
    MubBlock<double> mub(ParamFactory<double>(reg, init), cfg);
    fill_parameter(mub.proj.weight, 0.0);
    fill_parameter(mub.proj.bias, 0.0);
    auto pw = mub.proj.weight;
    for (std::int64_t c = 0; c < C; ++c) pw.mutable_data()[static_cast<std::size_t>(c * C + c)] = 1.0;
    fill_parameter(mub.emb.proj_out.weight, 0.0);
    fill_parameter(mub.up.weight, 0.0);
    fill_parameter(mub.up.bias, 0.0);
    auto uw = mub.up.weight;
    for (std::int64_t c = 0; c < Ch; ++c) {
        for (std::int64_t k = 0; k < 4; ++k) uw.mutable_data()[static_cast<std::size_t>((c * Ch + c) * 4 + k)] = 1.0;
    }
    Rng rng(19);
    auto x = random_tensor({1, C, H, W}, rng);
    auto y = mub(x);
    ASSERT_EQ(y.shape(), (Shape{1, Ch, 2 * H, 2 * W}));
    for (std::int64_t oy = 0; oy < 2 * H; ++oy) {
        for (std::int64_t ox = 0; ox < 2 * W; ++ox) {
            double v[Ch];
            double mu = 0;
            for (std::int64_t c = 0; c < Ch; ++c) {
                v[c] = x.at((c * H + oy / 2) * W + ox / 2);
                mu += v[c] / Ch;
            }
            double var = 0;
            for (std::int64_t c = 0; c < Ch; ++c) var += (v[c] - mu) * (v[c] - mu) / Ch;
            for (std::int64_t c = 0; c < Ch; ++c) {
                const double expect = (v[c] - mu) / std::sqrt(var + 1e-5);
                EXPECT_NEAR(y.at((c * 2 * H + oy) * 2 * W + ox), expect, 1e-12);
            }
        }
    }
}

TEST(PatchExpand, Shape) {
    ParameterRegistry<double> reg;
    Rng init(20);
    PatchExpand<double> pe(ParamFactory<double>(reg, init), 6);
    Rng rng(21);
    EXPECT_EQ(pe(random_tensor({1, 6, 2, 3}, rng)).shape(), (Shape{1, 3, 4, 6}));
}
