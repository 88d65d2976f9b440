#include <gtest/gtest.h>

#include "pixmamba/errors.hpp"
#include "pixmamba/ops.hpp"
#include "pixmamba/tensor.hpp"
#include "test_util.hpp"

using namespace pixmamba;
using pixmamba::testing::random_tensor;

TEST(Tensor, ElementCountMatchesShape) {
    Tensor<double> t({2, 3, 4});
    EXPECT_EQ(t.numel(), 24);
    EXPECT_EQ(t.rank(), 3);
    EXPECT_EQ(t.dim(-1), 4);
    for (double v : t.data()) EXPECT_EQ(v, 0.0);
}

TEST(Tensor, RejectsMismatchedValues) {
    EXPECT_THROW(Tensor<double>({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
}

TEST(Tensor, RejectsNonPositiveExtent) {
    EXPECT_THROW(Tensor<double>(Shape{2, 0}), DimensionError);
}

TEST(Tensor, ScalarHoldsOneElement) {
    auto s = Tensor<float>::scalar(2.5f);
    EXPECT_EQ(s.rank(), 0);
    EXPECT_EQ(s.numel(), 1);
    EXPECT_EQ(s.item(), 2.5f);
}

TEST(Tensor, ItemRequiresSingleElement) {
    Tensor<double> t({2});
    EXPECT_THROW(t.item(), UsageError);
}

TEST(Tensor, CloneIsDeepCopy) {
    Tensor<double> a({2}, {1, 2});
    auto b = a.clone();
    b.mutable_data()[0] = 9;
    EXPECT_EQ(a.at(0), 1);
}

TEST(Tensor, DetachDropsGradientRequirement) {
    Tensor<double> a({2}, {1, 2});
    a.set_requires_grad(true);
    auto d = a.detach();
    EXPECT_FALSE(d.requires_grad());
    EXPECT_EQ(d.at(1), 2);
}

TEST(Tensor, CastConvertsValues) {
    Tensor<double> a({2}, {1.5, -2.25});
    auto f = a.cast<float>();
    EXPECT_EQ(f.at(0), 1.5f);
    EXPECT_EQ(f.at(1), -2.25f);
}

TEST(Shape, ReshapeRoundTripPreservesElements) {
    Rng rng(1);
    auto a = random_tensor({2, 3, 4}, rng);
    auto b = reshape(reshape(a, {6, 4}), {2, 3, 4});
    EXPECT_EQ(b.shape(), a.shape());
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Shape, ReshapeRejectsCountChange) {
    Tensor<double> a({2, 3});
    EXPECT_THROW(reshape(a, {4, 2}), DimensionError);
}

TEST(Shape, PermuteRoundTripPreservesElements) {
    Rng rng(2);
    auto a = random_tensor({2, 3, 4, 5}, rng);
    auto p = permute(a, {2, 0, 3, 1});
    EXPECT_EQ(p.shape(), (Shape{4, 2, 5, 3}));
    auto back = permute(p, {1, 3, 0, 2});
    EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), back.data().begin()));
}

TEST(Shape, PermuteMovesElements) {
    Tensor<double> a({2, 3}, {0, 1, 2, 3, 4, 5});
    auto t = permute(a, {1, 0});
    EXPECT_EQ(t.shape(), (Shape{3, 2}));
    const std::vector<double> expected{0, 3, 1, 4, 2, 5};
    EXPECT_TRUE(std::equal(expected.begin(), expected.end(), t.data().begin()));
}

TEST(Shape, NarrowSelectsRange) {
    Tensor<double> a({2, 4}, {0, 1, 2, 3, 4, 5, 6, 7});
    auto n = narrow(a, 1, 1, 2);
    const std::vector<double> expected{1, 2, 5, 6};
    EXPECT_TRUE(std::equal(expected.begin(), expected.end(), n.data().begin()));
    EXPECT_THROW(narrow(a, 1, 3, 2), DimensionError);
}
