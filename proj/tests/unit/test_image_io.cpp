#include <gtest/gtest.h>

#include <filesystem>

#include "pixmamba/errors.hpp"
#include "pixmamba/image_io.hpp"
#include "test_util.hpp"

using namespace pixmamba;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) {
    return {s.begin(), s.end()};
}

}  // namespace

TEST(Ppm, EncodeLayout) {
    Tensor<float> img({3, 1, 2}, {1.0f, 0.0f, 0.5f, 1.0f, 0.0f, 0.2f});
    const auto b = encode_ppm(img);
    const std::string header = "P6\n2 1\n255\n";
    ASSERT_EQ(b.size(), header.size() + 6);
    EXPECT_EQ(std::string(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(header.size())), header);
    const std::uint8_t px[] = {255, 128, 0, 0, 255, 51};
    for (int i = 0; i < 6; ++i) EXPECT_EQ(b[header.size() + static_cast<std::size_t>(i)], px[i]) << i;
}

TEST(Ppm, ByteRoundTripIsExact) {
    Rng rng(1);
    Tensor<float> img({3, 5, 7});
    for (auto& v : img.mutable_data()) v = static_cast<float>(rng.below(256)) / 255.0f;
    const auto b = encode_ppm(img);
    const auto back = decode_ppm(b);
    EXPECT_EQ(back.shape(), img.shape());
    EXPECT_EQ(encode_ppm(back), b);
    EXPECT_TRUE(pixmamba::testing::bitwise_equal(back.data(), img.data()));
}

TEST(Ppm, ClampsOutOfRange) {
    Tensor<float> img({3, 1, 1}, {-0.5f, 1.5f, 0.5f});
    const auto back = decode_ppm(encode_ppm(img));
    EXPECT_EQ(back.at(0), 0.0f);
    EXPECT_EQ(back.at(1), 1.0f);
}

TEST(Ppm, HeaderWithComments) {
    auto b = bytes_of("P6 # comment\n1 1\n# another\n255\n");
    b.insert(b.end(), {10, 20, 30});
    const auto img = decode_ppm(b);
    EXPECT_EQ(img.shape(), (Shape{3, 1, 1}));
    EXPECT_FLOAT_EQ(img.at(2), 30.0f / 255.0f);
}

TEST(Ppm, RejectsBadInput) {
    EXPECT_THROW(decode_ppm(bytes_of("P3\n1 1\n255\n0 0 0\n")), IoError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n1 1\n65535\n")), IoError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n2 2\n255\n\x01\x02")), IoError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\nx 1\n255\n")), IoError);
    EXPECT_THROW(decode_ppm(bytes_of("P6\n0 1\n255\n")), IoError);
    EXPECT_THROW(encode_ppm(Tensor<float>({1, 2, 2})), DimensionError);
}

TEST(Ppm, FileRoundTrip) {
    const auto path = (std::filesystem::temp_directory_path() / "pixmamba_io_test.ppm").string();
    Tensor<float> img({3, 2, 2}, std::vector<float>(12, 0.2f));
    write_ppm(path, img);
    const auto back = read_ppm(path);
    EXPECT_EQ(back.shape(), img.shape());
    std::filesystem::remove(path);
    EXPECT_THROW(read_ppm(path), IoError);
}

TEST(Resize, IdentityAndConstant) {
    Rng rng(2);
    auto img = pixmamba::testing::random_tensor<float>({3, 4, 6}, rng, 0, 1);
    EXPECT_TRUE(pixmamba::testing::bitwise_equal(resize_bilinear(img, 4, 6).data(), img.data()));
    auto flat = Tensor<float>::full({3, 3, 5}, 0.4f);
    auto up = resize_bilinear(flat, 7, 11);
    EXPECT_EQ(up.shape(), (Shape{3, 7, 11}));
    for (float v : up.data()) EXPECT_NEAR(v, 0.4f, 1e-6f);
    auto down = resize_bilinear(flat, 2, 2);
    for (float v : down.data()) EXPECT_NEAR(v, 0.4f, 1e-6f);
}

TEST(Resize, HorizontalRampStaysMonotone) {
    Tensor<float> img({1, 1, 4}, {0.0f, 0.25f, 0.5f, 0.75f});
    auto up = resize_bilinear(img, 1, 8);
    for (std::int64_t i = 1; i < 8; ++i) EXPECT_GE(up.at(i), up.at(i - 1));
    EXPECT_FLOAT_EQ(up.at(0), 0.0f);
    EXPECT_FLOAT_EQ(up.at(7), 0.75f);
}
