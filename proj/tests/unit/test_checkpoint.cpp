#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>

#include "pixmamba/checkpoint.hpp"
#include "pixmamba/errors.hpp"
#include "test_util.hpp"

using namespace pixmamba;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny() {
    ModelConfig cfg;
    cfg.image_height = cfg.image_width = 16;
    cfg.patch_size = 2;
    cfg.base_dim = 4;
    cfg.encoder_depths = {1, 1, 1};
    cfg.decoder_depths = {1, 1, 1};
    cfg.pixnet_layers = 1;
    cfg.pixnet_dim = 4;
    cfg.bpe_block = 4;
    cfg.d_state = 2;
    return cfg;
}

class CheckpointTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("pixmamba_ckpt_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    static std::vector<std::uint8_t> read_bytes(const std::string& p) {
        std::ifstream in(p, std::ios::binary);
        return {std::istreambuf_iterator<char>(in), {}};
    }
    static void write_bytes(const std::string& p, const std::vector<std::uint8_t>& bytes) {
        std::ofstream out(p, std::ios::binary);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
    // Rewrites the trailing hash so only the intended field is wrong.
    static void reseal(std::vector<std::uint8_t>& bytes) {
        const auto n = bytes.size() - 8;
        const auto h = fnv1a64(bytes.data(), n);
        for (int i = 0; i < 8; ++i) bytes[n + static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(h >> (8 * i));
    }

    fs::path dir_;
};

}  // namespace

TEST(Fnv1a, KnownVectors) {
    EXPECT_EQ(fnv1a64(nullptr, 0), 0xcbf29ce484222325ULL);
    const std::uint8_t a[] = {'a'};
    EXPECT_EQ(fnv1a64(a, 1), 0xaf63dc4c8601ec8cULL);
    const std::uint8_t foobar[] = {'f', 'o', 'o', 'b', 'a', 'r'};
    EXPECT_EQ(fnv1a64(foobar, 6), 0x85944171f73967e8ULL);
}

TEST_F(CheckpointTest, SaveLoadSaveIsByteIdentical) {
    PixMamba<float> m(tiny(), 1);
    save_checkpoint(m, path("a.pxmb"));
    auto loaded = load_checkpoint(path("a.pxmb"));
    save_checkpoint(loaded, path("b.pxmb"));
    EXPECT_EQ(read_bytes(path("a.pxmb")), read_bytes(path("b.pxmb")));
    EXPECT_EQ(loaded.config().to_text(), m.config().to_text());
    for (const auto& [p, t] : m.parameters().entries()) {
        EXPECT_TRUE(pixmamba::testing::bitwise_equal(t.data(), loaded.parameters().at(p).data())) << p;
    }
}

TEST_F(CheckpointTest, LoadedModelReproducesOutput) {
    PixMamba<float> m(tiny(), 2);
    save_checkpoint(m, path("m.pxmb"));
    PixMamba<float> other(tiny(), 3);
    load_checkpoint_into(other, path("m.pxmb"));
    Rng rng(4);
    auto x = pixmamba::testing::random_tensor<float>({1, 3, 16, 16}, rng, 0, 1);
    EXPECT_TRUE(pixmamba::testing::bitwise_equal(m.forward(x).data(), other.forward(x).data()));
}

TEST_F(CheckpointTest, HeaderLayout) {
    PixMamba<float> m(tiny(), 5);
    const auto bytes = encode_checkpoint(m);
    ASSERT_GT(bytes.size(), 14u);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "PXMB");
    EXPECT_EQ(bytes[4] | (bytes[5] << 8), kCheckpointVersion);
    EXPECT_EQ(read_checkpoint_config(([&] {
                  write_bytes(path("h.pxmb"), bytes);
                  return path("h.pxmb");
              })())
                  .to_text(),
              m.config().to_text());
}

TEST_F(CheckpointTest, CorruptByteIsChecksumError) {
    PixMamba<float> m(tiny(), 6);
    auto bytes = encode_checkpoint(m);
    bytes[bytes.size() / 2] ^= 0x01;
    write_bytes(path("c.pxmb"), bytes);
    EXPECT_THROW(load_checkpoint(path("c.pxmb")), ChecksumError);
}

TEST_F(CheckpointTest, TruncatedFileIsRejected) {
    PixMamba<float> m(tiny(), 7);
    auto bytes = encode_checkpoint(m);
    bytes.resize(bytes.size() / 3);
    write_bytes(path("t.pxmb"), bytes);
    EXPECT_THROW(load_checkpoint(path("t.pxmb")), CheckpointError);
}

TEST_F(CheckpointTest, WrongVersionIsVersionError) {
    PixMamba<float> m(tiny(), 8);
    auto bytes = encode_checkpoint(m);
    bytes[4] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
    reseal(bytes);
    write_bytes(path("v.pxmb"), bytes);
    EXPECT_THROW(load_checkpoint(path("v.pxmb")), VersionError);
}

TEST_F(CheckpointTest, WrongMagicIsFormatError) {
    PixMamba<float> m(tiny(), 9);
    auto bytes = encode_checkpoint(m);
    bytes[0] = 'Q';
    reseal(bytes);
    write_bytes(path("f.pxmb"), bytes);
    EXPECT_THROW(load_checkpoint(path("f.pxmb")), FormatError);
}

TEST_F(CheckpointTest, ShapeMismatchNamesParameter) {
    PixMamba<float> m(tiny(), 10);
    save_checkpoint(m, path("s.pxmb"));
    auto cfg = tiny();
    cfg.pixnet_dim = 8;
    PixMamba<float> other(cfg, 10);
    try {
        load_checkpoint_into(other, path("s.pxmb"));
        FAIL() << "expected ParameterShapeError";
    } catch (const ParameterShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("pixnet."), std::string::npos) << e.what();
    }
}

TEST_F(CheckpointTest, MissingFileIsIoError) {
    EXPECT_THROW(load_checkpoint(path("absent.pxmb")), IoError);
}
