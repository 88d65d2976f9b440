#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pixmamba/checkpoint.hpp"
#include "pixmamba/errors.hpp"
#include "pixmamba/image_io.hpp"
#include "pixmamba/train.hpp"
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

TrainConfig short_run() {
    TrainConfig t;
    t.epochs = 3;
    t.warmup_epochs = 1;
    t.batch_size = 2;
    t.seed = 5;
    return t;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("pixmamba_train_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(LrSchedule, WarmupThenCosine) {
    TrainConfig cfg;
    cfg.lr = 4e-4;
    cfg.epochs = 100;
    cfg.warmup_epochs = 20;
    EXPECT_DOUBLE_EQ(lr_at(0, cfg), 4e-4 / 20);
    EXPECT_EQ(lr_at(20, cfg), 4e-4);
    EXPECT_NEAR(lr_at(60, cfg), 2e-4, 1e-18);
    const double last = 4e-4 * 0.5 * (1 + std::cos(std::numbers::pi * 79.0 / 80.0));
    EXPECT_LE(lr_at(99, cfg), last + 1e-20);
    EXPECT_LT(std::abs(lr_at(19, cfg) - lr_at(20, cfg)), 1e-12);
    for (std::int64_t e = 1; e < 20; ++e) EXPECT_GT(lr_at(e, cfg), lr_at(e - 1, cfg));
    for (std::int64_t e = 21; e < 100; ++e) EXPECT_LT(lr_at(e, cfg), lr_at(e - 1, cfg));
    EXPECT_THROW(lr_at(100, cfg), UsageError);
    EXPECT_THROW(lr_at(-1, cfg), UsageError);
}

TEST(LrSchedule, NoWarmup) {
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.warmup_epochs = 0;
    EXPECT_EQ(lr_at(0, cfg), cfg.lr);
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.warmup_epochs = cfg.epochs;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.lr = 0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.beta2 = 1.0;
    EXPECT_THROW(cfg.validate(), ConfigError);
    EXPECT_NO_THROW(TrainConfig::full_scale().validate());
    EXPECT_TRUE(cfg.set("batch_size", "8"));
    EXPECT_EQ(cfg.batch_size, 8);
    EXPECT_FALSE(cfg.set("base_dim", "8"));
}

TEST(AdamW, ZeroGradientZeroDecayIsNoop) {
    Tensor<double> p({3}, {1.0, -2.0, 0.5});
    p.set_requires_grad(true);
    AdamW<double> opt({p}, 0.9, 0.99, 0.0);
    opt.step(1e-2);
    EXPECT_EQ(p.at(0), 1.0);
    EXPECT_EQ(p.at(1), -2.0);
    EXPECT_EQ(p.at(2), 0.5);
}

TEST(AdamW, FirstStepMovesByLr) {
    Tensor<double> p({1}, {1.0});
    p.set_requires_grad(true);
    p.grad_buffer()[0] = 3.0;
    AdamW<double> opt({p}, 0.9, 0.99, 0.0, 1e-8);
    opt.step(1e-3);
    EXPECT_NEAR(p.at(0), 1.0 - 1e-3 * 3.0 / (3.0 + 1e-8), 1e-15);
    EXPECT_EQ(opt.steps(), 1);
}

TEST(AdamW, WeightDecayShrinksNormMonotonically) {
    Tensor<double> p({4}, {1.0, -2.0, 3.0, -0.5});
    p.set_requires_grad(true);
    AdamW<double> opt({p}, 0.9, 0.99, 0.1);
    auto norm = [&] {
        double s = 0;
        for (double v : p.data()) s += v * v;
        return s;
    };
    double prev = norm();
    for (int i = 0; i < 20; ++i) {
        opt.step(1e-2);
        const double now = norm();
        EXPECT_LT(now, prev);
        prev = now;
    }
}

TEST(AdamW, MinimizesQuadraticBowl) {
    Tensor<double> w({1}, {1.0});
    w.set_requires_grad(true);
    AdamW<double> opt({w}, 0.9, 0.99, 0.0);
    int steps = 0;
    while (std::abs(w.at(0)) >= 1e-2 && steps < 500) {
        w.zero_grad();
        w.grad_buffer()[0] = 2 * w.at(0);
        opt.step(4e-2);
        ++steps;
    }
    EXPECT_LT(std::abs(w.at(0)), 1e-2);
    EXPECT_LE(steps, 500);
}

TEST(Degradation, IdentityParameters) {
    Rng rng(1);
    auto clean = synth_clean(12, 10, rng);
    DegradationParams p;
    p.ambient = {0.3, 0.6, 0.9};
    auto out = synth_degrade(clean, p);
    EXPECT_TRUE(pixmamba::testing::bitwise_equal(out.data(), clean.data()));
}

TEST(Degradation, ZeroTransmissionGivesAmbient) {
    Rng rng(2);
    auto clean = synth_clean(8, 8, rng);
    DegradationParams p;
    p.t = {0, 0, 0};
    p.ambient = {0.2, 0.5, 0.8};
    p.contrast = 0.5;
    auto out = synth_degrade(clean, p);
    for (std::int64_t c = 0; c < 3; ++c) {
        for (std::int64_t i = 0; i < 64; ++i) EXPECT_NEAR(out.at(c * 64 + i), 0.5 * p.ambient[static_cast<std::size_t>(c)], 1e-6);
    }
}

TEST(Degradation, SampledParamsAreValidAndRedAttenuatedMost) {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        auto p = DegradationParams::sample(rng);
        EXPECT_NO_THROW(p.validate());
        EXPECT_LT(p.t[0], p.t[1]);
        EXPECT_LT(p.t[0], p.t[2]);
    }
    DegradationParams bad;
    bad.contrast = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Degradation, BlurZeroIsIdentityAndPreservesConstant) {
    Rng rng(4);
    auto img = synth_clean(9, 7, rng);
    EXPECT_TRUE(pixmamba::testing::bitwise_equal(gaussian_blur(img, 0).data(), img.data()));
    auto flat = Tensor<float>::full({3, 9, 7}, 0.25f);
    const auto blurred = gaussian_blur(flat, 1.3);
    for (float v : blurred.data()) EXPECT_NEAR(v, 0.25f, 1e-6f);
}

TEST(SynthPairs, DeterministicAndInRange) {
    auto a = synth_pairs(3, 16, 16, 9);
    auto b = synth_pairs(3, 16, 16, 9);
    auto c = synth_pairs(3, 16, 16, 10);
    ASSERT_EQ(a.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(a[i].id, b[i].id);
        EXPECT_TRUE(pixmamba::testing::bitwise_equal(a[i].degraded.data(), b[i].degraded.data()));
        EXPECT_TRUE(pixmamba::testing::bitwise_equal(a[i].reference.data(), b[i].reference.data()));
        for (float v : a[i].degraded.data()) {
            EXPECT_GE(v, 0.0f);
            EXPECT_LE(v, 1.0f);
        }
    }
    EXPECT_FALSE(pixmamba::testing::bitwise_equal(a[0].degraded.data(), c[0].degraded.data()));
}

TEST(SynthPairs, WriteAndLoadRoundTrip) {
    const auto dir = scratch("pairs");
    auto pairs = synth_pairs(2, 8, 8, 3);
    write_pairs(pairs, dir.string());
    auto back = load_pairs(dir.string());
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].id, pairs[i].id);
        ASSERT_TRUE(back[i].reference.defined());
        for (std::int64_t k = 0; k < back[i].degraded.numel(); ++k) {
            EXPECT_NEAR(back[i].degraded.at(k), pairs[i].degraded.at(k), 0.5 / 255 + 1e-6);
        }
    }
    fs::remove_all(dir);
    EXPECT_THROW(load_pairs(dir.string()), IoError);
}

TEST(StackImages, ShapesAndErrors) {
    Tensor<float> a({3, 2, 2}), b({3, 2, 2}), c({3, 3, 2});
    EXPECT_EQ(stack_images({&a, &b}).shape(), (Shape{2, 3, 2, 2}));
    EXPECT_THROW(stack_images({&a, &c}), DimensionError);
    EXPECT_THROW(stack_images({}), UsageError);
}

TEST(LossCsv, HeaderAndRows) {
    const auto dir = scratch("csv");
    const auto path = (dir / "loss.csv").string();
    write_loss_csv(path, {{0, 0.5, 1e-4}, {1, 0.25, 2e-4}});
    EXPECT_EQ(slurp(path), "epoch,loss,lr\n0,0.5,0.0001\n1,0.25,0.0002\n");
    fs::remove_all(dir);
}

TEST(Train, ShortRunWritesArtifactsAndReducesLoss) {
    const auto dir = scratch("run");
    auto data = synth_pairs(6, 16, 16, 1);
    auto val = synth_pairs(2, 16, 16, 2);
    TrainOptions opt;
    opt.out_dir = dir.string();
    int calls = 0;
    opt.on_epoch = [&](const EpochLog&) { ++calls; };
    auto r = train(tiny(), short_run(), data, val, opt);
    EXPECT_EQ(calls, 3);
    ASSERT_EQ(r.curve.size(), 3u);
    EXPECT_EQ(r.curve[0].epoch, 0);
    EXPECT_TRUE(fs::exists(r.checkpoint_path));
    EXPECT_TRUE(fs::exists(r.loss_csv_path));
    EXPECT_GT(r.parameter_count, 0);
    EXPECT_LE(r.best_loss, r.curve[0].loss);
    EXPECT_TRUE(std::isfinite(r.val_psnr_enhanced));
    EXPECT_GT(r.val_psnr_degraded, 0);
    auto loaded = load_checkpoint(r.checkpoint_path);
    EXPECT_EQ(loaded.parameters().parameter_count(), r.parameter_count);
    fs::remove_all(dir);
}

TEST(Train, SeededRunsAreIdentical) {
    auto data = synth_pairs(4, 16, 16, 1);
    auto a = train(tiny(), short_run(), data, {});
    auto b = train(tiny(), short_run(), data, {});
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t i = 0; i < a.curve.size(); ++i) EXPECT_EQ(a.curve[i].loss, b.curve[i].loss);
}

TEST(Train, AblationWithoutPixNetHasFewerParameters) {
    auto data = synth_pairs(2, 16, 16, 1);
    auto cfg = tiny();
    auto full = train(cfg, short_run(), data, {});
    cfg.use_pixnet = false;
    cfg.use_bpe = false;
    auto ablated = train(cfg, short_run(), data, {});
    EXPECT_LT(ablated.parameter_count, full.parameter_count);
}

TEST(Train, NanLossAbortsNamingStep) {
    auto data = synth_pairs(2, 16, 16, 1);
    data[1].reference.mutable_data()[0] = std::nanf("");
    auto t = short_run();
    t.batch_size = 1;
    try {
        PixMamba<float> m(tiny(), 0);
        train(m, t, data, {});
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
    }
}

TEST(Train, RejectsEmptyOrUnpairedData) {
    EXPECT_THROW(train(tiny(), short_run(), {}, {}), UsageError);
    auto data = synth_pairs(1, 16, 16, 1);
    data[0].reference = Tensor<float>();
    EXPECT_THROW(train(tiny(), short_run(), data, {}), UsageError);
}

TEST(Enhance, WrongSizeFailsOrResizes) {
    const auto dir = scratch("enhance");
    Rng rng(6);
    write_ppm((dir / "in" / "a.ppm").string(), ([&] {
                  fs::create_directories(dir / "in");
                  return synth_clean(12, 20, rng);
              })());
    PixMamba<float> m(tiny(), 1);
    EXPECT_THROW(enhance_directory(m, (dir / "in").string(), (dir / "out").string(), SizePolicy::Fail), ConfigError);
    auto written = enhance_directory(m, (dir / "in").string(), (dir / "out").string(), SizePolicy::Resize);
    ASSERT_EQ(written.size(), 1u);
    EXPECT_EQ(read_ppm(written[0]).shape(), (Shape{3, 12, 20}));
    fs::remove_all(dir);
}

TEST(Enhance, ZeroedHeadsGiveBlackImage) {
    const auto dir = scratch("zero");
    fs::create_directories(dir / "in");
    Rng rng(7);
    write_ppm((dir / "in" / "x.ppm").string(), synth_clean(16, 16, rng));
    PixMamba<float> m(tiny(), 1);
    for (const auto& [path, p] : m.parameters().entries()) {
        if (path.rfind("emnet.head.", 0) == 0 || path.rfind("pixnet.head.", 0) == 0) fill_parameter(p, 0.0f);
    }
    auto written = enhance_directory(m, (dir / "in").string(), (dir / "out").string(), SizePolicy::Fail);
    const auto out = read_ppm(written[0]);
    for (float v : out.data()) EXPECT_EQ(v, 0.0f);
    auto report = evaluate_directory((dir / "out").string(), (dir / "in").string());
    ASSERT_EQ(report.rows.size(), 1u);
    ASSERT_TRUE(report.rows[0].psnr.has_value());
    EXPECT_TRUE(std::isfinite(*report.rows[0].psnr));
    fs::remove_all(dir);
}

TEST(Evaluate, ReferenceFreeDirectoryHasOnlyNoReferenceMetrics) {
    const auto dir = scratch("eval");
    auto pairs = synth_pairs(2, 16, 16, 4);
    write_pairs(pairs, dir.string());
    auto with_ref = evaluate_directory((dir / "input").string(), (dir / "target").string());
    EXPECT_TRUE(with_ref.has_reference());
    auto without = evaluate_directory((dir / "input").string(), "");
    EXPECT_FALSE(without.has_reference());
    std::ostringstream os;
    without.write_csv(os);
    EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "id,uiqm,uciqe");
    fs::remove_all(dir);
}
