#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "pixmamba/checkpoint.hpp"
#include "pixmamba/config.hpp"
#include "pixmamba/gradcheck.hpp"
#include "pixmamba/metrics.hpp"
#include "pixmamba/parallel.hpp"
#include "pixmamba/ssm.hpp"
#include "pixmamba/train.hpp"

namespace fs = std::filesystem;
using namespace pixmamba;

namespace {

struct Globals {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

// Model and training settings assembled from a profile, a config file and
// --set overrides, applied in that order.
struct RunSettings {
    std::string profile = "desk";
    std::string config_file;
    std::vector<std::string> overrides;

    void resolve(ModelConfig& m, TrainConfig& t) const {
        if (profile == "full") {
            m = ModelConfig::full_scale();
            t = TrainConfig::full_scale();
        } else if (profile != "desk") {
            throw ConfigError("unknown profile '" + profile + "' (desk or full)");
        }
        KeyValues kv;
        if (!config_file.empty()) kv = read_key_value_file(config_file);
        for (const auto& s : overrides) kv.push_back(split_assignment(s));
        for (const auto& [k, v] : kv) {
            if (k == "image_size") {
                m.set(k, v);
            } else if (!m.set(k, v) && !t.set(k, v)) {
                throw ConfigError("unknown setting '" + k + "'");
            }
        }
    }
};

void add_settings(CLI::App* cmd, RunSettings& s) {
    cmd->add_option("--config", s.config_file, "key=value settings file")->check(CLI::ExistingFile);
    cmd->add_option("--set", s.overrides, "override one setting, key=value (repeatable)");
    cmd->add_option("--profile", s.profile, "base settings: desk or full")->check(CLI::IsMember({"desk", "full"}));
}

Tensor<double> random_double(Shape shape, Rng& rng, double lo, double hi) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = rng.uniform(lo, hi);
    return t;
}

int run_train(const Globals& g, const RunSettings& s, const std::string& data_dir, const std::string& val_dir,
              const std::string& out_dir, bool quiet) {
    ModelConfig mcfg;
    TrainConfig tcfg;
    s.resolve(mcfg, tcfg);
    if (g.seed) tcfg.seed = *g.seed;
    mcfg.validate();
    tcfg.validate();

    std::vector<ImagePair> train_set, val_set;
    if (data_dir.empty()) {
        train_set = synth_pairs(tcfg.train_pairs, mcfg.image_height, mcfg.image_width, tcfg.seed);
        val_set = synth_pairs(tcfg.val_pairs, mcfg.image_height, mcfg.image_width, tcfg.seed + 1000);
    } else {
        train_set = load_pairs(data_dir);
        if (!val_dir.empty()) val_set = load_pairs(val_dir);
    }

    fs::create_directories(out_dir);
    {
        std::ofstream cfg_out(fs::path(out_dir) / "config.txt");
        cfg_out << mcfg.to_text() << tcfg.to_text();
    }

    PixMamba<float> model(mcfg, tcfg.seed);
    std::printf("parameters %lld, %zu training pairs, %zu validation pairs, %d threads\n",
                static_cast<long long>(model.parameters().parameter_count()), train_set.size(), val_set.size(),
                num_threads());
    TrainOptions opt;
    opt.out_dir = out_dir;
    const auto t0 = std::chrono::steady_clock::now();
    if (!quiet) {
        opt.on_epoch = [&](const EpochLog& e) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            std::printf("epoch %lld/%lld  loss %.6f  lr %.3e  %.1fs\n", static_cast<long long>(e.epoch + 1),
                        static_cast<long long>(tcfg.epochs), e.loss, e.lr, secs);
            std::fflush(stdout);
        };
    }
    const auto r = train(model, tcfg, train_set, val_set, opt);
    std::printf("best epoch %lld loss %.6f\n", static_cast<long long>(r.best_epoch + 1), r.best_loss);
    if (!val_set.empty()) {
        std::printf("validation psnr %.3f dB (input %.3f dB)\n", r.val_psnr_enhanced, r.val_psnr_degraded);
    }
    std::printf("wrote %s and %s\n", r.checkpoint_path.c_str(), r.loss_csv_path.c_str());
    return 0;
}

int run_enhance(const std::string& checkpoint, const std::string& in_dir, const std::string& out_dir, bool resize) {
    const auto model = load_checkpoint(checkpoint);
    const auto written = enhance_directory(model, in_dir, out_dir, resize ? SizePolicy::Resize : SizePolicy::Fail);
    std::printf("enhanced %zu images into %s\n", written.size(), out_dir.c_str());
    return 0;
}

int run_evaluate(const std::string& image_dir, const std::string& ref_dir, const std::string& csv_path) {
    const auto report = evaluate_directory(image_dir, ref_dir);
    if (report.rows.empty()) throw IoError("no .ppm images in " + image_dir);
    report.write_table(std::cout);
    if (csv_path.empty()) {
        std::cout << '\n';
        report.write_csv(std::cout);
    } else {
        std::ofstream out(csv_path);
        if (!out) throw IoError("cannot write " + csv_path);
        report.write_csv(out);
    }
    return 0;
}

int run_bench_scan(const Globals& g, std::int64_t batch, std::int64_t length, std::int64_t channels,
                   std::int64_t state, int repeats, const std::string& disc) {
    Rng rng(g.seed.value_or(0));
    ssm::ScanInput<float> in;
    auto rf = [&](Shape s, double lo, double hi) { return random_double(std::move(s), rng, lo, hi).cast<float>(); };
    in.x = rf({batch, length, channels}, -1, 1);
    in.delta = rf({batch, length, channels}, 0.01, 1);
    in.A = rf({channels, state}, -2, -0.05);
    in.Bmat = rf({batch, length, state}, -1, 1);
    in.Cmat = rf({batch, length, state}, -1, 1);
    in.D = rf({channels}, -1, 1);
    ssm::ScanOptions opt;
    if (disc == "euler") opt.discretization = ssm::Discretization::Euler;

    auto time_best = [&](auto&& fn) {
        double best = 1e300;
        for (int r = 0; r < repeats; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            fn();
            best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
        }
        return best;
    };
    ssm::ScanOutput<float> seq, par;
    ssm::reset_state_update_count();
    const double ts = time_best([&] { seq = ssm::selective_scan_sequential(in, opt); });
    const auto updates = ssm::state_update_count() / static_cast<std::uint64_t>(repeats);
    const double tp = time_best([&] { par = ssm::selective_scan_parallel(in, opt); });
    double diff = 0, scale = 0;
    for (std::int64_t i = 0; i < seq.y.numel(); ++i) {
        diff = std::max(diff, static_cast<double>(std::abs(seq.y.at(i) - par.y.at(i))));
        scale = std::max(scale, static_cast<double>(std::abs(seq.y.at(i))));
    }
    std::printf("B=%lld L=%lld D=%lld N=%lld threads=%d\n", static_cast<long long>(batch),
                static_cast<long long>(length), static_cast<long long>(channels), static_cast<long long>(state),
                num_threads());
    std::printf("state updates per scan %llu\n", static_cast<unsigned long long>(updates));
    std::printf("sequential %.3f ms\nparallel   %.3f ms\nmax |diff| / max |y| = %.3e\n", ts * 1e3, tp * 1e3,
                scale > 0 ? diff / scale : diff);
    return 0;
}

int run_gradcheck(const Globals& g, const RunSettings& s, const std::string& component, double tol) {
    Rng rng(g.seed.value_or(0));
    GradcheckResult r;
    if (component == "scan") {
        for (auto disc : {ssm::Discretization::Zoh, ssm::Discretization::Euler}) {
            for (auto algo : {ssm::ScanAlgorithm::Sequential, ssm::ScanAlgorithm::Parallel}) {
                auto x = random_double({2, 9, 3}, rng, -1, 1);
                auto dt = random_double({2, 9, 3}, rng, 0.05, 1);
                auto A = random_double({3, 4}, rng, -2, -0.1);
                auto B = random_double({2, 9, 4}, rng, -1, 1);
                auto C = random_double({2, 9, 4}, rng, -1, 1);
                auto D = random_double({3}, rng, -1, 1);
                auto w = random_double({2, 9, 3}, rng, -1, 1);
                const auto one = gradcheck(
                    [&] { return sum(ssm::selective_scan(x, dt, A, B, C, D, algo, disc) * w); }, {x, dt, A, B, C, D});
                r.max_rel_error = std::max(r.max_rel_error, one.max_rel_error);
                r.max_abs_error = std::max(r.max_abs_error, one.max_abs_error);
                r.checked += one.checked;
            }
        }
    } else {
        // Small double-precision model; --set overrides apply on top.
        ModelConfig m;
        m.image_height = m.image_width = 8;
        m.patch_size = 2;
        m.base_dim = 4;
        m.encoder_depths = {1, 1, 1};
        m.decoder_depths = {1, 1, 1};
        m.pixnet_layers = 1;
        m.pixnet_dim = 4;
        m.bpe_block = 4;
        m.d_state = 2;
        TrainConfig t;
        RunSettings local = s;
        local.profile = "desk";
        local.resolve(m, t);
        const ModelConfig& base = m;
        PixMamba<double> model(base, g.seed.value_or(0));
        auto x = random_double({1, 3, base.image_height, base.image_width}, rng, 0, 1);
        auto w = random_double({1, 3, base.image_height, base.image_width}, rng, -1, 1);
        std::vector<Tensor<double>> inputs{x};
        for (const auto& [path, p] : model.parameters().entries()) {
            if (path.find("head") != std::string::npos || path.find("embed") != std::string::npos ||
                path == "pixnet.bpe") {
                inputs.push_back(p);
            }
        }
        r = gradcheck([&] { return sum(model.forward(x) * w); }, inputs);
    }
    const bool pass = r.max_rel_error < tol;
    std::printf("%s gradcheck: %zu entries, max rel error %.3e, max abs error %.3e -> %s (tol %.1e)\n",
                component.c_str(), r.checked, r.max_rel_error, r.max_abs_error, pass ? "pass" : "FAIL", tol);
    return pass ? 0 : 1;
}

int run_synth(const Globals& g, std::int64_t count, std::int64_t height, std::int64_t width,
              const std::string& out_dir) {
    const auto pairs = synth_pairs(count, height, width, g.seed.value_or(0));
    write_pairs(pairs, out_dir);
    std::printf("wrote %zu pairs to %s/input and %s/target\n", pairs.size(), out_dir.c_str(), out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PixMamba underwater image enhancement"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t v) { g.seed = v; }, "random seed");
    app.add_option_function<int>("--threads", [&](int v) { g.threads = v; }, "worker threads")
        ->check(CLI::PositiveNumber);

    RunSettings train_settings, grad_settings;
    std::string data_dir, val_dir, out_dir;
    bool quiet = false;
    auto* train_cmd = app.add_subcommand("train", "train a model and write best.pxmb and loss.csv");
    add_settings(train_cmd, train_settings);
    train_cmd->add_option("--data", data_dir, "directory with input/ and target/ (default: synthetic pairs)");
    train_cmd->add_option("--val", val_dir, "validation directory with input/ and target/");
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    train_cmd->add_flag("--quiet", quiet, "no per-epoch output");

    std::string checkpoint, in_dir, enh_out;
    bool resize = false;
    auto* enhance_cmd = app.add_subcommand("enhance", "enhance every .ppm of a directory");
    enhance_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
    enhance_cmd->add_option("--input", in_dir, "input directory")->required()->check(CLI::ExistingDirectory);
    enhance_cmd->add_option("--output", enh_out, "output directory")->required();
    enhance_cmd->add_flag("--resize", resize, "resize images that do not match the model size");

    std::string eval_dir, ref_dir, csv_path;
    auto* eval_cmd = app.add_subcommand("evaluate", "image quality metrics for a directory");
    eval_cmd->add_option("--images", eval_dir, "images to score")->required()->check(CLI::ExistingDirectory);
    eval_cmd->add_option("--reference", ref_dir, "reference images with matching names");
    eval_cmd->add_option("--csv", csv_path, "write the CSV report here instead of standard output");

    std::int64_t b_batch = 1, b_len = 65536, b_ch = 4, b_state = 4;
    int b_rep = 3;
    std::string b_disc = "zoh";
    auto* bench_cmd = app.add_subcommand("bench-scan", "time sequential and parallel selective scans");
    bench_cmd->add_option("--batch", b_batch, "batch size")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--length", b_len, "sequence length")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--channels", b_ch, "channels")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--state", b_state, "state size")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--repeats", b_rep, "timed runs per algorithm")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--discretization", b_disc, "zoh or euler")->check(CLI::IsMember({"zoh", "euler"}));

    std::string component = "model";
    double tol = 1e-4;
    auto* grad_cmd = app.add_subcommand("gradcheck", "compare tape gradients with finite differences");
    add_settings(grad_cmd, grad_settings);
    grad_cmd->add_option("--component", component, "model or scan")->check(CLI::IsMember({"model", "scan"}));
    grad_cmd->add_option("--tol", tol, "relative error tolerance");

    std::int64_t s_count = 16, s_h = 64, s_w = 64;
    std::string s_out;
    auto* synth_cmd = app.add_subcommand("synth-data", "write synthetic degraded/clean pairs");
    synth_cmd->add_option("--count", s_count, "number of pairs")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--height", s_h, "image height")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--width", s_w, "image width")->check(CLI::PositiveNumber);
    synth_cmd->add_option("--out", s_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (g.threads) set_num_threads(*g.threads);
        if (*train_cmd) return run_train(g, train_settings, data_dir, val_dir, out_dir, quiet);
        if (*enhance_cmd) return run_enhance(checkpoint, in_dir, enh_out, resize);
        if (*eval_cmd) return run_evaluate(eval_dir, ref_dir, csv_path);
        if (*bench_cmd) return run_bench_scan(g, b_batch, b_len, b_ch, b_state, b_rep, b_disc);
        if (*grad_cmd) return run_gradcheck(g, grad_settings, component, tol);
        if (*synth_cmd) return run_synth(g, s_count, s_h, s_w, s_out);
    } catch (const pixmamba::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
