#include "pixmamba/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pixmamba/checkpoint.hpp"
#include "pixmamba/config.hpp"
#include "pixmamba/image_io.hpp"

namespace pixmamba {

namespace fs = std::filesystem;

// ---- configuration --------------------------------------------------------------

TrainConfig TrainConfig::full_scale() {
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 800;
    c.warmup_epochs = 20;
    c.train_pairs = 800;
    c.val_pairs = 90;
    return c;
}

void TrainConfig::validate() const {
    if (!(lr > 0)) throw ConfigError("lr must be positive");
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("betas must lie in [0, 1)");
    if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
    if (!(eps_adam > 0) || !(charbonnier_eps > 0)) throw ConfigError("eps values must be positive");
    if (batch_size < 1 || epochs < 1) throw ConfigError("batch_size and epochs must be positive");
    if (warmup_epochs < 0 || warmup_epochs >= epochs) throw ConfigError("warmup_epochs must lie in [0, epochs)");
    if (train_pairs < 1 || val_pairs < 0) throw ConfigError("train_pairs must be positive, val_pairs non-negative");
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
    if (key == "lr") lr = parse_real(key, value);
    else if (key == "beta1") beta1 = parse_real(key, value);
    else if (key == "beta2") beta2 = parse_real(key, value);
    else if (key == "weight_decay") weight_decay = parse_real(key, value);
    else if (key == "eps_adam") eps_adam = parse_real(key, value);
    else if (key == "charbonnier_eps") charbonnier_eps = parse_real(key, value);
    else if (key == "batch_size") batch_size = parse_int(key, value);
    else if (key == "epochs") epochs = parse_int(key, value);
    else if (key == "warmup_epochs") warmup_epochs = parse_int(key, value);
    else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
    else if (key == "train_pairs") train_pairs = parse_int(key, value);
    else if (key == "val_pairs") val_pairs = parse_int(key, value);
    else return false;
    return true;
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "lr=" << lr << "\nbeta1=" << beta1 << "\nbeta2=" << beta2 << "\nweight_decay=" << weight_decay
       << "\neps_adam=" << eps_adam << "\ncharbonnier_eps=" << charbonnier_eps << "\nbatch_size=" << batch_size
       << "\nepochs=" << epochs << "\nwarmup_epochs=" << warmup_epochs << "\nseed=" << seed
       << "\ntrain_pairs=" << train_pairs << "\nval_pairs=" << val_pairs << '\n';
    return os.str();
}

double lr_at(std::int64_t epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs) {
        throw UsageError("lr_at: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(cfg.epochs) + ")");
    }
    const auto W = cfg.warmup_epochs;
    if (epoch < W) return cfg.lr * static_cast<double>(epoch + 1) / static_cast<double>(W);
    const double progress = static_cast<double>(epoch - W) / static_cast<double>(cfg.epochs - W);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// ---- optimizer ------------------------------------------------------------------

template <typename T>
AdamW<T>::AdamW(std::vector<Tensor<T>> params, double beta1, double beta2, double weight_decay, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), wd_(weight_decay), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
        v_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    }
}

template <typename T>
void AdamW<T>::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double decay = 1.0 - lr * wd_;
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = params_[k];
        auto data = p.mutable_data();
        auto grad = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < data.size(); ++i) {
            const double g = grad.empty() ? 0.0 : static_cast<double>(grad[i]);
            m[i] = beta1_ * m[i] + (1 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1 - beta2_) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            const double w = static_cast<double>(data[i]) * decay;
            data[i] = static_cast<T>(w - lr * mhat / (std::sqrt(vhat) + eps_));
        }
    }
}

template class AdamW<float>;
template class AdamW<double>;

// ---- synthetic data -----------------------------------------------------------

DegradationParams DegradationParams::sample(Rng& rng) {
    DegradationParams p;
    p.t = {rng.uniform(0.35, 0.6), rng.uniform(0.7, 0.9), rng.uniform(0.8, 0.95)};
    p.ambient = {rng.uniform(0.05, 0.15), rng.uniform(0.35, 0.55), rng.uniform(0.45, 0.65)};
    p.blur_sigma = rng.uniform(0.0, 1.0);
    p.contrast = rng.uniform(0.75, 0.95);
    return p;
}

void DegradationParams::validate() const {
    for (int c = 0; c < 3; ++c) {
        if (!(t[c] >= 0 && t[c] <= 1)) throw ConfigError("transmission must lie in [0, 1]");
        if (!(ambient[c] >= 0 && ambient[c] <= 1)) throw ConfigError("ambient light must lie in [0, 1]");
    }
    if (blur_sigma < 0) throw ConfigError("blur sigma must be non-negative");
    if (!(contrast > 0 && contrast <= 1)) throw ConfigError("contrast must lie in (0, 1]");
}

Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
    if (sigma <= 0) return img.clone();
    const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const auto r = static_cast<std::int64_t>(std::ceil(3 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double s = 0;
    for (std::int64_t i = -r; i <= r; ++i) {
        k[static_cast<std::size_t>(i + r)] = std::exp(-double(i * i) / (2 * sigma * sigma));
        s += k[static_cast<std::size_t>(i + r)];
    }
    for (auto& v : k) v /= s;
    auto mirror = [](std::int64_t i, std::int64_t n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    auto src = img.data();
    std::vector<double> tmp(static_cast<std::size_t>(C * H * W));
    std::vector<float> out(tmp.size());
    for (std::int64_t c = 0; c < C; ++c) {
        const float* p = src.data() + c * H * W;
        double* t = tmp.data() + c * H * W;
        for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = 0; x < W; ++x) {
                double a = 0;
                for (std::int64_t i = -r; i <= r; ++i) a += k[static_cast<std::size_t>(i + r)] * p[y * W + mirror(x + i, W)];
                t[y * W + x] = a;
            }
        }
        float* o = out.data() + c * H * W;
        for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = 0; x < W; ++x) {
                double a = 0;
                for (std::int64_t i = -r; i <= r; ++i) a += k[static_cast<std::size_t>(i + r)] * t[mirror(y + i, H) * W + x];
                o[y * W + x] = static_cast<float>(a);
            }
        }
    }
    return Tensor<float>(img.shape(), std::move(out));
}

Tensor<float> synth_clean(std::int64_t H, std::int64_t W, Rng& rng) {
    std::vector<double> img(static_cast<std::size_t>(3 * H * W));
    auto color = [&] { return std::array<double, 3>{rng.uniform(), rng.uniform(), rng.uniform()}; };
    auto put = [&](std::int64_t c, std::int64_t y, std::int64_t x) -> double& {
        return img[static_cast<std::size_t>((c * H + y) * W + x)];
    };

    // Background: linear blend between two colors along a random direction.
    const auto c0 = color();
    const auto c1 = color();
    const double angle = rng.uniform(0, 2 * std::numbers::pi);
    const double dx = std::cos(angle), dy = std::sin(angle);
    for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
            const double u = 0.5 + 0.5 * ((x / double(W) - 0.5) * dx + (y / double(H) - 0.5) * dy) * 1.4;
            for (int c = 0; c < 3; ++c) put(c, y, x) = c0[c] + (c1[c] - c0[c]) * std::clamp(u, 0.0, 1.0);
        }
    }

    // Filled discs and rectangles.
    const auto shapes = 3 + static_cast<int>(rng.below(4));
    for (int s = 0; s < shapes; ++s) {
        const auto col = color();
        const double cx = rng.uniform(0, double(W)), cy = rng.uniform(0, double(H));
        const double rx = rng.uniform(0.08, 0.3) * double(W), ry = rng.uniform(0.08, 0.3) * double(H);
        const bool disc = rng.uniform() < 0.5;
        for (std::int64_t y = 0; y < H; ++y) {
            for (std::int64_t x = 0; x < W; ++x) {
                const double ux = (double(x) + 0.5 - cx) / rx, uy = (double(y) + 0.5 - cy) / ry;
                const bool inside = disc ? ux * ux + uy * uy <= 1.0 : std::abs(ux) <= 1.0 && std::abs(uy) <= 1.0;
                if (inside) {
                    for (int c = 0; c < 3; ++c) put(c, y, x) = col[c];
                }
            }
        }
    }

    // Luminance texture.
    const double amp = rng.uniform(0.03, 0.12);
    const double fx = rng.uniform(0.05, 0.4), fy = rng.uniform(0.05, 0.4), phase = rng.uniform(0, 6.28);
    for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < W; ++x) {
            const double t = amp * std::sin(fx * double(x) + fy * double(y) + phase);
            for (int c = 0; c < 3; ++c) put(c, y, x) = std::clamp(put(c, y, x) + t, 0.0, 1.0);
        }
    }
    return Tensor<float>(Shape{3, H, W}, std::vector<float>(img.begin(), img.end()));
}

Tensor<float> synth_degrade(const Tensor<float>& clean, const DegradationParams& p) {
    p.validate();
    if (clean.rank() != 3 || clean.dim(0) != 3) throw DimensionError("synth_degrade needs [3,H,W], got " + to_string(clean.shape()));
    auto blurred = gaussian_blur(clean, p.blur_sigma);
    const std::int64_t n = clean.dim(1) * clean.dim(2);
    auto src = blurred.data();
    std::vector<float> out(src.size());
    for (std::int64_t c = 0; c < 3; ++c) {
        const double t = p.t[static_cast<std::size_t>(c)];
        const double a = p.ambient[static_cast<std::size_t>(c)];
        for (std::int64_t i = 0; i < n; ++i) {
            const double v = p.contrast * (src[c * n + i] * t + a * (1 - t));
            out[static_cast<std::size_t>(c * n + i)] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
    }
    return Tensor<float>(clean.shape(), std::move(out));
}

std::vector<ImagePair> synth_pairs(std::int64_t count, std::int64_t H, std::int64_t W, std::uint64_t seed) {
    Rng master(seed);
    std::vector<ImagePair> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        Rng r = master.fork(static_cast<std::uint64_t>(i));
        auto clean = synth_clean(H, W, r);
        const auto p = DegradationParams::sample(r);
        char id[24];
        std::snprintf(id, sizeof id, "%04lld", static_cast<long long>(i));
        pairs.push_back({id, synth_degrade(clean, p), clean});
    }
    return pairs;
}

void write_pairs(const std::vector<ImagePair>& pairs, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "input");
    fs::create_directories(fs::path(dir) / "target");
    for (const auto& p : pairs) {
        write_ppm((fs::path(dir) / "input" / (p.id + ".ppm")).string(), p.degraded);
        if (p.reference.defined()) write_ppm((fs::path(dir) / "target" / (p.id + ".ppm")).string(), p.reference);
    }
}

std::vector<std::string> list_ppm(const std::string& dir) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".ppm") names.push_back(e.path().filename().string());
    }
    std::sort(names.begin(), names.end());
    return names;
}

std::vector<ImagePair> load_pairs(const std::string& dir) {
    const auto in = fs::path(dir) / "input";
    const auto tgt = fs::path(dir) / "target";
    std::vector<ImagePair> pairs;
    for (const auto& name : list_ppm(in.string())) {
        ImagePair p;
        p.id = fs::path(name).stem().string();
        p.degraded = read_ppm((in / name).string());
        if (fs::exists(tgt / name)) {
            p.reference = read_ppm((tgt / name).string());
            if (p.reference.shape() != p.degraded.shape()) throw IoError("size mismatch between input and target " + name);
        }
        pairs.push_back(std::move(p));
    }
    if (pairs.empty()) throw IoError("no .ppm images in " + in.string());
    return pairs;
}

Tensor<float> stack_images(const std::vector<const Tensor<float>*>& images) {
    if (images.empty()) throw UsageError("stack_images: empty batch");
    const Shape& s = images.front()->shape();
    std::vector<float> out;
    out.reserve(static_cast<std::size_t>(numel_of(s)) * images.size());
    for (const auto* img : images) {
        if (img->shape() != s) throw DimensionError("stack_images: mixed shapes " + to_string(s) + " and " + to_string(img->shape()));
        out.insert(out.end(), img->data().begin(), img->data().end());
    }
    Shape shape{static_cast<std::int64_t>(images.size())};
    shape.insert(shape.end(), s.begin(), s.end());
    return Tensor<float>(std::move(shape), std::move(out));
}

// ---- training loop ----------------------------------------------------------------

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& curve) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch,loss,lr\n";
    char line[96];
    for (const auto& e : curve) {
        std::snprintf(line, sizeof line, "%lld,%.9g,%.9g\n", static_cast<long long>(e.epoch), e.loss, e.lr);
        out << line;
    }
}

double mean_psnr(const PixMamba<float>* model, const std::vector<ImagePair>& pairs) {
    double total = 0;
    std::int64_t n = 0;
    for (const auto& p : pairs) {
        if (!p.reference.defined()) continue;
        Tensor<float> img = p.degraded;
        if (model != nullptr) {
            auto out = model->enhance(stack_images({&p.degraded}));
            img = reshape(out, p.degraded.shape());
        }
        total += metrics::psnr(img.cast<double>(), p.reference.cast<double>());
        ++n;
    }
    return n == 0 ? 0.0 : total / static_cast<double>(n);
}

TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const std::vector<ImagePair>& train_set,
                  const std::vector<ImagePair>& val_set, const TrainOptions& opt) {
    PixMamba<float> model(mcfg, tcfg.seed);
    return train(model, tcfg, train_set, val_set, opt);
}

TrainResult train(PixMamba<float>& model, const TrainConfig& tcfg, const std::vector<ImagePair>& train_set,
                  const std::vector<ImagePair>& val_set, const TrainOptions& opt) {
    tcfg.validate();
    if (train_set.empty()) throw UsageError("training set is empty");
    for (const auto& p : train_set) {
        if (!p.reference.defined()) throw UsageError("training pair " + p.id + " has no reference image");
    }
    if (!opt.out_dir.empty()) fs::create_directories(opt.out_dir);

    auto& registry = model.parameters();
    std::vector<Tensor<float>> params;
    for (const auto& e : registry.entries()) params.push_back(e.second);
    AdamW<float> optimizer(params, tcfg);

    TrainResult result;
    result.parameter_count = registry.parameter_count();
    if (!opt.out_dir.empty()) {
        result.checkpoint_path = (fs::path(opt.out_dir) / "best.pxmb").string();
        result.loss_csv_path = (fs::path(opt.out_dir) / "loss.csv").string();
    }

    Rng order_rng(tcfg.seed ^ 0x5eedULL);
    std::vector<std::size_t> order(train_set.size());
    std::vector<std::vector<float>> best_weights;
    const auto bs = static_cast<std::size_t>(tcfg.batch_size);
    const auto eps = static_cast<float>(tcfg.charbonnier_eps);

    for (std::int64_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, tcfg);
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[order_rng.below(i)]);

        double loss_sum = 0;
        std::int64_t step = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++step) {
            const auto end = std::min(order.size(), start + bs);
            std::vector<const Tensor<float>*> xs, ys;
            for (std::size_t i = start; i < end; ++i) {
                xs.push_back(&train_set[order[i]].degraded);
                ys.push_back(&train_set[order[i]].reference);
            }
            const auto x = stack_images(xs);
            const auto y = stack_images(ys);
            GradTape<float> tape;
            auto loss = metrics::charbonnier(model.forward(x), y, eps);
            const double value = loss.item();
            if (!std::isfinite(value)) {
                throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
            }
            tape.backward(loss);
            optimizer.step(lr);
            registry.zero_grad();
            loss_sum += value * static_cast<double>(end - start);
        }

        const EpochLog log{epoch, loss_sum / static_cast<double>(order.size()), lr};
        result.curve.push_back(log);
        if (epoch == 0 || log.loss < result.best_loss) {
            result.best_loss = log.loss;
            result.best_epoch = epoch;
            best_weights.clear();
            for (const auto& p : params) best_weights.emplace_back(p.data().begin(), p.data().end());
            if (!opt.out_dir.empty()) save_checkpoint(model, result.checkpoint_path);
        }
        if (!opt.out_dir.empty()) write_loss_csv(result.loss_csv_path, result.curve);
        if (opt.on_epoch) opt.on_epoch(log);
    }

    for (std::size_t k = 0; k < params.size(); ++k) {
        std::copy(best_weights[k].begin(), best_weights[k].end(), params[k].mutable_data().begin());
    }
    if (!val_set.empty()) {
        result.val_psnr_degraded = mean_psnr(nullptr, val_set);
        result.val_psnr_enhanced = mean_psnr(&model, val_set);
    }
    return result;
}

// ---- inference and evaluation ---------------------------------------------------

std::vector<std::string> enhance_directory(const PixMamba<float>& model, const std::string& in_dir,
                                           const std::string& out_dir, SizePolicy policy) {
    const auto& cfg = model.config();
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    for (const auto& name : list_ppm(in_dir)) {
        auto img = read_ppm((fs::path(in_dir) / name).string());
        const std::int64_t H = img.dim(1), W = img.dim(2);
        const bool fits = H == cfg.image_height && W == cfg.image_width;
        if (!fits && policy == SizePolicy::Fail) {
            throw ConfigError(name + " is " + std::to_string(H) + "x" + std::to_string(W) + " but the model expects " +
                              std::to_string(cfg.image_height) + "x" + std::to_string(cfg.image_width) +
                              " (use the resize option)");
        }
        auto input = fits ? img : resize_bilinear(img, cfg.image_height, cfg.image_width);
        auto out = reshape(model.enhance(stack_images({&input})), input.shape());
        if (!fits) out = resize_bilinear(out, H, W);
        const auto path = (fs::path(out_dir) / name).string();
        write_ppm(path, out);
        written.push_back(path);
    }
    return written;
}

metrics::MetricsReport evaluate_directory(const std::string& image_dir, const std::string& ref_dir) {
    metrics::MetricsReport report;
    for (const auto& name : list_ppm(image_dir)) {
        const auto img = read_ppm((fs::path(image_dir) / name).string()).cast<double>();
        const auto id = fs::path(name).stem().string();
        if (!ref_dir.empty() && fs::exists(fs::path(ref_dir) / name)) {
            const auto ref = read_ppm((fs::path(ref_dir) / name).string()).cast<double>();
            report.rows.push_back(metrics::evaluate_image(id, img, &ref));
        } else {
            report.rows.push_back(metrics::evaluate_image(id, img));
        }
    }
    return report;
}

}  // namespace pixmamba
