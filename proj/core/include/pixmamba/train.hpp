#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "pixmamba/metrics.hpp"
#include "pixmamba/model.hpp"

namespace pixmamba {

struct TrainConfig {
    double lr = 4e-4;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double weight_decay = 0.01;
    double eps_adam = 1e-8;
    double charbonnier_eps = 1e-3;
    std::int64_t batch_size = 4;
    std::int64_t epochs = 30;
    std::int64_t warmup_epochs = 2;
    std::uint64_t seed = 0;
    // Synthetic data sizes, used when no data directory is given.
    std::int64_t train_pairs = 200;
    std::int64_t val_pairs = 16;

    static TrainConfig full_scale();

    void validate() const;
    // Returns false when `key` is not a training key.
    bool set(const std::string& key, const std::string& value);
    std::string to_text() const;
};

/// Linear warmup from lr / warmup to lr, then cosine annealing to zero.
double lr_at(std::int64_t epoch, const TrainConfig& cfg);

/// Adam with decoupled weight decay: p <- p (1 - lr wd), then the
/// bias-corrected Adam update.
template <typename T>
class AdamW {
public:
    AdamW(std::vector<Tensor<T>> params, double beta1, double beta2, double weight_decay, double eps = 1e-8);
    explicit AdamW(std::vector<Tensor<T>> params, const TrainConfig& cfg)
        : AdamW(std::move(params), cfg.beta1, cfg.beta2, cfg.weight_decay, cfg.eps_adam) {}

    // Parameters without a gradient are treated as having a zero gradient.
    void step(double lr);
    std::int64_t steps() const { return t_; }

private:
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double beta1_;
    double beta2_;
    double wd_;
    double eps_;
    std::int64_t t_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

// ---- synthetic underwater data ---------------------------------------------

struct DegradationParams {
    std::array<double, 3> t{1, 1, 1};        // per-channel transmission, red lowest
    std::array<double, 3> ambient{0, 0, 0};  // veiling light
    double blur_sigma = 0;
    double contrast = 1;

    static DegradationParams sample(Rng& rng);
    void validate() const;
};

// Separable Gaussian blur with mirrored borders; sigma 0 is the identity.
Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma);
// Procedural scene: gradients, shapes and texture, [3,H,W] in [0, 1].
Tensor<float> synth_clean(std::int64_t H, std::int64_t W, Rng& rng);
// clamp(contrast * (blur(clean) * t + A * (1 - t)))
Tensor<float> synth_degrade(const Tensor<float>& clean, const DegradationParams& p);

struct ImagePair {
    std::string id;
    Tensor<float> degraded;   // [3,H,W]
    Tensor<float> reference;  // [3,H,W], undefined when absent
};

std::vector<ImagePair> synth_pairs(std::int64_t count, std::int64_t H, std::int64_t W, std::uint64_t seed);
// Writes dir/input/<id>.ppm and dir/target/<id>.ppm.
void write_pairs(const std::vector<ImagePair>& pairs, const std::string& dir);
// Reads dir/input/*.ppm with matching dir/target/*.ppm when present.
std::vector<ImagePair> load_pairs(const std::string& dir);
// Sorted *.ppm files of a directory.
std::vector<std::string> list_ppm(const std::string& dir);

// Stacks [3,H,W] images into [B,3,H,W].
Tensor<float> stack_images(const std::vector<const Tensor<float>*>& images);

// ---- training ----------------------------------------------------------------

struct EpochLog {
    std::int64_t epoch;
    double loss;
    double lr;
};

struct TrainResult {
    std::vector<EpochLog> curve;
    double best_loss = 0;
    std::int64_t best_epoch = 0;
    std::int64_t parameter_count = 0;
    // Mean PSNR against the references of the validation set.
    double val_psnr_degraded = 0;
    double val_psnr_enhanced = 0;
    std::string checkpoint_path;
    std::string loss_csv_path;
};

struct TrainOptions {
    std::string out_dir;  // empty: keep everything in memory
    std::function<void(const EpochLog&)> on_epoch;
};

/// Trains from the configured seed. Writes out_dir/best.pxmb (lowest epoch
/// loss) and out_dir/loss.csv. Throws DivergenceError on a non-finite loss.
TrainResult train(const ModelConfig& mcfg, const TrainConfig& tcfg, const std::vector<ImagePair>& train_set,
                  const std::vector<ImagePair>& val_set, const TrainOptions& opt = {});
TrainResult train(PixMamba<float>& model, const TrainConfig& tcfg, const std::vector<ImagePair>& train_set,
                  const std::vector<ImagePair>& val_set, const TrainOptions& opt = {});

void write_loss_csv(const std::string& path, const std::vector<EpochLog>& curve);

// Mean PSNR of (model output | degraded input) against references.
double mean_psnr(const PixMamba<float>* model, const std::vector<ImagePair>& pairs);

// ---- inference and evaluation ---------------------------------------------------

enum class SizePolicy { Fail, Resize };

// Enhances every PPM of in_dir into out_dir (same file names).
std::vector<std::string> enhance_directory(const PixMamba<float>& model, const std::string& in_dir,
                                           const std::string& out_dir, SizePolicy policy);

// Metrics for every PPM of image_dir; reference metrics when ref_dir is
// non-empty and holds an image with the same name.
metrics::MetricsReport evaluate_directory(const std::string& image_dir, const std::string& ref_dir);

}  // namespace pixmamba
