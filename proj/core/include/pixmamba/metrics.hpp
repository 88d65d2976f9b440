#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pixmamba/tensor.hpp"

// Image quality measures. Images are [3,H,W] (or any matching shapes for the
// pixelwise measures) with values in [0, 1].
namespace pixmamba::metrics {

inline constexpr double kCharbonnierEps = 1e-3;
inline constexpr double kPsnrCap = 100.0;

/// mean(sqrt((pred - target)^2 + eps^2)), differentiable.
template <typename T>
Tensor<T> charbonnier(const Tensor<T>& pred, const Tensor<T>& target, T eps = T(kCharbonnierEps));

double mse(const Tensor<double>& a, const Tensor<double>& b);
// 10 log10(peak^2 / mse), capped at 100 dB.
double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak = 1.0);
double psnr_from_mse(double mse, double peak = 1.0);

// Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5), per channel, then
// averaged over channels.
double ssim(const Tensor<double>& a, const Tensor<double>& b);

struct UiqmParts {
    double uicm = 0;
    double uism = 0;
    double uiconm = 0;
    double uiqm = 0;
};

inline constexpr double kUiqmC1 = 0.0282;
inline constexpr double kUiqmC2 = 0.2953;
inline constexpr double kUiqmC3 = 3.5753;

// Computed on the 0-255 intensity scale.
UiqmParts uiqm_parts(const Tensor<double>& img);
double uiqm(const Tensor<double>& img);

struct UciqeParts {
    double sigma_chroma = 0;
    double contrast_l = 0;
    double mean_saturation = 0;
    double uciqe = 0;
};

inline constexpr double kUciqeC1 = 0.4680;
inline constexpr double kUciqeC2 = 0.2745;
inline constexpr double kUciqeC3 = 0.2576;

// CIELab (D65) with L and chroma scaled to [0, 1]; saturation = chroma / L.
UciqeParts uciqe_parts(const Tensor<double>& img);
double uciqe(const Tensor<double>& img);

struct ImageMetrics {
    std::string id;
    std::optional<double> mse;
    std::optional<double> psnr;
    std::optional<double> ssim;
    double uiqm = 0;
    double uciqe = 0;
};

// Reference-based fields are filled only when `reference` is given.
ImageMetrics evaluate_image(const std::string& id, const Tensor<double>& img,
                            const Tensor<double>* reference = nullptr);

struct MetricsReport {
    std::vector<ImageMetrics> rows;

    bool has_reference() const;
    // Arithmetic mean of every column.
    ImageMetrics aggregate() const;
    void write_csv(std::ostream& os) const;
    void write_table(std::ostream& os) const;
};

}  // namespace pixmamba::metrics
