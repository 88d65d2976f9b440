#include "pixmamba/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iomanip>

#include "pixmamba/ops.hpp"

namespace pixmamba::metrics {

namespace {

void require_same(const Tensor<double>& a, const Tensor<double>& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(what) + ": shapes differ, " + to_string(a.shape()) + " vs " +
                             to_string(b.shape()));
    }
}

void require_rgb(const Tensor<double>& img, const char* what) {
    if (img.rank() != 3 || img.dim(0) != 3) {
        throw DimensionError(std::string(what) + " needs an RGB image [3,H,W], got " + to_string(img.shape()));
    }
}

// Row-major plane view.
struct Plane {
    std::int64_t h;
    std::int64_t w;
    std::vector<double> v;
    double at(std::int64_t y, std::int64_t x) const { return v[static_cast<std::size_t>(y * w + x)]; }
};

Plane channel(const Tensor<double>& img, int c, double scale) {
    const std::int64_t H = img.dim(1), W = img.dim(2);
    Plane p{H, W, std::vector<double>(static_cast<std::size_t>(H * W))};
    auto src = img.data().subspan(static_cast<std::size_t>(c * H * W), static_cast<std::size_t>(H * W));
    for (std::size_t i = 0; i < p.v.size(); ++i) p.v[i] = src[i] * scale;
    return p;
}

// ---- SSIM -------------------------------------------------------------------

constexpr int kWin = 11;

std::array<double, kWin> gaussian_window() {
    std::array<double, kWin> g{};
    double s = 0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * 1.5 * 1.5));
        s += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= s;
    return g;
}

// Separable valid-mode Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& src, std::int64_t H, std::int64_t W) {
    static const auto g = gaussian_window();
    const std::int64_t oh = H - kWin + 1, ow = W - kWin + 1;
    std::vector<double> rows(static_cast<std::size_t>(H * ow));
    for (std::int64_t y = 0; y < H; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWin; ++k) s += g[static_cast<std::size_t>(k)] * src[static_cast<std::size_t>(y * W + x + k)];
            rows[static_cast<std::size_t>(y * ow + x)] = s;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (std::int64_t y = 0; y < oh; ++y) {
        for (std::int64_t x = 0; x < ow; ++x) {
            double s = 0;
            for (int k = 0; k < kWin; ++k) s += g[static_cast<std::size_t>(k)] * rows[static_cast<std::size_t>((y + k) * ow + x)];
            out[static_cast<std::size_t>(y * ow + x)] = s;
        }
    }
    return out;
}

double ssim_plane(const Plane& a, const Plane& b) {
    constexpr double C1 = 0.01 * 0.01;
    constexpr double C2 = 0.03 * 0.03;
    const std::size_t n = a.v.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a.v[i] * a.v[i];
        bb[i] = b.v[i] * b.v[i];
        ab[i] = a.v[i] * b.v[i];
    }
    const auto mu_a = filter_valid(a.v, a.h, a.w);
    const auto mu_b = filter_valid(b.v, a.h, a.w);
    const auto e_aa = filter_valid(aa, a.h, a.w);
    const auto e_bb = filter_valid(bb, a.h, a.w);
    const auto e_ab = filter_valid(ab, a.h, a.w);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double va = e_aa[i] - mu_a[i] * mu_a[i];
        const double vb = e_bb[i] - mu_b[i] * mu_b[i];
        const double cov = e_ab[i] - mu_a[i] * mu_b[i];
        const double num = (2 * mu_a[i] * mu_b[i] + C1) * (2 * cov + C2);
        const double den = (mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + C1) * (va + vb + C2);
        total += num / den;
    }
    return total / static_cast<double>(mu_a.size());
}

// ---- UIQM ---------------------------------------------------------------------

double trimmed_mean(std::vector<double> v, double alpha_l, double alpha_r) {
    std::sort(v.begin(), v.end());
    const auto K = v.size();
    const auto tl = static_cast<std::size_t>(std::ceil(alpha_l * static_cast<double>(K)));
    const auto tr = static_cast<std::size_t>(std::floor(alpha_r * static_cast<double>(K)));
    double s = 0;
    for (std::size_t i = tl; i < K - tr; ++i) s += v[i];
    return s / static_cast<double>(K - tl - tr);
}

double spread(const std::vector<double>& v, double mu) {
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return s / static_cast<double>(v.size());
}

double uicm(const Plane& R, const Plane& G, const Plane& B) {
    const std::size_t n = R.v.size();
    std::vector<double> rg(n), yb(n);
    for (std::size_t i = 0; i < n; ++i) {
        rg[i] = R.v[i] - G.v[i];
        yb[i] = (R.v[i] + G.v[i]) / 2 - B.v[i];
    }
    const double mu_rg = trimmed_mean(rg, 0.1, 0.1);
    const double mu_yb = trimmed_mean(yb, 0.1, 0.1);
    const double s_rg = spread(rg, mu_rg);
    const double s_yb = spread(yb, mu_yb);
    return -0.0268 * std::sqrt(mu_rg * mu_rg + mu_yb * mu_yb) + 0.1586 * std::sqrt(s_rg + s_yb);
}

// Index reflection about the edge with the border sample repeated.
std::int64_t reflect(std::int64_t i, std::int64_t n) {
    if (i < 0) return -i - 1;
    if (i >= n) return 2 * n - i - 1;
    return i;
}

// Sobel gradient magnitude rescaled so its maximum is 255.
Plane sobel_magnitude(const Plane& p) {
    Plane m{p.h, p.w, std::vector<double>(p.v.size())};
    auto px = [&](std::int64_t y, std::int64_t x) { return p.at(reflect(y, p.h), reflect(x, p.w)); };
    double peak = 0;
    for (std::int64_t y = 0; y < p.h; ++y) {
        for (std::int64_t x = 0; x < p.w; ++x) {
            const double gx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
            const double g = std::hypot(gx, gy);
            m.v[static_cast<std::size_t>(y * p.w + x)] = g;
            peak = std::max(peak, g);
        }
    }
    if (peak > 0) {
        for (auto& v : m.v) v *= 255.0 / peak;
    }
    return m;
}

constexpr std::int64_t kBlock = 10;

double eme(const Plane& p) {
    const std::int64_t k1 = p.h / kBlock, k2 = p.w / kBlock;
    if (k1 == 0 || k2 == 0) return 0;
    double acc = 0;
    for (std::int64_t by = 0; by < k1; ++by) {
        for (std::int64_t bx = 0; bx < k2; ++bx) {
            double lo = p.at(by * kBlock, bx * kBlock), hi = lo;
            for (std::int64_t y = by * kBlock; y < (by + 1) * kBlock; ++y) {
                for (std::int64_t x = bx * kBlock; x < (bx + 1) * kBlock; ++x) {
                    lo = std::min(lo, p.at(y, x));
                    hi = std::max(hi, p.at(y, x));
                }
            }
            if (lo > 0 && hi > 0) acc += std::log(hi / lo);
        }
    }
    return 2.0 / static_cast<double>(k1 * k2) * acc;
}

double uism(const Plane& R, const Plane& G, const Plane& B) {
    constexpr std::array<double, 3> weight{0.299, 0.587, 0.114};
    const std::array<const Plane*, 3> ch{&R, &G, &B};
    double s = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        Plane edges = sobel_magnitude(*ch[c]);
        for (std::size_t i = 0; i < edges.v.size(); ++i) edges.v[i] *= ch[c]->v[i];
        s += weight[c] * eme(edges);
    }
    return s;
}

double uiconm(const Plane& R, const Plane& G, const Plane& B) {
    const std::int64_t k1 = R.h / kBlock, k2 = R.w / kBlock;
    if (k1 == 0 || k2 == 0) return 0;
    const std::array<const Plane*, 3> ch{&R, &G, &B};
    double acc = 0;
    for (std::int64_t by = 0; by < k1; ++by) {
        for (std::int64_t bx = 0; bx < k2; ++bx) {
            double lo = R.at(by * kBlock, bx * kBlock), hi = lo;
            for (const auto* p : ch) {
                for (std::int64_t y = by * kBlock; y < (by + 1) * kBlock; ++y) {
                    for (std::int64_t x = bx * kBlock; x < (bx + 1) * kBlock; ++x) {
                        lo = std::min(lo, p->at(y, x));
                        hi = std::max(hi, p->at(y, x));
                    }
                }
            }
            const double top = hi - lo, bot = hi + lo;
            if (top > 0 && bot > 0) acc += top / bot * std::log(top / bot);
        }
    }
    return -1.0 / static_cast<double>(k1 * k2) * acc;
}

// ---- UCIQE --------------------------------------------------------------------

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
}

// Linear-interpolated percentile of sorted data, q in [0, 100].
double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

template <typename T>
Tensor<T> charbonnier(const Tensor<T>& pred, const Tensor<T>& target, T eps) {
    if (pred.shape() != target.shape()) {
        throw DimensionError("charbonnier: shapes differ, " + to_string(pred.shape()) + " vs " +
                             to_string(target.shape()));
    }
    if (!(eps > T(0))) throw DomainError("charbonnier: eps must be positive");
    return mean(sqrt(add_scalar(square(pred - target), eps * eps)));
}

template Tensor<float> charbonnier(const Tensor<float>&, const Tensor<float>&, float);
template Tensor<double> charbonnier(const Tensor<double>&, const Tensor<double>&, double);

double mse(const Tensor<double>& a, const Tensor<double>& b) {
    require_same(a, b, "mse");
    auto pa = a.data();
    auto pb = b.data();
    double s = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) s += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    return s / static_cast<double>(pa.size());
}

double psnr_from_mse(double m, double peak) {
    if (m <= 0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

double psnr(const Tensor<double>& a, const Tensor<double>& b, double peak) {
    return psnr_from_mse(mse(a, b), peak);
}

double ssim(const Tensor<double>& a, const Tensor<double>& b) {
    require_same(a, b, "ssim");
    if (a.rank() != 3) throw DimensionError("ssim needs [C,H,W] images, got " + to_string(a.shape()));
    if (a.dim(1) < kWin || a.dim(2) < kWin) {
        throw DimensionError("ssim: image " + to_string(a.shape()) + " is smaller than the 11x11 window");
    }
    double s = 0;
    for (int c = 0; c < a.dim(0); ++c) s += ssim_plane(channel(a, c, 1.0), channel(b, c, 1.0));
    return s / static_cast<double>(a.dim(0));
}

UiqmParts uiqm_parts(const Tensor<double>& img) {
    require_rgb(img, "uiqm");
    const auto R = channel(img, 0, 255.0);
    const auto G = channel(img, 1, 255.0);
    const auto B = channel(img, 2, 255.0);
    UiqmParts p;
    p.uicm = uicm(R, G, B);
    p.uism = uism(R, G, B);
    p.uiconm = uiconm(R, G, B);
    p.uiqm = kUiqmC1 * p.uicm + kUiqmC2 * p.uism + kUiqmC3 * p.uiconm;
    return p;
}

double uiqm(const Tensor<double>& img) {
    return uiqm_parts(img).uiqm;
}

UciqeParts uciqe_parts(const Tensor<double>& img) {
    require_rgb(img, "uciqe");
    static constexpr double M[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                       {0.2126729, 0.7151522, 0.0721750},
                                       {0.0193339, 0.1191920, 0.9503041}};
    // White point taken from the matrix rows so neutral colors have zero chroma.
    const double white[3] = {M[0][0] + M[0][1] + M[0][2], M[1][0] + M[1][1] + M[1][2], M[2][0] + M[2][1] + M[2][2]};
    const std::int64_t n = img.dim(1) * img.dim(2);
    auto px = img.data();
    std::vector<double> L(static_cast<std::size_t>(n)), chroma(L.size());
    double sat_sum = 0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double rgb[3] = {srgb_to_linear(px[i]), srgb_to_linear(px[n + i]), srgb_to_linear(px[2 * n + i])};
        double f[3];
        for (int k = 0; k < 3; ++k) f[k] = lab_f((M[k][0] * rgb[0] + M[k][1] * rgb[1] + M[k][2] * rgb[2]) / white[k]);
        const double l = (116.0 * f[1] - 16.0) / 100.0;
        const double a = 500.0 * (f[0] - f[1]);
        const double b = 200.0 * (f[1] - f[2]);
        const double c = std::sqrt(a * a + b * b) / 100.0;
        L[static_cast<std::size_t>(i)] = l;
        chroma[static_cast<std::size_t>(i)] = c;
        sat_sum += l > 0 ? c / l : 0.0;
    }
    double mu = 0;
    for (double c : chroma) mu += c;
    mu /= static_cast<double>(n);
    UciqeParts p;
    p.sigma_chroma = std::sqrt(spread(chroma, mu));
    std::sort(L.begin(), L.end());
    p.contrast_l = percentile(L, 99.0) - percentile(L, 1.0);
    p.mean_saturation = sat_sum / static_cast<double>(n);
    p.uciqe = kUciqeC1 * p.sigma_chroma + kUciqeC2 * p.contrast_l + kUciqeC3 * p.mean_saturation;
    return p;
}

double uciqe(const Tensor<double>& img) {
    return uciqe_parts(img).uciqe;
}

ImageMetrics evaluate_image(const std::string& id, const Tensor<double>& img, const Tensor<double>* reference) {
    ImageMetrics m;
    m.id = id;
    if (reference != nullptr) {
        m.mse = mse(img, *reference);
        m.psnr = psnr_from_mse(*m.mse);
        m.ssim = ssim(img, *reference);
    }
    m.uiqm = uiqm(img);
    m.uciqe = uciqe(img);
    return m;
}

bool MetricsReport::has_reference() const {
    return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const ImageMetrics& r) { return r.mse.has_value(); });
}

ImageMetrics MetricsReport::aggregate() const {
    ImageMetrics agg;
    agg.id = "mean";
    if (rows.empty()) return agg;
    const bool ref = has_reference();
    double m = 0, p = 0, s = 0, q = 0, u = 0;
    for (const auto& r : rows) {
        if (ref) {
            m += *r.mse;
            p += *r.psnr;
            s += *r.ssim;
        }
        q += r.uiqm;
        u += r.uciqe;
    }
    const auto n = static_cast<double>(rows.size());
    if (ref) {
        agg.mse = m / n;
        agg.psnr = p / n;
        agg.ssim = s / n;
    }
    agg.uiqm = q / n;
    agg.uciqe = u / n;
    return agg;
}

void MetricsReport::write_csv(std::ostream& os) const {
    const bool ref = has_reference();
    os << (ref ? "id,mse,psnr,ssim,uiqm,uciqe\n" : "id,uiqm,uciqe\n");
    os << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.id;
        if (ref) os << ',' << *r.mse << ',' << *r.psnr << ',' << *r.ssim;
        os << ',' << r.uiqm << ',' << r.uciqe << '\n';
    }
}

void MetricsReport::write_table(std::ostream& os) const {
    const bool ref = has_reference();
    std::size_t idw = 4;
    for (const auto& r : rows) idw = std::max(idw, r.id.size());
    auto line = [&](const ImageMetrics& r) {
        os << std::left << std::setw(static_cast<int>(idw)) << r.id << std::right << std::fixed;
        if (ref) {
            os << "  " << std::setw(10) << std::setprecision(6) << *r.mse << "  " << std::setw(8)
               << std::setprecision(3) << *r.psnr << "  " << std::setw(7) << std::setprecision(4) << *r.ssim;
        }
        os << "  " << std::setw(7) << std::setprecision(4) << r.uiqm << "  " << std::setw(7) << std::setprecision(4)
           << r.uciqe << '\n';
    };
    os << std::left << std::setw(static_cast<int>(idw)) << "id" << std::right;
    if (ref) os << "  " << std::setw(10) << "mse" << "  " << std::setw(8) << "psnr" << "  " << std::setw(7) << "ssim";
    os << "  " << std::setw(7) << "uiqm" << "  " << std::setw(7) << "uciqe" << '\n';
    for (const auto& r : rows) line(r);
    if (!rows.empty()) line(aggregate());
    os.unsetf(std::ios::floatfield);
}

}  // namespace pixmamba::metrics
