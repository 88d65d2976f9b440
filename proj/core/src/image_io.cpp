#include "pixmamba/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <tuple>

namespace pixmamba {

namespace {

class HeaderParser {
public:
    HeaderParser(const std::vector<std::uint8_t>& b, const std::string& name) : b_(b), name_(name) {}

    long long number() {
        skip_space();
        if (pos_ >= b_.size() || !std::isdigit(b_[pos_])) throw IoError(name_ + ": malformed PPM header");
        long long v = 0;
        while (pos_ < b_.size() && std::isdigit(b_[pos_])) {
            v = v * 10 + (b_[pos_++] - '0');
            if (v > (1LL << 30)) throw IoError(name_ + ": PPM header value out of range");
        }
        return v;
    }
    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space() {
        while (pos_ < b_.size()) {
            if (b_[pos_] == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
            } else if (std::isspace(b_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& b_;
    const std::string& name_;
    std::size_t pos_ = 2;
};

}  // namespace

Tensor<float> decode_ppm(const std::vector<std::uint8_t>& bytes, const std::string& name) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw IoError(name + ": not a binary PPM (P6)");
    HeaderParser h(bytes, name);
    const auto W = h.number();
    const auto H = h.number();
    const auto maxval = h.number();
    if (W < 1 || H < 1) throw IoError(name + ": empty image");
    if (maxval != 255) throw IoError(name + ": only maxval 255 is supported, got " + std::to_string(maxval));
    h.advance(1);  // single whitespace before the raster
    const auto n = static_cast<std::size_t>(W * H);
    if (bytes.size() < h.pos() + 3 * n) throw IoError(name + ": truncated PPM raster");
    std::vector<float> out(3 * n);
    const std::uint8_t* px = bytes.data() + h.pos();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) out[c * n + i] = static_cast<float>(px[3 * i + c]) / 255.0f;
    }
    return Tensor<float>(Shape{3, H, W}, std::move(out));
}

Tensor<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image " + path);
    std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_ppm(bytes, path);
}

std::vector<std::uint8_t> encode_ppm(const Tensor<float>& img) {
    if (img.rank() != 3 || img.dim(0) != 3) throw DimensionError("PPM output needs [3,H,W], got " + to_string(img.shape()));
    const std::int64_t H = img.dim(1), W = img.dim(2);
    const std::string header = "P6\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    const auto n = static_cast<std::size_t>(H * W);
    auto src = img.data();
    out.reserve(out.size() + 3 * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = std::clamp(src[c * n + i], 0.0f, 1.0f);
            out.push_back(static_cast<std::uint8_t>(std::lround(v * 255.0f)));
        }
    }
    return out;
}

void write_ppm(const std::string& path, const Tensor<float>& img) {
    const auto bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing image " + path);
}

Tensor<float> resize_bilinear(const Tensor<float>& img, std::int64_t H, std::int64_t W) {
    if (img.rank() != 3) throw DimensionError("resize expects [C,H,W], got " + to_string(img.shape()));
    const std::int64_t C = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (H == h && W == w) return img.clone();
    std::vector<float> out(static_cast<std::size_t>(C * H * W));
    auto src = img.data();
    auto taps = [](std::int64_t out_i, std::int64_t n_out, std::int64_t n_in) {
        double s = (static_cast<double>(out_i) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
        const auto i0 = static_cast<std::int64_t>(std::floor(s));
        const auto i1 = std::min(i0 + 1, n_in - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };
    for (std::int64_t y = 0; y < H; ++y) {
        const auto [y0, y1, fy] = taps(y, H, h);
        for (std::int64_t x = 0; x < W; ++x) {
            const auto [x0, x1, fx] = taps(x, W, w);
            for (std::int64_t c = 0; c < C; ++c) {
                const float* p = src.data() + c * h * w;
                const double top = p[y0 * w + x0] * (1 - fx) + p[y0 * w + x1] * fx;
                const double bot = p[y1 * w + x0] * (1 - fx) + p[y1 * w + x1] * fx;
                out[static_cast<std::size_t>((c * H + y) * W + x)] = static_cast<float>(top * (1 - fy) + bot * fy);
            }
        }
    }
    return Tensor<float>(Shape{C, H, W}, std::move(out));
}

}  // namespace pixmamba
