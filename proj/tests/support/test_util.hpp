#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <span>
#include <cstdint>
#include <string>
#include <vector>

#include "pixmamba/rng.hpp"
#include "pixmamba/ssm.hpp"
#include "pixmamba/tensor.hpp"

namespace pixmamba::testing {

template <typename T = double>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

inline double max_rel_diff(std::span<const double> a, std::span<const double> b) {
    double scale = 0, diff = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
        diff = std::max(diff, std::abs(a[i] - b[i]));
    }
    return scale > 0 ? diff / scale : diff;
}

inline bool bitwise_equal(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) return false;
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

// Random scan operands with delta in [0.01, 1] and A in [-2, -0.05].
inline ssm::ScanInput<double> random_scan_input(std::int64_t B, std::int64_t L, std::int64_t Dm, std::int64_t N,
                                               Rng& rng) {
    ssm::ScanInput<double> in;
    in.x = random_tensor({B, L, Dm}, rng);
    in.delta = random_tensor({B, L, Dm}, rng, 0.01, 1.0);
    in.A = random_tensor({Dm, N}, rng, -2.0, -0.05);
    in.Bmat = random_tensor({B, L, N}, rng);
    in.Cmat = random_tensor({B, L, N}, rng);
    in.D = random_tensor({Dm}, rng);
    return in;
}

// 16x16 integer patterns shared with tests/oracles/patterns.py.
inline Tensor<double> pattern_checker() {
    Tensor<double> t({3, 16, 16});
    auto d = t.mutable_data();
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            d[0 * 256 + y * 16 + x] = ((x * 7 + y * 3) % 16) / 15.0;
            d[1 * 256 + y * 16 + x] = ((x * x + 2 * y) % 13) / 12.0;
            d[2 * 256 + y * 16 + x] = ((3 * x + y * y) % 11) / 10.0;
        }
    }
    return t;
}

inline Tensor<double> pattern_underwater() {
    Tensor<double> t({3, 16, 16});
    auto d = t.mutable_data();
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            d[0 * 256 + y * 16 + x] = (((x + y) % 9) + 2) / 40.0;
            d[1 * 256 + y * 16 + x] = (((2 * x + 5 * y) % 17) + 20) / 45.0;
            d[2 * 256 + y * 16 + x] = (((x * y) % 19) + 30) / 52.0;
        }
    }
    return t;
}

}  // namespace pixmamba::testing
