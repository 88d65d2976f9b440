#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

// Branch-free float exp and log1p the compiler can vectorize. Double
// arguments go to libm.
namespace pixmamba::fastmath {

inline float exp_poly(float z) {
    z = std::clamp(z, -87.0f, 88.0f);
    const float kf = (z * 1.44269504f + 12582912.0f) - 12582912.0f;
    const float r = (z - kf * 0.693359375f) + kf * 2.12194440e-4f;
    const float p =
        1.0f + r * (1.0f + r * (0.5f + r * (1.0f / 6 + r * (1.0f / 24 + r * (1.0f / 120 + r * (1.0f / 720 + r * (1.0f / 5040)))))));
    const auto bits = static_cast<std::uint32_t>(static_cast<std::int32_t>(kf) + 127) << 23;
    return p * std::bit_cast<float>(bits);
}

// Natural log of a positive normal float, cephes-style.
inline float log_poly(float x) {
    const auto bits = std::bit_cast<std::uint32_t>(x);
    float e = static_cast<float>(static_cast<std::int32_t>((bits >> 23) & 0xffu) - 126);
    float m = std::bit_cast<float>((bits & 0x807fffffu) | 0x3f000000u);
    const bool low = m < 0.707106781f;
    e = low ? e - 1.0f : e;
    m = low ? m + m - 1.0f : m - 1.0f;
    const float z = m * m;
    float y = 7.0376836292e-2f;
    y = y * m - 1.1514610310e-1f;
    y = y * m + 1.1676998740e-1f;
    y = y * m - 1.2420140846e-1f;
    y = y * m + 1.4249322787e-1f;
    y = y * m - 1.6668057665e-1f;
    y = y * m + 2.0000714765e-1f;
    y = y * m - 2.4999993993e-1f;
    y = y * m + 3.3333331174e-1f;
    y = y * m * z;
    y += -2.12194440e-4f * e;
    y += -0.5f * z;
    return m + y + 0.693359375f * e;
}

// log(1 + u) for u >= 0; the ratio u / (w - 1) restores the digits lost
// when w = 1 + u is rounded.
inline float log1p_poly(float u) {
    const float w = 1.0f + u;
    const float d = w - 1.0f;
    return d == 0.0f ? u : log_poly(w) * (u / d);
}

inline float exp(float x) { return exp_poly(x); }
inline double exp(double x) { return std::exp(x); }

inline float log1p(float x) { return log1p_poly(x); }
inline double log1p(double x) { return std::log1p(x); }

}  // namespace pixmamba::fastmath
