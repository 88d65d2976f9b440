#pragma once

#include <cstdint>
#include <vector>

#include "pixmamba/tensor.hpp"

namespace pixmamba {

enum class BroadcastKind {
    Same,    // operand shape equals the output shape
    Suffix,  // operand repeats over leading output dims (index = i % numel)
    General,
};

struct BroadcastPlan {
    Shape out;
    std::vector<std::int64_t> a_strides;  // per output dim, 0 where broadcast
    std::vector<std::int64_t> b_strides;
    BroadcastKind a_kind = BroadcastKind::General;
    BroadcastKind b_kind = BroadcastKind::General;

    // Calls f(out_index, a_index, b_index) for every output element in
    // row-major order.
    template <typename F>
    void for_each(F&& f) const {
        const int r = static_cast<int>(out.size());
        const std::int64_t n = numel_of(out);
        if (r == 0) {
            f(0, 0, 0);
            return;
        }
        std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
        std::int64_t ia = 0;
        std::int64_t ib = 0;
        for (std::int64_t io = 0; io < n; ++io) {
            f(io, ia, ib);
            for (int d = r - 1; d >= 0; --d) {
                const auto du = static_cast<std::size_t>(d);
                ++idx[du];
                ia += a_strides[du];
                ib += b_strides[du];
                if (idx[du] < out[du]) break;
                ia -= a_strides[du] * out[du];
                ib -= b_strides[du] * out[du];
                idx[du] = 0;
            }
        }
    }
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b);

}  // namespace pixmamba
