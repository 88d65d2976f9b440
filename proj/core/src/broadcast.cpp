#include "broadcast.hpp"

#include <algorithm>

namespace pixmamba {

namespace {

std::vector<std::int64_t> strides_for(const Shape& s, const Shape& out) {
    const auto r = out.size();
    const auto off = r - s.size();
    std::vector<std::int64_t> contiguous(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) contiguous[i - 1] = contiguous[i] * s[i];
    std::vector<std::int64_t> st(r, 0);
    for (std::size_t i = 0; i < s.size(); ++i) st[off + i] = (s[i] == 1 && out[off + i] != 1) ? 0 : contiguous[i];
    return st;
}

BroadcastKind classify(const Shape& s, const Shape& out) {
    if (s == out) return BroadcastKind::Same;
    // Strip leading unit extents, then the remainder must match out's tail.
    auto first = std::find_if(s.begin(), s.end(), [](std::int64_t d) { return d != 1; });
    Shape core(first, s.end());
    if (core.size() > out.size()) return BroadcastKind::General;
    if (std::equal(core.begin(), core.end(), out.end() - static_cast<std::ptrdiff_t>(core.size()))) {
        return BroadcastKind::Suffix;
    }
    return BroadcastKind::General;
}

}  // namespace

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
    BroadcastPlan p;
    const auto r = std::max(a.size(), b.size());
    p.out.assign(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        const std::int64_t da = i + a.size() >= r ? a[i + a.size() - r] : 1;
        const std::int64_t db = i + b.size() >= r ? b[i + b.size() - r] : 1;
        if (da != db && da != 1 && db != 1) {
            throw DimensionError("cannot broadcast shapes " + to_string(a) + " and " + to_string(b));
        }
        p.out[i] = std::max(da, db);
    }
    p.a_strides = strides_for(a, p.out);
    p.b_strides = strides_for(b, p.out);
    p.a_kind = classify(a, p.out);
    p.b_kind = classify(b, p.out);
    return p;
}

}  // namespace pixmamba
