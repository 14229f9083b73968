#include <algorithm>
#include <numeric>

#include "demandforge/error.hpp"
#include "demandforge/qipsolve.hpp"

namespace demandforge {

namespace {

constexpr std::int64_t kM = kMinutesPerSegment;

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
    std::int64_t q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

}  // namespace

std::array<std::int64_t, kMinutesPerSegment> distribute_row(
    std::int64_t total, const std::array<std::int64_t, kMinutesPerSegment>* prev) {
    if (total < 0) throw Error("invalid_argument", "route count must be nonnegative");
    std::array<std::int64_t, kMinutesPerSegment> p{};
    if (prev) p = *prev;
    const std::int64_t prev_sum = std::accumulate(p.begin(), p.end(), std::int64_t{0});

    // Shift every minute by (total - prev_sum)/15, in units of 1/15.
    std::array<std::int64_t, kMinutesPerSegment> c{};
    std::array<std::int64_t, kMinutesPerSegment> frac{};
    std::int64_t assigned = 0;
    for (std::size_t m = 0; m < c.size(); ++m) {
        const std::int64_t scaled = kM * p[m] + (total - prev_sum);
        c[m] = floor_div(scaled, kM);
        frac[m] = scaled - kM * c[m];
        assigned += c[m];
    }
    // Largest remainder; ties to the earliest minute.
    std::array<std::size_t, kMinutesPerSegment> order{};
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++c[order[k % order.size()]];

    // Clamp negatives and hand the surplus back from the most over-allocated minutes.
    std::int64_t surplus = 0;
    for (auto& v : c)
        if (v < 0) {
            surplus -= v;
            v = 0;
        }
    while (surplus > 0) {
        std::size_t pick = c.size();
        for (std::size_t m = 0; m < c.size(); ++m)
            if (c[m] > 0 && (pick == c.size() || c[m] - p[m] > c[pick] - p[pick])) pick = m;
        --c[pick];
        --surplus;
    }
    // Unit transfers until none lowers Σ(c - p)²; for separable convex costs
    // this local optimum is global.
    for (;;) {
        std::size_t from = c.size(), to = 0;
        for (std::size_t m = 0; m < c.size(); ++m) {
            if (c[m] > 0 && (from == c.size() || c[m] - p[m] > c[from] - p[from])) from = m;
            if (c[m] - p[m] < c[to] - p[to]) to = m;
        }
        if (from == c.size() || (c[from] - p[from]) - (c[to] - p[to]) <= 1) break;
        --c[from];
        ++c[to];
    }
    return c;
}

MinuteSchedule distribute_minutes(std::span<const std::int64_t> r, const MinuteSchedule* prev) {
    if (prev && prev->c.size() != r.size())
        throw Error("dimension_mismatch", "previous minute schedule has " + std::to_string(prev->c.size()) +
                                              " rows, expected " + std::to_string(r.size()));
    MinuteSchedule out;
    out.c.resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) out.c[i] = distribute_row(r[i], prev ? &prev->c[i] : nullptr);
    if (prev) out.segment = prev->segment + 1;
    return out;
}

std::vector<MinuteSchedule> distribute_day(std::span<const RouteSolution> solutions) {
    std::vector<MinuteSchedule> out;
    out.reserve(solutions.size());
    for (const auto& s : solutions) {
        out.push_back(distribute_minutes(s.r, out.empty() ? nullptr : &out.back()));
        out.back().segment = s.segment;
    }
    return out;
}

}  // namespace demandforge
