#include "demandforge/kernels.hpp"

#include <algorithm>
#include <limits>

namespace demandforge::kernels {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

inline double location_term(double y, const BandArrays& b, std::size_t j, double hard_weight, double* grad) {
    const double s_cv = slack(y, b.cv_lo[j], b.cv_hi[j]);
    const double s_ld = slack(y, b.ld_lo[j], b.ld_hi[j]);
    const double s_hd = slack(y, b.hard_lo[j], b.hard_hi[j]);
    // d/dy of s² is -2s.
    if (grad) *grad = -2.0 * (s_cv + s_ld + hard_weight * s_hd);
    return s_cv * s_cv + s_ld * s_ld + hard_weight * s_hd * s_hd;
}
}  // namespace

BandArrays::BandArrays(std::size_t m)
    : cv_lo(m, -kInf), cv_hi(m, kInf), ld_lo(m, -kInf), ld_hi(m, kInf), hard_lo(m, -kInf), hard_hi(m, kInf) {}

bool BandArrays::has_hard() const {
    for (std::size_t j = 0; j < size(); ++j)
        if (hard_lo[j] > -kInf || hard_hi[j] < kInf) return true;
    return false;
}

void route_to_location(const IncidenceMatrix& a, std::span<const double> r, std::span<double> y) {
    const auto m = static_cast<std::ptrdiff_t>(a.locations());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (auto i : a.column(j)) acc += r[i];
        y[j] = acc;
    }
}

void location_to_route(const IncidenceMatrix& a, std::span<const double> g, std::span<double> out) {
    const auto n = static_cast<std::ptrdiff_t>(a.routes());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (auto j : a.row(i)) acc += g[j];
        out[i] = acc;
    }
}

double band_terms(std::span<const double> y, const BandArrays& b, double hard_weight, std::span<double> grad_y) {
    const std::size_t m = y.size();
    const std::size_t blocks = (m + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    const bool want_grad = !grad_y.empty();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(blocks); ++k) {
        const std::size_t lo = static_cast<std::size_t>(k) * kBlock;
        const std::size_t hi = std::min(m, lo + kBlock);
        double acc = 0.0;
        for (std::size_t j = lo; j < hi; ++j)
            acc += location_term(y[j], b, j, hard_weight, want_grad ? &grad_y[j] : nullptr);
        partial[k] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double hard_violation(std::span<const double> y, const BandArrays& b) {
    double total = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double s = slack(y[j], b.hard_lo[j], b.hard_hi[j]);
        total += s * s;
    }
    return total;
}

namespace serial {

void route_to_location(const IncidenceMatrix& a, std::span<const double> r, std::span<double> y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < a.routes(); ++i)
        for (auto j : a.row(i)) y[j] += r[i];
}

void location_to_route(const IncidenceMatrix& a, std::span<const double> g, std::span<double> out) {
    for (std::size_t i = 0; i < a.routes(); ++i) {
        double acc = 0.0;
        for (auto j : a.row(i)) acc += g[j];
        out[i] = acc;
    }
}

double band_terms(std::span<const double> y, const BandArrays& b, double hard_weight, std::span<double> grad_y) {
    double total = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j)
        total += location_term(y[j], b, j, hard_weight, grad_y.empty() ? nullptr : &grad_y[j]);
    return total;
}

}  // namespace serial

}  // namespace demandforge::kernels
