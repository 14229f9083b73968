#pragma once

// Data-parallel kernels shared by the segment solvers. Each kernel has an
// OpenMP implementation and a plain serial reference in `serial::`; the
// parallel versions sum in fixed-size blocks, so results do not depend on the
// thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "demandforge/netgraph.hpp"

namespace demandforge::kernels {

/// Per-location intervals. Absent bands are (-inf, +inf) and contribute nothing.
struct BandArrays {
    std::vector<double> cv_lo, cv_hi;
    std::vector<double> ld_lo, ld_hi;
    std::vector<double> hard_lo, hard_hi;

    explicit BandArrays(std::size_t m = 0);
    std::size_t size() const { return cv_lo.size(); }
    bool has_hard() const;
};

inline constexpr std::size_t kBlock = 256;

/// Signed projection residual: amount that moves y into [lo, hi].
inline double slack(double y, double lo, double hi) {
    if (y < lo) return lo - y;
    if (y > hi) return hi - y;
    return 0.0;
}

/// y = A r (y_j = sum of r_i over routes passing j).
void route_to_location(const IncidenceMatrix& a, std::span<const double> r, std::span<double> y);
/// out = Aᵀ g (out_i = sum of g_j over locations on route i).
void location_to_route(const IncidenceMatrix& a, std::span<const double> g, std::span<double> out);

/// Sum over locations of s_cv² + s_ld² + hard_weight·s_hard². When grad_y is
/// non-empty it receives the derivative with respect to y.
double band_terms(std::span<const double> y, const BandArrays& b, double hard_weight,
                  std::span<double> grad_y);

/// Sum over locations of s_hard² only.
double hard_violation(std::span<const double> y, const BandArrays& b);

namespace serial {
void route_to_location(const IncidenceMatrix& a, std::span<const double> r, std::span<double> y);
void location_to_route(const IncidenceMatrix& a, std::span<const double> g, std::span<double> out);
double band_terms(std::span<const double> y, const BandArrays& b, double hard_weight,
                  std::span<double> grad_y);
}  // namespace serial

}  // namespace demandforge::kernels
