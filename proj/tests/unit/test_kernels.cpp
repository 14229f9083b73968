#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "demandforge/kernels.hpp"
#include "support/fixtures.hpp"

using demandforge::IncidenceMatrix;
using namespace demandforge::kernels;

namespace {

BandArrays random_bands(std::mt19937_64& rng, std::size_t m, bool hard) {
    std::uniform_real_distribution<double> u(0.0, 50.0), coin(0.0, 1.0);
    BandArrays b(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (coin(rng) < 0.8) {
            b.cv_lo[j] = u(rng);
            b.cv_hi[j] = b.cv_lo[j] + u(rng) / 5;
        }
        if (coin(rng) < 0.4) {
            b.ld_lo[j] = u(rng);
            b.ld_hi[j] = b.ld_lo[j] + u(rng);
        }
        if (hard && coin(rng) < 0.1) b.hard_lo[j] = u(rng);
    }
    return b;
}

}  // namespace

TEST(Kernels, ParallelMatchesSerialOnLargeGrid) {
    const auto b = dftest::build(dftest::large_grid_network_json());
    const auto& a = *b.a;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    std::vector<double> r(a.routes());
    for (auto& v : r) v = u(rng);

    std::vector<double> y1(a.locations()), y2(a.locations());
    route_to_location(a, r, y1);
    serial::route_to_location(a, r, y2);
    for (std::size_t j = 0; j < y1.size(); ++j) ASSERT_NEAR(y1[j], y2[j], 1e-9 * (1 + std::abs(y2[j])));

    const auto bands = random_bands(rng, a.locations(), true);
    std::vector<double> g1(a.locations()), g2(a.locations());
    const double f1 = band_terms(y1, bands, 1e4, g1);
    const double f2 = serial::band_terms(y2, bands, 1e4, g2);
    EXPECT_NEAR(f1, f2, 1e-9 * (1 + std::abs(f2)));
    for (std::size_t j = 0; j < g1.size(); ++j) ASSERT_NEAR(g1[j], g2[j], 1e-9 * (1 + std::abs(g2[j])));

    std::vector<double> o1(a.routes()), o2(a.routes());
    location_to_route(a, g1, o1);
    serial::location_to_route(a, g2, o2);
    for (std::size_t i = 0; i < o1.size(); ++i) ASSERT_NEAR(o1[i], o2[i], 1e-9 * (1 + std::abs(o2[i])));
}

TEST(Kernels, BandTermsAgainstSlackDefinition) {
    std::mt19937_64 rng(8);
    const auto bands = random_bands(rng, 40, false);
    std::uniform_real_distribution<double> u(0.0, 60.0);
    std::vector<double> y(40);
    for (auto& v : y) v = u(rng);
    double expect = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double a = slack(y[j], bands.cv_lo[j], bands.cv_hi[j]);
        const double c = slack(y[j], bands.ld_lo[j], bands.ld_hi[j]);
        expect += a * a + c * c;
    }
    EXPECT_NEAR(band_terms(y, bands, 1.0, {}), expect, 1e-9);
    EXPECT_FALSE(bands.has_hard());
}

TEST(Kernels, GradientMatchesFiniteDifference) {
    std::mt19937_64 rng(13);
    const auto bands = random_bands(rng, 10, true);
    std::vector<double> y{1, 12, 25, 40, 3, 7, 19, 33, 48, 0.5};
    std::vector<double> g(10);
    band_terms(y, bands, 3.0, g);
    for (std::size_t j = 0; j < y.size(); ++j) {
        auto yp = y, ym = y;
        yp[j] += 1e-6;
        ym[j] -= 1e-6;
        const double fd = (band_terms(yp, bands, 3.0, {}) - band_terms(ym, bands, 3.0, {})) / 2e-6;
        EXPECT_NEAR(g[j], fd, 1e-4) << j;
    }
}

TEST(Kernels, HardViolation) {
    BandArrays b(2);
    b.hard_lo[0] = 10;
    b.hard_hi[1] = 4;
    EXPECT_TRUE(b.has_hard());
    const std::vector<double> y{7, 6};
    EXPECT_DOUBLE_EQ(hard_violation(y, b), 9.0 + 4.0);
}
