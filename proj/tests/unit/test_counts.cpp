#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "demandforge/counts.hpp"
#include "demandforge/error.hpp"
#include "support/fixtures.hpp"

using namespace demandforge;

namespace {

CountTable parse(const std::string& body) {
    std::istringstream in("source,location,segment,count\n" + body);
    return ingest_counts(in);
}

std::string code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return "";
}

}  // namespace

TEST(Ingest, HeaderOnlyIsEmpty) { EXPECT_TRUE(parse("").empty()); }

TEST(Ingest, RowRetrievable) {
    const auto t = parse("CV,3,68,905\n");
    EXPECT_EQ(t.get(SourceKind::CV, 3, 68), 905);
    EXPECT_FALSE(t.get(SourceKind::M, 3, 68));
}

TEST(Ingest, Errors) {
    EXPECT_EQ(code_of([] { parse("CV,3,96,1\n"); }), "segment_out_of_range");
    EXPECT_EQ(code_of([] { parse("CV,3,5,-1\n"); }), "negative_count");
    EXPECT_EQ(code_of([] { parse("CV,3,5,1\nCV,3,5,2\n"); }), "duplicate_key");
    EXPECT_EQ(code_of([] { parse("XX,3,5,1\n"); }), "schema");
    EXPECT_EQ(code_of([] {
                  std::istringstream in("source,location,segment,count\nCV,9,5,1\n");
                  ingest_counts(in, 5);
              }),
              "unknown_location");
    EXPECT_EQ(code_of([] {
                  std::istringstream in("src,loc,seg,count\n");
                  ingest_counts(in);
              }),
              "schema");
}

TEST(Ingest, RaggedCoverageRejected) {
    // CV reports segments 1 and 2; location 4 only has segment 1.
    EXPECT_EQ(code_of([] { parse("CV,3,1,1\nCV,3,2,1\nCV,4,1,1\n"); }), "ragged_coverage");
    EXPECT_NO_THROW(parse("CV,3,1,1\nCV,3,2,1\nCV,4,1,1\nCV,4,2,0\nM,4,2,3\n"));
}

TEST(Calibrate, IdentityPair) {
    const auto b = calibrate_bounds(parse("M,0,10,10\nCV,0,10,10\n"));
    EXPECT_DOUBLE_EQ(b.alpha_lb, 1.0);
    EXPECT_DOUBLE_EQ(b.alpha_ub, 1.0);
}

TEST(Calibrate, ManualCvOverlap) {
    std::istringstream in(dftest::overlap_csv());
    const auto t = ingest_counts(in);
    const auto b = calibrate_bounds(t);
    EXPECT_NEAR(b.alpha_lb, 1048.0 / 1178.0, 1e-12);
    EXPECT_NEAR(b.alpha_ub, 2088.0 / 1962.0, 1e-12);
    EXPECT_EQ(b.ratios.size(), 16u);
    // Re-scan: every ratio inside the bounds.
    for (const auto& [key, m] : t.values()) {
        const auto [src, loc, seg] = key;
        if (src != SourceKind::M) continue;
        const double ratio = static_cast<double>(m) / static_cast<double>(*t.get(SourceKind::CV, loc, seg));
        EXPECT_GE(ratio, b.alpha_lb);
        EXPECT_LE(ratio, b.alpha_ub);
    }
}

TEST(Calibrate, ScaleInvariance) {
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> pick(20, 400);
    std::ostringstream a, b;
    for (int j = 0; j < 6; ++j) {
        const int m = pick(rng), cv = pick(rng);
        a << "M," << j << ",40," << m << "\nCV," << j << ",40," << cv << '\n';
        b << "M," << j << ",40," << 3 * m << "\nCV," << j << ",40," << 3 * cv << '\n';
    }
    const auto x = calibrate_bounds(parse(a.str()));
    const auto y = calibrate_bounds(parse(b.str()));
    EXPECT_DOUBLE_EQ(x.alpha_lb, y.alpha_lb);
    EXPECT_DOUBLE_EQ(x.alpha_ub, y.alpha_ub);
}

TEST(Calibrate, ZeroDenominatorSkipped) {
    const auto b = calibrate_bounds(parse("M,0,10,5\nCV,0,10,0\nM,1,10,9\nCV,1,10,10\n"));
    EXPECT_DOUBLE_EQ(b.alpha_lb, 0.9);
    ASSERT_EQ(b.skipped_zero.size(), 1u);
    EXPECT_EQ(b.skipped_zero[0].first, 0u);
}

TEST(Calibrate, OnlyZeroDenominatorsIsAnError) {
    EXPECT_EQ(code_of([] { calibrate_bounds(parse("M,0,10,5\nCV,0,10,0\n")); }), "zero_count");
}

TEST(Calibrate, EmptyOverlap) {
    EXPECT_EQ(code_of([] { calibrate_bounds(parse("M,0,10,5\nCV,1,10,4\n")); }), "empty_overlap");
}

TEST(ChainBounds, IdenticalCountsGiveSameBounds) {
    const auto t = parse("CV,0,3,50\nLD,0,3,50\nCV,1,3,20\nLD,1,3,20\n");
    const auto cv = make_bounds(SourceKind::CV, 0.94, 1.12);
    const auto ld = chain_bounds(cv, t);
    EXPECT_DOUBLE_EQ(ld.alpha_lb, 0.94);
    EXPECT_DOUBLE_EQ(ld.alpha_ub, 1.12);
    EXPECT_EQ(ld.source, SourceKind::LD);
}

TEST(ChainBounds, ScalesByRatioExtremes) {
    // f^CV / f^LD ratios 0.5 and 2.0.
    const auto t = parse("CV,0,3,10\nLD,0,3,20\nCV,1,3,40\nLD,1,3,20\n");
    const auto ld = chain_bounds(make_bounds(SourceKind::CV, 0.9, 1.1), t);
    EXPECT_DOUBLE_EQ(ld.alpha_lb, 0.45);
    EXPECT_DOUBLE_EQ(ld.alpha_ub, 2.2);
}

TEST(ChainBounds, MatchesFormulaOnRandomFixtures) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> pick(1, 300);
    for (int trial = 0; trial < 20; ++trial) {
        std::ostringstream csv;
        double lo = 1e300, hi = -1e300;
        for (int j = 0; j < 5; ++j) {
            const int cv = pick(rng), ld = pick(rng);
            csv << "CV," << j << ",7," << cv << "\nLD," << j << ",7," << ld << '\n';
            lo = std::min(lo, static_cast<double>(cv) / ld);
            hi = std::max(hi, static_cast<double>(cv) / ld);
        }
        const auto cv = make_bounds(SourceKind::CV, 0.94, 1.12);
        const auto ld = chain_bounds(cv, parse(csv.str()));
        EXPECT_EQ(ld.alpha_lb, 0.94 * lo);
        EXPECT_EQ(ld.alpha_ub, 1.12 * hi);
    }
}

TEST(MakeBands, Arithmetic) {
    const auto b = make_bounds(SourceKind::CV, 0.94, 1.12);
    const auto band = band_for(100, b);
    EXPECT_NEAR(band.lo, 94.0, 1e-12);
    EXPECT_NEAR(band.hi, 112.0, 1e-12);
    const auto zero = band_for(0, b);
    EXPECT_EQ(zero.lo, 0.0);
    EXPECT_EQ(zero.hi, 0.0);
    const auto half = band_for(7, make_bounds(SourceKind::CV, 0.5, 2.0));
    EXPECT_DOUBLE_EQ(half.lo, 3.5);
    EXPECT_DOUBLE_EQ(half.hi, 14.0);
}

TEST(MakeBands, MissingCountsGiveNoBand) {
    const auto t = parse("CV,1,5,10\nLD,0,5,4\n");
    const auto bands = make_bands(t, make_bounds(SourceKind::CV, 1.0, 1.0), SourceKind::CV, 3);
    ASSERT_EQ(bands.size(), 96u);
    EXPECT_FALSE(bands[5][0]);
    ASSERT_TRUE(bands[5][1]);
    EXPECT_EQ(bands[5][1]->lo, 10.0);
    EXPECT_FALSE(bands[6][1]);
}

TEST(MakeBands, Monotone) {
    const auto b = make_bounds(SourceKind::CV, 0.94, 1.12);
    for (int f1 = 0; f1 < 50; ++f1)
        for (int f2 = f1; f2 < 50; ++f2) {
            const auto x = band_for(f1, b), y = band_for(f2, b);
            EXPECT_LE(x.lo, y.lo);
            EXPECT_LE(x.hi, y.hi);
            EXPECT_GE(x.lo, 0.0);
        }
}
