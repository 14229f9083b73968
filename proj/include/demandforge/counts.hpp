#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace demandforge {

inline constexpr int kSegmentsPerDay = 96;
inline constexpr int kMinutesPerSegment = 15;

enum class SourceKind { M, CV, LD };

std::string_view to_string(SourceKind s);
SourceKind parse_source(std::string_view s);

/// Write-once store of integer counts keyed by (source, location, segment).
class CountTable {
public:
    using Key = std::tuple<SourceKind, std::size_t, int>;

    // Throws on negative count, segment outside 0..95 or a duplicate key.
    void insert(SourceKind source, std::size_t location, int segment, std::int64_t count);

    std::optional<std::int64_t> get(SourceKind source, std::size_t location, int segment) const;
    bool empty() const { return values_.empty(); }
    std::size_t size() const { return values_.size(); }
    const std::map<Key, std::int64_t>& values() const { return values_; }

    // Rejects a (source, location) series missing a segment its source reports elsewhere.
    void check_coverage() const;

private:
    std::map<Key, std::int64_t> values_;
};

/// Parses `source,location,segment,count` rows. When `location_count` is set,
/// locations at or beyond it are rejected.
CountTable ingest_counts(std::istream& in, std::optional<std::size_t> location_count = std::nullopt);
CountTable ingest_counts_file(const std::string& path,
                              std::optional<std::size_t> location_count = std::nullopt);

struct RatioSample {
    std::size_t location = 0;
    int segment = 0;
    double ratio = 0.0;
};

struct CalibrationBounds {
    SourceKind source = SourceKind::CV;
    double alpha_lb = 1.0;
    double alpha_ub = 1.0;
    // Overlap ratios the bounds were taken from; empty for configured bounds.
    std::vector<RatioSample> ratios;
    // (location, segment) pairs dropped from the overlap for a zero denominator.
    std::vector<std::pair<std::size_t, int>> skipped_zero;
};

// Fallback bounds when a source has no overlap to calibrate from.
inline constexpr double kDefaultCvAlphaLb = 0.94;
inline constexpr double kDefaultCvAlphaUb = 1.12;
inline constexpr double kDefaultLdAlphaLb = 0.02;
inline constexpr double kDefaultLdAlphaUb = 19.06;

CalibrationBounds make_bounds(SourceKind source, double alpha_lb, double alpha_ub);

/// alpha_lb / alpha_ub = min / max of f^M / f^CV over the (location, segment)
/// overlap of the two sources. Overlap cells with a zero CV count are skipped.
CalibrationBounds calibrate_bounds(const CountTable& table);

/// LD bounds chained through CV: the CV bounds scaled by the min / max of
/// f^CV / f^LD over the CV∩LD overlap.
CalibrationBounds chain_bounds(const CalibrationBounds& cv_bounds, const CountTable& table);

nlohmann::json calibration_report(const CalibrationBounds& b);

struct Band {
    double lo = 0.0;
    double hi = 0.0;
};

/// Bands of one source for one segment, indexed by location; nullopt where
/// the source has no count (no constraint).
using SegmentBands = std::vector<std::optional<Band>>;

/// Day of bands: result[t][j].
std::vector<SegmentBands> make_bands(const CountTable& table, const CalibrationBounds& bounds,
                                     SourceKind source, std::size_t location_count);

inline Band band_for(double count, const CalibrationBounds& b) {
    return {b.alpha_lb * count, b.alpha_ub * count};
}

}  // namespace demandforge
