#include "demandforge/counts.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>

#include "demandforge/error.hpp"

namespace demandforge {

std::string_view to_string(SourceKind s) {
    switch (s) {
        case SourceKind::M: return "M";
        case SourceKind::CV: return "CV";
        case SourceKind::LD: return "LD";
    }
    return "?";
}

SourceKind parse_source(std::string_view s) {
    if (s == "M") return SourceKind::M;
    if (s == "CV") return SourceKind::CV;
    if (s == "LD") return SourceKind::LD;
    throw Error("schema", "unknown count source '" + std::string(s) + "'");
}

void CountTable::insert(SourceKind source, std::size_t location, int segment, std::int64_t count) {
    if (count < 0) throw Error("negative_count", "negative count at location " + std::to_string(location));
    if (segment < 0 || segment >= kSegmentsPerDay)
        throw Error("segment_out_of_range", "segment out of range: " + std::to_string(segment));
    if (!values_.emplace(Key{source, location, segment}, count).second)
        throw Error("duplicate_key", "duplicate count for (" + std::string(to_string(source)) + ", " +
                                         std::to_string(location) + ", " + std::to_string(segment) + ")");
}

std::optional<std::int64_t> CountTable::get(SourceKind source, std::size_t location, int segment) const {
    auto it = values_.find(Key{source, location, segment});
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

void CountTable::check_coverage() const {
    // A source declares the union of segments it reports; each of its
    // locations must report every one of them.
    std::map<SourceKind, std::set<int>> declared;
    std::map<std::pair<SourceKind, std::size_t>, std::set<int>> series;
    for (const auto& [key, count] : values_) {
        const auto& [src, loc, seg] = key;
        declared[src].insert(seg);
        series[{src, loc}].insert(seg);
    }
    for (const auto& [key, segs] : series) {
        const auto& want = declared.at(key.first);
        if (segs.size() == want.size()) continue;
        for (int seg : want)
            if (!segs.count(seg))
                throw Error("ragged_coverage", "counts for (" + std::string(to_string(key.first)) + ", " +
                                                   std::to_string(key.second) + ") miss segment " +
                                                   std::to_string(seg) + " reported by other locations");
    }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, ',')) {
        field.erase(0, field.find_first_not_of(" \t\r"));
        field.erase(field.find_last_not_of(" \t\r") + 1);
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

long long parse_int(const std::string& s, const char* what, std::size_t line_no) {
    std::size_t pos = 0;
    long long v = 0;
    try {
        v = std::stoll(s, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != s.size())
        throw Error("schema", "counts line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

}  // namespace

CountTable ingest_counts(std::istream& in, std::optional<std::size_t> location_count) {
    CountTable table;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto fields = split_csv(line);
        if (!header_seen) {
            header_seen = true;
            if (fields != std::vector<std::string>{"source", "location", "segment", "count"})
                throw Error("schema", "counts: header must be 'source,location,segment,count'");
            continue;
        }
        if (fields.size() != 4)
            throw Error("schema", "counts line " + std::to_string(line_no) + ": expected 4 fields");
        const auto source = parse_source(fields[0]);
        const auto loc = parse_int(fields[1], "location", line_no);
        const auto seg = parse_int(fields[2], "segment", line_no);
        const auto count = parse_int(fields[3], "count", line_no);
        if (loc < 0 || (location_count && static_cast<std::size_t>(loc) >= *location_count))
            throw Error("unknown_location", "counts line " + std::to_string(line_no) + ": unknown location " +
                                                std::to_string(loc));
        if (seg < 0 || seg >= kSegmentsPerDay)
            throw Error("segment_out_of_range", "counts line " + std::to_string(line_no) +
                                                    ": segment out of range: " + std::to_string(seg));
        table.insert(source, static_cast<std::size_t>(loc), static_cast<int>(seg), count);
    }
    table.check_coverage();
    return table;
}

CountTable ingest_counts_file(const std::string& path, std::optional<std::size_t> location_count) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open counts file '" + path + "'");
    return ingest_counts(in, location_count);
}

CalibrationBounds make_bounds(SourceKind source, double alpha_lb, double alpha_ub) {
    if (!(alpha_lb > 0.0) || !(alpha_lb <= alpha_ub))
        throw Error("invalid_bounds", "calibration bounds require 0 < alpha_lb <= alpha_ub");
    CalibrationBounds b;
    b.source = source;
    b.alpha_lb = alpha_lb;
    b.alpha_ub = alpha_ub;
    return b;
}

namespace {

// Ratios numerator/denominator over the overlap of two sources, in
// (location, segment) order.
CalibrationBounds overlap_ratios(const CountTable& table, SourceKind num, SourceKind den,
                                 SourceKind target) {
    CalibrationBounds b;
    b.source = target;
    bool any_overlap = false;
    for (const auto& [key, f_num] : table.values()) {
        const auto [src, loc, seg] = key;
        if (src != num) continue;
        auto f_den = table.get(den, loc, seg);
        if (!f_den) continue;
        any_overlap = true;
        if (*f_den == 0) {
            b.skipped_zero.emplace_back(loc, seg);
            continue;
        }
        b.ratios.push_back({loc, seg, static_cast<double>(f_num) / static_cast<double>(*f_den)});
    }
    const std::string pair = std::string(to_string(num)) + "/" + std::string(to_string(den));
    if (!any_overlap) throw Error("empty_overlap", "no overlapping counts for " + pair);
    if (b.ratios.empty())
        throw Error("zero_count", "every overlapping " + std::string(to_string(den)) + " count is zero (" + pair + ")");
    auto [mn, mx] = std::minmax_element(b.ratios.begin(), b.ratios.end(),
                                        [](const RatioSample& a, const RatioSample& c) { return a.ratio < c.ratio; });
    b.alpha_lb = mn->ratio;
    b.alpha_ub = mx->ratio;
    return b;
}

}  // namespace

CalibrationBounds calibrate_bounds(const CountTable& table) {
    auto b = overlap_ratios(table, SourceKind::M, SourceKind::CV, SourceKind::CV);
    if (!(b.alpha_lb > 0.0)) throw Error("invalid_bounds", "calibrated alpha_lb is not positive");
    return b;
}

CalibrationBounds chain_bounds(const CalibrationBounds& cv_bounds, const CountTable& table) {
    auto b = overlap_ratios(table, SourceKind::CV, SourceKind::LD, SourceKind::LD);
    const double lo = b.alpha_lb;
    const double hi = b.alpha_ub;
    b.alpha_lb = cv_bounds.alpha_lb * lo;
    b.alpha_ub = cv_bounds.alpha_ub * hi;
    if (!(b.alpha_lb > 0.0)) throw Error("invalid_bounds", "chained alpha_lb is not positive");
    return b;
}

nlohmann::json calibration_report(const CalibrationBounds& b) {
    nlohmann::json ratios = nlohmann::json::array();
    for (const auto& r : b.ratios)
        ratios.push_back({{"location", r.location}, {"segment", r.segment}, {"ratio", r.ratio}});
    return {{"source", std::string(to_string(b.source))},
            {"alpha_lb", b.alpha_lb},
            {"alpha_ub", b.alpha_ub},
            {"ratios", ratios}};
}

std::vector<SegmentBands> make_bands(const CountTable& table, const CalibrationBounds& bounds,
                                     SourceKind source, std::size_t location_count) {
    std::vector<SegmentBands> out(kSegmentsPerDay, SegmentBands(location_count));
    for (const auto& [key, f] : table.values()) {
        const auto [src, loc, seg] = key;
        if (src != source || loc >= location_count) continue;
        out[seg][loc] = band_for(static_cast<double>(f), bounds);
    }
    return out;
}

}  // namespace demandforge
