#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "demandforge/counts.hpp"
#include "demandforge/netgraph.hpp"
#include "demandforge/qipsolve.hpp"

#include "json.hpp"

namespace demandforge {

/// Vehicle class label → probability. Iteration order (by label) is part of
/// the deterministic draw.
using ClassDistribution = std::map<std::string, double>;

ClassDistribution default_class_distribution();
ClassDistribution class_distribution_from_json(const nlohmann::json& doc);
void check_normalized(const ClassDistribution& dist);

struct VehicleRecord {
    std::string id;
    std::size_t route = 0;
    double depart = 0.0;  // seconds from midnight
    std::string vclass;
};

std::vector<std::string> assign_vehicle_classes(std::size_t count, const ClassDistribution& dist,
                                                std::uint64_t seed);

/// One vehicle per unit of c, departures evenly spaced inside each minute,
/// sorted by departure time.
std::vector<VehicleRecord> schedule_vehicles(std::span<const MinuteSchedule> schedules,
                                             const ClassDistribution& dist, std::uint64_t seed);

/// Route XML document in the simulator's `<routes>` grammar.
std::string emit_routes(std::span<const MinuteSchedule> schedules, const RoadNetwork& net,
                        std::span<const Route> routes, const ClassDistribution& dist, std::uint64_t seed);

struct DiffCell {
    int segment = 0;
    std::size_t location = 0;
    SourceKind source = SourceKind::CV;
    double simulated = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    double violation = 0.0;
};

struct SegmentSummary {
    int segment = 0;
    SourceKind source = SourceKind::CV;
    std::size_t cells = 0;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct DiffReport {
    std::vector<DiffCell> cells;
    std::vector<SegmentSummary> segments;
    std::int64_t total_volume = 0;
    double fringe_share = 0.0;
};

/// Per-location band violations (slack_for values) for every banded cell,
/// per-segment mean and range, total volume and fringe-route share.
DiffReport diff_report(std::span<const RouteSolution> solutions, const IncidenceMatrix& a,
                       std::span<const SegmentBands> bands_cv, std::span<const SegmentBands> bands_ld,
                       std::span<const Route> routes);

nlohmann::json to_json(const DiffReport& report);
void write_diff_csv(std::ostream& out, const DiffReport& report, SourceKind source);

/// Share of vehicles on fringe routes; 0 for an empty solution.
double fringe_share(std::span<const std::int64_t> r, std::span<const Route> routes);

void write_solution_csv(std::ostream& out, std::span<const RouteSolution> solutions);
/// Reads `route,segment,count` rows back into per-segment vectors of length n.
std::map<int, std::vector<std::int64_t>> read_solution_csv(std::istream& in, std::size_t routes);

nlohmann::json segment_summary_json(const RouteSolution& s, std::span<const Route> routes);

}  // namespace demandforge
