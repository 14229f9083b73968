#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace demandforge {

struct Detection {
    std::int64_t frame = 0;
    std::int64_t track = 0;
    std::string label;
    double cx = 0.0;
    double cy = 0.0;  // pixel rows grow downward
    double w = 1.0;
    double h = 1.0;
};

struct LaneSpan {
    int id = 0;
    double left_x = 0.0;
    double right_x = 0.0;
};

struct ApproachGeometry {
    double stop_bar_y = 0.0;
    double epsilon = 1.0;
    std::vector<LaneSpan> lanes;
    // Approaching traffic moves up the image; counting mirrors y.
    bool upward = false;

    void validate() const;
    // Lane containing x (inclusive bounds), or -1.
    int lane_at(double x) const;
};

struct LaneCounts {
    std::map<int, std::int64_t> lanes;
    std::set<std::int64_t> counted_tracks;
    // Crossings whose cx fell outside every lane.
    std::int64_t off_lane = 0;

    std::int64_t total() const;
};

std::set<std::string> default_vehicle_classes();

/// Tracked stop-bar counting: a track counts once, at its first detection below
/// the bar, if it was first seen above the bar. Robust to dropped frames.
LaneCounts count_crossings(std::span<const Detection> stream, const ApproachGeometry& geom,
                           const std::set<std::string>& vehicle_classes = default_vehicle_classes());

/// Naive per-frame method: counts a track the first time one of its boxes lies
/// within epsilon of the bar inside a lane.
LaneCounts count_threshold(std::span<const Detection> stream, const ApproachGeometry& geom,
                           const std::set<std::string>& vehicle_classes = default_vehicle_classes());

struct ScriptedCrossing {
    std::int64_t track = 0;
    int lane = 0;
    std::string label = "car";
    std::int64_t start_frame = 0;
    double speed_px = 8.0;  // rows per frame
};

struct Scenario {
    ApproachGeometry geometry;
    std::vector<ScriptedCrossing> crossings;
    // Tracks that never produce a valid count: pedestrians and opposite-direction vehicles.
    std::vector<ScriptedCrossing> distractors;
    double travel_px = 160.0;  // distance travelled on each side of the bar
};

std::vector<Detection> synth_stream(const Scenario& scenario, double drop_rate, std::uint64_t seed);

// Random scenario with `crossings` vehicles spread over the geometry's lanes.
Scenario random_scenario(int crossings, std::uint64_t seed);

std::vector<Detection> read_detections(std::istream& in);
void write_detections(std::ostream& out, std::span<const Detection> stream);
ApproachGeometry geometry_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const LaneCounts& counts);

}  // namespace demandforge
