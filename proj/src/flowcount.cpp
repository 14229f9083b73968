#include "demandforge/flowcount.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <random>

#include "demandforge/error.hpp"

namespace demandforge {

void ApproachGeometry::validate() const {
    if (!(epsilon > 0.0)) throw Error("geometry", "epsilon must be positive");
    std::vector<LaneSpan> sorted = lanes;
    std::sort(sorted.begin(), sorted.end(), [](const LaneSpan& a, const LaneSpan& b) { return a.left_x < b.left_x; });
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        if (!(sorted[k].left_x < sorted[k].right_x))
            throw Error("geometry", "lane " + std::to_string(sorted[k].id) + " has left_x >= right_x");
        if (k > 0 && sorted[k].left_x <= sorted[k - 1].right_x)
            throw Error("geometry", "lanes " + std::to_string(sorted[k - 1].id) + " and " +
                                        std::to_string(sorted[k].id) + " overlap");
    }
}

int ApproachGeometry::lane_at(double x) const {
    for (const auto& lane : lanes)
        if (lane.left_x <= x && x <= lane.right_x) return lane.id;
    return -1;
}

std::int64_t LaneCounts::total() const {
    return std::accumulate(lanes.begin(), lanes.end(), std::int64_t{0},
                           [](std::int64_t acc, const auto& kv) { return acc + kv.second; });
}

std::set<std::string> default_vehicle_classes() { return {"car", "truck", "bus", "motorcycle"}; }

namespace {

void require_ordered(std::span<const Detection> stream) {
    for (std::size_t k = 1; k < stream.size(); ++k)
        if (stream[k].frame < stream[k - 1].frame)
            throw Error("unordered_stream", "detection stream is not ordered by frame (line " +
                                                std::to_string(k + 1) + ")");
}

LaneCounts empty_counts(const ApproachGeometry& geom) {
    LaneCounts out;
    for (const auto& lane : geom.lanes) out.lanes[lane.id] = 0;
    return out;
}

// Approach-relative y: distance increases toward and past the bar.
double rel_y(const Detection& d, const ApproachGeometry& g) { return g.upward ? -d.cy : d.cy; }
double rel_bar(const ApproachGeometry& g) { return g.upward ? -g.stop_bar_y : g.stop_bar_y; }

}  // namespace

LaneCounts count_crossings(std::span<const Detection> stream, const ApproachGeometry& geom,
                           const std::set<std::string>& vehicle_classes) {
    require_ordered(stream);
    LaneCounts out = empty_counts(geom);
    const double bar = rel_bar(geom);
    std::map<std::int64_t, bool> eligible;  // first-seen verdict per track
    for (const auto& d : stream) {
        if (!vehicle_classes.count(d.label)) continue;
        const double y = rel_y(d, geom);
        auto [it, first_seen] = eligible.emplace(d.track, y < bar);
        if (first_seen || !it->second) continue;
        if (out.counted_tracks.count(d.track) || !(y > bar)) continue;
        const int lane = geom.lane_at(d.cx);
        if (lane < 0) {
            ++out.off_lane;
            continue;
        }
        ++out.lanes[lane];
        out.counted_tracks.insert(d.track);
    }
    return out;
}

LaneCounts count_threshold(std::span<const Detection> stream, const ApproachGeometry& geom,
                           const std::set<std::string>& vehicle_classes) {
    require_ordered(stream);
    LaneCounts out = empty_counts(geom);
    for (const auto& d : stream) {
        if (!vehicle_classes.count(d.label) || out.counted_tracks.count(d.track)) continue;
        if (std::abs(d.cy - geom.stop_bar_y) > geom.epsilon) continue;
        const int lane = geom.lane_at(d.cx);
        if (lane < 0) continue;
        ++out.lanes[lane];
        out.counted_tracks.insert(d.track);
    }
    return out;
}

std::vector<Detection> synth_stream(const Scenario& scenario, double drop_rate, std::uint64_t seed) {
    if (!(drop_rate >= 0.0 && drop_rate < 1.0)) throw Error("invalid_argument", "drop_rate must lie in [0, 1)");
    const auto& g = scenario.geometry;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double dir = g.upward ? -1.0 : 1.0;

    std::vector<Detection> out;
    auto emit_track = [&](const ScriptedCrossing& c) {
        auto lane_it = std::find_if(g.lanes.begin(), g.lanes.end(), [&](const LaneSpan& l) { return l.id == c.lane; });
        if (lane_it == g.lanes.end()) throw Error("invalid_argument", "scenario references unknown lane");
        const double width = lane_it->right_x - lane_it->left_x;
        const double cx = lane_it->left_x + width * (0.3 + 0.4 * unit(rng));
        // Phase offset keeps bar-relative positions varied between tracks.
        const double start = -scenario.travel_px - c.speed_px * unit(rng);
        std::vector<Detection> frames;
        for (std::int64_t k = 0;; ++k) {
            const double off = start + c.speed_px * static_cast<double>(k);
            if (off > scenario.travel_px) break;
            frames.push_back({c.start_frame + k, c.track, c.label, cx, g.stop_bar_y + dir * off, 40.0, 30.0});
        }
        std::vector<bool> keep(frames.size());
        for (std::size_t k = 0; k < frames.size(); ++k) keep[k] = unit(rng) >= drop_rate;
        // Guarantee one kept frame on each side of the bar.
        auto side = [&](std::size_t k) { return dir * (frames[k].cy - g.stop_bar_y); };
        bool above = false, below = false;
        for (std::size_t k = 0; k < frames.size(); ++k) {
            if (!keep[k]) continue;
            above |= side(k) < 0.0;
            below |= side(k) > 0.0;
        }
        if (!above) keep.front() = true;
        if (!below) keep.back() = true;
        for (std::size_t k = 0; k < frames.size(); ++k)
            if (keep[k]) out.push_back(frames[k]);
    };
    for (const auto& c : scenario.crossings) emit_track(c);
    for (const auto& c : scenario.distractors) emit_track(c);

    std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        return a.frame != b.frame ? a.frame < b.frame : a.track < b.track;
    });
    return out;
}

Scenario random_scenario(int crossings, std::uint64_t seed) {
    Scenario s;
    s.geometry.stop_bar_y = 400.0;
    s.geometry.epsilon = 6.0;
    s.geometry.lanes = {{1, 100.0, 178.0}, {2, 182.0, 260.0}, {3, 264.0, 342.0}};
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    std::uniform_int_distribution<int> lane(1, 3);
    std::uniform_int_distribution<std::int64_t> gap(0, 25);
    // Speeds at most 2·epsilon: without drops one frame always lands within epsilon.
    std::uniform_real_distribution<double> speed(6.0, 11.5);
    std::int64_t frame = 0;
    for (int k = 0; k < crossings; ++k) {
        frame += gap(rng);
        s.crossings.push_back({k + 1, lane(rng), k % 7 == 3 ? "truck" : "car", frame, speed(rng)});
    }
    s.distractors.push_back({100000, 1, "person", 5, 3.0});
    s.distractors.push_back({100001, 3, "bicycle", 40, 5.0});
    return s;
}

std::vector<Detection> read_detections(std::istream& in) {
    std::vector<Detection> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Detection d;
            d.frame = j.at("frame").get<std::int64_t>();
            d.track = j.at("track").get<std::int64_t>();
            d.label = j.at("class").get<std::string>();
            d.cx = j.at("cx").get<double>();
            d.cy = j.at("cy").get<double>();
            d.w = j.at("w").get<double>();
            d.h = j.at("h").get<double>();
            if (d.frame < 0 || !(d.w > 0.0) || !(d.h > 0.0))
                throw Error("schema", "detection line " + std::to_string(line_no) + ": invalid frame or box size");
            out.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw Error("schema", "detection line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

void write_detections(std::ostream& out, std::span<const Detection> stream) {
    for (const auto& d : stream) {
        nlohmann::json j = {{"frame", d.frame}, {"track", d.track}, {"class", d.label},
                            {"cx", d.cx},       {"cy", d.cy},       {"w", d.w},
                            {"h", d.h}};
        out << j.dump() << '\n';
    }
}

ApproachGeometry geometry_from_json(const nlohmann::json& doc) {
    ApproachGeometry g;
    try {
        g.stop_bar_y = doc.at("stop_bar_y").get<double>();
        g.epsilon = doc.value("epsilon", 10.0);
        g.upward = doc.value("direction", std::string("down")) == "up";
        for (const auto& l : doc.at("lanes"))
            g.lanes.push_back({l.at("id").get<int>(), l.at("left_x").get<double>(), l.at("right_x").get<double>()});
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", std::string("geometry: ") + e.what());
    }
    g.validate();
    return g;
}

nlohmann::json to_json(const LaneCounts& counts) {
    nlohmann::json lanes = nlohmann::json::object();
    for (const auto& [id, n] : counts.lanes) lanes[std::to_string(id)] = n;
    return {{"lanes", lanes}, {"total", counts.total()}, {"off_lane_detections", counts.off_lane}};
}

}  // namespace demandforge
