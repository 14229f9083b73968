#include "demandforge/emit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <random>
#include <sstream>

#include "demandforge/error.hpp"

namespace demandforge {

namespace {

std::string xml_escape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char ch : s) {
        switch (ch) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            case '\'': out += "&apos;"; break;
            default: out += ch;
        }
    }
    return out;
}

std::string fixed2(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

// Uniform double in [0, 1) from the top 53 bits; the mt19937_64 sequence is
// fixed by the standard, so draws are reproducible across platforms.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

ClassDistribution default_class_distribution() { return {{"car", 1.0}}; }

ClassDistribution class_distribution_from_json(const nlohmann::json& doc) {
    if (doc.is_null()) return default_class_distribution();
    if (!doc.is_object()) throw Error("schema", "class distribution must be an object of label -> probability");
    ClassDistribution dist;
    for (const auto& [label, p] : doc.items()) {
        if (!p.is_number()) throw Error("schema", "class probability for '" + label + "' is not a number");
        dist[label] = p.get<double>();
    }
    check_normalized(dist);
    return dist;
}

void check_normalized(const ClassDistribution& dist) {
    double total = 0.0;
    for (const auto& [label, p] : dist) {
        if (p < 0.0) throw Error("not_normalized", "negative probability for class '" + label + "'");
        total += p;
    }
    if (dist.empty() || std::abs(total - 1.0) > 1e-9)
        throw Error("not_normalized", "class distribution sums to " + std::to_string(total) + ", expected 1");
}

std::vector<std::string> assign_vehicle_classes(std::size_t count, const ClassDistribution& dist,
                                                std::uint64_t seed) {
    check_normalized(dist);
    std::mt19937_64 rng(seed);
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        const double u = unit_draw(rng);
        double acc = 0.0;
        const std::string* pick = &dist.rbegin()->first;
        for (const auto& [label, p] : dist) {
            acc += p;
            if (u < acc) {
                pick = &label;
                break;
            }
        }
        out.push_back(*pick);
    }
    return out;
}

std::vector<VehicleRecord> schedule_vehicles(std::span<const MinuteSchedule> schedules,
                                             const ClassDistribution& dist, std::uint64_t seed) {
    check_normalized(dist);
    for (std::size_t k = 1; k < schedules.size(); ++k)
        if (schedules[k].segment != schedules[k - 1].segment + 1)
            throw Error("invalid_argument", "minute schedules must cover contiguous segments");
    std::vector<VehicleRecord> out;
    for (const auto& sched : schedules) {
        for (std::size_t i = 0; i < sched.c.size(); ++i) {
            for (int m = 0; m < kMinutesPerSegment; ++m) {
                const std::int64_t count = sched.c[i][m];
                const double minute_start = 60.0 * (kMinutesPerSegment * sched.segment + m);
                for (std::int64_t k = 0; k < count; ++k) {
                    VehicleRecord v;
                    v.route = i;
                    v.depart = minute_start + 60.0 * static_cast<double>(k) / static_cast<double>(count);
                    out.push_back(std::move(v));
                }
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const VehicleRecord& a, const VehicleRecord& b) {
        return a.depart != b.depart ? a.depart < b.depart : a.route < b.route;
    });
    const auto classes = assign_vehicle_classes(out.size(), dist, seed);
    for (std::size_t k = 0; k < out.size(); ++k) {
        out[k].id = "veh_" + std::to_string(k);
        out[k].vclass = classes[k];
    }
    return out;
}

std::string emit_routes(std::span<const MinuteSchedule> schedules, const RoadNetwork& net,
                        std::span<const Route> routes, const ClassDistribution& dist, std::uint64_t seed) {
    const auto vehicles = schedule_vehicles(schedules, dist, seed);
    std::ostringstream out;
    out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    out << "<routes>\n";
    for (const auto& [label, p] : dist) out << "    <vType id=\"" << xml_escape(label) << "\"/>\n";
    for (const auto& r : routes) {
        out << "    <route id=\"route_" << r.id << "\" edges=\"";
        for (std::size_t k = 0; k < r.edges.size(); ++k)
            out << (k ? " " : "") << xml_escape(net.edges()[r.edges[k]].id);
        out << "\"/>\n";
    }
    for (const auto& v : vehicles) {
        if (v.route >= routes.size()) throw Error("invalid_argument", "schedule row beyond route list");
        out << "    <vehicle id=\"" << v.id << "\" type=\"" << xml_escape(v.vclass) << "\" route=\"route_"
            << routes[v.route].id << "\" depart=\"" << fixed2(v.depart) << "\"/>\n";
    }
    out << "</routes>\n";
    return out.str();
}

double fringe_share(std::span<const std::int64_t> r, std::span<const Route> routes) {
    std::int64_t total = 0, fringe = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        total += r[i];
        if (i < routes.size() && routes[i].fringe) fringe += r[i];
    }
    return total > 0 ? static_cast<double>(fringe) / static_cast<double>(total) : 0.0;
}

DiffReport diff_report(std::span<const RouteSolution> solutions, const IncidenceMatrix& a,
                       std::span<const SegmentBands> bands_cv, std::span<const SegmentBands> bands_ld,
                       std::span<const Route> routes) {
    DiffReport report;
    std::int64_t fringe_total = 0;
    for (const auto& sol : solutions) {
        if (sol.r.size() != a.routes()) throw Error("dimension_mismatch", "solution length differs from route count");
        const auto y = simulated_counts(a, sol.r);
        for (std::size_t i = 0; i < sol.r.size(); ++i) {
            report.total_volume += sol.r[i];
            if (i < routes.size() && routes[i].fringe) fringe_total += sol.r[i];
        }
        const auto t = static_cast<std::size_t>(sol.segment);
        for (auto [source, bands] : {std::pair{SourceKind::CV, bands_cv}, std::pair{SourceKind::LD, bands_ld}}) {
            if (t >= bands.size()) continue;
            const auto& seg = bands[t];
            SegmentSummary summary;
            summary.segment = sol.segment;
            summary.source = source;
            double acc = 0.0;
            for (std::size_t j = 0; j < seg.size() && j < y.size(); ++j) {
                if (!seg[j]) continue;
                DiffCell cell{sol.segment, j, source, y[j], seg[j]->lo, seg[j]->hi, slack_for(y[j], *seg[j])};
                if (summary.cells == 0) summary.min = summary.max = cell.violation;
                summary.min = std::min(summary.min, cell.violation);
                summary.max = std::max(summary.max, cell.violation);
                acc += cell.violation;
                ++summary.cells;
                report.cells.push_back(cell);
            }
            if (summary.cells == 0) continue;
            summary.mean = acc / static_cast<double>(summary.cells);
            report.segments.push_back(summary);
        }
    }
    report.fringe_share =
        report.total_volume > 0 ? static_cast<double>(fringe_total) / static_cast<double>(report.total_volume) : 0.0;
    return report;
}

nlohmann::json to_json(const DiffReport& report) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : report.cells)
        cells.push_back({{"segment", c.segment},
                         {"location", c.location},
                         {"source", std::string(to_string(c.source))},
                         {"simulated", c.simulated},
                         {"lo", c.lo},
                         {"hi", c.hi},
                         {"violation", c.violation}});
    nlohmann::json segments = nlohmann::json::array();
    for (const auto& s : report.segments)
        segments.push_back({{"segment", s.segment},
                            {"source", std::string(to_string(s.source))},
                            {"cells", s.cells},
                            {"mean", s.mean},
                            {"min", s.min},
                            {"max", s.max}});
    return {{"total_volume", report.total_volume},
            {"fringe_share", report.fringe_share},
            {"segments", segments},
            {"cells", cells}};
}

void write_diff_csv(std::ostream& out, const DiffReport& report, SourceKind source) {
    out << "segment,location,simulated,lo,hi,violation\n";
    for (const auto& c : report.cells) {
        if (c.source != source) continue;
        out << c.segment << ',' << c.location << ',' << c.simulated << ',' << c.lo << ',' << c.hi << ','
            << c.violation << '\n';
    }
}

void write_solution_csv(std::ostream& out, std::span<const RouteSolution> solutions) {
    out << "route,segment,count\n";
    for (const auto& s : solutions)
        for (std::size_t i = 0; i < s.r.size(); ++i)
            if (s.r[i] != 0) out << i << ',' << s.segment << ',' << s.r[i] << '\n';
}

std::map<int, std::vector<std::int64_t>> read_solution_csv(std::istream& in, std::size_t routes) {
    std::map<int, std::vector<std::int64_t>> out;
    std::string line;
    std::getline(in, line);
    if (line.rfind("route,segment,count", 0) != 0) throw Error("schema", "solution CSV header must be 'route,segment,count'");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        std::istringstream ss(line);
        long long route = 0, segment = 0, count = 0;
        char c1 = 0, c2 = 0;
        if (!(ss >> route >> c1 >> segment >> c2 >> count) || c1 != ',' || c2 != ',')
            throw Error("schema", "solution CSV line " + std::to_string(line_no) + " is malformed");
        if (route < 0 || static_cast<std::size_t>(route) >= routes || segment < 0 || segment >= kSegmentsPerDay ||
            count < 0)
            throw Error("schema", "solution CSV line " + std::to_string(line_no) + " is out of range");
        auto& row = out[static_cast<int>(segment)];
        row.resize(routes, 0);
        row[static_cast<std::size_t>(route)] = count;
    }
    return out;
}

nlohmann::json segment_summary_json(const RouteSolution& s, std::span<const Route> routes) {
    auto norm = [](const std::vector<double>& v) {
        double acc = 0.0;
        for (double x : v) acc += x * x;
        return std::sqrt(acc);
    };
    return {{"segment", s.segment},
            {"objective", s.objective},
            {"slack_norms", {{"cv", norm(s.slack_cv)}, {"ld", norm(s.slack_ld)}}},
            {"fringe_share", fringe_share(s.r, routes)},
            {"solve_time", s.solve_time},
            {"solver_mode", std::string(to_string(s.solver_mode))}};
}

}  // namespace demandforge
