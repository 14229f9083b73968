#include "support/fixtures.hpp"

#include <cmath>
#include <sstream>

namespace dftest {

using nlohmann::json;

namespace {

std::string node(int r, int c) { return "n" + std::to_string(r) + "_" + std::to_string(c); }

struct Stub {
    char side;  // W, E, N, S
    int pos;    // row for W/E, column for N/S
    bool inbound;
};

}  // namespace

json grid_network_json(int rows, int cols, bool bidirectional_stubs) {
    json nodes = json::array(), edges = json::array(), locations = json::array();
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) nodes.push_back({{"id", node(r, c)}});

    auto add_edge = [&](const std::string& id, const std::string& from, const std::string& to, double len, bool fringe) {
        edges.push_back({{"id", id}, {"from", from}, {"to", to}, {"length_m", len}, {"fringe", fringe}});
    };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) {
                add_edge("e" + node(r, c) + "-" + node(r, c + 1), node(r, c), node(r, c + 1), 100.0, false);
                add_edge("e" + node(r, c + 1) + "-" + node(r, c), node(r, c + 1), node(r, c), 100.0, false);
            }
            if (r + 1 < rows) {
                add_edge("e" + node(r, c) + "-" + node(r + 1, c), node(r, c), node(r + 1, c), 100.0, false);
                add_edge("e" + node(r + 1, c) + "-" + node(r, c), node(r + 1, c), node(r, c), 100.0, false);
            }
        }

    std::vector<Stub> stubs;
    if (bidirectional_stubs) {
        for (int r = 0; r < rows; ++r)
            for (char side : {'W', 'E'})
                for (bool in : {true, false}) stubs.push_back({side, r, in});
        for (int c = 0; c < cols; ++c)
            for (char side : {'N', 'S'})
                for (bool in : {true, false}) stubs.push_back({side, c, in});
    } else {
        for (int r = 0; r < rows; ++r) {
            stubs.push_back({'W', r, r % 2 == 0});
            stubs.push_back({'E', r, r % 2 == 1});
        }
        for (int c = 0; c < cols; ++c) {
            stubs.push_back({'N', c, c % 2 == 0});
            stubs.push_back({'S', c, c % 2 == 1});
        }
    }
    for (const auto& s : stubs) {
        const std::string ext = std::string("x") + s.side + std::to_string(s.pos);
        std::string inner;
        switch (s.side) {
            case 'W': inner = node(s.pos, 0); break;
            case 'E': inner = node(s.pos, cols - 1); break;
            case 'N': inner = node(0, s.pos); break;
            default: inner = node(rows - 1, s.pos); break;
        }
        const std::string ext_node = ext + (s.inbound ? "i" : "o");
        nodes.push_back({{"id", ext_node}});
        const std::string id = std::string(s.inbound ? "in" : "out") + s.side + std::to_string(s.pos);
        if (s.inbound) add_edge(id, ext_node, inner, 50.0, true);
        else add_edge(id, inner, ext_node, 50.0, true);
    }

    // Locations: every edge entering a grid node, grouped by node then approach.
    auto find = [&](const std::string& from, const std::string& to) -> std::string {
        for (const auto& e : edges)
            if (e["from"] == from && e["to"] == to) return e["id"];
        return {};
    };
    auto inbound_stub = [&](const std::string& to) -> std::vector<std::pair<std::string, char>> {
        std::vector<std::pair<std::string, char>> out;
        for (const auto& e : edges) {
            const std::string id = e["id"];
            if (e["to"] == to && id.rfind("in", 0) == 0) out.emplace_back(id, id[2]);
        }
        return out;
    };
    std::size_t next = 0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const int id = r * cols + c + 1;
            const std::string here = node(r, c);
            std::vector<std::pair<std::string, std::string>> incoming;  // (approach, edge)
            // EB: from the west, NB: from the south, SB: from the north, WB: from the east.
            auto pick = [&](const char* approach, int dr, int dc, char stub_side) {
                const int rr = r + dr, cc = c + dc;
                std::string edge;
                if (rr >= 0 && rr < rows && cc >= 0 && cc < cols) edge = find(node(rr, cc), here);
                else
                    for (const auto& [eid, side] : inbound_stub(here))
                        if (side == stub_side) edge = eid;
                if (!edge.empty()) incoming.emplace_back(approach, edge);
            };
            pick("EB", 0, -1, 'W');
            pick("NB", 1, 0, 'S');
            pick("SB", -1, 0, 'N');
            pick("WB", 0, 1, 'E');
            for (const auto& [approach, edge] : incoming)
                locations.push_back({{"id", next++}, {"intersection", id}, {"approach", approach},
                                     {"movement", "total"}, {"edge", edge}});
        }
    return {{"nodes", nodes}, {"edges", edges}, {"locations", locations}};
}

json grid3_network_json() { return grid_network_json(3, 3, false); }

json large_grid_network_json() { return grid_network_json(25, 25, true); }

json plus_network_json() {
    json nodes = json::array(), edges = json::array(), locations = json::array();
    // Approach -> (entry side, left exit, through exit, right exit).
    struct Leg {
        const char* approach;
        const char* from_side;
        const char* left;
        const char* through;
        const char* right;
    };
    const Leg legs[] = {{"EB", "W", "N", "E", "S"},
                        {"NB", "S", "W", "N", "E"},
                        {"SB", "N", "E", "S", "W"},
                        {"WB", "E", "S", "W", "N"}};
    std::size_t next = 0;
    for (int x : {25, 46}) {
        const std::string X = std::to_string(x);
        for (const char* side : {"W", "E", "N", "S"}) {
            nodes.push_back({{"id", X + "_src_" + side}});
            nodes.push_back({{"id", X + "_exit_" + side}});
            nodes.push_back({{"id", X + "_sink_" + side}});
            edges.push_back({{"id", X + "_out_" + side},
                             {"from", X + "_exit_" + side},
                             {"to", X + "_sink_" + side},
                             {"length_m", 120.0},
                             {"fringe", true}});
        }
        for (const auto& leg : legs) {
            const std::string A = leg.approach;
            const std::string stop = X + "_" + A + "_stop";
            nodes.push_back({{"id", stop}});
            edges.push_back({{"id", X + "_" + A + "_in"},
                             {"from", X + "_src_" + leg.from_side},
                             {"to", stop},
                             {"length_m", 150.0},
                             {"fringe", true}});
            edges.push_back({{"id", X + "_" + A + "_L"}, {"from", stop}, {"to", X + "_exit_" + leg.left}, {"length_m", 25.0}});
            edges.push_back({{"id", X + "_" + A + "_T"}, {"from", stop}, {"to", X + "_exit_" + leg.through}, {"length_m", 20.0}});
            edges.push_back({{"id", X + "_" + A + "_R"}, {"from", stop}, {"to", X + "_exit_" + leg.right}, {"length_m", 15.0}});
            locations.push_back({{"id", next++}, {"intersection", x}, {"approach", A}, {"movement", "total"}, {"edge", X + "_" + A + "_in"}});
            locations.push_back({{"id", next++}, {"intersection", x}, {"approach", A}, {"movement", "left"}, {"edge", X + "_" + A + "_L"}});
            locations.push_back({{"id", next++}, {"intersection", x}, {"approach", A}, {"movement", "right"}, {"edge", X + "_" + A + "_R"}});
        }
    }
    return {{"nodes", nodes}, {"edges", edges}, {"locations", locations}};
}

const std::map<std::string, std::int64_t>& plus_movement_counts() {
    static const std::map<std::string, std::int64_t> counts = {
        // Intersection 25: EB 119, NB 157, SB 281, WB 334.
        {"25_EB_L", 7}, {"25_EB_T", 69}, {"25_EB_R", 43},
        {"25_NB_L", 20}, {"25_NB_T", 29}, {"25_NB_R", 108},
        {"25_SB_L", 141}, {"25_SB_T", 123}, {"25_SB_R", 17},
        {"25_WB_L", 178}, {"25_WB_T", 18}, {"25_WB_R", 138},
        // Intersection 46: quiet side streets EB 51 and WB 47.
        {"46_EB_L", 6}, {"46_EB_T", 40}, {"46_EB_R", 5},
        {"46_NB_L", 30}, {"46_NB_T", 300}, {"46_NB_R", 20},
        {"46_SB_L", 25}, {"46_SB_T", 280}, {"46_SB_R", 30},
        {"46_WB_L", 5}, {"46_WB_T", 37}, {"46_WB_R", 5},
    };
    return counts;
}

std::vector<std::int64_t> plus_base_routes(const RoadNetwork& net, const std::vector<Route>& routes) {
    std::vector<std::int64_t> r(routes.size(), 0);
    for (std::size_t i = 0; i < routes.size(); ++i) {
        const auto& connector = net.edges()[routes[i].edges.at(1)].id;
        r[i] = plus_movement_counts().at(connector);
    }
    return r;
}

double day_profile(int t) {
    // Quiet night, morning and evening peaks; exactly 1 at segment 68.
    const double h = t / 4.0;
    auto bump = [](double x, double mu, double sigma) { return std::exp(-0.5 * (x - mu) * (x - mu) / (sigma * sigma)); };
    const double raw = 0.08 + 0.55 * bump(h, 8.0, 1.5) + 0.35 * bump(h, 12.5, 2.5) + 0.92 * bump(h, 17.0, 1.6);
    const double at68 = 0.08 + 0.55 * bump(17.0, 8.0, 1.5) + 0.35 * bump(17.0, 12.5, 2.5) + 0.92;
    return std::min(1.0, raw / at68);
}

std::vector<std::vector<std::int64_t>> truth_day(const std::vector<std::int64_t>& base) {
    std::vector<std::vector<std::int64_t>> out(demandforge::kSegmentsPerDay, std::vector<std::int64_t>(base.size()));
    for (int t = 0; t < demandforge::kSegmentsPerDay; ++t)
        for (std::size_t i = 0; i < base.size(); ++i)
            out[t][i] = std::llround(static_cast<double>(base[i]) * day_profile(t));
    return out;
}

std::vector<std::int64_t> times(const IncidenceMatrix& a, const std::vector<std::int64_t>& r) {
    std::vector<std::int64_t> y(a.locations(), 0);
    for (std::size_t i = 0; i < a.routes(); ++i)
        for (auto j : a.row(i)) y[j] += r[i];
    return y;
}

std::string overlap_csv() {
    const int manual[] = {823, 959, 781, 1041, 1042, 952, 1106, 1329, 1889, 2088, 1059, 726, 979, 1048, 1166, 1441};
    const int cv[] = {872, 905, 839, 1071, 1065, 950, 1114, 1322, 1779, 1962, 1089, 801, 1096, 1178, 1191, 1553};
    std::ostringstream out;
    out << "source,location,segment,count\n";
    for (int k = 0; k < 16; ++k) {
        const int loc = k / 2, seg = k % 2 == 0 ? 48 : 68;
        out << "M," << loc << ',' << seg << ',' << manual[k] << '\n';
        out << "CV," << loc << ',' << seg << ',' << cv[k] << '\n';
    }
    return out.str();
}

Built build(const json& network_doc) {
    Built b;
    b.net = std::make_shared<const RoadNetwork>(demandforge::load_network(network_doc));
    b.routes = demandforge::enumerate_routes(*b.net);
    b.a = std::make_shared<const IncidenceMatrix>(demandforge::build_incidence(b.routes, b.net->locations()));
    return b;
}

}  // namespace dftest

#include "support/oracles.hpp"

namespace dftest {

demandforge::SegmentProblem to_problem(const oracle::DenseInstance& inst) {
    std::vector<std::vector<std::uint32_t>> rows(inst.n());
    for (std::size_t i = 0; i < inst.n(); ++i)
        for (std::size_t j = 0; j < inst.m(); ++j)
            if (inst.a[i][j]) rows[i].push_back(static_cast<std::uint32_t>(j));
    auto a = std::make_shared<const IncidenceMatrix>(inst.n(), inst.m(), rows);
    auto p = demandforge::make_problem(a, 0);
    for (std::size_t j = 0; j < inst.m(); ++j) {
        if (std::isfinite(inst.cv_lo[j])) p.bands_cv[j] = demandforge::Band{inst.cv_lo[j], inst.cv_hi[j]};
        if (std::isfinite(inst.ld_lo[j])) p.bands_ld[j] = demandforge::Band{inst.ld_lo[j], inst.ld_hi[j]};
        if (std::isfinite(inst.hard_lo[j]))
            p.extra_constraints.push_back({j, demandforge::BoundKind::lower, inst.hard_lo[j]});
        if (std::isfinite(inst.hard_hi[j]))
            p.extra_constraints.push_back({j, demandforge::BoundKind::upper, inst.hard_hi[j]});
    }
    for (std::size_t i = 0; i < inst.n(); ++i) p.nonfringe[i] = static_cast<std::uint8_t>(inst.nonfringe[i]);
    p.lambda_nonfringe = inst.lambda_nf;
    p.lambda_temporal = inst.lambda_t;
    p.r_prev = inst.r_prev;
    return p;
}

}  // namespace dftest
