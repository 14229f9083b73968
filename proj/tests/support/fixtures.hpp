#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "demandforge/counts.hpp"
#include "demandforge/netgraph.hpp"
#include "demandforge/qipsolve.hpp"

#include "json.hpp"

namespace dftest {

using demandforge::CountTable;
using demandforge::IncidenceMatrix;
using demandforge::RoadNetwork;
using demandforge::Route;

/// rows x cols grid of intersections 100 m apart; intersection id r*cols+c+1.
/// Each boundary position carries one 50 m fringe stub. With bidirectional
/// stubs every position has an inbound and an outbound stub; otherwise the 3x3
/// pattern alternates (W rows 0,2 / E row 1 / N cols 0,2 / S col 1 inbound).
/// Locations: every edge entering a grid node, movement total.
nlohmann::json grid_network_json(int rows, int cols, bool bidirectional_stubs);

/// The 3x3 grid: 24 interior edges, 12 stubs, 30 locations, 36 routes.
nlohmann::json grid3_network_json();

/// 25x25 grid with bidirectional stubs: 100 origins x 100 destinations.
nlohmann::json large_grid_network_json();

/// Two isolated four-leg intersections (25 and 46). Each approach has a total
/// location on its inbound edge plus left and right locations on the turn
/// connectors; 12 routes per intersection.
nlohmann::json plus_network_json();

/// Connector id (e.g. "25_EB_L") -> route count of the reference solution.
const std::map<std::string, std::int64_t>& plus_movement_counts();

/// Route counts reproducing plus_movement_counts() at profile 1.
std::vector<std::int64_t> plus_base_routes(const RoadNetwork& net, const std::vector<Route>& routes);

/// Time-of-day multiplier in (0, 1], equal to 1 at segment 68.
double day_profile(int t);

/// Integer ground truth for one day: r[t][i] = round(base[i] * profile(t)).
std::vector<std::vector<std::int64_t>> truth_day(const std::vector<std::int64_t>& base);

/// (A r)_j for an integer vector.
std::vector<std::int64_t> times(const IncidenceMatrix& a, const std::vector<std::int64_t>& r);

/// Manual vs CV overlap as counts CSV: 8 locations, segments 48 and 68.
std::string overlap_csv();

/// Everything a test needs to solve a fixture network.
struct Built {
    std::shared_ptr<const RoadNetwork> net;
    std::vector<Route> routes;
    std::shared_ptr<const IncidenceMatrix> a;
};
Built build(const nlohmann::json& network_doc);

}  // namespace dftest

namespace dftest {
namespace oracle {
struct DenseInstance;
}
/// Same instance in the library's problem form (absent bands become nullopt,
/// hard bounds become extra constraints).
demandforge::SegmentProblem to_problem(const oracle::DenseInstance& inst);
}  // namespace dftest
