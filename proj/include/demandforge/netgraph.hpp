#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace demandforge {

enum class Approach { EB, NB, SB, WB };
enum class Movement { total, left, right };

std::string_view to_string(Approach a);
std::string_view to_string(Movement m);
Approach parse_approach(std::string_view s);
Movement parse_movement(std::string_view s);

using EdgeIndex = std::size_t;

struct Edge {
    std::string id;
    std::string from;
    std::string to;
    double length_m = 0.0;
    bool fringe = false;
    // Interior edge explicitly allowed to start or end a route.
    bool endpoint = false;
};

struct CountingLocation {
    std::size_t index = 0;
    int intersection = 0;
    Approach approach = Approach::EB;
    Movement movement = Movement::total;
    EdgeIndex edge = 0;
};

class RoadNetwork {
public:
    RoadNetwork(std::vector<std::string> nodes, std::vector<Edge> edges,
                std::vector<CountingLocation> locations);

    const std::vector<std::string>& nodes() const { return nodes_; }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<CountingLocation>& locations() const { return locations_; }

    std::optional<EdgeIndex> find_edge(std::string_view id) const;
    EdgeIndex edge_index(std::string_view id) const;  // throws unknown_edge

    // Edges leaving the head node of `e`.
    std::span<const EdgeIndex> successors(EdgeIndex e) const;

    // Position of each edge in ascending id order; drives deterministic tie-breaks.
    std::size_t edge_rank(EdgeIndex e) const { return rank_[e]; }

    std::optional<std::size_t> find_location(int intersection, Approach a, Movement m) const;
    std::vector<int> intersections() const;

private:
    std::vector<std::string> nodes_;
    std::vector<Edge> edges_;
    std::vector<CountingLocation> locations_;
    std::vector<std::size_t> rank_;
    std::vector<std::size_t> succ_offsets_;
    std::vector<EdgeIndex> succ_;
};

struct Route {
    std::size_t id = 0;
    std::vector<EdgeIndex> edges;
    EdgeIndex origin = 0;
    EdgeIndex dest = 0;
    bool fringe = false;
    double length_m = 0.0;
};

/// Sparse binary route × location matrix, stored in both orientations.
/// Row i lists the locations route i passes (ascending); column j lists the
/// routes passing location j (ascending).
class IncidenceMatrix {
public:
    IncidenceMatrix() = default;
    IncidenceMatrix(std::size_t routes, std::size_t locations,
                    const std::vector<std::vector<std::uint32_t>>& rows);

    std::size_t routes() const { return n_; }
    std::size_t locations() const { return m_; }
    std::size_t nonzeros() const { return row_idx_.size(); }

    std::span<const std::uint32_t> row(std::size_t i) const {
        return {row_idx_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]};
    }
    std::span<const std::uint32_t> column(std::size_t j) const {
        return {col_idx_.data() + col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]};
    }
    bool at(std::size_t i, std::size_t j) const;

    // Locations no route can influence.
    std::vector<std::size_t> zero_columns() const;

private:
    std::size_t n_ = 0;
    std::size_t m_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::uint32_t> row_idx_;
    std::vector<std::size_t> col_ptr_{0};
    std::vector<std::uint32_t> col_idx_;
};

RoadNetwork load_network(const nlohmann::json& doc);
RoadNetwork load_network_file(const std::string& path);

std::optional<Route> shortest_path(const RoadNetwork& net, EdgeIndex origin, EdgeIndex dest);
std::optional<Route> shortest_path(const RoadNetwork& net, std::string_view origin_id,
                                   std::string_view dest_id);

// Fringe edges plus flagged interior endpoints, ascending by id.
std::vector<EdgeIndex> endpoint_edges(const RoadNetwork& net);

std::vector<Route> enumerate_routes(const RoadNetwork& net);

IncidenceMatrix build_incidence(std::span<const Route> routes,
                                std::span<const CountingLocation> locations);

void write_incidence_csv(std::ostream& out, const IncidenceMatrix& a);
void write_routes_listing(std::ostream& out, const RoadNetwork& net, std::span<const Route> routes);

}  // namespace demandforge
