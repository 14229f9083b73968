#include "demandforge/netgraph.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <queue>
#include <limits>
#include <set>
#include <tuple>
#include <unordered_map>

#include <omp.h>

#include "demandforge/error.hpp"

namespace demandforge {

namespace {

std::string id_string(const nlohmann::json& v, const char* what) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    throw Error("schema", std::string("network: ") + what + " id must be a string or integer");
}

template <class T>
T required(const nlohmann::json& obj, const char* key, const char* ctx) {
    if (!obj.is_object() || !obj.contains(key))
        throw Error("schema", std::string("network: ") + ctx + " missing '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw Error("schema", std::string("network: ") + ctx + " field '" + key + "' has wrong type");
    }
}

// Path label for the edge-based Dijkstra search.
struct Label {
    double dist = std::numeric_limits<double>::infinity();
    std::vector<EdgeIndex> path;
};

bool lex_less(const RoadNetwork& net, const std::vector<EdgeIndex>& a,
              const std::vector<EdgeIndex>& b) {
    return std::lexicographical_compare(
        a.begin(), a.end(), b.begin(), b.end(),
        [&](EdgeIndex x, EdgeIndex y) { return net.edge_rank(x) < net.edge_rank(y); });
}

// Single-source search over edges. Every label holds the length-minimal path
// from `origin`, ties resolved to the lexicographically smallest id sequence.
// Strictly positive lengths keep the optimal-prefix property under that order.
std::vector<Label> search_from(const RoadNetwork& net, EdgeIndex origin) {
    const auto& edges = net.edges();
    std::vector<Label> labels(edges.size());
    std::vector<bool> done(edges.size(), false);
    labels[origin].dist = edges[origin].length_m;
    labels[origin].path = {origin};

    using Item = std::pair<double, EdgeIndex>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> heap;
    heap.emplace(labels[origin].dist, origin);
    while (!heap.empty()) {
        auto [d, e] = heap.top();
        heap.pop();
        if (done[e] || d > labels[e].dist) continue;
        done[e] = true;
        for (EdgeIndex next : net.successors(e)) {
            if (done[next]) continue;
            const double nd = d + edges[next].length_m;
            Label& cur = labels[next];
            bool take = nd < cur.dist;
            std::vector<EdgeIndex> cand;
            if (!take && nd == cur.dist) {
                cand = labels[e].path;
                cand.push_back(next);
                take = lex_less(net, cand, cur.path);
            }
            if (!take) continue;
            if (cand.empty()) {
                cand = labels[e].path;
                cand.push_back(next);
            }
            const bool improved = nd < cur.dist;
            cur.dist = nd;
            cur.path = std::move(cand);
            if (improved) heap.emplace(nd, next);
        }
    }
    return labels;
}

Route make_route(const RoadNetwork& net, std::vector<EdgeIndex> path, double length) {
    Route r;
    r.origin = path.front();
    r.dest = path.back();
    r.fringe = net.edges()[r.origin].fringe && net.edges()[r.dest].fringe;
    r.length_m = length;
    r.edges = std::move(path);
    return r;
}

}  // namespace

std::string_view to_string(Approach a) {
    switch (a) {
        case Approach::EB: return "EB";
        case Approach::NB: return "NB";
        case Approach::SB: return "SB";
        case Approach::WB: return "WB";
    }
    return "?";
}

std::string_view to_string(Movement m) {
    switch (m) {
        case Movement::total: return "total";
        case Movement::left: return "left";
        case Movement::right: return "right";
    }
    return "?";
}

Approach parse_approach(std::string_view s) {
    if (s == "EB") return Approach::EB;
    if (s == "NB") return Approach::NB;
    if (s == "SB") return Approach::SB;
    if (s == "WB") return Approach::WB;
    throw Error("schema", "unknown approach '" + std::string(s) + "'");
}

Movement parse_movement(std::string_view s) {
    if (s == "total") return Movement::total;
    if (s == "left") return Movement::left;
    if (s == "right") return Movement::right;
    throw Error("schema", "unknown movement '" + std::string(s) + "'");
}

RoadNetwork::RoadNetwork(std::vector<std::string> nodes, std::vector<Edge> edges,
                         std::vector<CountingLocation> locations)
    : nodes_(std::move(nodes)), edges_(std::move(edges)), locations_(std::move(locations)) {
    std::unordered_map<std::string, std::size_t> node_pos;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!node_pos.emplace(nodes_[i], i).second)
            throw Error("schema", "network: duplicate node '" + nodes_[i] + "'");
    }
    std::set<std::string_view> edge_ids;
    for (const auto& e : edges_) {
        if (!edge_ids.insert(e.id).second)
            throw Error("schema", "network: duplicate edge '" + e.id + "'");
        if (!node_pos.count(e.from) || !node_pos.count(e.to))
            throw Error("dangling_node", "dangling node reference on edge '" + e.id + "'");
        if (!(e.length_m > 0.0))
            throw Error("nonpositive_length", "edge '" + e.id + "' has nonpositive length");
    }

    std::vector<std::size_t> order(edges_.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return edges_[a].id < edges_[b].id; });
    rank_.assign(edges_.size(), 0);
    for (std::size_t r = 0; r < order.size(); ++r) rank_[order[r]] = r;

    // Successor lists in ascending id order.
    std::vector<std::vector<EdgeIndex>> out(nodes_.size());
    for (std::size_t r = 0; r < order.size(); ++r) out[node_pos[edges_[order[r]].from]].push_back(order[r]);
    succ_offsets_.assign(edges_.size() + 1, 0);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
        const auto& lst = out[node_pos[edges_[e].to]];
        succ_offsets_[e + 1] = succ_offsets_[e] + lst.size();
        succ_.insert(succ_.end(), lst.begin(), lst.end());
    }

    std::set<std::tuple<int, Approach, Movement>> keys;
    for (std::size_t j = 0; j < locations_.size(); ++j) {
        auto& loc = locations_[j];
        if (loc.index != j)
            throw Error("schema", "network: location id " + std::to_string(loc.index) +
                                      " does not match its position " + std::to_string(j));
        if (loc.edge >= edges_.size()) throw Error("unknown_edge", "location references unknown edge");
        if (!keys.emplace(loc.intersection, loc.approach, loc.movement).second)
            throw Error("schema", "network: duplicate counting location (intersection " +
                                      std::to_string(loc.intersection) + ", " +
                                      std::string(to_string(loc.approach)) + ", " +
                                      std::string(to_string(loc.movement)) + ")");
    }
}

std::optional<EdgeIndex> RoadNetwork::find_edge(std::string_view id) const {
    for (std::size_t e = 0; e < edges_.size(); ++e)
        if (edges_[e].id == id) return e;
    return std::nullopt;
}

EdgeIndex RoadNetwork::edge_index(std::string_view id) const {
    auto e = find_edge(id);
    if (!e) throw Error("unknown_edge", "unknown edge '" + std::string(id) + "'");
    return *e;
}

std::span<const EdgeIndex> RoadNetwork::successors(EdgeIndex e) const {
    return {succ_.data() + succ_offsets_[e], succ_offsets_[e + 1] - succ_offsets_[e]};
}

std::optional<std::size_t> RoadNetwork::find_location(int intersection, Approach a, Movement m) const {
    for (const auto& loc : locations_)
        if (loc.intersection == intersection && loc.approach == a && loc.movement == m) return loc.index;
    return std::nullopt;
}

std::vector<int> RoadNetwork::intersections() const {
    std::set<int> ids;
    for (const auto& loc : locations_) ids.insert(loc.intersection);
    return {ids.begin(), ids.end()};
}

IncidenceMatrix::IncidenceMatrix(std::size_t routes, std::size_t locations,
                                 const std::vector<std::vector<std::uint32_t>>& rows)
    : n_(routes), m_(locations) {
    row_ptr_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) {
        auto r = rows[i];
        std::sort(r.begin(), r.end());
        r.erase(std::unique(r.begin(), r.end()), r.end());
        row_idx_.insert(row_idx_.end(), r.begin(), r.end());
        row_ptr_[i + 1] = row_idx_.size();
    }
    col_ptr_.assign(m_ + 1, 0);
    for (auto j : row_idx_) ++col_ptr_[j + 1];
    for (std::size_t j = 0; j < m_; ++j) col_ptr_[j + 1] += col_ptr_[j];
    col_idx_.resize(row_idx_.size());
    std::vector<std::size_t> fill(col_ptr_.begin(), col_ptr_.end() - 1);
    for (std::size_t i = 0; i < n_; ++i)
        for (auto j : row(i)) col_idx_[fill[j]++] = static_cast<std::uint32_t>(i);
}

bool IncidenceMatrix::at(std::size_t i, std::size_t j) const {
    auto r = row(i);
    return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(j));
}

std::vector<std::size_t> IncidenceMatrix::zero_columns() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < m_; ++j)
        if (col_ptr_[j + 1] == col_ptr_[j]) out.push_back(j);
    return out;
}

RoadNetwork load_network(const nlohmann::json& doc) {
    if (!doc.is_object()) throw Error("schema", "network: document must be a JSON object");
    for (const char* key : {"nodes", "edges"})
        if (!doc.contains(key) || !doc.at(key).is_array())
            throw Error("schema", std::string("network: '") + key + "' must be an array");

    std::vector<std::string> nodes;
    for (const auto& n : doc.at("nodes")) {
        if (!n.is_object() || !n.contains("id")) throw Error("schema", "network: node without id");
        nodes.push_back(id_string(n.at("id"), "node"));
    }

    std::vector<Edge> edges;
    for (const auto& e : doc.at("edges")) {
        if (!e.is_object() || !e.contains("id")) throw Error("schema", "network: edge without id");
        Edge edge;
        edge.id = id_string(e.at("id"), "edge");
        if (!e.contains("from") || !e.contains("to"))
            throw Error("schema", "network: edge '" + edge.id + "' missing from/to");
        edge.from = id_string(e.at("from"), "node");
        edge.to = id_string(e.at("to"), "node");
        edge.length_m = required<double>(e, "length_m", "edge");
        edge.fringe = e.value("fringe", false);
        edge.endpoint = e.value("endpoint", false);
        edges.push_back(std::move(edge));
    }

    std::unordered_map<std::string, EdgeIndex> edge_pos;
    for (std::size_t i = 0; i < edges.size(); ++i) edge_pos.emplace(edges[i].id, i);

    std::vector<CountingLocation> locations;
    if (doc.contains("locations")) {
        if (!doc.at("locations").is_array()) throw Error("schema", "network: 'locations' must be an array");
        for (const auto& l : doc.at("locations")) {
            CountingLocation loc;
            loc.index = required<std::size_t>(l, "id", "location");
            loc.intersection = required<int>(l, "intersection", "location");
            loc.approach = parse_approach(required<std::string>(l, "approach", "location"));
            loc.movement = parse_movement(l.value("movement", std::string("total")));
            if (!l.contains("edge")) throw Error("schema", "network: location missing 'edge'");
            const auto eid = id_string(l.at("edge"), "edge");
            auto it = edge_pos.find(eid);
            if (it == edge_pos.end())
                throw Error("unknown_edge", "location " + std::to_string(loc.index) +
                                                " references unknown edge '" + eid + "'");
            loc.edge = it->second;
            locations.push_back(loc);
        }
    }
    return RoadNetwork(std::move(nodes), std::move(edges), std::move(locations));
}

RoadNetwork load_network_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open network document '" + path + "'");
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", "network document '" + path + "' is not valid JSON: " + e.what());
    }
    return load_network(doc);
}

std::optional<Route> shortest_path(const RoadNetwork& net, EdgeIndex origin, EdgeIndex dest) {
    if (origin >= net.edges().size() || dest >= net.edges().size())
        throw Error("unknown_edge", "shortest_path: unknown edge index");
    if (origin == dest) return make_route(net, {origin}, net.edges()[origin].length_m);
    auto labels = search_from(net, origin);
    if (labels[dest].path.empty()) return std::nullopt;
    return make_route(net, std::move(labels[dest].path), labels[dest].dist);
}

std::optional<Route> shortest_path(const RoadNetwork& net, std::string_view origin_id,
                                   std::string_view dest_id) {
    return shortest_path(net, net.edge_index(origin_id), net.edge_index(dest_id));
}

std::vector<EdgeIndex> endpoint_edges(const RoadNetwork& net) {
    std::vector<EdgeIndex> out;
    for (std::size_t e = 0; e < net.edges().size(); ++e)
        if (net.edges()[e].fringe || net.edges()[e].endpoint) out.push_back(e);
    std::sort(out.begin(), out.end(),
              [&](EdgeIndex a, EdgeIndex b) { return net.edge_rank(a) < net.edge_rank(b); });
    return out;
}

std::vector<Route> enumerate_routes(const RoadNetwork& net) {
    const auto ends = endpoint_edges(net);
    std::vector<std::vector<Route>> per_origin(ends.size());

#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(ends.size()); ++k) {
        const EdgeIndex o = ends[k];
        auto labels = search_from(net, o);
        for (EdgeIndex d : ends) {
            if (d == o || labels[d].path.empty()) continue;
            per_origin[k].push_back(make_route(net, std::move(labels[d].path), labels[d].dist));
        }
    }

    std::vector<Route> routes;
    for (auto& lst : per_origin)
        for (auto& r : lst) {
            r.id = routes.size();
            routes.push_back(std::move(r));
        }
    return routes;
}

IncidenceMatrix build_incidence(std::span<const Route> routes,
                                std::span<const CountingLocation> locations) {
    std::unordered_multimap<EdgeIndex, std::uint32_t> by_edge;
    for (const auto& loc : locations) by_edge.emplace(loc.edge, static_cast<std::uint32_t>(loc.index));

    std::vector<std::vector<std::uint32_t>> rows(routes.size());
    for (std::size_t i = 0; i < routes.size(); ++i)
        for (EdgeIndex e : routes[i].edges) {
            auto [lo, hi] = by_edge.equal_range(e);
            for (auto it = lo; it != hi; ++it) rows[i].push_back(it->second);
        }
    return IncidenceMatrix(routes.size(), locations.size(), rows);
}

void write_incidence_csv(std::ostream& out, const IncidenceMatrix& a) {
    out << "route";
    for (std::size_t j = 0; j < a.locations(); ++j) out << ',' << j;
    out << '\n';
    std::vector<char> dense(a.locations());
    for (std::size_t i = 0; i < a.routes(); ++i) {
        std::fill(dense.begin(), dense.end(), '0');
        for (auto j : a.row(i)) dense[j] = '1';
        out << i;
        for (char c : dense) out << ',' << c;
        out << '\n';
    }
}

void write_routes_listing(std::ostream& out, const RoadNetwork& net, std::span<const Route> routes) {
    out << "route,origin,dest,fringe,length_m,edges\n";
    for (const auto& r : routes) {
        out << r.id << ',' << net.edges()[r.origin].id << ',' << net.edges()[r.dest].id << ','
            << (r.fringe ? 1 : 0) << ',' << r.length_m << ',';
        for (std::size_t k = 0; k < r.edges.size(); ++k)
            out << (k ? " " : "") << net.edges()[r.edges[k]].id;
        out << '\n';
    }
}

}  // namespace demandforge
