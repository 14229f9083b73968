#include "demandforge/refine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <regex>
#include <set>
#include <sstream>

namespace demandforge {

namespace {

using nlohmann::json;

constexpr Approach kAllApproaches[] = {Approach::EB, Approach::NB, Approach::SB, Approach::WB};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

bool mentions(const std::string& text, const char* pattern) {
    return std::regex_search(text, std::regex(pattern, std::regex::ECMAScript | std::regex::icase));
}

std::string clock_label(int segment) {
    char buf[16];
    const int minutes = segment * kMinutesPerSegment;
    std::snprintf(buf, sizeof buf, "%02d:%02d", minutes / 60, minutes % 60);
    return buf;
}

[[noreturn]] void syntactic(const std::string& msg) { throw Error("syntactic", msg); }

json parse_reply(std::string_view reply) {
    auto doc = json::parse(reply, nullptr, false);
    if (!doc.is_discarded()) return doc;
    // Tolerate prose or code fences around a single JSON object.
    const auto open = reply.find('{');
    const auto close = reply.rfind('}');
    if (open != std::string_view::npos && close != std::string_view::npos && close > open) {
        doc = json::parse(reply.substr(open, close - open + 1), nullptr, false);
        if (!doc.is_discarded()) return doc;
    }
    syntactic("reply is not a JSON document");
}

std::size_t resolve_location(const json& atom, const RoadNetwork& net) {
    const auto& locs = net.locations();
    std::optional<Movement> movement;
    if (atom.contains("movement")) {
        if (!atom["movement"].is_string()) syntactic("atom movement must be a string");
        try {
            movement = parse_movement(atom["movement"].get<std::string>());
        } catch (const Error& e) {
            syntactic(e.what());
        }
    }
    if (atom.contains("location")) {
        const auto& v = atom["location"];
        if (!v.is_number_integer() || v.get<long long>() < 0 ||
            static_cast<std::size_t>(v.get<long long>()) >= locs.size())
            syntactic("unknown location " + v.dump());
        const auto& base = locs[v.get<std::size_t>()];
        if (!movement || *movement == base.movement) return base.index;
        if (auto j = net.find_location(base.intersection, base.approach, *movement)) return *j;
        syntactic("unknown location: intersection " + std::to_string(base.intersection) + " " +
                  std::string(to_string(base.approach)) + " has no " + std::string(to_string(*movement)) +
                  " count");
    }
    if (!atom.contains("intersection") || !atom.contains("approach"))
        syntactic("atom needs either a location index or an intersection and approach");
    if (!atom["intersection"].is_number_integer() || !atom["approach"].is_string())
        syntactic("atom intersection must be an integer and approach a string");
    const int intersection = atom["intersection"].get<int>();
    Approach approach;
    try {
        approach = parse_approach(atom["approach"].get<std::string>());
    } catch (const Error& e) {
        syntactic(e.what());
    }
    const Movement m = movement.value_or(Movement::total);
    if (auto j = net.find_location(intersection, approach, m)) return *j;
    syntactic("unknown location: intersection " + std::to_string(intersection) + " " +
              std::string(to_string(approach)) + " " + std::string(to_string(m)));
}

std::string atom_text(const ConstraintAtom& a, const RoadNetwork& net) {
    const auto& loc = net.locations()[a.location];
    std::ostringstream out;
    out << "location " << a.location << " (intersection " << loc.intersection << ' ' << to_string(loc.approach) << ' '
        << to_string(loc.movement) << ") segment " << a.segment << (a.kind == BoundKind::lower ? " >= " : " <= ")
        << a.bound;
    return out.str();
}

}  // namespace

std::string_view to_string(Intent i) {
    switch (i) {
        case Intent::increase: return "increase";
        case Intent::decrease: return "decrease";
        case Intent::maintain: return "maintain";
    }
    return "?";
}

std::string_view to_string(Adjacency a) { return a == Adjacency::target ? "target" : "adjacent"; }

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::syntactic: return "syntactic";
        case Stage::feasible: return "feasible";
        case Stage::semantic: return "semantic";
        case Stage::accepted: return "accepted";
    }
    return "?";
}

FeedbackItem feedback_from_json(const json& doc) {
    try {
        FeedbackItem item;
        item.k = doc.value("k", 0);
        item.segment = doc.at("segment").get<int>();
        item.intersection = doc.at("intersection").get<int>();
        item.text = doc.at("text").get<std::string>();
        if (doc.contains("intent") && !doc["intent"].is_null()) {
            const auto s = doc["intent"].get<std::string>();
            if (s == "increase") item.intent = Intent::increase;
            else if (s == "decrease") item.intent = Intent::decrease;
            else if (s == "maintain") item.intent = Intent::maintain;
            else throw Error("schema", "feedback intent must be increase, decrease or maintain");
        }
        if (doc.contains("approaches"))
            for (const auto& a : doc["approaches"]) item.approaches.push_back(parse_approach(a.get<std::string>()));
        return item;
    } catch (const json::exception& e) {
        throw Error("schema", std::string("feedback item: ") + e.what());
    }
}

json to_json(const FeedbackItem& item) {
    json doc = {{"k", item.k}, {"segment", item.segment}, {"intersection", item.intersection}, {"text", item.text}};
    if (item.intent) doc["intent"] = std::string(to_string(*item.intent));
    if (!item.approaches.empty()) {
        doc["approaches"] = json::array();
        for (auto a : item.approaches) doc["approaches"].push_back(std::string(to_string(a)));
    }
    return doc;
}

std::vector<FeedbackItem> read_feedback(std::istream& in) {
    std::vector<FeedbackItem> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto doc = json::parse(line, nullptr, false);
        if (doc.is_discarded()) throw Error("schema", "feedback line " + std::to_string(line_no) + " is not JSON");
        out.push_back(feedback_from_json(doc));
    }
    return out;
}

std::vector<FeedbackItem> read_feedback_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open feedback file '" + path + "'");
    return read_feedback(in);
}

void validate_feedback(const FeedbackItem& item, const RoadNetwork& net) {
    if (item.segment < 0 || item.segment >= kSegmentsPerDay)
        throw Error("segment_out_of_range", "feedback segment " + std::to_string(item.segment) + " outside 0..95");
    const auto ids = net.intersections();
    if (!std::binary_search(ids.begin(), ids.end(), item.intersection))
        throw Error("unknown_intersection", "feedback names unknown intersection " + std::to_string(item.intersection));
}

json to_json(const ConstraintSpec& spec, const RoadNetwork& net) {
    json atoms = json::array();
    for (const auto& a : spec.atoms) {
        const auto& loc = net.locations()[a.location];
        atoms.push_back({{"location", a.location},
                         {"intersection", loc.intersection},
                         {"approach", std::string(to_string(loc.approach))},
                         {"movement", std::string(to_string(loc.movement))},
                         {"segment", a.segment},
                         {"kind", a.kind == BoundKind::lower ? "lower" : "upper"},
                         {"bound", a.bound},
                         {"provenance", {{"feedback", a.feedback}, {"adjacency", std::string(to_string(a.adjacency))}}}});
    }
    return {{"feedback", spec.feedback},
            {"segment", spec.segment},
            {"intersection", spec.intersection},
            {"atoms", atoms}};
}

std::string constraint_schema_description() {
    return R"(Reply with one JSON object and nothing else:
{"atoms": [ATOM, ...]}
ATOM fields:
  "intersection": integer, "approach": "EB"|"NB"|"SB"|"WB"   (or "location": integer index)
  "movement": "total"|"left"|"right"   (default "total")
  "kind": "lower"|"upper"               (lower: count >= bound, upper: count <= bound)
  "bound": nonnegative number
  "adjacency": "target"|"adjacent"      (target applies to the feedback segment t;
                                         adjacent applies to t-1 and t+1 unless "segment" picks one)
Every target bound needs a relaxed adjacent bound: a lower adjacent bound may not exceed
its target bound and an upper adjacent bound may not be below it.
An empty atom list means no change is needed.)";
}

ConstraintSpec verify_syntactic(std::string_view reply, const RoadNetwork& net, const FeedbackItem& item) {
    const json doc = parse_reply(reply);
    if (!doc.is_object() || !doc.contains("atoms") || !doc["atoms"].is_array())
        syntactic("reply must be an object with an \"atoms\" array");

    ConstraintSpec spec;
    spec.feedback = item.k;
    spec.segment = item.segment;
    spec.intersection = item.intersection;
    const int t = item.segment;
    auto in_day = [](int s) { return s >= 0 && s < kSegmentsPerDay; };

    std::vector<ConstraintAtom> targets, adjacent;
    std::size_t index = 0;
    for (const auto& node : doc["atoms"]) {
        const std::string where = "atom " + std::to_string(index++) + ": ";
        if (!node.is_object()) syntactic(where + "not an object");
        ConstraintAtom atom;
        atom.feedback = item.k;
        try {
            atom.location = resolve_location(node, net);
        } catch (const Error& e) {
            syntactic(where + e.what());
        }

        if (!node.contains("kind") || !node["kind"].is_string()) syntactic(where + "missing kind");
        const auto kind = node["kind"].get<std::string>();
        if (kind == "lower") atom.kind = BoundKind::lower;
        else if (kind == "upper") atom.kind = BoundKind::upper;
        else syntactic(where + "kind must be lower or upper");

        if (!node.contains("bound") || !node["bound"].is_number()) syntactic(where + "missing numeric bound");
        atom.bound = node["bound"].get<double>();
        if (!std::isfinite(atom.bound) || atom.bound < 0.0) syntactic(where + "negative or non-finite bound");

        std::string adjacency = "target";
        if (node.contains("provenance") && node["provenance"].is_object() && node["provenance"].contains("adjacency"))
            adjacency = node["provenance"]["adjacency"].get<std::string>();
        if (node.contains("adjacency")) {
            if (!node["adjacency"].is_string()) syntactic(where + "adjacency must be a string");
            adjacency = node["adjacency"].get<std::string>();
        }
        std::optional<int> segment;
        if (node.contains("segment")) {
            if (!node["segment"].is_number_integer()) syntactic(where + "segment must be an integer");
            segment = node["segment"].get<int>();
        }

        if (adjacency == "target") {
            if (segment && *segment != t)
                syntactic(where + "target atom on segment " + std::to_string(*segment) + ", feedback segment is " +
                          std::to_string(t));
            atom.segment = t;
            atom.adjacency = Adjacency::target;
            targets.push_back(atom);
        } else if (adjacency == "adjacent") {
            atom.adjacency = Adjacency::adjacent;
            if (segment) {
                if (std::abs(*segment - t) != 1 || !in_day(*segment))
                    syntactic(where + "adjacent atom must sit on segment t-1 or t+1");
                atom.segment = *segment;
                adjacent.push_back(atom);
            } else {
                for (int s : {t - 1, t + 1})
                    if (in_day(s)) {
                        atom.segment = s;
                        adjacent.push_back(atom);
                    }
            }
        } else {
            syntactic(where + "adjacency must be target or adjacent");
        }
    }

    if (!targets.empty() && adjacent.empty()) syntactic("missing relaxed adjacent constraints");
    for (const auto& adj : adjacent)
        for (const auto& tgt : targets) {
            if (tgt.location != adj.location || tgt.kind != adj.kind) continue;
            const bool tighter = adj.kind == BoundKind::lower ? adj.bound > tgt.bound : adj.bound < tgt.bound;
            if (tighter) syntactic("adjacent constraint tighter than target: " + atom_text(adj, net));
        }

    // Relax any target bound the reply left without a neighbour counterpart.
    std::vector<ConstraintAtom> filled;
    for (const auto& tgt : targets)
        for (int s : {t - 1, t + 1}) {
            if (!in_day(s)) continue;
            const bool covered = std::any_of(adjacent.begin(), adjacent.end(), [&](const ConstraintAtom& a) {
                return a.location == tgt.location && a.kind == tgt.kind && a.segment == s;
            });
            if (covered) continue;
            ConstraintAtom relaxed = tgt;
            relaxed.segment = s;
            relaxed.adjacency = Adjacency::adjacent;
            relaxed.bound = tgt.bound * (tgt.kind == BoundKind::lower ? kAdjacentLowerFactor : kAdjacentUpperFactor);
            filled.push_back(relaxed);
        }
    spec.atoms = std::move(targets);
    spec.atoms.insert(spec.atoms.end(), adjacent.begin(), adjacent.end());
    spec.atoms.insert(spec.atoms.end(), filled.begin(), filled.end());
    return spec;
}

std::size_t RefinementState::slot(int t) const {
    const auto it = std::lower_bound(base.begin(), base.end(), t,
                                     [](const SegmentProblem& p, int s) { return p.segment < s; });
    if (it == base.end() || it->segment != t)
        throw Error("missing_segment", "no problem for segment " + std::to_string(t));
    return static_cast<std::size_t>(it - base.begin());
}

std::vector<LocationBound> RefinementState::constraints_for(int t) const {
    std::vector<LocationBound> out;
    for (const auto& spec : accepted)
        for (const auto& a : spec.atoms)
            if (a.segment == t) out.push_back({a.location, a.kind, a.bound});
    return out;
}

SegmentProblem RefinementState::problem(int t, const ConstraintSpec* extra) const {
    SegmentProblem p = base[slot(t)];
    auto bounds = constraints_for(t);
    p.extra_constraints.insert(p.extra_constraints.end(), bounds.begin(), bounds.end());
    if (extra)
        for (const auto& a : extra->atoms)
            if (a.segment == t) p.extra_constraints.push_back({a.location, a.kind, a.bound});
    return p;
}

RefinementState make_state(std::shared_ptr<const RoadNetwork> network, std::vector<SegmentProblem> base,
                           const SolveConfig& config) {
    if (base.empty()) throw Error("invalid_argument", "refinement needs at least one segment problem");
    RefinementState state;
    state.network = std::move(network);
    state.base = std::move(base);
    state.config = config;
    state.last_solution = resolve_all(state);
    return state;
}

std::vector<RouteSolution> resolve_all(const RefinementState& state) {
    std::vector<SegmentProblem> problems;
    problems.reserve(state.base.size());
    for (const auto& p : state.base) problems.push_back(state.problem(p.segment));
    return solve_day(std::move(problems), state.config);
}

std::int64_t get_counts(std::span<const RouteSolution> solutions, const IncidenceMatrix& a, std::size_t j, int t) {
    if (j >= a.locations()) throw Error("unknown_location", "unknown location " + std::to_string(j));
    const auto it = std::find_if(solutions.begin(), solutions.end(), [t](const RouteSolution& s) { return s.segment == t; });
    if (it == solutions.end()) throw Error("missing_segment", "no solution for segment " + std::to_string(t));
    if (it->r.size() != a.routes()) throw Error("dimension_mismatch", "solution length differs from route count");
    std::int64_t total = 0;
    for (auto i : a.column(j)) total += it->r[i];
    return total;
}

CountSnapshot intersection_counts(std::span<const RouteSolution> solutions, const IncidenceMatrix& a,
                                  const RoadNetwork& net, int intersection, int t) {
    CountSnapshot out;
    for (const auto& loc : net.locations())
        if (loc.intersection == intersection) out[loc.index] = get_counts(solutions, a, loc.index, t);
    return out;
}

std::string build_prompt(const FeedbackItem& item, const RefinementState& state) {
    const auto& net = *state.network;
    const auto& a = state.incidence();
    std::ostringstream out;
    out << "You turn a traffic engineer's feedback on a simulation into bound constraints on simulated counts.\n\n";
    out << "Feedback " << item.k << " on intersection " << item.intersection << " for the 15-minute segment "
        << item.segment << " starting " << clock_label(item.segment) << ":\n\"" << item.text << "\"\n\n";

    out << "Counting locations at intersection " << item.intersection << " with current simulated counts "
        << "(get_counts results):\n";
    for (const auto& loc : net.locations()) {
        if (loc.intersection != item.intersection) continue;
        out << "  location " << loc.index << " " << to_string(loc.approach) << ' ' << to_string(loc.movement) << ":";
        for (int s : {item.segment - 1, item.segment, item.segment + 1}) {
            if (s < 0 || s >= kSegmentsPerDay) continue;
            try {
                out << " segment " << s << " = " << get_counts(state.last_solution, a, loc.index, s) << ';';
            } catch (const Error&) {
            }
        }
        out << '\n';
    }

    out << "\nIntersections and their counted approaches:\n";
    for (int id : net.intersections()) {
        std::set<std::string_view> approaches;
        for (const auto& loc : net.locations())
            if (loc.intersection == id) approaches.insert(to_string(loc.approach));
        out << "  " << id << ':';
        for (auto ap : approaches) out << ' ' << ap;
        out << '\n';
    }

    out << "\nConstraints already in force:\n";
    std::size_t shown = 0;
    for (const auto& spec : state.accepted)
        for (const auto& atom : spec.atoms) {
            out << "  " << atom_text(atom, net) << '\n';
            ++shown;
        }
    if (shown == 0) out << "  none\n";

    out << "\nSteps: read the current counts; decide which approaches and movements the feedback is about; "
           "choose bounds that express it; add milder bounds for the neighbouring segments for continuity.\n\n";
    out << constraint_schema_description() << '\n';
    return out.str();
}

ConstraintSpec compile_feedback(const FeedbackItem& item, const RefinementState& state, LlmClient& client) {
    validate_feedback(item, *state.network);
    const std::string reply = client.compile(build_prompt(item, state));
    return verify_syntactic(reply, *state.network, item);
}

std::map<int, RouteSolution> verify_feasible(const RefinementState& state, const ConstraintSpec& spec) {
    std::vector<int> segments;
    for (int s : {spec.segment - 1, spec.segment, spec.segment + 1}) {
        try {
            state.slot(s);
            segments.push_back(s);
        } catch (const Error&) {
        }
    }
    std::vector<SegmentProblem> problems;
    for (int s : segments) {
        problems.push_back(state.problem(s, &spec));
        if (auto reason = infeasibility_reason(problems.back(), state.config.route_upper_bound); !reason.empty())
            throw InfeasibleError("segment " + std::to_string(s) + ": " + reason);
    }
    std::map<int, RouteSolution> out;
    const RouteSolution* prev = nullptr;
    for (std::size_t k = 0; k < problems.size(); ++k) {
        auto& p = problems[k];
        const std::size_t slot = state.slot(p.segment);
        if (prev) p.r_prev = prev->r;
        else if (slot > 0) p.r_prev = state.last_solution[slot - 1].r;
        else p.r_prev.reset();
        RouteSolution sol;
        try {
            sol = solve_segment(p, state.config);
        } catch (const InfeasibleError& e) {
            throw InfeasibleError("segment " + std::to_string(p.segment) + ": " + e.what());
        }
        if (!satisfies_constraints(sol.r, p))
            throw InfeasibleError("segment " + std::to_string(p.segment) + ": solver returned a point violating the bounds");
        prev = &(out[p.segment] = std::move(sol));
    }
    return out;
}

std::optional<Intent> infer_intent(std::string_view text) {
    const std::string t = lower(text);
    if (mentions(t, R"(\b(accurate|looks (good|right|fine|realistic)|no change|realistic|correct|about right|keep (it|them|this))\b)"))
        return Intent::maintain;
    const bool up = mentions(t, R"(\b(more|increase[sd]?|higher|max(ed)? out|packed|busier|heavier|raise)\b)");
    const bool down = mentions(t, R"(\b(fewer|less|decrease[sd]?|reduce[sd]?|lower|lighter|quieter|too many|too much)\b)");
    if (up == down) return std::nullopt;
    return up ? Intent::increase : Intent::decrease;
}

std::vector<Approach> named_approaches(std::string_view text) {
    const std::string t = lower(text);
    if (mentions(t, R"(\b(every|each|all)( of the)? (approach|approaches|direction|directions)\b)"))
        return {std::begin(kAllApproaches), std::end(kAllApproaches)};
    std::vector<Approach> out;
    const std::pair<Approach, const char*> names[] = {{Approach::EB, R"(\b(eastbound|east-bound|eb)\b)"},
                                                      {Approach::NB, R"(\b(northbound|north-bound|nb)\b)"},
                                                      {Approach::SB, R"(\b(southbound|south-bound|sb)\b)"},
                                                      {Approach::WB, R"(\b(westbound|west-bound|wb)\b)"}};
    for (const auto& [a, pattern] : names)
        if (mentions(t, pattern)) out.push_back(a);
    return out;
}

SemanticVerdict verify_semantic(const CountSnapshot& before, const CountSnapshot& after, const FeedbackItem& item,
                                const RoadNetwork& net, LlmClient* client, const ConstraintSpec* spec) {
    SemanticVerdict v;
    v.intent = item.intent ? item.intent : infer_intent(item.text);
    if (!v.intent) {
        v.reason = "intent is ambiguous";
        return v;
    }
    v.approaches = item.approaches;
    if (v.approaches.empty()) v.approaches = named_approaches(item.text);
    if (v.approaches.empty() && *v.intent == Intent::maintain && spec) {
        std::set<Approach> seen;
        for (const auto& a : spec->atoms)
            if (a.adjacency == Adjacency::target) {
                const auto& loc = net.locations()[a.location];
                if (loc.intersection == item.intersection) seen.insert(loc.approach);
            }
        v.approaches.assign(seen.begin(), seen.end());
    }
    if (v.approaches.empty())
        for (auto a : kAllApproaches)
            if (net.find_location(item.intersection, a, Movement::total)) v.approaches.push_back(a);
    if (v.approaches.empty()) {
        v.reason = "intersection has no total counts to compare";
        return v;
    }

    std::ostringstream why;
    bool ok = true;
    std::size_t compared = 0;
    for (auto a : v.approaches) {
        const auto j = net.find_location(item.intersection, a, Movement::total);
        if (!j) continue;
        const auto b = before.find(*j);
        const auto f = after.find(*j);
        if (b == before.end() || f == after.end()) {
            ok = false;
            why << to_string(a) << ": count missing; ";
            continue;
        }
        ++compared;
        const double x0 = static_cast<double>(b->second);
        const double x1 = static_cast<double>(f->second);
        bool good = false;
        switch (*v.intent) {
            case Intent::increase: good = x1 > x0; break;
            case Intent::decrease: good = x1 < x0; break;
            case Intent::maintain: good = std::abs(x1 - x0) <= kMaintainTolerance * x0 + 1e-9; break;
        }
        if (!good) {
            ok = false;
            why << to_string(a) << ' ' << b->second << " -> " << f->second << " does not match " << to_string(*v.intent)
                << "; ";
        }
    }
    if (compared == 0) {
        v.reason = "none of the named approaches has a total count";
        return v;
    }
    v.pass = ok;
    v.reason = ok ? "counts move as the feedback asks" : why.str();

    if (client && !client->is_mock()) {
        std::ostringstream prompt;
        prompt << "Feedback on intersection " << item.intersection << ": \"" << item.text << "\"\n"
               << "Simulated counts before and after the new constraints:\n";
        for (const auto& [j, x0] : before) {
            const auto& loc = net.locations()[j];
            const auto f = after.find(j);
            prompt << "  " << to_string(loc.approach) << ' ' << to_string(loc.movement) << ": " << x0 << " -> "
                   << (f == after.end() ? std::string("?") : std::to_string(f->second)) << '\n';
        }
        prompt << "Does the change reflect the feedback? Answer yes or no.\n";
        v.reflection = client->reflect(prompt.str());
        if (!v.reflection || !*v.reflection) {
            v.pass = false;
            v.reason += v.reflection ? " reflection rejected the change" : " reflection reply was unusable";
        }
    }
    return v;
}

AttemptResult attempt_feedback(const RefinementState& state, const FeedbackItem& item, LlmClient& client) {
    validate_feedback(item, *state.network);
    AttemptResult res;
    const auto& net = *state.network;
    res.before = intersection_counts(state.last_solution, state.incidence(), net, item.intersection, item.segment);
    try {
        res.spec = compile_feedback(item, state, client);
    } catch (const Error& e) {
        if (e.code() != "syntactic") throw;
        res.stage = Stage::syntactic;
        res.detail = e.what();
        return res;
    }
    try {
        res.candidates = verify_feasible(state, res.spec);
    } catch (const InfeasibleError& e) {
        res.stage = Stage::feasible;
        res.detail = e.what();
        return res;
    }
    std::vector<RouteSolution> target{res.candidates.at(item.segment)};
    res.after = intersection_counts(target, state.incidence(), net, item.intersection, item.segment);
    res.semantic = verify_semantic(res.before, res.after, item, net, &client, &res.spec);
    res.stage = res.semantic.pass ? Stage::accepted : Stage::semantic;
    res.detail = res.semantic.reason;
    return res;
}

void accept_attempt(RefinementState& state, const AttemptResult& result) {
    if (!result.accepted()) throw Error("invalid_argument", "only accepted attempts can be added to the state");
    state.accepted.push_back(result.spec);
    ++state.iteration;
    for (const auto& [segment, sol] : result.candidates) state.last_solution[state.slot(segment)] = sol;
}

json to_json(const AttemptTally& t) {
    return {{"attempts", t.attempts},
            {"syntactic_fail", t.syntactic_fail},
            {"infeasible", t.infeasible},
            {"semantic_fail", t.semantic_fail},
            {"accepted", t.accepted}};
}

AttemptsExhausted::AttemptsExhausted(int k, AttemptTally tally, const std::string& last_detail)
    : Error("attempts_exhausted", "feedback " + std::to_string(k) + " rejected on every attempt (" +
                                      to_json(tally).dump() + "); last failure: " + last_detail),
      k_(k),
      tally_(tally) {}

RefineResult refine_loop(std::span<const FeedbackItem> feedback, RefinementState state, LlmClient& client,
                         int max_attempts) {
    if (max_attempts < 1) throw Error("invalid_argument", "max_attempts must be at least 1");
    RefineResult out;
    for (const auto& item : feedback) {
        validate_feedback(item, *state.network);
        std::string last;
        bool done = false;
        for (int attempt = 0; attempt < max_attempts && !done; ++attempt) {
            ++out.tally.attempts;
            auto res = attempt_feedback(state, item, client);
            switch (res.stage) {
                case Stage::syntactic: ++out.tally.syntactic_fail; break;
                case Stage::feasible: ++out.tally.infeasible; break;
                case Stage::semantic: ++out.tally.semantic_fail; break;
                case Stage::accepted:
                    ++out.tally.accepted;
                    accept_attempt(state, res);
                    done = true;
                    break;
            }
            last = std::string(to_string(res.stage)) + ": " + res.detail;
        }
        if (!done) throw AttemptsExhausted(item.k, out.tally, last);
    }
    if (!feedback.empty()) state.last_solution = resolve_all(state);
    out.solutions = state.last_solution;
    out.state = std::move(state);
    return out;
}

}  // namespace demandforge
