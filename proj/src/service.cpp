#include "demandforge/service.hpp"

#include <set>

#include "httplib.h"

#include "demandforge/emit.hpp"
#include "demandforge/error.hpp"

namespace demandforge {

namespace {

using nlohmann::json;

json band_json(const SegmentBands& bands, std::size_t j) {
    if (j >= bands.size() || !bands[j]) return nullptr;
    return {{"lo", bands[j]->lo}, {"hi", bands[j]->hi}};
}

json snapshot_json(const CountSnapshot& snap, const RoadNetwork& net) {
    json out = json::array();
    for (const auto& [j, count] : snap) {
        const auto& loc = net.locations()[j];
        out.push_back({{"location", j},
                       {"approach", std::string(to_string(loc.approach))},
                       {"movement", std::string(to_string(loc.movement))},
                       {"count", count}});
    }
    return out;
}

int status_for(const Error& e) {
    if (e.code() == "timeout") return 504;
    if (e.code() == "infeasible") return 422;
    if (e.code() == "schema" || e.code() == "segment_out_of_range" || e.code() == "unknown_intersection") return 400;
    return 500;
}

// Guards the busy flag for the lifetime of one mutation.
struct BusyScope {
    std::atomic<bool>& flag;
    explicit BusyScope(std::atomic<bool>& f) : flag(f) { flag = true; }
    ~BusyScope() { flag = false; }
};

}  // namespace

json error_body(const std::string& code, const std::string& detail) { return {{"error", code}, {"detail", detail}}; }

std::unique_ptr<LlmClient> make_llm_client(const PipelineConfig& config) {
    if (!config.mock_script.empty())
        return std::make_unique<MockLlmClient>(MockLlmClient::from_script_file(config.mock_script));
    if (auto http = HttpLlmClient::from_environment(config.llm_timeout_s)) return http;
    throw Error("config", "no mock_script configured and DEMANDFORGE_LLM_URL is unset");
}

Service::Service(Pipeline pipeline, PipelineConfig config, std::unique_ptr<LlmClient> client)
    : pipeline_(std::move(pipeline)), config_(std::move(config)), client_(std::move(client)) {
    if (!client_) throw Error("config", "service needs a language-model client");
}

void Service::initialize() {
    std::lock_guard lock(writer_);
    BusyScope busy(busy_);
    {
        std::lock_guard op(op_mutex_);
        last_operation_ = "initial solve";
    }
    publish(std::make_shared<const RefinementState>(
        make_state(pipeline_.network, pipeline_.problems(config_.solve), config_.solve)));
}

std::shared_ptr<const RefinementState> Service::snapshot() const {
    auto s = std::atomic_load(&state_);
    if (!s) throw Error("not_ready", "service has not been initialised");
    return s;
}

void Service::publish(std::shared_ptr<const RefinementState> next) {
    std::atomic_store(&state_, std::move(next));
    ++operations_;
}

Reply Service::counts(int segment) const {
    const auto state = snapshot();
    const auto& net = *state->network;
    const auto& a = state->incidence();
    if (segment < 0 || segment >= kSegmentsPerDay)
        return {400, error_body("segment_out_of_range", "segment must be in 0..95")};
    json locations = json::array();
    try {
        for (const auto& loc : net.locations()) {
            const auto t = static_cast<std::size_t>(segment);
            locations.push_back({{"location", loc.index},
                                 {"intersection", loc.intersection},
                                 {"approach", std::string(to_string(loc.approach))},
                                 {"movement", std::string(to_string(loc.movement))},
                                 {"count", get_counts(state->last_solution, a, loc.index, segment)},
                                 {"cv", band_json(pipeline_.bands_cv[t], loc.index)},
                                 {"ld", band_json(pipeline_.bands_ld[t], loc.index)}});
        }
    } catch (const Error& e) {
        return {404, error_body(e.code(), e.what())};
    }
    return {200, {{"segment", segment}, {"iteration", state->iteration}, {"locations", locations}}};
}

Reply Service::intersections() const {
    const auto state = snapshot();
    const auto& net = *state->network;
    json out = json::array();
    for (int id : net.intersections()) {
        std::set<Approach> approaches;
        json locations = json::array();
        for (const auto& loc : net.locations()) {
            if (loc.intersection != id) continue;
            approaches.insert(loc.approach);
            locations.push_back({{"location", loc.index},
                                 {"approach", std::string(to_string(loc.approach))},
                                 {"movement", std::string(to_string(loc.movement))}});
        }
        json names = json::array();
        for (auto a : approaches) names.push_back(std::string(to_string(a)));
        out.push_back({{"id", id}, {"approaches", names}, {"locations", locations}});
    }
    return {200, {{"intersections", out}}};
}

Reply Service::report() const {
    const auto state = snapshot();
    const auto report =
        diff_report(state->last_solution, state->incidence(), pipeline_.bands_cv, pipeline_.bands_ld, pipeline_.routes);
    return {200, to_json(report)};
}

Reply Service::status() const {
    const auto state = std::atomic_load(&state_);
    std::string op;
    {
        std::lock_guard lock(op_mutex_);
        op = last_operation_;
    }
    std::size_t atoms = 0;
    if (state)
        for (const auto& spec : state->accepted) atoms += spec.atoms.size();
    return {200,
            {{"state", busy_ ? "busy" : (state ? "idle" : "initialising")},
             {"operation", op},
             {"iteration", state ? state->iteration : 0},
             {"accepted_feedback", state ? state->accepted.size() : 0},
             {"accepted_atoms", atoms},
             {"updates", operations_.load()}}};
}

Reply Service::feedback(const json& body) {
    FeedbackItem item;
    try {
        item = feedback_from_json(body);
    } catch (const Error& e) {
        return {400, error_body(e.code(), e.what())};
    }
    std::lock_guard lock(writer_);
    BusyScope busy(busy_);
    {
        std::lock_guard op(op_mutex_);
        last_operation_ = "feedback " + std::to_string(item.k);
    }
    const auto state = snapshot();
    if (item.k == 0) item.k = state->iteration + 1;
    AttemptResult res;
    try {
        validate_feedback(item, *state->network);
        res = attempt_feedback(*state, item, *client_);
    } catch (const Error& e) {
        return {status_for(e), error_body(e.code(), e.what())};
    }

    const bool syntactic_ok = res.stage != Stage::syntactic;
    const bool feasible_ok = syntactic_ok && res.stage != Stage::feasible;
    json verdicts = {{"syntactic", syntactic_ok},
                     {"feasible", syntactic_ok ? json(feasible_ok) : json(nullptr)},
                     {"semantic", feasible_ok ? json(res.semantic.pass) : json(nullptr)}};
    json out = {{"k", item.k},
                {"accepted", res.accepted()},
                {"stage", std::string(to_string(res.stage))},
                {"detail", res.detail},
                {"verdicts", verdicts},
                {"before", snapshot_json(res.before, *state->network)}};
    if (feasible_ok) out["after"] = snapshot_json(res.after, *state->network);
    if (syntactic_ok) out["spec"] = to_json(res.spec, *state->network);
    if (res.semantic.intent) out["intent"] = std::string(to_string(*res.semantic.intent));

    if (!res.accepted()) {
        out["error"] = res.stage == Stage::feasible ? "infeasible" : std::string(to_string(res.stage));
        return {422, out};
    }
    auto next = std::make_shared<RefinementState>(*state);
    accept_attempt(*next, res);
    out["iteration"] = next->iteration;
    publish(std::move(next));
    return {200, out};
}

Reply Service::resolve() {
    std::lock_guard lock(writer_);
    BusyScope busy(busy_);
    {
        std::lock_guard op(op_mutex_);
        last_operation_ = "resolve";
    }
    const auto state = snapshot();
    auto next = std::make_shared<RefinementState>(*state);
    try {
        next->last_solution = resolve_all(*next);
    } catch (const Error& e) {
        return {status_for(e), error_body(e.code(), e.what())};
    }
    double objective = 0.0;
    for (const auto& s : next->last_solution) objective += s.objective;
    json out = {{"iteration", next->iteration}, {"segments", next->last_solution.size()}, {"objective", objective}};
    publish(std::move(next));
    return {200, out};
}

void Service::mount(httplib::Server& server) {
    auto send = [](httplib::Response& res, const Reply& reply) {
        res.status = reply.first;
        res.set_content(reply.second.dump(), "application/json");
    };
    auto guarded = [send](auto fn) {
        return [fn, send](const httplib::Request& req, httplib::Response& res) {
            try {
                send(res, fn(req));
            } catch (const Error& e) {
                send(res, {status_for(e), error_body(e.code(), e.what())});
            } catch (const std::exception& e) {
                send(res, {500, error_body("internal", e.what())});
            }
        };
    };

    server.Get("/api/counts", guarded([this](const httplib::Request& req) -> Reply {
                   if (!req.has_param("segment")) return {400, error_body("bad_request", "segment parameter is required")};
                   int segment = 0;
                   try {
                       std::size_t used = 0;
                       const auto raw = req.get_param_value("segment");
                       segment = std::stoi(raw, &used);
                       if (used != raw.size()) throw std::invalid_argument(raw);
                   } catch (const std::exception&) {
                       return {400, error_body("bad_request", "segment must be an integer")};
                   }
                   return counts(segment);
               }));
    server.Get("/api/intersections", guarded([this](const httplib::Request&) { return intersections(); }));
    server.Get("/api/report", guarded([this](const httplib::Request&) { return report(); }));
    server.Get("/api/status", guarded([this](const httplib::Request&) { return status(); }));
    server.Post("/api/feedback", guarded([this](const httplib::Request& req) -> Reply {
                    const auto body = json::parse(req.body, nullptr, false);
                    if (body.is_discarded() || !body.is_object())
                        return {400, error_body("bad_request", "body must be a JSON object")};
                    return feedback(body);
                }));
    server.Post("/api/resolve", guarded([this](const httplib::Request&) { return resolve(); }));
}

}  // namespace demandforge
