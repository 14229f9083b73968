#include "demandforge/pipeline.hpp"

#include <fstream>

#include "demandforge/error.hpp"

namespace demandforge {

namespace fs = std::filesystem;

namespace {

std::optional<std::pair<double, double>> alpha_from_json(const nlohmann::json& doc, const char* name) {
    if (!doc.contains("calibration")) return std::nullopt;
    const auto& cal = doc["calibration"];
    if (!cal.contains(name)) return std::nullopt;
    const auto& v = cal[name];
    if (v.is_string() && v.get<std::string>() == "auto") return std::nullopt;
    if (!v.is_object()) throw Error("schema", std::string("calibration.") + name + " must be \"auto\" or an object");
    const double lb = v.at("alpha_lb").get<double>();
    const double ub = v.at("alpha_ub").get<double>();
    if (!(lb >= 0.0) || !(lb <= ub)) throw Error("schema", std::string("calibration.") + name + ": need 0 <= alpha_lb <= alpha_ub");
    return std::pair{lb, ub};
}

std::ofstream open_out(const fs::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("file", "cannot write '" + p.string() + "'");
    return out;
}

}  // namespace

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
    if (!doc.is_object()) throw Error("schema", "pipeline config must be a JSON object");
    PipelineConfig c;
    try {
        auto path = [&](const char* key) -> std::string {
            if (!doc.contains(key) || doc[key].is_null()) return {};
            fs::path p = doc[key].get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
            return p.string();
        };
        c.network = path("network");
        c.counts = path("counts");
        c.detections = path("detections");
        c.geometry = path("geometry");
        c.feedback = path("feedback");
        c.mock_script = path("mock_script");
        if (doc.contains("solve")) c.solve = solve_config_from_json(doc["solve"]);
        if (doc.contains("class_dist")) c.class_dist = class_distribution_from_json(doc["class_dist"]);
        c.port = doc.value("port", c.port);
        c.emit_seed = doc.value("emit_seed", c.emit_seed);
        c.max_attempts = doc.value("max_attempts", c.max_attempts);
        c.llm_timeout_s = doc.value("llm_timeout_s", c.llm_timeout_s);
        c.cv_alpha = alpha_from_json(doc, "cv");
        c.ld_alpha = alpha_from_json(doc, "ld");
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", std::string("pipeline config: ") + e.what());
    }
    if (c.port < 0 || c.port > 65535) throw Error("schema", "pipeline config: port out of range");
    if (c.max_attempts < 1) throw Error("schema", "pipeline config: max_attempts must be at least 1");
    if (c.network.empty()) throw Error("schema", "pipeline config: network path is required");
    return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open config '" + path + "'");
    const auto doc = nlohmann::json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("schema", "config '" + path + "' is not valid JSON");
    auto c = pipeline_config_from_json(doc, fs::path(path).parent_path());
    for (const auto* p : {&c.network, &c.counts, &c.detections, &c.geometry, &c.feedback, &c.mock_script})
        if (!p->empty() && !fs::exists(*p)) throw Error("file", "referenced file '" + *p + "' does not exist");
    return c;
}

std::vector<SegmentProblem> Pipeline::problems(const SolveConfig& config) const {
    std::vector<std::uint8_t> nonfringe(routes.size());
    for (std::size_t i = 0; i < routes.size(); ++i) nonfringe[i] = routes[i].fringe ? 0 : 1;
    std::vector<SegmentProblem> out;
    out.reserve(kSegmentsPerDay);
    for (int t = 0; t < kSegmentsPerDay; ++t) {
        SegmentProblem p = make_problem(incidence, t);
        p.bands_cv = bands_cv[static_cast<std::size_t>(t)];
        p.bands_ld = bands_ld[static_cast<std::size_t>(t)];
        p.nonfringe = nonfringe;
        p.lambda_nonfringe = config.lambda_nonfringe;
        p.lambda_temporal = config.lambda_temporal;
        out.push_back(std::move(p));
    }
    return out;
}

Pipeline build_pipeline(std::shared_ptr<const RoadNetwork> network, CountTable counts,
                        std::optional<std::pair<double, double>> cv_alpha,
                        std::optional<std::pair<double, double>> ld_alpha) {
    Pipeline p;
    p.network = std::move(network);
    p.routes = enumerate_routes(*p.network);
    p.incidence = std::make_shared<const IncidenceMatrix>(build_incidence(p.routes, p.network->locations()));
    p.counts = std::move(counts);
    p.counts.check_coverage();

    if (cv_alpha) {
        p.cv_bounds = make_bounds(SourceKind::CV, cv_alpha->first, cv_alpha->second);
    } else {
        try {
            p.cv_bounds = calibrate_bounds(p.counts);
        } catch (const Error& e) {
            if (e.code() != "empty_overlap") throw;
            p.cv_bounds = make_bounds(SourceKind::CV, kDefaultCvAlphaLb, kDefaultCvAlphaUb);
        }
    }
    if (ld_alpha) {
        p.ld_bounds = make_bounds(SourceKind::LD, ld_alpha->first, ld_alpha->second);
    } else {
        try {
            p.ld_bounds = chain_bounds(p.cv_bounds, p.counts);
        } catch (const Error& e) {
            if (e.code() != "empty_overlap") throw;
            p.ld_bounds = make_bounds(SourceKind::LD, kDefaultLdAlphaLb, kDefaultLdAlphaUb);
        }
    }
    const auto m = p.network->locations().size();
    p.bands_cv = make_bands(p.counts, p.cv_bounds, SourceKind::CV, m);
    p.bands_ld = make_bands(p.counts, p.ld_bounds, SourceKind::LD, m);
    return p;
}

Pipeline load_pipeline(const PipelineConfig& config) {
    auto network = std::make_shared<const RoadNetwork>(load_network_file(config.network));
    CountTable counts;
    if (!config.counts.empty()) counts = ingest_counts_file(config.counts, network->locations().size());
    return build_pipeline(std::move(network), std::move(counts), config.cv_alpha, config.ld_alpha);
}

void write_solve_outputs(const fs::path& dir, const Pipeline& pipeline, const std::vector<RouteSolution>& solutions,
                         const PipelineConfig& config) {
    fs::create_directories(dir);
    const auto schedules = distribute_day(solutions);
    {
        auto out = open_out(dir / "routes.rou.xml");
        out << emit_routes(schedules, *pipeline.network, pipeline.routes, config.class_dist, config.emit_seed);
    }
    {
        auto out = open_out(dir / "solution.csv");
        write_solution_csv(out, solutions);
    }
    {
        auto out = open_out(dir / "incidence.csv");
        write_incidence_csv(out, *pipeline.incidence);
    }
    {
        auto out = open_out(dir / "routes.txt");
        write_routes_listing(out, *pipeline.network, pipeline.routes);
    }
    nlohmann::json segments = nlohmann::json::array();
    std::int64_t vehicles = 0;
    for (const auto& s : solutions) segments.push_back(segment_summary_json(s, pipeline.routes));
    for (const auto& sched : schedules)
        for (const auto& row : sched.c)
            for (auto c : row) vehicles += c;
    std::vector<std::int64_t> day_total(pipeline.routes.size(), 0);
    for (const auto& s : solutions)
        for (std::size_t i = 0; i < s.r.size(); ++i) day_total[i] += s.r[i];
    nlohmann::json summary = {{"routes", pipeline.routes.size()},
                              {"locations", pipeline.network->locations().size()},
                              {"vehicles", vehicles},
                              {"fringe_share", fringe_share(day_total, pipeline.routes)},
                              {"calibration",
                               {{"cv", calibration_report(pipeline.cv_bounds)},
                                {"ld", calibration_report(pipeline.ld_bounds)}}},
                              {"solve", to_json(config.solve)},
                              {"segments", segments}};
    auto out = open_out(dir / "summary.json");
    out << summary.dump(2) << '\n';
}

}  // namespace demandforge
