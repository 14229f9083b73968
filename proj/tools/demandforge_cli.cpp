// Command-line front end: count, calibrate, solve, refine, report, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"

#include "demandforge/counts.hpp"
#include "demandforge/emit.hpp"
#include "demandforge/error.hpp"
#include "demandforge/flowcount.hpp"
#include "demandforge/pipeline.hpp"
#include "demandforge/refine.hpp"
#include "demandforge/service.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace demandforge;

namespace {

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open '" + path + "'");
    auto doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw Error("schema", "'" + path + "' is not valid JSON");
    return doc;
}

std::vector<RouteSolution> load_solutions(const std::string& path, const Pipeline& pipeline,
                                          const SolveConfig& config) {
    std::ifstream in(path);
    if (!in) throw Error("file", "cannot open solution '" + path + "'");
    auto rows = read_solution_csv(in, pipeline.routes.size());
    const auto problems = pipeline.problems(config);
    std::vector<RouteSolution> out;
    for (const auto& p : problems) {
        auto it = rows.find(p.segment);
        std::vector<std::int64_t> r = it == rows.end() ? std::vector<std::int64_t>(pipeline.routes.size(), 0)
                                                       : std::move(it->second);
        out.push_back(make_solution(std::move(r), p, SolverMode::automatic));
    }
    return out;
}

int run_count(const std::string& detections, const std::string& geometry, const std::string& method,
              std::optional<std::size_t> location, std::optional<int> segment) {
    std::ifstream in(detections);
    if (!in) throw Error("file", "cannot open detections '" + detections + "'");
    const auto stream = read_detections(in);
    const auto geom = geometry_from_json(read_json_file(geometry));
    LaneCounts counts;
    if (method == "tracked") counts = count_crossings(stream, geom);
    else if (method == "threshold") counts = count_threshold(stream, geom);
    else throw Error("invalid_argument", "method must be tracked or threshold");
    if (location && segment) {
        // One CV row ready to append to a counts CSV.
        std::cout << "CV," << *location << ',' << *segment << ',' << counts.total() << '\n';
    } else {
        auto doc = to_json(counts);
        doc["method"] = method;
        std::cout << doc.dump(2) << '\n';
    }
    return 0;
}

int run_calibrate(const std::string& counts_path) {
    const auto table = ingest_counts_file(counts_path);
    const auto cv = calibrate_bounds(table);
    json out = {{"cv", calibration_report(cv)}};
    try {
        out["ld"] = calibration_report(chain_bounds(cv, table));
    } catch (const Error& e) {
        if (e.code() != "empty_overlap") throw;
        out["ld"] = nullptr;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

int run_solve(const std::string& config_path, const std::string& out_dir) {
    const auto config = load_pipeline_config(config_path);
    const auto pipeline = load_pipeline(config);
    const auto solutions = solve_day(pipeline.problems(config.solve), config.solve);
    write_solve_outputs(out_dir, pipeline, solutions, config);
    double objective = 0.0;
    for (const auto& s : solutions) objective += s.objective;
    std::cout << json{{"segments", solutions.size()}, {"objective", objective}, {"out", out_dir}}.dump() << '\n';
    return 0;
}

int run_refine(const std::string& config_path, const std::string& out_dir) {
    const auto config = load_pipeline_config(config_path);
    if (config.feedback.empty()) throw Error("config", "refine needs a feedback file in the config");
    const auto pipeline = load_pipeline(config);
    const auto feedback = read_feedback_file(config.feedback);
    auto client = make_llm_client(config);
    auto state = make_state(pipeline.network, pipeline.problems(config.solve), config.solve);
    auto result = refine_loop(feedback, std::move(state), *client, config.max_attempts);
    write_solve_outputs(out_dir, pipeline, result.solutions, config);
    json specs = json::array();
    for (const auto& spec : result.state.accepted) specs.push_back(to_json(spec, *pipeline.network));
    json doc = {{"iteration", result.state.iteration}, {"tally", to_json(result.tally)}, {"accepted", specs}};
    std::ofstream(fs::path(out_dir) / "refine.json") << doc.dump(2) << '\n';
    std::cout << json{{"iteration", result.state.iteration}, {"tally", to_json(result.tally)}}.dump() << '\n';
    return 0;
}

int run_report(const std::string& config_path, const std::string& solution_path, const std::string& out_dir) {
    const auto config = load_pipeline_config(config_path);
    const auto pipeline = load_pipeline(config);
    const auto solutions = load_solutions(solution_path, pipeline, config.solve);
    const auto report = diff_report(solutions, *pipeline.incidence, pipeline.bands_cv, pipeline.bands_ld, pipeline.routes);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream(fs::path(out_dir) / "report.json") << to_json(report).dump(2) << '\n';
        std::ofstream cv(fs::path(out_dir) / "diff_cv.csv");
        write_diff_csv(cv, report, SourceKind::CV);
        std::ofstream ld(fs::path(out_dir) / "diff_ld.csv");
        write_diff_csv(ld, report, SourceKind::LD);
    }
    json brief = {{"total_volume", report.total_volume}, {"fringe_share", report.fringe_share}, {"segments", json::array()}};
    for (const auto& s : report.segments)
        brief["segments"].push_back({{"segment", s.segment},
                                     {"source", std::string(to_string(s.source))},
                                     {"mean", s.mean},
                                     {"min", s.min},
                                     {"max", s.max}});
    std::cout << brief.dump(2) << '\n';
    return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

int run_serve(const std::string& config_path, std::optional<int> port, const std::string& host) {
    auto config = load_pipeline_config(config_path);
    if (port) config.port = *port;
    auto pipeline = load_pipeline(config);
    auto client = make_llm_client(config);
    Service service(std::move(pipeline), config, std::move(client));
    service.initialize();
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cerr << "listening on " << host << ':' << config.port << '\n';
    if (!server.listen(host, config.port)) throw Error("bind", "cannot listen on " + host + ":" + std::to_string(config.port));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"demandforge: traffic demand from noisy intersection counts"};
    app.require_subcommand(1);

    std::string detections, geometry, method = "tracked";
    std::optional<std::size_t> location;
    std::optional<int> segment;
    auto* count = app.add_subcommand("count", "Count stop-bar crossings in a detection stream");
    count->add_option("--detections", detections, "JSON-lines detections")->required();
    count->add_option("--geometry", geometry, "Approach geometry JSON")->required();
    count->add_option("--method", method, "tracked or threshold")->check(CLI::IsMember({"tracked", "threshold"}));
    count->add_option("--location", location, "Emit a CV counts row for this location");
    count->add_option("--segment", segment, "Segment of the emitted counts row");

    std::string counts_path;
    auto* calibrate = app.add_subcommand("calibrate", "Derive calibration bounds from overlapping counts");
    calibrate->add_option("--counts", counts_path, "source,location,segment,count CSV")->required();

    std::string config_path, out_dir = ".";
    auto* solve = app.add_subcommand("solve", "Solve the day and emit route files");
    solve->add_option("--config", config_path, "Pipeline config JSON")->required();
    solve->add_option("--out", out_dir, "Output directory");

    auto* refine = app.add_subcommand("refine", "Apply stakeholder feedback and re-solve");
    refine->add_option("--config", config_path, "Pipeline config JSON")->required();
    refine->add_option("--out", out_dir, "Output directory");

    std::string solution_path, report_dir;
    auto* report = app.add_subcommand("report", "Band-violation report for a solution");
    report->add_option("--config", config_path, "Pipeline config JSON")->required();
    report->add_option("--solution", solution_path, "solution.csv from solve or refine")->required();
    report->add_option("--out", report_dir, "Directory for report.json and diff CSVs");

    std::optional<int> port;
    std::string host = "127.0.0.1";
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--config", config_path, "Pipeline config JSON")->required();
    serve->add_option("--port", port, "Override the configured port");
    serve->add_option("--host", host, "Bind address");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << app.help() << '\n';
        std::cerr << json{{"error", "usage"}, {"detail", e.what()}}.dump() << '\n';
        return 2;
    }

    try {
        if (*count) return run_count(detections, geometry, method, location, segment);
        if (*calibrate) return run_calibrate(counts_path);
        if (*solve) return run_solve(config_path, out_dir);
        if (*refine) return run_refine(config_path, out_dir);
        if (*report) return run_report(config_path, solution_path, report_dir);
        if (*serve) return run_serve(config_path, port, host);
    } catch (const AttemptsExhausted& e) {
        std::cerr << json{{"error", e.code()}, {"detail", e.what()}, {"feedback", e.feedback()}, {"tally", to_json(e.tally())}}.dump()
                  << '\n';
        return 1;
    } catch (const Error& e) {
        std::cerr << json{{"error", e.code()}, {"detail", e.what()}}.dump() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "internal"}, {"detail", e.what()}}.dump() << '\n';
        return 1;
    }
    return 1;
}
