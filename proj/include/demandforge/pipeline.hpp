#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "demandforge/counts.hpp"
#include "demandforge/emit.hpp"
#include "demandforge/netgraph.hpp"
#include "demandforge/qipsolve.hpp"

#include "json.hpp"

namespace demandforge {

/// Everything the CLI and the service need to reproduce one session. Relative
/// paths are resolved against the config file's directory.
struct PipelineConfig {
    std::string network;
    std::string counts;
    std::string detections;
    std::string geometry;
    std::string feedback;
    std::string mock_script;
    SolveConfig solve;
    ClassDistribution class_dist = default_class_distribution();
    int port = 8080;
    std::uint64_t emit_seed = 0;
    // Explicit (alpha_lb, alpha_ub); calibrated from the counts when unset.
    std::optional<std::pair<double, double>> cv_alpha;
    std::optional<std::pair<double, double>> ld_alpha;
    int max_attempts = 3;
    double llm_timeout_s = 30.0;
};

PipelineConfig pipeline_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Parses the file and checks that every referenced input exists.
PipelineConfig load_pipeline_config(const std::string& path);

/// Network, routes, incidence and per-segment bands for one day.
struct Pipeline {
    std::shared_ptr<const RoadNetwork> network;
    std::vector<Route> routes;
    std::shared_ptr<const IncidenceMatrix> incidence;
    CountTable counts;
    CalibrationBounds cv_bounds;
    CalibrationBounds ld_bounds;
    std::vector<SegmentBands> bands_cv;  // [96][m]
    std::vector<SegmentBands> bands_ld;

    /// One problem per segment 0..95.
    std::vector<SegmentProblem> problems(const SolveConfig& config) const;
};

/// Calibrates where an overlap exists and falls back to the default bounds otherwise.
Pipeline build_pipeline(std::shared_ptr<const RoadNetwork> network, CountTable counts,
                        std::optional<std::pair<double, double>> cv_alpha = std::nullopt,
                        std::optional<std::pair<double, double>> ld_alpha = std::nullopt);
Pipeline load_pipeline(const PipelineConfig& config);

/// routes.rou.xml, solution.csv, summary.json, incidence.csv and routes.txt under `dir`.
void write_solve_outputs(const std::filesystem::path& dir, const Pipeline& pipeline,
                         const std::vector<RouteSolution>& solutions, const PipelineConfig& config);

}  // namespace demandforge
