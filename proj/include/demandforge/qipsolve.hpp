#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "demandforge/counts.hpp"
#include "demandforge/kernels.hpp"
#include "demandforge/netgraph.hpp"

#include "json.hpp"

namespace demandforge {

enum class BoundKind { lower, upper };

/// Hard bound on the simulated count (A·r)_j of one location; no slack.
struct LocationBound {
    std::size_t location = 0;
    BoundKind kind = BoundKind::lower;
    double bound = 0.0;
};

enum class SolverMode { automatic, exact, heuristic };

std::string_view to_string(SolverMode m);

struct SolveConfig {
    double lambda_nonfringe = 10.0;
    double lambda_temporal = 10.0;
    std::int64_t route_upper_bound = 2000;
    double grad_tol = 1e-6;
    std::int64_t max_iters = 100000;
    std::size_t exact_mode_limit = 8;
    double time_budget_s = 60.0;
    std::uint64_t seed = 0;
    SolverMode mode = SolverMode::automatic;
    // Quadratic weight of hard-bound violations inside the continuous relaxation.
    double hard_penalty = 1e4;
};

SolveConfig solve_config_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const SolveConfig& c);

inline constexpr std::int64_t kExactMaxUpperBound = 10;

struct SegmentProblem {
    int segment = 0;
    std::shared_ptr<const IncidenceMatrix> incidence;
    SegmentBands bands_cv;  // size m
    SegmentBands bands_ld;  // size m
    std::vector<std::uint8_t> nonfringe;  // per route flag
    double lambda_nonfringe = 10.0;
    double lambda_temporal = 10.0;
    std::optional<std::vector<std::int64_t>> r_prev;
    std::vector<LocationBound> extra_constraints;

    std::size_t routes() const { return incidence->routes(); }
    std::size_t locations() const { return incidence->locations(); }
    void validate() const;
};

/// Builds a problem with empty bands and all-fringe routes.
SegmentProblem make_problem(std::shared_ptr<const IncidenceMatrix> a, int segment = 0);

struct SolveStats {
    std::int64_t iterations = 0;
    std::int64_t repair_moves = 0;
    double relaxed_objective = 0.0;
    double rounded_objective = 0.0;
    bool budget_exhausted = false;
};

struct RouteSolution {
    int segment = 0;
    std::vector<std::int64_t> r;
    std::vector<double> slack_cv;
    std::vector<double> slack_ld;
    double objective = 0.0;
    SolverMode solver_mode = SolverMode::exact;
    double solve_time = 0.0;
    SolveStats stats;
};

/// s_j = lo - Ar_j below the band, hi - Ar_j above it, 0 inside.
double slack_for(double ar, Band band);

/// Merged per-location hard interval; throws InfeasibleError on a direct
/// contradiction (lower > upper on one location).
kernels::BandArrays band_arrays(const SegmentProblem& p, bool with_hard = true);

std::vector<double> simulated_counts(const IncidenceMatrix& a, std::span<const std::int64_t> r);

/// ‖s_cv‖² + ‖s_ld‖² + λ_nf·Σ_nonfringe r_i + λ_t·‖r - r_prev‖² with analytic slacks.
double objective(std::span<const std::int64_t> r, const SegmentProblem& p);

/// True when r satisfies every extra constraint of the problem.
bool satisfies_constraints(std::span<const std::int64_t> r, const SegmentProblem& p, double tol = 1e-9);

/// Fills slack vectors, objective and mode from r.
RouteSolution make_solution(std::vector<std::int64_t> r, const SegmentProblem& p, SolverMode mode);

/// Exhaustive search over {0..U}^n; ties go to the lexicographically smallest r.
RouteSolution solve_exact(const SegmentProblem& p, const SolveConfig& config);

/// Continuous relaxation by spectral projected gradient, nearest-integer
/// rounding, then greedy ±1 coordinate repair.
RouteSolution solve_heuristic(const SegmentProblem& p, const SolveConfig& config);

/// Dispatches on config.mode; automatic picks exact when the instance fits.
RouteSolution solve_segment(const SegmentProblem& p, const SolveConfig& config);

/// Solves segments in order, feeding each r_t forward as r_prev of t+1.
std::vector<RouteSolution> solve_day(std::vector<SegmentProblem> problems, const SolveConfig& config);

namespace serial {
RouteSolution solve_exact(const SegmentProblem& p, const SolveConfig& config);
}

/// Cheap infeasibility proofs for hard bounds: contradictory bounds on one
/// location, positive lower bound on a location no route passes, or a lower
/// bound above what the per-route cap allows. Returns an explanation or "".
std::string infeasibility_reason(const SegmentProblem& p, std::int64_t route_upper_bound);

// Minute-level distribution of one segment's route counts.
struct MinuteSchedule {
    int segment = 0;
    std::vector<std::array<std::int64_t, kMinutesPerSegment>> c;  // n rows
};

/// Uniform largest-remainder split when prev is null, otherwise the integer
/// least-squares fit to the previous segment's rows under the row-sum constraint.
MinuteSchedule distribute_minutes(std::span<const std::int64_t> r, const MinuteSchedule* prev);

/// Per-route integer minimiser of Σ_m (c_m - prev_m)² with Σ c = total, c ≥ 0.
std::array<std::int64_t, kMinutesPerSegment> distribute_row(
    std::int64_t total, const std::array<std::int64_t, kMinutesPerSegment>* prev);

std::vector<MinuteSchedule> distribute_day(std::span<const RouteSolution> solutions);

}  // namespace demandforge
