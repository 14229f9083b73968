#include "demandforge/qipsolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "demandforge/error.hpp"

namespace demandforge {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Objective from precomputed y = A·r. Summation order is fixed: locations,
// then nonfringe routes, then the temporal term.
double objective_from(std::span<const double> y, std::span<const std::int64_t> r, const SegmentProblem& p,
                      const kernels::BandArrays& b) {
    double f = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double s_cv = kernels::slack(y[j], b.cv_lo[j], b.cv_hi[j]);
        const double s_ld = kernels::slack(y[j], b.ld_lo[j], b.ld_hi[j]);
        f += s_cv * s_cv + s_ld * s_ld;
    }
    if (p.lambda_nonfringe != 0.0)
        for (std::size_t i = 0; i < r.size(); ++i)
            if (p.nonfringe[i]) f += p.lambda_nonfringe * static_cast<double>(r[i]);
    if (p.r_prev && p.lambda_temporal != 0.0)
        for (std::size_t i = 0; i < r.size(); ++i) {
            const double d = static_cast<double>(r[i] - (*p.r_prev)[i]);
            f += p.lambda_temporal * d * d;
        }
    return f;
}

bool within_hard(std::span<const double> y, const kernels::BandArrays& b, double tol) {
    for (std::size_t j = 0; j < y.size(); ++j)
        if (y[j] < b.hard_lo[j] - tol || y[j] > b.hard_hi[j] + tol) return false;
    return true;
}

void check_exact_size(const SegmentProblem& p, const SolveConfig& config) {
    if (p.routes() > config.exact_mode_limit || config.route_upper_bound > kExactMaxUpperBound ||
        config.route_upper_bound < 0)
        throw Error("too_large", "instance too large for exact mode (n=" + std::to_string(p.routes()) +
                                     ", U=" + std::to_string(config.route_upper_bound) + ", limit n<=" +
                                     std::to_string(config.exact_mode_limit) + ", U<=" +
                                     std::to_string(kExactMaxUpperBound) + ")");
}

struct ChunkBest {
    bool found = false;
    double objective = kInf;
    std::vector<std::int64_t> r;
};

// Scans linear indices [begin, end) of the odometer over {0..U}^n, last
// coordinate fastest, which is lexicographic order of r.
ChunkBest scan_range(const SegmentProblem& p, const kernels::BandArrays& b, bool has_hard, std::int64_t upper,
                     std::uint64_t begin, std::uint64_t end) {
    const std::size_t n = p.routes();
    const auto& a = *p.incidence;
    std::vector<std::int64_t> r(n, 0);
    std::uint64_t idx = begin;
    for (std::size_t k = n; k-- > 0;) {
        r[k] = static_cast<std::int64_t>(idx % static_cast<std::uint64_t>(upper + 1));
        idx /= static_cast<std::uint64_t>(upper + 1);
    }
    std::vector<double> y(a.locations(), 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (auto j : a.row(i)) y[j] += static_cast<double>(r[i]);

    ChunkBest best;
    for (std::uint64_t pos = begin; pos < end; ++pos) {
        if (!has_hard || within_hard(y, b, 1e-9)) {
            const double f = objective_from(y, r, p, b);
            if (!best.found || f < best.objective) {
                best.found = true;
                best.objective = f;
                best.r = r;
            }
        }
        // Advance the odometer, keeping y = A·r.
        for (std::size_t k = n; k-- > 0;) {
            if (r[k] < upper) {
                ++r[k];
                for (auto j : a.row(k)) y[j] += 1.0;
                break;
            }
            for (auto j : a.row(k)) y[j] -= static_cast<double>(upper);
            r[k] = 0;
        }
    }
    return best;
}

std::uint64_t search_space(std::size_t n, std::int64_t upper) {
    std::uint64_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= static_cast<std::uint64_t>(upper + 1);
    return total;
}

RouteSolution finish_exact(const ChunkBest& best, const SegmentProblem& p, std::int64_t upper,
                           std::chrono::steady_clock::time_point start) {
    if (!best.found) {
        auto reason = infeasibility_reason(p, upper);
        throw InfeasibleError("no integer point satisfies the hard constraints" +
                              (reason.empty() ? std::string() : ": " + reason));
    }
    auto sol = make_solution(best.r, p, SolverMode::exact);
    sol.solve_time = seconds_since(start);
    return sol;
}

}  // namespace

std::string_view to_string(SolverMode m) {
    switch (m) {
        case SolverMode::automatic: return "auto";
        case SolverMode::exact: return "exact";
        case SolverMode::heuristic: return "heuristic";
    }
    return "?";
}

SolveConfig solve_config_from_json(const nlohmann::json& doc) {
    SolveConfig c;
    if (doc.is_null()) return c;
    if (!doc.is_object()) throw Error("schema", "solver config must be a JSON object");
    try {
        c.lambda_nonfringe = doc.value("lambda_nonfringe", c.lambda_nonfringe);
        c.lambda_temporal = doc.value("lambda_temporal", c.lambda_temporal);
        c.route_upper_bound = doc.value("route_upper_bound", c.route_upper_bound);
        c.grad_tol = doc.value("grad_tol", c.grad_tol);
        c.max_iters = doc.value("max_iters", c.max_iters);
        c.exact_mode_limit = doc.value("exact_mode_limit", c.exact_mode_limit);
        c.time_budget_s = doc.value("time_budget_s", c.time_budget_s);
        c.seed = doc.value("seed", c.seed);
        c.hard_penalty = doc.value("hard_penalty", c.hard_penalty);
        const auto mode = doc.value("mode", std::string("auto"));
        if (mode == "auto") c.mode = SolverMode::automatic;
        else if (mode == "exact") c.mode = SolverMode::exact;
        else if (mode == "heuristic") c.mode = SolverMode::heuristic;
        else throw Error("schema", "solver config: unknown mode '" + mode + "'");
    } catch (const nlohmann::json::exception& e) {
        throw Error("schema", std::string("solver config: ") + e.what());
    }
    if (c.lambda_nonfringe < 0 || c.lambda_temporal < 0)
        throw Error("schema", "solver config: lambda values must be nonnegative");
    if (c.route_upper_bound < 0) throw Error("schema", "solver config: route_upper_bound must be nonnegative");
    return c;
}

nlohmann::json to_json(const SolveConfig& c) {
    return {{"lambda_nonfringe", c.lambda_nonfringe},
            {"lambda_temporal", c.lambda_temporal},
            {"route_upper_bound", c.route_upper_bound},
            {"grad_tol", c.grad_tol},
            {"max_iters", c.max_iters},
            {"exact_mode_limit", c.exact_mode_limit},
            {"time_budget_s", c.time_budget_s},
            {"seed", c.seed},
            {"mode", std::string(to_string(c.mode))},
            {"hard_penalty", c.hard_penalty}};
}

void SegmentProblem::validate() const {
    if (!incidence) throw Error("invalid_problem", "segment problem has no incidence matrix");
    const auto n = routes();
    const auto m = locations();
    if (bands_cv.size() != m || bands_ld.size() != m)
        throw Error("invalid_problem", "band vectors must have one entry per location");
    if (nonfringe.size() != n) throw Error("invalid_problem", "nonfringe flags must have one entry per route");
    if (lambda_nonfringe < 0 || lambda_temporal < 0)
        throw Error("invalid_problem", "lambda values must be nonnegative");
    if (r_prev && r_prev->size() != n) throw Error("invalid_problem", "r_prev length differs from route count");
    for (const auto& c : extra_constraints) {
        if (c.location >= m) throw Error("unknown_location", "constraint on unknown location " + std::to_string(c.location));
        if (!(c.bound >= 0.0)) throw Error("invalid_problem", "constraint bounds must be nonnegative");
    }
    for (const auto* bands : {&bands_cv, &bands_ld})
        for (const auto& band : *bands)
            if (band && !(band->lo <= band->hi)) throw Error("invalid_problem", "band with lo > hi");
}

SegmentProblem make_problem(std::shared_ptr<const IncidenceMatrix> a, int segment) {
    SegmentProblem p;
    p.segment = segment;
    p.bands_cv.assign(a->locations(), std::nullopt);
    p.bands_ld.assign(a->locations(), std::nullopt);
    p.nonfringe.assign(a->routes(), 0);
    p.incidence = std::move(a);
    return p;
}

double slack_for(double ar, Band band) { return kernels::slack(ar, band.lo, band.hi); }

kernels::BandArrays band_arrays(const SegmentProblem& p, bool with_hard) {
    const auto m = p.locations();
    kernels::BandArrays b(m);
    for (std::size_t j = 0; j < m; ++j) {
        if (p.bands_cv[j]) {
            b.cv_lo[j] = p.bands_cv[j]->lo;
            b.cv_hi[j] = p.bands_cv[j]->hi;
        }
        if (p.bands_ld[j]) {
            b.ld_lo[j] = p.bands_ld[j]->lo;
            b.ld_hi[j] = p.bands_ld[j]->hi;
        }
    }
    if (!with_hard) return b;
    for (const auto& c : p.extra_constraints) {
        if (c.kind == BoundKind::lower) b.hard_lo[c.location] = std::max(b.hard_lo[c.location], c.bound);
        else b.hard_hi[c.location] = std::min(b.hard_hi[c.location], c.bound);
    }
    for (std::size_t j = 0; j < m; ++j)
        if (b.hard_lo[j] > b.hard_hi[j]) {
            std::ostringstream msg;
            msg << "contradictory bounds on location " << j << ": lower " << b.hard_lo[j] << " > upper "
                << b.hard_hi[j];
            throw InfeasibleError(msg.str());
        }
    return b;
}

std::vector<double> simulated_counts(const IncidenceMatrix& a, std::span<const std::int64_t> r) {
    std::vector<double> y(a.locations(), 0.0);
    for (std::size_t j = 0; j < a.locations(); ++j) {
        double acc = 0.0;
        for (auto i : a.column(j)) acc += static_cast<double>(r[i]);
        y[j] = acc;
    }
    return y;
}

double objective(std::span<const std::int64_t> r, const SegmentProblem& p) {
    if (r.size() != p.routes()) throw Error("invalid_argument", "objective: r has wrong length");
    const auto b = band_arrays(p, false);
    const auto y = simulated_counts(*p.incidence, r);
    return objective_from(y, r, p, b);
}

bool satisfies_constraints(std::span<const std::int64_t> r, const SegmentProblem& p, double tol) {
    const auto y = simulated_counts(*p.incidence, r);
    for (const auto& c : p.extra_constraints) {
        if (c.kind == BoundKind::lower && y[c.location] < c.bound - tol) return false;
        if (c.kind == BoundKind::upper && y[c.location] > c.bound + tol) return false;
    }
    return true;
}

RouteSolution make_solution(std::vector<std::int64_t> r, const SegmentProblem& p, SolverMode mode) {
    RouteSolution s;
    s.segment = p.segment;
    const auto y = simulated_counts(*p.incidence, r);
    const auto m = p.locations();
    s.slack_cv.assign(m, 0.0);
    s.slack_ld.assign(m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        if (p.bands_cv[j]) s.slack_cv[j] = slack_for(y[j], *p.bands_cv[j]);
        if (p.bands_ld[j]) s.slack_ld[j] = slack_for(y[j], *p.bands_ld[j]);
    }
    s.objective = objective(r, p);
    s.r = std::move(r);
    s.solver_mode = mode;
    return s;
}

RouteSolution solve_exact(const SegmentProblem& p, const SolveConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    p.validate();
    check_exact_size(p, config);
    const auto b = band_arrays(p);
    const bool has_hard = !p.extra_constraints.empty();
    const std::int64_t upper = config.route_upper_bound;
    const std::uint64_t total = search_space(p.routes(), upper);
    // Chunking is independent of the thread count; merging in chunk order keeps
    // the lexicographic tie-break.
    const std::uint64_t chunks = std::min<std::uint64_t>(total, 256);
    std::vector<ChunkBest> best(chunks);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(chunks); ++c) {
        const std::uint64_t begin = total * static_cast<std::uint64_t>(c) / chunks;
        const std::uint64_t end = total * static_cast<std::uint64_t>(c + 1) / chunks;
        best[c] = scan_range(p, b, has_hard, upper, begin, end);
    }
    ChunkBest overall;
    for (auto& cb : best)
        if (cb.found && (!overall.found || cb.objective < overall.objective)) overall = std::move(cb);
    return finish_exact(overall, p, upper, start);
}

namespace serial {
RouteSolution solve_exact(const SegmentProblem& p, const SolveConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    p.validate();
    check_exact_size(p, config);
    const auto b = band_arrays(p);
    const auto best = scan_range(p, b, !p.extra_constraints.empty(), config.route_upper_bound, 0,
                                 search_space(p.routes(), config.route_upper_bound));
    return finish_exact(best, p, config.route_upper_bound, start);
}
}  // namespace serial

RouteSolution solve_segment(const SegmentProblem& p, const SolveConfig& config) {
    switch (config.mode) {
        case SolverMode::exact: return solve_exact(p, config);
        case SolverMode::heuristic: return solve_heuristic(p, config);
        case SolverMode::automatic:
            if (p.routes() <= config.exact_mode_limit && config.route_upper_bound <= kExactMaxUpperBound)
                return solve_exact(p, config);
            return solve_heuristic(p, config);
    }
    return solve_heuristic(p, config);
}

std::vector<RouteSolution> solve_day(std::vector<SegmentProblem> problems, const SolveConfig& config) {
    for (std::size_t t = 1; t < problems.size(); ++t)
        if (problems[t].segment <= problems[t - 1].segment)
            throw Error("invalid_argument", "solve_day: problems must be ordered by segment");
    std::vector<RouteSolution> out;
    out.reserve(problems.size());
    for (std::size_t t = 0; t < problems.size(); ++t) {
        auto& p = problems[t];
        if (t == 0) p.r_prev.reset();
        else p.r_prev = out.back().r;
        out.push_back(solve_segment(p, config));
    }
    return out;
}

std::string infeasibility_reason(const SegmentProblem& p, std::int64_t route_upper_bound) {
    kernels::BandArrays b(p.locations());
    try {
        b = band_arrays(p);
    } catch (const InfeasibleError& e) {
        return e.what();
    }
    const auto& a = *p.incidence;
    std::ostringstream msg;
    for (std::size_t j = 0; j < a.locations(); ++j) {
        const double cap = static_cast<double>(route_upper_bound) * static_cast<double>(a.column(j).size());
        if (b.hard_lo[j] > 0.0 && a.column(j).empty()) {
            msg << "lower bound " << b.hard_lo[j] << " on location " << j << " which no route passes";
            return msg.str();
        }
        if (b.hard_lo[j] > cap) {
            msg << "lower bound " << b.hard_lo[j] << " on location " << j << " exceeds route capacity " << cap;
            return msg.str();
        }
        if (b.hard_hi[j] < 0.0) {
            msg << "negative upper bound on location " << j;
            return msg.str();
        }
    }
    return {};
}

}  // namespace demandforge
