#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <tuple>

#include "demandforge/error.hpp"
#include "demandforge/kernels.hpp"
#include "demandforge/qipsolve.hpp"

namespace demandforge {

namespace {

using Clock = std::chrono::steady_clock;

constexpr std::size_t kPairNonzeroLimit = 20000;
// Squared hard violation below which the relaxed point is handed to rounding.
constexpr double kHandoffViolation = 1e-2;
// Restarts apply while n·(U+1) stays below this.
constexpr std::size_t kRestartSize = 512;
constexpr int kRestarts = 48;

double elapsed(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

// Fixed-block reductions: the result does not depend on the thread count.
double dot(std::span<const double> a, std::span<const double> b) {
    const std::size_t n = a.size();
    const std::size_t blocks = (n + kernels::kBlock - 1) / kernels::kBlock;
    std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(blocks); ++k) {
        const std::size_t lo = static_cast<std::size_t>(k) * kernels::kBlock;
        const std::size_t hi = std::min(n, lo + kernels::kBlock);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += a[i] * b[i];
        partial[k] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double sum(std::span<const double> a) {
    const std::size_t n = a.size();
    const std::size_t blocks = (n + kernels::kBlock - 1) / kernels::kBlock;
    std::vector<double> partial(blocks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(blocks); ++k) {
        const std::size_t lo = static_cast<std::size_t>(k) * kernels::kBlock;
        const std::size_t hi = std::min(n, lo + kernels::kBlock);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += a[i];
        partial[k] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

// Smooth reduced objective of the continuous relaxation on the box [0, U]^n.
class Relaxation {
public:
    Relaxation(const SegmentProblem& p, const kernels::BandArrays& b, double hard_weight)
        : p_(p), b_(b), hard_weight_(hard_weight), y_(p.locations()), gy_(p.locations()) {
        prev_.assign(p.routes(), 0.0);
        if (p.r_prev)
            for (std::size_t i = 0; i < p.routes(); ++i) prev_[i] = static_cast<double>((*p.r_prev)[i]);
    }

    // Value and gradient at x.
    double eval(std::span<const double> x, std::span<double> grad) {
        kernels::route_to_location(*p_.incidence, x, y_);
        double f = kernels::band_terms(y_, b_, hard_weight_, gy_);
        kernels::location_to_route(*p_.incidence, gy_, grad);
        const bool temporal = p_.r_prev && p_.lambda_temporal != 0.0;
        const std::size_t n = x.size();
        std::vector<double> extra(n, 0.0);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
            const auto i = static_cast<std::size_t>(ii);
            double e = 0.0;
            if (p_.nonfringe[i]) {
                e += p_.lambda_nonfringe * x[i];
                grad[i] += p_.lambda_nonfringe;
            }
            if (temporal) {
                const double d = x[i] - prev_[i];
                e += p_.lambda_temporal * d * d;
                grad[i] += 2.0 * p_.lambda_temporal * d;
            }
            extra[i] = e;
        }
        return f + sum(extra);
    }

    double hard_violation_at(std::span<const double> x) {
        kernels::route_to_location(*p_.incidence, x, y_);
        return kernels::hard_violation(y_, b_);
    }

private:
    const SegmentProblem& p_;
    const kernels::BandArrays& b_;
    double hard_weight_;
    std::vector<double> prev_;
    std::vector<double> y_;
    std::vector<double> gy_;
};

struct RelaxResult {
    std::vector<double> x;
    double value = 0.0;
    std::int64_t iterations = 0;
    bool budget_hit = false;
};

// Spectral projected gradient with a nonmonotone Armijo line search.
RelaxResult relax(Relaxation& f, std::size_t n, double upper, std::vector<double> x, const SolveConfig& cfg,
                  Clock::time_point start, double budget) {
    auto project = [upper](double v) { return std::clamp(v, 0.0, upper); };
    constexpr double kGamma = 1e-4;
    constexpr double kAlphaMin = 1e-12;
    constexpr double kAlphaMax = 1e12;
    constexpr std::size_t kMemory = 10;

    for (auto& v : x) v = project(v);
    std::vector<double> g(n), g_new(n), d(n), x_new(n), s(n), yv(n);
    double fx = f.eval(x, g);

    auto pg_norm = [&]() {
        double mx = 0.0;
        for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, std::abs(project(x[i] - g[i]) - x[i]));
        return mx;
    };
    const double pg0 = pg_norm();
    const double tol = cfg.grad_tol * std::max(1.0, pg0);
    double alpha = pg0 > 0.0 ? std::clamp(1.0 / pg0, kAlphaMin, kAlphaMax) : 1.0;
    std::deque<double> history{fx};

    RelaxResult out;
    std::int64_t it = 0;
    for (; it < cfg.max_iters; ++it) {
        if (pg_norm() <= tol) break;
        if ((it & 15) == 0 && elapsed(start) > budget) {
            out.budget_hit = true;
            break;
        }
        for (std::size_t i = 0; i < n; ++i) d[i] = project(x[i] - alpha * g[i]) - x[i];
        const double gd = dot(g, d);
        if (!(gd < 0.0)) break;
        const double f_ref = *std::max_element(history.begin(), history.end());
        double lambda = 1.0;
        double f_new = 0.0;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < n; ++i) x_new[i] = x[i] + lambda * d[i];
            f_new = f.eval(x_new, g_new);
            if (f_new <= f_ref + kGamma * lambda * gd) break;
            const double denom = f_new - fx - lambda * gd;
            double next = denom > 0.0 ? -0.5 * lambda * lambda * gd / denom : 0.5 * lambda;
            lambda = std::clamp(next, 0.1 * lambda, 0.5 * lambda);
        }
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = x_new[i] - x[i];
            yv[i] = g_new[i] - g[i];
        }
        const double sy = dot(s, yv);
        alpha = sy > 0.0 ? std::clamp(dot(s, s) / sy, kAlphaMin, kAlphaMax) : kAlphaMax;
        x.swap(x_new);
        g.swap(g_new);
        fx = f_new;
        history.push_back(fx);
        if (history.size() > kMemory) history.pop_front();
    }
    out.x = std::move(x);
    out.value = fx;
    out.iterations = it;
    return out;
}

// Integer local search state: r, y = A·r, and move deltas in O(route length).
class Repair {
public:
    Repair(const SegmentProblem& p, const kernels::BandArrays& b, std::vector<std::int64_t> r, std::int64_t upper)
        : p_(p), b_(b), a_(*p.incidence), r_(std::move(r)), upper_(upper) {
        y_ = simulated_counts(a_, r_);
        has_hard_ = b_.has_hard();
    }

    double soft_term(std::size_t j, double y) const {
        const double s_cv = kernels::slack(y, b_.cv_lo[j], b_.cv_hi[j]);
        const double s_ld = kernels::slack(y, b_.ld_lo[j], b_.ld_hi[j]);
        return s_cv * s_cv + s_ld * s_ld;
    }
    double hard_term(std::size_t j, double y) const {
        const double s = kernels::slack(y, b_.hard_lo[j], b_.hard_hi[j]);
        return s * s;
    }

    // (Δhard, Δobjective) of r_i += delta.
    std::pair<double, double> delta(std::size_t i, std::int64_t delta) const {
        double dh = 0.0, df = 0.0;
        const double dd = static_cast<double>(delta);
        for (auto j : a_.row(i)) {
            const double y0 = y_[j], y1 = y_[j] + dd;
            df += soft_term(j, y1) - soft_term(j, y0);
            if (has_hard_) dh += hard_term(j, y1) - hard_term(j, y0);
        }
        if (p_.nonfringe[i]) df += p_.lambda_nonfringe * dd;
        if (p_.r_prev && p_.lambda_temporal != 0.0) {
            const double d0 = static_cast<double>(r_[i] - (*p_.r_prev)[i]);
            const double d1 = d0 + dd;
            df += p_.lambda_temporal * (d1 * d1 - d0 * d0);
        }
        return {dh, df};
    }

    bool in_range(std::size_t i, int dir) const { return dir > 0 ? r_[i] < upper_ : r_[i] > 0; }

    void apply(std::size_t i, std::int64_t delta) {
        r_[i] += delta;
        for (auto j : a_.row(i)) y_[j] += static_cast<double>(delta);
    }

    // Cyclic greedy sweeps of single-coordinate ±1 moves; a move is taken when
    // it lowers the hard violation, or keeps it and lowers the objective.
    std::int64_t run(std::span<const std::size_t> order, Clock::time_point start, double budget, bool& budget_hit) {
        std::int64_t moves = 0;
        constexpr double kEps = 1e-9;
        bool improved = true;
        while (improved) {
            improved = false;
            if (elapsed(start) > budget) {
                budget_hit = true;
                break;
            }
            for (std::size_t i : order) {
                for (;;) {
                    int best_dir = 0;
                    double best_h = 0.0, best_f = 0.0;
                    for (int dir : {+1, -1}) {
                        if (dir > 0 && r_[i] >= upper_) continue;
                        if (dir < 0 && r_[i] <= 0) continue;
                        auto [dh, df] = delta(i, dir);
                        const bool better_h = dh < -kEps;
                        const bool same_h = std::abs(dh) <= kEps;
                        if (!(better_h || (same_h && df < -kEps))) continue;
                        if (best_dir == 0 || dh < best_h - kEps || (std::abs(dh - best_h) <= kEps && df < best_f)) {
                            best_dir = dir;
                            best_h = dh;
                            best_f = df;
                        }
                    }
                    if (best_dir == 0) break;
                    apply(i, best_dir);
                    ++moves;
                    improved = true;
                }
            }
        }
        return moves;
    }

    // Clears hard violations one unit at a time, always through the cheapest
    // route crossing a violated location.
    std::int64_t run_hard(Clock::time_point start, double budget, bool& budget_hit) {
        if (!has_hard_) return 0;
        constexpr double kEps = 1e-9;
        std::int64_t moves = 0;
        for (bool progress = true; progress;) {
            progress = false;
            if (elapsed(start) > budget) {
                budget_hit = true;
                break;
            }
            for (std::size_t j = 0; j < y_.size(); ++j) {
                while (kernels::slack(y_[j], b_.hard_lo[j], b_.hard_hi[j]) != 0.0) {
                    const int dir = y_[j] < b_.hard_lo[j] ? +1 : -1;
                    std::size_t best = a_.routes();
                    double best_h = 0.0, best_f = 0.0;
                    for (auto i : a_.column(j)) {
                        if (!in_range(i, dir)) continue;
                        auto [dh, df] = delta(i, dir);
                        if (dh >= -kEps) continue;
                        if (best == a_.routes() || df < best_f - kEps || (std::abs(df - best_f) <= kEps && dh < best_h)) {
                            best = i;
                            best_h = dh;
                            best_f = df;
                        }
                    }
                    if (best == a_.routes()) break;
                    apply(best, dir);
                    ++moves;
                    progress = true;
                }
            }
        }
        return moves;
    }

    // Joint moves on two routes sharing a location, for instances small enough
    // that the neighbourhood stays cheap. Each accepted pair move is followed
    // by fresh single-coordinate sweeps.
    std::int64_t run_pairs(std::span<const std::size_t> order, Clock::time_point start, double budget,
                           bool& budget_hit) {
        const std::size_t n = r_.size();
        if (n < 2 || a_.nonzeros() > kPairNonzeroLimit) return 0;
        std::vector<std::vector<std::size_t>> partners(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<char> seen(n, 0);
            for (auto j : a_.row(i))
                for (auto k : a_.column(j))
                    if (k != i && !seen[k]) {
                        seen[k] = 1;
                        partners[i].push_back(k);
                    }
            std::sort(partners[i].begin(), partners[i].end());
        }
        constexpr double kEps = 1e-9;
        constexpr std::array<std::pair<int, int>, 4> kMoves{{{+1, -1}, {-1, +1}, {+1, +1}, {-1, -1}}};
        std::int64_t moves = 0;
        for (bool improved = true; improved;) {
            improved = false;
            if (elapsed(start) > budget) {
                budget_hit = true;
                break;
            }
            for (std::size_t i : order) {
                for (std::size_t k : partners[i]) {
                    for (auto [di, dk] : kMoves) {
                        if (!in_range(i, di) || !in_range(k, dk)) continue;
                        auto [h1, f1] = delta(i, di);
                        apply(i, di);
                        auto [h2, f2] = delta(k, dk);
                        apply(i, -di);
                        const double dh = h1 + h2, df = f1 + f2;
                        if (dh < -kEps || (std::abs(dh) <= kEps && df < -kEps)) {
                            apply(i, di);
                            apply(k, dk);
                            moves += 2 + run(order, start, budget, budget_hit);
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        return moves;
    }

    double total_hard() const { return kernels::hard_violation(y_, b_); }
    std::vector<std::int64_t> take() { return std::move(r_); }

private:
    const SegmentProblem& p_;
    const kernels::BandArrays& b_;
    const IncidenceMatrix& a_;
    std::vector<std::int64_t> r_;
    std::vector<double> y_;
    std::int64_t upper_;
    bool has_hard_ = false;
};

}  // namespace

RouteSolution solve_heuristic(const SegmentProblem& p, const SolveConfig& config) {
    const auto start = Clock::now();
    p.validate();
    const std::size_t n = p.routes();
    const std::int64_t upper = config.route_upper_bound;

    if (auto reason = infeasibility_reason(p, upper); !reason.empty()) throw InfeasibleError(reason);
    const auto b = band_arrays(p);
    const bool has_hard = b.has_hard();

    std::vector<double> x0(n, 0.0);
    if (p.r_prev)
        for (std::size_t i = 0; i < n; ++i) x0[i] = static_cast<double>((*p.r_prev)[i]);

    // Hard bounds: penalty continuation, since a single large weight leaves
    // the relaxation badly conditioned. The ladder stops once rounding and
    // repair can take over; the remaining rungs only run to diagnose failure.
    std::vector<double> weights{0.0};
    if (has_hard) {
        weights.clear();
        for (double w = std::min(1.0, config.hard_penalty); w < config.hard_penalty; w *= 10.0) weights.push_back(w);
        weights.push_back(config.hard_penalty);
    }
    RelaxResult relaxed;
    relaxed.x = std::move(x0);
    std::int64_t iterations = 0;
    std::size_t rung = 0;
    auto climb = [&](bool to_top) {
        for (; rung < weights.size(); ++rung) {
            Relaxation stage(p, b, weights[rung]);
            relaxed = relax(stage, n, static_cast<double>(upper), std::move(relaxed.x), config, start,
                            0.5 * config.time_budget_s);
            iterations += relaxed.iterations;
            if (relaxed.budget_hit) break;
            if (!to_top && stage.hard_violation_at(relaxed.x) <= kHandoffViolation) {
                ++rung;
                break;
            }
        }
        relaxed.iterations = iterations;
    };
    climb(false);

    std::vector<std::int64_t> r(n);
    for (std::size_t i = 0; i < n; ++i)
        r[i] = std::clamp<std::int64_t>(std::llround(relaxed.x[i]), 0, upper);

    SolveStats stats;
    stats.iterations = relaxed.iterations;
    stats.relaxed_objective = relaxed.value;
    stats.rounded_objective = objective(r, p);
    stats.budget_exhausted = relaxed.budget_hit;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (config.seed != 0) {
        std::mt19937_64 rng(config.seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    bool budget_hit = false;
    auto local_search = [&](std::vector<std::int64_t> start_r) {
        Repair repair(p, b, std::move(start_r), upper);
        std::int64_t moves = repair.run_hard(start, config.time_budget_s, budget_hit);
        moves += repair.run(order, start, config.time_budget_s, budget_hit);
        moves += repair.run_pairs(order, start, config.time_budget_s, budget_hit);
        stats.repair_moves += moves;
        const double hard = repair.total_hard();
        auto out = repair.take();
        return std::make_tuple(hard, objective(out, p), std::move(out));
    };
    auto [best_hard, best_obj, best] = local_search(std::move(r));

    // Small instances: perturbation restarts around the incumbent.
    if (n > 0 && n * static_cast<std::size_t>(upper + 1) <= kRestartSize) {
        std::mt19937_64 rng(config.seed);
        std::uniform_int_distribution<std::size_t> coord(0, n - 1);
        std::uniform_int_distribution<std::int64_t> value(0, upper);
        for (int k = 0; k < kRestarts && !budget_hit; ++k) {
            auto trial = best;
            const std::size_t kicks = 1 + k % std::min<std::size_t>(n, 3);
            for (std::size_t q = 0; q < kicks; ++q) trial[coord(rng)] = value(rng);
            auto [h, f, cand] = local_search(std::move(trial));
            if (h < best_hard - 1e-12 || (std::abs(h - best_hard) <= 1e-12 && f < best_obj - 1e-9)) {
                best_hard = h;
                best_obj = f;
                best = std::move(cand);
            }
        }
    }
    stats.budget_exhausted = stats.budget_exhausted || budget_hit;

    if (has_hard && best_hard > 1e-12) {
        climb(true);
        Relaxation top(p, b, weights.back());
        const double relaxed_violation = top.hard_violation_at(relaxed.x);
        if (relaxed_violation > 1e-4)
            throw InfeasibleError("hard constraints are infeasible even for the continuous relaxation (violation " +
                                  std::to_string(relaxed_violation) + ")");
        throw InfeasibleError("no integer solution satisfying the hard constraints was found by local repair");
    }

    auto sol = make_solution(std::move(best), p, SolverMode::heuristic);
    sol.stats = stats;
    sol.solve_time = elapsed(start);
    return sol;
}

}  // namespace demandforge
