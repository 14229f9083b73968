// Timings for the OpenMP kernels against their serial references, plus the
// two segment solvers. Usage: bench_kernels [repetitions]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <string>

#include "demandforge/counts.hpp"
#include "demandforge/kernels.hpp"
#include "demandforge/qipsolve.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace demandforge;
using Clock = std::chrono::steady_clock;

namespace {

// Best-of-reps wall time in milliseconds.
double time_ms(int reps, const std::function<void()>& fn) {
    double best = 1e300;
    for (int k = 0; k < reps; ++k) {
        const auto t0 = Clock::now();
        fn();
        best = std::min(best, std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
    }
    return best;
}

void row(const std::string& name, double serial_ms, double omp_ms) {
    std::printf("%-22s %12.3f %12.3f %8.2fx\n", name.c_str(), serial_ms, omp_ms, serial_ms / omp_ms);
}

}  // namespace

int main(int argc, char** argv) {
    const int reps = argc > 1 ? std::max(1, std::atoi(argv[1])) : 20;
    const auto built = dftest::build(dftest::large_grid_network_json());
    const auto& a = *built.a;
    const std::size_t n = a.routes(), m = a.locations();
    std::printf("routes %zu, locations %zu, nonzeros %zu, threads %d, reps %d\n\n", n, m, a.nonzeros(),
                omp_get_max_threads(), reps);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 3.0);
    std::vector<double> r(n), y(m), g(m), out(n), gy(m);
    for (auto& v : r) v = unif(rng);
    for (auto& v : g) v = unif(rng) - 1.5;
    kernels::BandArrays b(m);
    kernels::serial::route_to_location(a, r, y);
    for (std::size_t j = 0; j < m; ++j) {
        b.cv_lo[j] = 0.94 * y[j];
        b.cv_hi[j] = 1.02 * y[j];
    }

    std::printf("%-22s %12s %12s %9s\n", "kernel", "serial ms", "openmp ms", "speedup");
    row("route_to_location", time_ms(reps, [&] { kernels::serial::route_to_location(a, r, y); }),
        time_ms(reps, [&] { kernels::route_to_location(a, r, y); }));
    row("location_to_route", time_ms(reps, [&] { kernels::serial::location_to_route(a, g, out); }),
        time_ms(reps, [&] { kernels::location_to_route(a, g, out); }));
    row("band_terms", time_ms(reps, [&] { kernels::serial::band_terms(y, b, 0.0, gy); }),
        time_ms(reps, [&] { kernels::band_terms(y, b, 0.0, gy); }));

    // Exact solver on the largest size it accepts.
    std::mt19937_64 irng(11);
    const auto inst = dftest::oracle::random_instance(irng, 7, 6, 4);
    const auto small = dftest::to_problem(inst);
    SolveConfig exact_cfg;
    exact_cfg.route_upper_bound = inst.upper;
    row("solve_exact n=7 U=4", time_ms(std::max(1, reps / 10), [&] { serial::solve_exact(small, exact_cfg); }),
        time_ms(std::max(1, reps / 10), [&] { solve_exact(small, exact_cfg); }));

    // Heuristic on the large grid, one segment from rest.
    auto p = make_problem(built.a, 0);
    std::vector<std::int64_t> truth(n);
    std::uniform_int_distribution<std::int64_t> pick(0, 3);
    for (auto& v : truth) v = pick(rng);
    const auto yt = dftest::times(a, truth);
    const auto bounds = make_bounds(SourceKind::CV, 0.94, 1.12);
    for (std::size_t j = 0; j < m; ++j) p.bands_cv[j] = band_for(static_cast<double>(yt[j]), bounds);
    RouteSolution sol;
    const double h = time_ms(1, [&] { sol = solve_heuristic(p, SolveConfig{}); });
    std::printf("\nsolve_heuristic %zu routes: %.1f ms, objective %.3f, %lld iterations\n", n, h, sol.objective,
                static_cast<long long>(sol.stats.iterations));
    return 0;
}
