// Prints one PASS/FAIL line per primary acceptance criterion; exits 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <regex>
#include <sstream>

#include "demandforge/counts.hpp"
#include "demandforge/emit.hpp"
#include "demandforge/error.hpp"
#include "demandforge/flowcount.hpp"
#include "demandforge/llm_client.hpp"
#include "demandforge/pipeline.hpp"
#include "demandforge/qipsolve.hpp"
#include "demandforge/refine.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace demandforge;
using nlohmann::json;
namespace oracle = dftest::oracle;

namespace {

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

const std::string kFixtures = DF_FIXTURE_DIR;

struct Outcome {
    bool pass = false;
    std::string detail;
};

// The instance suite shared by the oracle and heuristic criteria.
std::vector<oracle::DenseInstance> instance_suite() {
    std::mt19937_64 rng(20250101);
    std::uniform_int_distribution<int> pn(1, 6), pm(1, 6), pu(1, 5);
    std::vector<oracle::DenseInstance> out;
    for (int k = 0; k < 120; ++k) out.push_back(oracle::random_instance(rng, pn(rng), pm(rng), pu(rng)));
    return out;
}

SolveConfig capped(std::int64_t upper) {
    SolveConfig c;
    c.route_upper_bound = upper;
    return c;
}

Outcome oracle_equivalence() {
    const auto suite = instance_suite();
    const auto start = Clock::now();
    int mismatches = 0;
    for (const auto& inst : suite) {
        const auto bf = oracle::brute_force(inst);
        const auto s = solve_exact(dftest::to_problem(inst), capped(inst.upper));
        if (s.r != bf.r || std::abs(s.objective - bf.objective) > 1e-9 * (1.0 + bf.objective)) ++mismatches;
    }
    const double t = seconds_since(start);
    std::ostringstream d;
    d << suite.size() << " instances, " << mismatches << " mismatches, " << t << " s";
    return {mismatches == 0 && suite.size() >= 100 && t < 10.0, d.str()};
}

Outcome heuristic_quality() {
    const auto suite = instance_suite();
    const auto start = Clock::now();
    int outside = 0;
    double worst = 0.0;
    for (const auto& inst : suite) {
        const auto p = dftest::to_problem(inst);
        const double e = solve_exact(p, capped(inst.upper)).objective;
        const double h = solve_heuristic(p, capped(inst.upper)).objective;
        const bool ok = e == 0.0 ? h <= 1e-6 : (h - e) / e <= 0.05;
        if (e > 0.0) worst = std::max(worst, (h - e) / e);
        outside += !ok;
    }
    const double t = seconds_since(start);
    std::ostringstream d;
    d << suite.size() << " instances, " << outside << " outside 5%, worst gap " << worst * 100 << "%, " << t << " s";
    return {outside == 0 && t < 30.0, d.str()};
}

Outcome calibration_reproduction() {
    std::istringstream in(dftest::overlap_csv());
    const auto b = calibrate_bounds(ingest_counts(in));
    const bool overlap = std::abs(b.alpha_lb - 1048.0 / 1178.0) <= 1e-9 && std::abs(b.alpha_ub - 2088.0 / 1962.0) <= 1e-9;

    // Chain formula on synthetic overlaps, compared with the direct min/max.
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> pick(1, 500);
    int chain_mismatch = 0;
    for (int trial = 0; trial < 50; ++trial) {
        std::ostringstream csv;
        csv << "source,location,segment,count\n";
        double lo = 1e300, hi = 0.0;
        for (int j = 0; j < 8; ++j) {
            const int cv = pick(rng), ld = pick(rng);
            csv << "CV," << j << ",20," << cv << "\nLD," << j << ",20," << ld << '\n';
            lo = std::min(lo, static_cast<double>(cv) / ld);
            hi = std::max(hi, static_cast<double>(cv) / ld);
        }
        std::istringstream cin(csv.str());
        const auto ld = chain_bounds(make_bounds(SourceKind::CV, 0.94, 1.12), ingest_counts(cin));
        chain_mismatch += ld.alpha_lb != 0.94 * lo || ld.alpha_ub != 1.12 * hi;
    }
    std::ostringstream d;
    d.precision(12);
    d << "alpha_lb " << b.alpha_lb << ", alpha_ub " << b.alpha_ub << ", chain mismatches " << chain_mismatch << "/50";
    return {overlap && chain_mismatch == 0, d.str()};
}

Outcome counting_robustness() {
    int errors = 0, undercount_at_half = 0, runs = 0;
    const double drops[] = {0.0, 0.25, 0.5};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const int crossings = 5 + static_cast<int>(seed * 7919 % 46);
        const auto sc = random_scenario(crossings, seed);
        for (double drop : drops) {
            const auto stream = synth_stream(sc, drop, seed * 3 + 1);
            ++runs;
            errors += count_crossings(stream, sc.geometry).total() != crossings;
            if (drop == 0.5) undercount_at_half += count_threshold(stream, sc.geometry).total() < crossings;
        }
    }
    std::ostringstream d;
    d << runs << " runs, tracked errors " << errors << ", threshold undercounts at 0.5: " << undercount_at_half;
    return {errors == 0 && undercount_at_half >= 1, d.str()};
}

Outcome demand_recovery() {
    const auto built = dftest::build(dftest::grid3_network_json());
    std::mt19937_64 rng(424242);
    std::uniform_int_distribution<std::int64_t> base_pick(2, 20);
    std::vector<std::int64_t> base(built.routes.size());
    for (auto& v : base) v = base_pick(rng);
    const auto truth = dftest::truth_day(base);

    // Observed CV = truth / u with u ~ U[0.94, 1.12], so f^M / f^CV stays inside the bounds.
    std::uniform_real_distribution<double> u(0.94, 1.12);
    const auto bounds = make_bounds(SourceKind::CV, 0.94, 1.12);
    std::vector<SegmentProblem> problems;
    for (int t = 0; t < kSegmentsPerDay; ++t) {
        auto p = make_problem(built.a, t);
        const auto y = dftest::times(*built.a, truth[t]);
        for (std::size_t j = 0; j < y.size(); ++j) {
            const auto f = std::llround(static_cast<double>(y[j]) / u(rng));
            p.bands_cv[j] = band_for(static_cast<double>(f), bounds);
        }
        problems.push_back(std::move(p));
    }
    const auto day = solve_day(problems, SolveConfig{});

    std::size_t cells = 0, in_band = 0;
    double worst_mean = 0.0, daylight_count = 0.0;
    for (int t = 0; t < kSegmentsPerDay; ++t) {
        const auto y = simulated_counts(*built.a, day[t].r);
        double sum = 0.0;
        for (std::size_t j = 0; j < y.size(); ++j) {
            const double s = slack_for(y[j], *problems[t].bands_cv[j]);
            sum += s;
            ++cells;
            in_band += s == 0.0;
            if (t >= 28 && t < 80) daylight_count += y[j];
        }
        if (t >= 28 && t < 80) worst_mean = std::max(worst_mean, std::abs(sum / static_cast<double>(y.size())));
    }
    daylight_count /= 52.0 * static_cast<double>(built.a->locations());
    const double share = static_cast<double>(in_band) / static_cast<double>(cells);
    std::ostringstream d;
    d << "worst daylight |mean violation| " << worst_mean << " (mean daylight count " << daylight_count
      << "), in-band share " << share * 100 << "%";
    return {worst_mean <= 1e-9 && share >= 0.95, d.str()};
}

Outcome feasibility_speed() {
    const auto built = dftest::build(dftest::large_grid_network_json());
    const std::size_t n = built.routes.size();
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::int64_t> pick(0, 3);
    std::uniform_real_distribution<double> u(0.94, 1.12);
    std::vector<std::int64_t> truth(n);
    for (auto& v : truth) v = pick(rng);
    const auto y = dftest::times(*built.a, truth);
    const auto bounds = make_bounds(SourceKind::CV, 0.94, 1.12);

    double worst = 0.0;
    bool feasible = true;
    std::optional<std::vector<std::int64_t>> prev;
    for (int t = 0; t < 4; ++t) {
        auto p = make_problem(built.a, 60 + t);
        for (std::size_t j = 0; j < y.size(); ++j)
            p.bands_cv[j] = band_for(static_cast<double>(std::llround(static_cast<double>(y[j]) / u(rng))), bounds);
        p.r_prev = prev;
        if (t == 3)  // hard bounds of the kind accepted feedback adds
            for (std::size_t j = 0; j < 20; ++j)
                p.extra_constraints.push_back({j * 37 % y.size(), BoundKind::lower, static_cast<double>(y[j * 37 % y.size()] + 5)});
        const auto start = Clock::now();
        const auto s = solve_heuristic(p, SolveConfig{});
        worst = std::max(worst, seconds_since(start));
        feasible = feasible && satisfies_constraints(s.r, p);
        prev = s.r;
    }
    std::ostringstream d;
    d << n << " routes, worst segment " << worst << " s";
    return {n >= 10000 && feasible && worst <= 5.0, d.str()};
}

Outcome minute_distribution() {
    // Fixture grid of previous rows: zeros, ones, spikes and random sparse rows.
    std::vector<std::array<std::int64_t, kMinutesPerSegment>> rows;
    rows.push_back({});
    std::array<std::int64_t, kMinutesPerSegment> ones;
    ones.fill(1);
    rows.push_back(ones);
    for (int m = 0; m < kMinutesPerSegment; m += 3) {
        std::array<std::int64_t, kMinutesPerSegment> spike{};
        spike[m] = 6;
        rows.push_back(spike);
    }
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<std::int64_t> pick(0, 4);
    for (int k = 0; k < 40; ++k) {
        std::array<std::int64_t, kMinutesPerSegment> r{};
        for (auto& v : r) v = pick(rng) == 0 ? pick(rng) : 0;
        rows.push_back(r);
    }
    int bad = 0, checked = 0;
    for (const auto& prev : rows)
        for (std::int64_t total = 0; total <= 6; ++total) {
            const auto c = distribute_row(total, &prev);
            std::int64_t sum = 0, obj = 0;
            for (int m = 0; m < kMinutesPerSegment; ++m) {
                sum += c[m];
                obj += (c[m] - prev[m]) * (c[m] - prev[m]);
                if (c[m] < 0) ++bad;
            }
            bad += sum != total || obj != oracle::minute_brute_force(total, prev);
            ++checked;
        }
    std::ostringstream d;
    d << checked << " (row, r) cases, " << bad << " mismatches";
    return {bad == 0, d.str()};
}

Outcome refinement_loop() {
    auto config = load_pipeline_config(kFixtures + "/plus/config.json");
    const auto pipeline = load_pipeline(config);
    auto state = make_state(pipeline.network, pipeline.problems(config.solve), config.solve);
    const auto feedback = read_feedback_file(config.feedback);
    auto client = MockLlmClient::from_script_file(config.mock_script);
    const auto out = refine_loop(feedback, state, client, config.max_attempts);

    int atoms = 0, violated = 0;
    for (const auto& spec : out.state.accepted)
        for (const auto& a : spec.atoms) {
            ++atoms;
            const double y = static_cast<double>(get_counts(out.solutions, out.state.incidence(), a.location, a.segment));
            violated += a.kind == BoundKind::lower ? y < a.bound : y > a.bound;
        }
    const bool tally_ok = out.tally.attempts == 4 && out.tally.syntactic_fail == 1 && out.tally.infeasible == 1 &&
                          out.tally.accepted == 2 && out.tally.semantic_fail == 0;

    // Specs that raise eastbound counts against "too many eastbound cars".
    FeedbackItem dec{9, 68, 25, "Way too many cars eastbound here, I would expect far fewer.", {}, {}};
    int runs = 0, rejected = 0;
    for (int raise = 125; raise <= 400; raise += 25) {
        json doc = {{"atoms",
                     {{{"intersection", 25}, {"approach", "EB"}, {"movement", "total"}, {"kind", "lower"}, {"bound", raise}},
                      {{"intersection", 25}, {"approach", "EB"}, {"movement", "total"}, {"kind", "lower"},
                       {"bound", raise * 0.85}, {"adjacency", "adjacent"}}}}};
        MockLlmClient wrong({doc.dump()});
        ++runs;
        rejected += attempt_feedback(state, dec, wrong).stage == Stage::semantic;
    }
    std::ostringstream d;
    d << atoms << " atoms, " << violated << " violated; tally " << to_json(out.tally).dump() << "; wrong-direction rejected "
      << rejected << "/" << runs;
    return {atoms > 0 && violated == 0 && tally_ok && rejected == runs, d.str()};
}

Outcome emission_integrity() {
    const auto config = load_pipeline_config(kFixtures + "/grid3/config.json");
    const auto pipeline = load_pipeline(config);
    const auto day = solve_day(pipeline.problems(config.solve), config.solve);
    const auto schedules = distribute_day(day);
    std::int64_t sigma_c = 0;
    for (const auto& s : schedules)
        for (const auto& row : s.c)
            for (auto v : row) sigma_c += v;
    const auto xml = emit_routes(schedules, *pipeline.network, pipeline.routes, config.class_dist, config.emit_seed);
    const std::regex veh("<vehicle ");
    const auto vehicles = std::distance(std::sregex_iterator(xml.begin(), xml.end(), veh), std::sregex_iterator());

    // Golden comparison goes through the CLI, exactly as a user would regenerate it.
    const auto dir = fs::temp_directory_path() / ("demandforge_accept_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    const std::string cmd = std::string("\"") + DF_CLI + "\" solve --config " + kFixtures + "/grid3/config.json --out " +
                            dir.string() + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string produced = slurp(dir / "routes.rou.xml");
    const bool golden = rc == 0 && !produced.empty() && produced == slurp(kFixtures + "/golden/grid3_routes.rou.xml") &&
                        produced == xml;
    fs::remove_all(dir);
    std::ostringstream d;
    d << "vehicles " << vehicles << ", sum c " << sigma_c << ", golden " << (golden ? "identical" : "differs");
    return {vehicles == sigma_c && golden, d.str()};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"oracle equivalence", oracle_equivalence},
        {"heuristic quality", heuristic_quality},
        {"calibration reproduction", calibration_reproduction},
        {"counting robustness", counting_robustness},
        {"demand recovery", demand_recovery},
        {"feasibility speed", feasibility_speed},
        {"minute distribution", minute_distribution},
        {"refinement loop", refinement_loop},
        {"emission integrity", emission_integrity},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << (o.pass ? "PASS " : "FAIL ") << name << " -- " << o.detail << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
