#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>

#include "rbsde/errors.hpp"
#include "rbsde/experiment.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/mc.hpp"
#include "rbsde/scenario_io.hpp"
#include "rbsde/solver.hpp"
#include "rbsde/verify.hpp"

namespace rbsde {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Bundled scenarios
// ---------------------------------------------------------------------------

namespace {

Scenario scalar_base() {
    Scenario sc;
    sc.n = 1;
    sc.d = 1;
    sc.T = 1.0;
    sc.steps = 200;
    sc.generator.a = {0.0};
    sc.generator.c = {{0.0}};
    sc.generator.b = {{0.0}};
    sc.generator.gamma = {0.0};
    sc.barrier.cap = {-10.0};
    sc.barrier.alpha = {-10.0};
    sc.barrier.beta = {{0.0}};
    sc.barrier.delta = {0.0};
    sc.barrier.S_plus_max = 0.0;
    sc.terminal.alpha = {0.0};
    sc.terminal.beta = {{1.0}};
    sc.terminal.xi_max = 1.0;
    sc.penalty_schedule = {1.0, 2.0, 13};
    sc.engine_config.seed = 90210;
    sc.engine_config.paths = 50'000;
    sc.engine_config.basis_degree = 3;
    return sc;
}

}  // namespace

Scenario bundled_scenario(const std::string& name) {
    if (name == "unreflected") {
        // plain conditional-expectation reduction: zero driver, barrier far below
        return scalar_base();
    }
    if (name == "quadratic_unreflected") {
        Scenario sc = scalar_base();
        sc.generator.gamma = {1.0};
        return sc;
    }
    if (name == "quadratic_reflected") {
        // same quadratic driver against a barrier the solution actually hits:
        // the terminal cap at 0.6 pulls the continuation value below the 0.5
        // barrier plateau over a wide region, so the reflection carries real
        // mass. The long horizon keeps K_T at small k within a 2x band of its
        // limit (the k=1 response integrates the dip, the limit concentrates
        // at the barrier kink).
        Scenario sc = scalar_base();
        sc.T = 8.0;
        sc.generator.gamma = {1.0};
        sc.terminal.alpha = {-0.1};
        sc.terminal.beta = {{1.0}};
        sc.terminal.xi_max = 1.0;
        sc.terminal.clamp_lo = {-1.0};
        sc.terminal.clamp_hi = {0.6};
        sc.barrier.cap = {0.5};
        sc.barrier.alpha = {-0.2};
        sc.barrier.beta = {{1.0}};
        sc.barrier.delta = {0.0};
        sc.barrier.S_plus_max = 0.5;
        return sc;
    }
    if (name == "coupled_pair") {
        // two components coupled through nonnegative off-diagonal terms, each
        // with its own active barrier (mirrored in the state)
        Scenario sc;
        sc.n = 2;
        sc.d = 1;
        sc.T = 1.0;
        sc.steps = 100;
        sc.generator.a = {0.0, 0.0};
        sc.generator.c = {{0.0, 0.5}, {0.5, 0.0}};
        sc.generator.b = {{0.0}, {0.0}};
        sc.generator.gamma = {0.5, 0.5};
        sc.terminal.alpha = {-0.1, -0.1};
        sc.terminal.beta = {{1.0}, {-1.0}};
        sc.terminal.xi_max = 1.0;
        sc.terminal.clamp_lo = {-1.0, -1.0};
        sc.terminal.clamp_hi = {0.6, 0.6};
        sc.barrier.cap = {0.5, 0.5};
        sc.barrier.alpha = {-0.2, -0.2};
        sc.barrier.beta = {{1.0}, {-1.0}};
        sc.barrier.delta = {0.0, 0.0};
        sc.barrier.S_plus_max = 0.5;
        sc.penalty_schedule = {1.0, 2.0, 13};
        return sc;
    }
    throw InvalidInput("bundled_scenario: unknown name '" + name + "'");
}

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

namespace {

struct Criterion {
    std::string id;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::string fmtg(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

double component_ratio(const std::vector<std::vector<double>>& per_level_values, int i) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& v : per_level_values) {
        lo = std::min(lo, v[i]);
        hi = std::max(hi, v[i]);
    }
    if (hi == 0.0) return 1.0;
    return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

// sampled spot-check of the comparison-theorem hypotheses between two scenarios
bool comparison_hypotheses_hold(const Scenario& lo, const Scenario& hi) {
    const double tol = 1e-12;
    for (const auto& s : default_bounds_samples(lo)) {
        std::span<const double> w(s.w);
        for (int i = 0; i < lo.n; ++i) {
            if (lo.terminal.eval(i, w) > hi.terminal.eval(i, w) + tol) return false;
            if (lo.barrier.eval(i, s.t, w) > hi.barrier.eval(i, s.t, w) + tol) return false;
        }
    }
    for (const auto& p : default_monotone_pairs(lo)) {
        double f_lo = lo.generator.eval(p.i, p.t, std::span<const double>(p.y),
                                        std::span<const double>(p.zi));
        double f_hi = hi.generator.eval(p.i, p.t, std::span<const double>(p.y_bar),
                                        std::span<const double>(p.zi));
        if (f_lo > f_hi + tol) return false;
    }
    for (const auto& s : default_growth_samples(lo)) {
        for (int i = 0; i < lo.n; ++i) {
            std::span<const double> zi(s.z[i]);
            double f_lo = lo.generator.eval(i, s.t, std::span<const double>(s.y), zi);
            double f_hi = hi.generator.eval(i, s.t, std::span<const double>(s.y), zi);
            if (f_lo > f_hi + tol) return false;
        }
    }
    return true;
}

Scenario bump_terminal(Scenario sc, double eps) {
    for (auto& v : sc.terminal.alpha) v += eps;
    if (sc.terminal.clamp_lo.empty())
        sc.terminal.clamp_lo.assign(sc.n, -sc.terminal.xi_max);
    if (sc.terminal.clamp_hi.empty())
        sc.terminal.clamp_hi.assign(sc.n, sc.terminal.xi_max);
    for (auto& v : sc.terminal.clamp_lo) v += eps;
    for (auto& v : sc.terminal.clamp_hi) v += eps;
    return sc;
}

Scenario bump_barrier(Scenario sc, double eps) {
    for (auto& v : sc.barrier.alpha) v += eps;
    for (auto& v : sc.barrier.cap) v += eps;
    sc.barrier.S_plus_max += eps;
    return sc;
}

Scenario bump_drift(Scenario sc, double eps) {
    for (auto& v : sc.generator.a) v += eps;
    return sc;
}

}  // namespace

int run_acceptance(const std::filesystem::path& out_dir, std::ostream& os) {
    std::filesystem::create_directories(out_dir);

    std::vector<Criterion> results;
    auto run_criterion = [&](const std::string& id, const std::string& name,
                             const std::function<std::pair<bool, std::string>()>& body) {
        Criterion c;
        c.id = id;
        c.name = name;
        auto t0 = std::chrono::steady_clock::now();
        try {
            auto [ok, detail] = body();
            c.pass = ok;
            c.detail = detail;
        } catch (const std::exception& e) {
            c.pass = false;
            c.detail = std::string("exception: ") + e.what();
        }
        auto t1 = std::chrono::steady_clock::now();
        c.seconds = std::chrono::duration<double>(t1 - t0).count();
        char line[512];
        std::snprintf(line, sizeof line, "%s  %-28s %-34s %s  (%.2f s)",
                      c.pass ? "PASS" : "FAIL", c.id.c_str(), c.name.c_str(), c.detail.c_str(),
                      c.seconds);
        os << line << "\n";
        results.push_back(std::move(c));
    };

    // shared scenario runs
    Scenario s1 = bundled_scenario("unreflected");
    Scenario s2 = bundled_scenario("quadratic_unreflected");
    Scenario s3 = bundled_scenario("quadratic_reflected");
    Scenario s8 = bundled_scenario("coupled_pair");
    for (const auto& [name, sc] :
         {std::pair<std::string, const Scenario*>{"unreflected", &s1},
          {"quadratic_unreflected", &s2},
          {"quadratic_reflected", &s3},
          {"coupled_pair", &s8}}) {
        std::ofstream f(out_dir / (name + ".json"));
        f << scenario_to_json(*sc).dump(2) << "\n";
    }

    LatticeEngine eng1(s1.d, s1.T, s1.steps, s1.engine_config.node_budget);
    LatticeEngine eng3(s3.d, s3.T, s3.steps, s3.engine_config.node_budget);

    double lattice_y0_c1 = 0.0;  // shared between criteria 1 and 10
    PenaltyRun run3;             // shared by criteria 3..7, 9, 11
    DiscreteSolution direct3;

    run_criterion("criterion-01", "unreflected-reduction", [&] {
        DiscreteSolution sol = solve_penalized(s1, 0.0, eng1);
        lattice_y0_c1 = sol.y0(0, eng1);

        // independent oracle: probability-weighted terminal sum
        const Lattice& lat = eng1.lattice();
        std::size_t LM = lat.layer_size(s1.steps);
        std::vector<double> g(LM), w(1);
        for (std::size_t e = 0; e < LM; ++e) {
            lat.node_state(s1.steps, e, w);
            g[e] = s1.terminal.eval(0, std::span<const double>(w));
        }
        double direct_exp = layer_expectation(lat, s1.steps, g);

        double err = std::abs(lattice_y0_c1 - direct_exp);
        bool k_zero = true;
        for (const auto& layer : sol.dK)
            for (double v : layer) k_zero = k_zero && v == 0.0;
        bool ok = err <= 1e-10 && k_zero;
        return std::pair{ok, "|Y0-E[g]|=" + fmtg(err) + " tol=1e-10, K" +
                                 (k_zero ? "==0" : "!=0")};
    });

    run_criterion("criterion-02", "cole-hopf-unreflected", [&] {
        DiscreteSolution sol = solve_penalized(s2, 0.0, eng1);
        ColeHopfValues ch = cole_hopf_oracle(s2, eng1);
        double err = std::abs(sol.y0(0, eng1) - ch.unreflected);
        return std::pair{err <= 5e-3, "|Y0-oracle|=" + fmtg(err) + " tol=5e-3"};
    });

    run_criterion("criterion-03", "cole-hopf-reflected", [&] {
        run3 = run_penalty_schedule(s3, eng3);
        direct3 = solve_direct_reflected(s3, eng3);
        ColeHopfValues ch = cole_hopf_oracle(s3, eng3);
        double tol = std::max(5e-3, 3.0 / run3.k_max());
        double err = std::abs(run3.limit.y0(0, eng3) - ch.reflected);
        return std::pair{err <= tol, "|Y0-oracle|=" + fmtg(err) + " tol=" + fmtg(tol)};
    });

    run_criterion("criterion-04", "monotone-convergence", [&] {
        double worst = 0.0;
        for (std::size_t j = 0; j + 1 < run3.solutions.size(); ++j) {
            const auto& lo = run3.solutions[j];
            const auto& hi = run3.solutions[j + 1];
            for (std::size_t m = 0; m < lo.Y.size(); ++m)
                for (std::size_t e = 0; e < lo.Y[m].size(); ++e)
                    worst = std::max(worst, lo.Y[m][e] - hi.Y[m][e]);
        }
        return std::pair{worst <= 1e-10,
                         "max monotonicity violation=" + fmtg(worst) + " tol=1e-10"};
    });

    run_criterion("criterion-05", "barrier-attainment", [&] {
        std::vector<double> sf;
        for (const auto& m : run3.metrics) sf.push_back(m.shortfall[0]);
        bool nonincreasing = true;
        for (std::size_t j = 1; j < sf.size(); ++j)
            nonincreasing = nonincreasing && sf[j] <= sf[j - 1] + 1e-12;
        double final_sf = sf.back();
        int have = int(sf.size()) - 1;
        int use = std::min(6, have);
        double mean_ratio = 0.0;
        for (int j = 0; j < use; ++j) {
            std::size_t idx = sf.size() - 1 - j;
            mean_ratio += sf[idx] / sf[idx - 1];
        }
        mean_ratio /= use;
        bool ok = nonincreasing && final_sf <= 1e-2 && mean_ratio <= 0.75;
        return std::pair{ok, std::string(nonincreasing ? "nonincreasing" : "NOT nonincreasing") +
                                 ", shortfall(k_max)=" + fmtg(final_sf) +
                                 ", mean halving ratio=" + fmtg(mean_ratio) + " (<=0.75)"};
    });

    run_criterion("criterion-06", "skorokhod-condition", [&] {
        auto lim = skorokhod_residual(run3.limit, s3, eng3);
        auto dir = skorokhod_residual(direct3, s3, eng3);
        double worst_lim = *std::max_element(lim.begin(), lim.end());
        double worst_dir = *std::max_element(dir.begin(), dir.end());
        bool ok = worst_lim <= 1e-3 && worst_dir == 0.0;
        return std::pair{ok, "limit residual=" + fmtg(worst_lim) + " (tol 1e-3), direct=" +
                                 fmtg(worst_dir) + " (exact 0)"};
    });

    run_criterion("criterion-07", "optimal-stopping-representation", [&] {
        double tol = std::max(1e-2, 3.0 / run3.k_max());
        auto U = optimal_stopping_value(run3.limit, s3, eng3);
        double gap_limit = representation_gap(U, run3.limit);

        // zero-driver variant: the Snell program and the direct scheme are
        // algebraically the same recursion there
        Scenario s3f0 = s3;
        s3f0.generator.gamma = {0.0};
        DiscreteSolution direct_f0 = solve_direct_reflected(s3f0, eng3);
        auto U0 = optimal_stopping_value(direct_f0, s3f0, eng3);
        double gap_f0 = representation_gap(U0, direct_f0);

        bool ok = gap_limit <= tol && gap_f0 <= 1e-8;
        return std::pair{ok, "limit gap=" + fmtg(gap_limit) + " (tol " + fmtg(tol) +
                                 "), f=0 gap=" + fmtg(gap_f0) + " (tol 1e-8)"};
    });

    run_criterion("criterion-08", "comparison-theorem", [&] {
        LatticeEngine eng8(s8.d, s8.T, s8.steps, s8.engine_config.node_budget);
        ScheduleOptions full;
        full.tol_limit = 0.0;  // run every level so the runs stay aligned
        PenaltyRun base = run_penalty_schedule(s8, eng8, full);

        double worst = 0.0;
        std::string worst_bump;
        for (const auto& [label, bumped] :
             {std::pair<std::string, Scenario>{"xi+0.1", bump_terminal(s8, 0.1)},
              {"S+0.1", bump_barrier(s8, 0.1)},
              {"a+0.1", bump_drift(s8, 0.1)}}) {
            if (!comparison_hypotheses_hold(s8, bumped))
                return std::pair{false, "hypothesis spot-check failed for " + label};
            PenaltyRun upper = run_penalty_schedule(bumped, eng8, full);
            ComparisonReport rep = compare_runs(base, upper, 1e-9, true);
            if (rep.max_violation > worst) {
                worst = rep.max_violation;
                worst_bump = label;
            }
        }
        bool ok = worst <= 1e-9;
        return std::pair{ok, "max (Y - Y_bumped)^+ = " + fmtg(worst) + " tol=1e-9" +
                                 (worst_bump.empty() ? "" : " (worst: " + worst_bump + ")")};
    });

    run_criterion("criterion-09", "uniform-bound-diagnostics", [&] {
        std::vector<std::vector<double>> ysup, bmo, kt2, kt4;
        int clamps = 0;
        for (const auto& m : run3.metrics) {
            ysup.push_back({m.y_sup});
            bmo.push_back(m.bmo);
            kt2.push_back(m.kt_p2);
            kt4.push_back(m.kt_p4);
            clamps += m.clamp_warnings;
        }
        double r_y = component_ratio(ysup, 0);
        double r_bmo = component_ratio(bmo, 0);
        double r_kt2 = component_ratio(kt2, 0);
        double r_kt4 = component_ratio(kt4, 0);
        bool ok = r_y <= 2.0 && r_bmo <= 2.0 && r_kt2 <= 2.0 && r_kt4 <= 2.0 && clamps == 0;
        return std::pair{ok, "ratios: supY=" + fmtg(r_y) + " bmo=" + fmtg(r_bmo) +
                                 " KT_p2=" + fmtg(r_kt2) + " KT_p4=" + fmtg(r_kt4) +
                                 " (<=2), clamps=" + std::to_string(clamps)};
    });

    run_criterion("criterion-10", "engine-agreement", [&] {
        const int n_seeds = 10;
        std::vector<double> y0s(n_seeds);
        for (int s = 0; s < n_seeds; ++s) {
            PathBundle pb = simulate_paths(s1.engine_config.seed + std::uint64_t(s),
                                           s1.engine_config.paths, s1.steps, s1.d, s1.T);
            McEngine mc(std::move(pb), RegressionBasis{s1.engine_config.basis_degree, s1.d});
            DiscreteSolution sol = solve_penalized(s1, 0.0, mc);
            y0s[s] = sol.y0(0, mc);
        }
        double mean = 0.0;
        for (double v : y0s) mean += v;
        mean /= n_seeds;
        double var = 0.0;
        for (double v : y0s) var += (v - mean) * (v - mean);
        double se = std::sqrt(var / (n_seeds * (n_seeds - 1)));
        double err = std::abs(mean - lattice_y0_c1);
        bool ok = err <= 3.0 * se;
        return std::pair{ok, "|mc-lattice|=" + fmtg(err) + " vs 3se=" + fmtg(3.0 * se)};
    });

    run_criterion("criterion-11", "uniqueness-probe", [&] {
        UniquenessReport rep = uniqueness_probe(s3, eng3, run3.k_max());
        return std::pair{rep.pass(1e-9),
                         "max nodewise discrepancy=" + fmtg(rep.max_discrepancy) + " tol=1e-9"};
    });

    // per-criterion runtime budgets (seconds)
    const std::vector<std::pair<std::string, double>> budgets = {
        {"criterion-01", 1.0}, {"criterion-02", 2.0},  {"criterion-03", 10.0},
        {"criterion-08", 30.0}, {"criterion-10", 60.0},
    };
    for (auto& c : results) {
        for (const auto& [id, limit] : budgets) {
            if (c.id == id && c.seconds >= limit) {
                c.pass = false;
                c.detail += " [runtime " + fmtg(c.seconds) + "s exceeded " + fmtg(limit) + "s]";
                os << "FAIL  " << c.id << " runtime budget exceeded\n";
            }
        }
    }

    int failures = 0;
    json out;
    out["version"] = kVersion;
    out["criteria"] = json::array();
    for (const auto& c : results) {
        if (!c.pass) ++failures;
        out["criteria"].push_back(json{{"id", c.id},
                                       {"name", c.name},
                                       {"pass", c.pass},
                                       {"detail", c.detail},
                                       {"seconds", c.seconds}});
    }
    out["failures"] = failures;
    {
        std::ofstream f(out_dir / "acceptance_summary.json");
        f << out.dump(2) << "\n";
    }
    os << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAILED")
       << "\n";
    return failures;
}

}  // namespace rbsde
