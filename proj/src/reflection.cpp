#include "rbsde/reflection.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rbsde/errors.hpp"
#include "rbsde/verify.hpp"

namespace rbsde {

namespace {

double sup_abs_delta(const DiscreteSolution& a, const DiscreteSolution& b) {
    double worst = 0.0;
    for (std::size_t m = 0; m < a.Y.size(); ++m)
        for (std::size_t e = 0; e < a.Y[m].size(); ++e)
            worst = std::max(worst, std::abs(a.Y[m][e] - b.Y[m][e]));
    return worst;
}

double sup_abs(const DiscreteSolution& a) {
    double worst = 0.0;
    for (const auto& layer : a.Y)
        for (double v : layer) worst = std::max(worst, std::abs(v));
    return worst;
}

}  // namespace

std::vector<double> barrier_shortfall(const DiscreteSolution& sol, const Scenario& sc,
                                      const ExpectationEngine& eng) {
    std::vector<double> worst(sc.n, 0.0);
    std::vector<double> w;
    for (int m = 0; m <= sol.M; ++m) {
        std::size_t L = sol.layer_nodes(m);
        w.resize(L * sc.d);
        eng.states(m, w);
        double t = sc.time(m);
        for (std::size_t e = 0; e < L; ++e) {
            std::span<const double> we(w.data() + e * sc.d, std::size_t(sc.d));
            for (int i = 0; i < sc.n; ++i) {
                double s = sc.barrier.eval(i, t, we);
                double y = sol.Y[m][std::size_t(i) * L + e];
                worst[i] = std::max(worst[i], s - y);
            }
        }
    }
    for (double& v : worst) v = std::max(v, 0.0);
    return worst;
}

std::vector<double> skorokhod_residual(const DiscreteSolution& sol, const Scenario& sc,
                                       const ExpectationEngine& eng) {
    std::vector<double> res(sc.n, 0.0);
    std::vector<double> w, field;
    for (int m = 0; m < sol.M; ++m) {
        std::size_t L = sol.layer_nodes(m);
        w.resize(L * sc.d);
        eng.states(m, w);
        double t = sc.time(m);
        field.resize(L);
        for (int i = 0; i < sc.n; ++i) {
            for (std::size_t e = 0; e < L; ++e) {
                std::span<const double> we(w.data() + e * sc.d, std::size_t(sc.d));
                double s = sc.barrier.eval(i, t, we);
                double y = sol.Y[m][std::size_t(i) * L + e];
                field[e] = std::max(y - s, 0.0) * sol.dK[m][std::size_t(i) * L + e];
            }
            res[i] += eng.expect(m, field);
        }
    }
    return res;
}

PenaltyRun run_penalty_schedule(const Scenario& sc, const ExpectationEngine& eng,
                                const ScheduleOptions& opts) {
    require_valid(sc);

    PenaltyRun run;
    run.tol_limit = opts.tol_limit >= 0.0 ? opts.tol_limit : sc.engine_config.tol_limit;

    const PenaltySchedule& sched = sc.penalty_schedule;
    for (int j = 0; j < sched.count; ++j) {
        double k = sched.level(j);
        auto t0 = std::chrono::steady_clock::now();
        DiscreteSolution sol;
        try {
            sol = solve_penalized(sc, k, eng, opts.solve);
        } catch (NonConvergence& nc) {
            throw NonConvergence(std::string(nc.what()) + " (penalty level k=" +
                                     std::to_string(k) + ")",
                                 nc.layer, nc.residual);
        }
        auto t1 = std::chrono::steady_clock::now();

        ScheduleMetrics met;
        met.k = k;
        met.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        met.sup_delta_prev =
            run.solutions.empty() ? 0.0 : sup_abs_delta(sol, run.solutions.back());
        met.y_sup = sup_abs(sol);
        met.y0.resize(sc.n);
        for (int i = 0; i < sc.n; ++i) met.y0[i] = sol.y0(i, eng);
        met.shortfall = barrier_shortfall(sol, sc, eng);
        met.skorokhod = skorokhod_residual(sol, sc, eng);
        met.kt_p2 = k_moment(sol, 2, eng);
        met.kt_p4 = k_moment(sol, 4, eng);
        if (eng.kind() == EngineKind::Lattice) met.bmo = bmo_estimate(sol, eng);
        met.picard_max = sol.picard.max_iters;
        met.picard_mean = sol.picard.mean_iters();
        met.clamp_warnings = sol.clamp_warnings;

        bool settled = j > 0 && met.sup_delta_prev < run.tol_limit;

        run.ks.push_back(k);
        run.metrics.push_back(std::move(met));
        run.solutions.push_back(std::move(sol));

        if (settled) {
            run.converged = true;
            break;
        }
    }

    run.limit = run.solutions.back();
    run.limit.tag = "limit";
    return run;
}

UniquenessReport uniqueness_probe(const Scenario& sc, const ExpectationEngine& eng, double k) {
    if (k < 0.0) k = sc.penalty_schedule.max_level();

    DiscreteSolution base = solve_penalized(sc, k, eng);

    UniquenessReport rep;
    auto probe = [&](const std::string& name, const SolveOptions& o) {
        DiscreteSolution alt = solve_penalized(sc, k, eng, o);
        double dev = sup_abs_delta(base, alt);
        rep.per_perturbation.emplace_back(name, dev);
        rep.max_discrepancy = std::max(rep.max_discrepancy, dev);
    };

    probe("rerun_identical", SolveOptions{});
    probe("picard_start_clamp_upper", SolveOptions{PicardStart::ClampUpper, false});
    probe("picard_start_clamp_lower", SolveOptions{PicardStart::ClampLower, false});
    probe("reversed_node_order", SolveOptions{PicardStart::Continuation, true});
    return rep;
}

}  // namespace rbsde
