#ifndef RBSDE_REFLECTION_HPP
#define RBSDE_REFLECTION_HPP

#include <string>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/model.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

/// Per-level diagnostics recorded while the penalty schedule runs.
struct ScheduleMetrics {
    double k = 0.0;
    double sup_delta_prev = 0.0;          // sup-norm |Y - Y_previous-level|, 0 for the first
    double y_sup = 0.0;                   // sup-norm of Y over all layers
    std::vector<double> y0;               // per component
    std::vector<double> shortfall;        // max (S - Y)^+, per component
    std::vector<double> skorokhod;        // sum_m <(Y-S)^+ dK>, per component
    std::vector<double> kt_p2;            // <K_T^2>^(1/2), per component
    std::vector<double> kt_p4;            // <K_T^4>^(1/4), per component
    std::vector<double> bmo;              // lattice engine only, empty otherwise
    int picard_max = 0;
    double picard_mean = 0.0;
    int clamp_warnings = 0;
    double wall_ms = 0.0;
};

/**
 * One sweep of the penalty schedule: solutions and metrics per level, the
 * extracted limit (a copy of the final level, retagged "limit") and whether
 * the sup-norm deltas certified convergence before the schedule ran out.
 */
struct PenaltyRun {
    std::vector<double> ks;                    // strictly increasing levels actually run
    std::vector<DiscreteSolution> solutions;   // one per level, same order
    std::vector<ScheduleMetrics> metrics;      // one per level
    DiscreteSolution limit;
    bool converged = false;
    double tol_limit = 1e-4;

    double k_max() const { return ks.empty() ? 0.0 : ks.back(); }
};

struct ScheduleOptions {
    double tol_limit = -1.0;  // < 0: take the scenario's engine_config value
    SolveOptions solve;
};

/**
 * Solves the penalized system for each k_j = k0 * growth^j in turn, recording
 * metrics, and stops once the sup-norm delta between consecutive Y's falls
 * below tol_limit. If the schedule is exhausted first the run is flagged
 * unconverged; the limit is the last iterate either way (monotonicity plus
 * the direct-scheme bound bracket it, so no extrapolation is attempted).
 */
PenaltyRun run_penalty_schedule(const Scenario& sc, const ExpectationEngine& eng,
                                const ScheduleOptions& opts = {});

/// Max over layers and population of (S_m^i - Y_m^i)^+, per component.
std::vector<double> barrier_shortfall(const DiscreteSolution& sol, const Scenario& sc,
                                      const ExpectationEngine& eng);

/// sum_m <(Y_m^i - S_m^i)^+ * dK_m^i> with <.> the time-0 expectation.
/// Zero by construction for penalized solutions (dK > 0 only where Y < S)
/// and for the direct scheme (dK > 0 only where y was projected onto S);
/// for the extracted limit it certifies that K grows only where Y ~ S.
std::vector<double> skorokhod_residual(const DiscreteSolution& sol, const Scenario& sc,
                                       const ExpectationEngine& eng);

struct UniquenessReport {
    double max_discrepancy = 0.0;
    std::vector<std::pair<std::string, double>> per_perturbation;
    bool pass(double tol = 1e-9) const { return max_discrepancy <= tol; }
};

/**
 * Re-solves the same problem under numerically equivalent configurations
 * (Picard started from the clamp bounds instead of the continuation value,
 * reversed node ordering) and reports the worst nodewise |Y - Y_baseline|.
 * k < 0 means "use the scenario's top schedule level".
 */
UniquenessReport uniqueness_probe(const Scenario& sc, const ExpectationEngine& eng,
                                  double k = -1.0);

}  // namespace rbsde

#endif  // RBSDE_REFLECTION_HPP
