#ifndef RBSDE_VERIFY_HPP
#define RBSDE_VERIFY_HPP

#include <string>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/model.hpp"
#include "rbsde/reflection.hpp"
#include "rbsde/solver.hpp"

namespace rbsde {

struct CheckResult {
    std::string name;
    bool pass = true;
    double residual = 0.0;
    double tolerance = 0.0;
    std::string worst;  // layer/element of the worst violation when pass == false
};

struct VerificationReport {
    std::string scenario_fingerprint;
    std::vector<CheckResult> checks;
    bool all_pass() const;
    const CheckResult* find(const std::string& name) const;
};

/**
 * Optimal-stopping value of the solved problem: the dynamic program
 *   U_M = g,  U_m^i = max(h^i(t_m, .), cond_exp(U_{m+1}^i) + dt * f^i(t_m, Y_m, Z_m^i))
 * with the driver frozen along the supplied solution. Returns all layers,
 * component-major like DiscreteSolution::Y.
 */
std::vector<std::vector<double>> optimal_stopping_value(const DiscreteSolution& sol,
                                                        const Scenario& sc,
                                                        const ExpectationEngine& eng);

/// max over components/layers/population of |U - Y|.
double representation_gap(const std::vector<std::vector<double>>& U, const DiscreteSolution& sol);

/**
 * Checks that K is flat before the barrier is first touched: one backward
 * sweep accumulates expected dK from each (m, element) until the first layer
 * with Y - S <= tol_contact, and the time-0 expectation of that accumulation
 * must stay below tol_flat at every starting layer.
 */
CheckResult hitting_time_check(const DiscreteSolution& sol, const Scenario& sc,
                               const ExpectationEngine& eng, double tol_contact = 1e-3,
                               double tol_flat = 1e-3);

struct ColeHopfValues {
    double unreflected = 0.0;  // (1/gamma) ln <e^{gamma g}> by direct terminal-layer sum
    double reflected = 0.0;    // (1/gamma) ln V_0, V_m = max(e^{gamma h(t_m,.)}, E_m V_{m+1})
};

/**
 * Ground truth for the scalar purely-quadratic driver f = (gamma/2) |z|^2:
 * the exponential change of variable V = e^{gamma Y} removes the quadratic
 * term, so V is a (reflected) linear problem solved by an independent DP that
 * shares no code with the solver. Requires n = 1, gamma > 0, a = c = b = 0.
 */
ColeHopfValues cole_hopf_oracle(const Scenario& sc, const ExpectationEngine& eng);

struct ComparisonReport {
    double max_violation = 0.0;       // max (Y_A - Y_B)^+ over levels/components/layers/nodes
    std::vector<double> per_level;    // same, split by schedule level
    double limit_violation = 0.0;
    bool pass = false;                // max_violation <= tolerance
    double tolerance = 1e-9;
    std::string worst;
    bool hypotheses_asserted = false;  // caller's statement that the data are ordered
};

/**
 * Checks Y_A <= Y_B at every schedule level and in the limit. The caller
 * asserts the data ordering (xi_A <= xi_B, S_A <= S_B, driver dominated on
 * the diagonal partial order) and that assertion is recorded in the report;
 * shapes and levels must match exactly.
 */
ComparisonReport compare_runs(const PenaltyRun& run_A, const PenaltyRun& run_B,
                              double tolerance = 1e-9, bool hypotheses_asserted = false);

/// Discrete surrogate of sup_t E_t integral_t^T |Z^i|^2 ds: one backward
/// sweep of R_m = |Z_m|^2 dt + cond_exp(R_{m+1}), maximized over layers and
/// nodes. Lattice engine only; the regression backend has no almost-sure
/// conditional bound to offer.
std::vector<double> bmo_estimate(const DiscreteSolution& sol, const ExpectationEngine& eng);

/// <(K_T^i)^p>^(1/p) with K_T^i the pathwise sum of dK. Exact binomial moment
/// recursion on the lattice (integer p), plain pathwise average on mc.
std::vector<double> k_moment(const DiscreteSolution& sol, int p, const ExpectationEngine& eng);

}  // namespace rbsde

#endif  // RBSDE_VERIFY_HPP
