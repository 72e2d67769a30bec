#ifndef RBSDE_MODEL_HPP
#define RBSDE_MODEL_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace rbsde {

/**
 * Driver family f^i(t, y, z^i) for an n-component system driven by a
 * d-dimensional Brownian motion. The built-in "linear_quadratic" family is
 *
 *     f^i(t, y, z^i) = a_i + sum_j c_ij y^j + b_i . z^i + (gamma_i / 2) |z^i|^2
 *
 * with constant coefficients (constants are the piecewise-constant-in-t case
 * the discrete solver resolves exactly). A user-supplied evaluable driver can
 * be attached through `custom`; it must come with a declared structural
 * constant so the growth validator has something to check against.
 */
struct GeneratorSpec {
    std::string family = "linear_quadratic";

    // linear_quadratic coefficients
    std::vector<double> a;                  // n
    std::vector<std::vector<double>> c;     // n x n, c_ij >= 0 for j != i
    std::vector<std::vector<double>> b;     // n x d
    std::vector<double> gamma;              // n, gamma_i >= 0

    // Declared structural constant C with |f^i| <= C (1 + |y| + |z^i|^2).
    // Negative means "derive from coefficients" (built-in family only).
    double declared_C = -1.0;

    // Extension point: i, t, y (n components), z^i (d components) -> real.
    using CustomFn =
        std::function<double(int, double, std::span<const double>, std::span<const double>)>;
    CustomFn custom;

    double eval(int i, double t, std::span<const double> y, std::span<const double> zi) const;

    /// Conservative constant implied by the linear_quadratic coefficients.
    double implied_C(int n, int d) const;

    /// Effective declared constant: declared_C if set, else implied_C.
    double structural_C(int n, int d) const;

    /// Closed-form sufficient condition for off-diagonal monotonicity.
    bool offdiag_nonneg(int n) const;

    bool is_builtin() const { return !custom; }
};

/**
 * Lower obstacle S^i_t = h^i(t, w). Built-in "clamped_affine":
 * h^i(t, w) = min(cap_i, alpha_i + beta_i . w + delta_i t). Barriers may be
 * arbitrarily negative; evaluation floors them at a large negative constant
 * so lattice arithmetic stays finite.
 */
struct BarrierSpec {
    std::string family = "clamped_affine";
    std::vector<double> cap;                // n
    std::vector<double> alpha;              // n
    std::vector<std::vector<double>> beta;  // n x d
    std::vector<double> delta;              // n
    double S_plus_max = 0.0;                // declared bound on sup h^+

    using CustomFn = std::function<double(int, double, std::span<const double>)>;
    CustomFn custom;

    static constexpr double kFloor = -1e12;

    double eval(int i, double t, std::span<const double> w) const;
};

/**
 * Terminal data xi^i = g^i(w). Built-in "clamped_affine":
 * g^i(w) = clamp(alpha_i + beta_i . w, clamp_lo_i, clamp_hi_i), with the
 * clamp window defaulting to [-xi_max, xi_max]. Per-component windows make
 * shifted terminals (g + const) representable, which the comparison checks
 * rely on.
 */
struct TerminalSpec {
    std::string family = "clamped_affine";
    std::vector<double> alpha;              // n
    std::vector<std::vector<double>> beta;  // n x d
    double xi_max = 1.0;                    // declared bound on sup |g|
    std::vector<double> clamp_lo;           // n, optional (default -xi_max)
    std::vector<double> clamp_hi;           // n, optional (default +xi_max)

    using CustomFn = std::function<double(int, std::span<const double>)>;
    CustomFn custom;

    double eval(int i, std::span<const double> w) const;
};

/// Geometric penalty levels k_j = k0 * growth^j, j = 0..count-1.
struct PenaltySchedule {
    double k0 = 1.0;
    double growth = 2.0;
    int count = 13;

    double level(int j) const;
    double max_level() const { return level(count - 1); }
};

/// Numerical knobs shared by both expectation engines and the solver.
struct EngineConfig {
    std::size_t node_budget = 4'000'000;  // lattice: max nodes in one layer
    std::uint64_t seed = 20240801;        // mc: stream seed
    std::size_t paths = 20'000;           // mc: path count N
    int basis_degree = 3;                 // mc: polynomial total degree

    double picard_tol = 1e-12;
    int picard_max_iter = 50;
    double clamp_multiplier = 10.0;  // C_clamp = mult * (xi_max + max(S_plus_max,0) + 1)

    double tol_limit = 1e-4;      // schedule convergence threshold on sup-norm deltas
    double tol_skorokhod = 1e-3;  // limit-solution Skorokhod residual
    double tol_contact = 1e-3;    // Y - S <= tol_contact counts as barrier contact
    double tol_flat = 1e-3;       // K accumulated before first contact must stay below

    double clamp_bound(double xi_max, double s_plus_max) const;
};

/// Complete problem description. Immutable after construction; validators and
/// solvers never mutate it.
struct Scenario {
    int n = 1;        // equation components
    int d = 1;        // Brownian dimension
    double T = 1.0;   // horizon
    int steps = 100;  // uniform time grid 0 = t_0 < ... < t_M = T

    GeneratorSpec generator;
    BarrierSpec barrier;
    TerminalSpec terminal;
    PenaltySchedule penalty_schedule;
    EngineConfig engine_config;

    double dt() const { return T / steps; }
    double time(int m) const { return (m == steps) ? T : m * dt(); }

    /// Structural invariants (positivity, shape agreement). Throws InvalidInput.
    void check_shapes() const;
};

// ---------------------------------------------------------------------------
// Sample-based assumption validators
// ---------------------------------------------------------------------------

/// One growth sample: the driver is probed at (t, y, z) with z holding one
/// d-row per component.
struct GrowthSample {
    double t = 0.0;
    std::vector<double> y;               // n
    std::vector<std::vector<double>> z;  // n x d
};

/// One off-diagonal monotonicity probe: y and y_bar agree in component i and
/// satisfy y^j <= y_bar^j off the diagonal.
struct MonotonePair {
    double t = 0.0;
    int i = 0;
    std::vector<double> y;      // n
    std::vector<double> y_bar;  // n
    std::vector<double> zi;     // d
};

struct BoundsSample {
    double t = 0.0;
    std::vector<double> w;  // d
};

struct AssumptionReport {
    std::string assumption;  // "growth", "offdiag_monotone", "bounds"
    bool pass = true;
    double estimated_C = 0.0;  // growth: worst sampled ratio; others: worst margin
    std::string witness;       // populated whenever pass == false
    bool has_witness() const { return !witness.empty(); }
};

AssumptionReport validate_growth(const GeneratorSpec& gen, int n, int d,
                                 std::span<const GrowthSample> samples);

AssumptionReport validate_off_diagonal_monotonicity(const GeneratorSpec& gen, int n, int d,
                                                    std::span<const MonotonePair> pairs,
                                                    double tol = 1e-12);

AssumptionReport validate_bounds(const BarrierSpec& barrier, const TerminalSpec& terminal, int n,
                                 int d, double T, std::span<const BoundsSample> samples);

/// Deterministic default probe sets covering [0,T] x a +-3 sqrt(T) state box.
std::vector<GrowthSample> default_growth_samples(const Scenario& sc);
std::vector<MonotonePair> default_monotone_pairs(const Scenario& sc);
std::vector<BoundsSample> default_bounds_samples(const Scenario& sc);

/// Runs all validators with the default samples.
std::vector<AssumptionReport> validate_scenario(const Scenario& sc);

/// Gate used by every solver entry point. Throws InvalidInput carrying the
/// first failing report's witness.
void require_valid(const Scenario& sc);

}  // namespace rbsde

#endif  // RBSDE_MODEL_HPP
