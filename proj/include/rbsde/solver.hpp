#ifndef RBSDE_SOLVER_HPP
#define RBSDE_SOLVER_HPP

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/model.hpp"

namespace rbsde {

struct PicardStats {
    int max_iters = 0;
    std::int64_t total_iters = 0;
    std::int64_t calls = 0;
    double mean_iters() const { return calls ? double(total_iters) / double(calls) : 0.0; }
};

/**
 * Output of one backward solve. Layer fields are stored component-major:
 *   Y[m]  has n * L_m entries, Y[m][i*L_m + e]
 *   Z[m]  has n * L_m * d entries, Z[m][(i*L_m + e)*d + r]
 *   dK[m] has n * L_m entries, nonnegative
 * with L_m the engine's layer size. Y[M] equals g(state) exactly; for
 * penalized solves dK_m^i = dt * k * (Y_m^i - S_m^i)^- identically.
 */
struct DiscreteSolution {
    std::string tag;        // "k=<value>", "direct" or "limit"
    double k = 0.0;         // penalty level (meaningful unless direct)
    bool is_direct = false;
    int n = 1;
    int d = 1;
    int M = 1;
    double T = 1.0;
    std::vector<std::vector<double>> Y;   // layers 0..M
    std::vector<std::vector<double>> Z;   // layers 0..M-1
    std::vector<std::vector<double>> dK;  // layers 0..M-1
    PicardStats picard;
    int clamp_warnings = 0;

    double dt() const { return T / M; }
    std::size_t layer_nodes(int m) const { return Y[m].size() / std::size_t(n); }
    /// Y value at layer 0 for component i (expectation over the layer-0
    /// population; a single root node on the lattice).
    double y0(int i, const ExpectationEngine& eng) const;
};

/// Unique fixed point of y = a + dt*k*(y - S)^- :
/// y = a when a >= S, else (a + dt*k*S) / (1 + dt*k). Monotone nondecreasing
/// in a, S and (for a < S) in k; tends to max(a, S) as k -> infinity.
double implicit_penalty_step(double a, double S, double k, double dt);

/// Options probed by the uniqueness check; defaults are the production path.
enum class PicardStart { Continuation, ClampUpper, ClampLower };
struct SolveOptions {
    PicardStart picard_start = PicardStart::Continuation;
    bool reverse_nodes = false;  // process layer elements in reverse order
};

/**
 * Solves the n-dimensional inner system at one node:
 *   y^i = implicit_penalty_step(a^i + dt * f^i(t, y, z^i), S^i, k, dt)
 * by Jacobi fixed-point iteration with the driver lagged, starting from
 * y = a. Returns the iteration count; throws NonConvergence if the sup-norm
 * change fails to drop below tol within max_iter sweeps.
 *
 * a, S, y_out have n entries; z is the node's n x d block, z[i*d + r].
 */
int picard_step(const GeneratorSpec& gen, int n, int d, double t, std::span<const double> a,
                std::span<const double> z, std::span<const double> S, double k, double dt,
                double tol, int max_iter, std::span<double> y_out);

/**
 * Backward induction for the penalized system at level k:
 *   Y_M = g;  for m = M-1..0:
 *     a = cond_exp(Y_{m+1}), Z_m = cond_z(Y_{m+1}),
 *     Y_m = picard_step(...), dK_m = dt * k * (Y_m - S_m)^-.
 * The penalty is treated implicitly (closed form), so stability does not
 * degrade as k grows; Z is frozen before the Picard loop.
 */
DiscreteSolution solve_penalized(const Scenario& sc, double k, const ExpectationEngine& eng,
                                 const SolveOptions& opts = {});

/**
 * Same recursion with the reflection applied exactly:
 *   y^i = max(S_m^i, a^i + dt * f^i(t, y, z^i)),  dK_m^i = (y^i - (a^i + dt f^i))^+.
 * Serves as the k = infinity cross-check for the penalty schedule.
 */
DiscreteSolution solve_direct_reflected(const Scenario& sc, const ExpectationEngine& eng,
                                        const SolveOptions& opts = {});

}  // namespace rbsde

#endif  // RBSDE_SOLVER_HPP
