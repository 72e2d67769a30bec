#ifndef RBSDE_ENGINE_HPP
#define RBSDE_ENGINE_HPP

#include <span>
#include <vector>

namespace rbsde {

enum class EngineKind { Lattice, MonteCarlo };

/**
 * Expectation-engine contract shared by the lattice and Monte Carlo backends.
 *
 * A backend exposes, for a fixed horizon T split into M uniform steps, a
 * per-layer population of states (lattice nodes or simulated paths) together
 * with the two backward operators the solver needs:
 *
 *   cond_exp : values on layer m+1 -> conditional expectation on layer m
 *   cond_z   : values on layer m+1 -> E_m[value dW^T] / dt on layer m
 *
 * plus time-0 expectations of layer fields. Engines are immutable after
 * construction and the operators are pure per-layer maps.
 */
class ExpectationEngine {
public:
    virtual ~ExpectationEngine() = default;

    virtual EngineKind kind() const = 0;
    virtual const char* name() const = 0;
    virtual int dim() const = 0;       // d
    virtual int steps() const = 0;     // M
    virtual double horizon() const = 0;
    double dt() const { return horizon() / steps(); }

    /// Population size of layer m (lattice: (m+1)^d, mc: path count).
    virtual std::size_t layer_size(int m) const = 0;

    /// States at layer m, element-major: out[e*d + r]. out must have size
    /// layer_size(m) * d.
    virtual void states(int m, std::span<double> out) const = 0;

    /// next has layer_size(m+1) entries, out layer_size(m).
    virtual void cond_exp(int m, std::span<const double> next, std::span<double> out) const = 0;

    /// next has layer_size(m+1) entries, out layer_size(m) * d entries laid
    /// out element-major: out[e*d + r].
    virtual void cond_z(int m, std::span<const double> next, std::span<double> out) const = 0;

    /// Time-0 expectation of a layer-m field (probability-weighted sum on the
    /// lattice, plain average over paths).
    virtual double expect(int m, std::span<const double> field) const = 0;
};

}  // namespace rbsde

#endif  // RBSDE_ENGINE_HPP
