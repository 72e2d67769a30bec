#ifndef RBSDE_LATTICE_HPP
#define RBSDE_LATTICE_HPP

#include <cstddef>
#include <span>
#include <vector>

#include "rbsde/engine.hpp"

namespace rbsde {

/**
 * Deterministic recombining lattice for d-dimensional Brownian motion.
 *
 * A node at layer m is a d-tuple of integers (j_1, ..., j_d) with |j_r| <= m
 * and j_r = m (mod 2); its state is w_r = j_r * sqrt(dt). Every node has 2^d
 * children at layer m+1 (each coordinate moves by +-sqrt(dt)), all with
 * transition probability 2^-d, so increments match the first two Brownian
 * moments exactly and the state process is a martingale.
 *
 * Layer m holds (m+1)^d nodes. Nodes are indexed row-major over the
 * per-coordinate offsets c_r = (j_r + m) / 2 in {0..m}; a child keeps c_r on
 * a down move and gets c_r + 1 on an up move.
 */
struct Lattice {
    int d = 1;
    int M = 1;
    double T = 1.0;
    double dt = 1.0;
    double sqrt_dt = 1.0;

    std::size_t layer_size(int m) const;

    /// State of node `idx` at layer m; out must have size d.
    void node_state(int m, std::size_t idx, std::span<double> out) const;

    /// Indices at layer m+1 of the 2^d children of node `idx` at layer m.
    std::vector<std::size_t> children(int m, std::size_t idx) const;

    /// Probability of each layer-m node under the 2^-d transition kernel
    /// (product of binomial weights). Sums to 1 up to roundoff.
    std::vector<double> layer_weights(int m) const;
};

/// Builds the enumeration after checking the (M+1)^d node budget.
Lattice build_lattice(int d, double T, int M, std::size_t node_budget = 4'000'000);

/// Parent value = mean of its 2^d children. Linear, monotone, maps constants
/// to themselves. next has layer_size(m+1) entries, out layer_size(m).
void cond_exp(const Lattice& lat, int m, std::span<const double> next, std::span<double> out);

/// Z_m[e*d + r] = E_m[next * dW^r] / dt over the 2^d children; increments are
/// exactly +-sqrt(dt). Constant fields map to exactly zero.
void cond_z(const Lattice& lat, int m, std::span<const double> next, std::span<double> out);

/// Direct probability-weighted sum of a layer-m field.
double layer_expectation(const Lattice& lat, int m, std::span<const double> field);

class LatticeEngine final : public ExpectationEngine {
public:
    explicit LatticeEngine(Lattice lat) : lat_(std::move(lat)) {}
    LatticeEngine(int d, double T, int M, std::size_t node_budget = 4'000'000)
        : lat_(build_lattice(d, T, M, node_budget)) {}

    EngineKind kind() const override { return EngineKind::Lattice; }
    const char* name() const override { return "lattice"; }
    int dim() const override { return lat_.d; }
    int steps() const override { return lat_.M; }
    double horizon() const override { return lat_.T; }
    std::size_t layer_size(int m) const override { return lat_.layer_size(m); }
    void states(int m, std::span<double> out) const override;
    void cond_exp(int m, std::span<const double> next, std::span<double> out) const override {
        rbsde::cond_exp(lat_, m, next, out);
    }
    void cond_z(int m, std::span<const double> next, std::span<double> out) const override {
        rbsde::cond_z(lat_, m, next, out);
    }
    double expect(int m, std::span<const double> field) const override {
        return layer_expectation(lat_, m, field);
    }

    const Lattice& lattice() const { return lat_; }

private:
    Lattice lat_;
};

}  // namespace rbsde

#endif  // RBSDE_LATTICE_HPP
