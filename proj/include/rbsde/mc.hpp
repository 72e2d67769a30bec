#ifndef RBSDE_MC_HPP
#define RBSDE_MC_HPP

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rbsde/engine.hpp"

namespace rbsde {

/**
 * Simulated Brownian path bundle: N paths, M steps, d coordinates.
 * Increments are i.i.d. N(0, dt); states are cumulative sums from 0.
 * Immutable after simulation.
 */
struct PathBundle {
    std::uint64_t seed = 0;
    std::size_t N = 0;
    int M = 0;
    int d = 1;
    double T = 1.0;
    std::vector<double> dW;  // N x M x d, row-major [((p*M)+m)*d + r]
    std::vector<double> W;   // N x (M+1) x d, row-major [((p*(M+1))+m)*d + r]

    double dt() const { return T / M; }
    double increment(std::size_t p, int m, int r) const {
        return dW[(p * M + m) * d + r];
    }
    double state(std::size_t p, int m, int r) const {
        return W[(p * (M + 1) + m) * d + r];
    }
};

PathBundle simulate_paths(std::uint64_t seed, std::size_t N, int M, int d, double T);

/// Binary dump for reproducibility audits. Layout: header
/// {seed u64, N u64, M u64, d u64, T f64} then the increments row-major as
/// 64-bit little-endian floats. States are recomputed on load.
void dump_bundle(const PathBundle& bundle, const std::filesystem::path& path);
PathBundle load_bundle(const std::filesystem::path& path);

/**
 * Tensor-truncated polynomial features of the d-dimensional state, all
 * monomials of total degree <= degree. Always includes the constant.
 */
struct RegressionBasis {
    int degree = 3;
    int d = 1;

    std::size_t size() const;
    /// Writes size() features of state w (d entries) into out.
    void eval(std::span<const double> w, std::span<double> out) const;
    std::string feature_name(std::size_t j) const;
    /// Exponent tuple of feature j, one entry per coordinate.
    std::vector<int> exponents(std::size_t j) const;
};

/**
 * Ordinary least squares of per-path values on basis(W_m), evaluated back at
 * each path's state. Solved by column-pivoted Householder QR with relative
 * rank tolerance 1e-10; rank loss raises RegressionError naming the first
 * feature outside the identified independent set.
 */
std::vector<double> cond_exp_regress(const PathBundle& bundle, int m,
                                     std::span<const double> values,
                                     const RegressionBasis& basis);

/// Same regression applied to values * dW^r / dt per coordinate r.
/// Output is element-major: out[p*d + r].
std::vector<double> cond_z_regress(const PathBundle& bundle, int m,
                                   std::span<const double> values,
                                   const RegressionBasis& basis);

/**
 * Monte Carlo expectation engine over a fixed bundle.
 *
 * Layer 0 is special: W_0 = 0 on every path, so conditioning on it is plain
 * averaging and the polynomial design matrix is degenerate by construction.
 * The engine therefore returns the sample mean for layer-0 conditional
 * expectations instead of calling the regression.
 */
class McEngine final : public ExpectationEngine {
public:
    McEngine(PathBundle bundle, RegressionBasis basis);
    ~McEngine() override;
    McEngine(McEngine&&) noexcept;
    McEngine& operator=(McEngine&&) noexcept;

    EngineKind kind() const override { return EngineKind::MonteCarlo; }
    const char* name() const override { return "mc"; }
    int dim() const override { return bundle_.d; }
    int steps() const override { return bundle_.M; }
    double horizon() const override { return bundle_.T; }
    std::size_t layer_size(int) const override { return bundle_.N; }
    void states(int m, std::span<double> out) const override;
    void cond_exp(int m, std::span<const double> next, std::span<double> out) const override;
    void cond_z(int m, std::span<const double> next, std::span<double> out) const override;
    double expect(int, std::span<const double> field) const override;

    const PathBundle& bundle() const { return bundle_; }
    const RegressionBasis& basis() const { return basis_; }

private:
    struct LayerSolver;  // cached QR factorization of one layer's design matrix
    const LayerSolver& solver_for(int m) const;

    PathBundle bundle_;
    RegressionBasis basis_;
    mutable std::unique_ptr<LayerSolver> cache_;
};

}  // namespace rbsde

#endif  // RBSDE_MC_HPP
