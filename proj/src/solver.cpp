#include "rbsde/solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbsde/errors.hpp"

namespace rbsde {

double DiscreteSolution::y0(int i, const ExpectationEngine& eng) const {
    std::size_t L = layer_nodes(0);
    return eng.expect(0, std::span<const double>(Y[0].data() + std::size_t(i) * L, L));
}

double implicit_penalty_step(double a, double S, double k, double dt) {
    if (a >= S) return a;
    return (a + dt * k * S) / (1.0 + dt * k);
}

int picard_step(const GeneratorSpec& gen, int n, int d, double t, std::span<const double> a,
                std::span<const double> z, std::span<const double> S, double k, double dt,
                double tol, int max_iter, std::span<double> y_out) {
    if (!(tol > 0.0) || max_iter < 1)
        throw InvalidInput("picard_step: tol must be positive, max_iter >= 1");

    // y_out carries the start iterate on entry
    double change = 0.0;
    for (int it = 1; it <= max_iter; ++it) {
        change = 0.0;
        // Jacobi sweep with the driver lagged: all components read the same
        // previous iterate, so element order cannot matter
        double next[16];
        std::vector<double> heap_next;
        double* buf = next;
        if (n > 16) {
            heap_next.resize(n);
            buf = heap_next.data();
        }
        for (int i = 0; i < n; ++i) {
            double f = gen.eval(i, t, std::span<const double>(y_out.data(), n),
                                z.subspan(std::size_t(i) * d, d));
            buf[i] = implicit_penalty_step(a[i] + dt * f, S[i], k, dt);
        }
        for (int i = 0; i < n; ++i) {
            change = std::max(change, std::abs(buf[i] - y_out[i]));
            y_out[i] = buf[i];
        }
        if (!std::isfinite(change))
            throw NonConvergence("picard_step: iteration diverged (dt too large for the driver)",
                                 -1, change);
        if (change <= tol) return it;
    }
    throw NonConvergence("picard_step: no convergence after " + std::to_string(max_iter) +
                             " sweeps, last change " + std::to_string(change),
                         -1, change);
}

namespace {

enum class StepKind { Penalized, DirectReflected };

DiscreteSolution backward_solve(const Scenario& sc, double k, const ExpectationEngine& eng,
                                const SolveOptions& opts, StepKind kind) {
    require_valid(sc);
    if (eng.dim() != sc.d || eng.steps() != sc.steps || eng.horizon() != sc.T)
        throw InvalidInput("solver: engine was built for a different (d, M, T)");
    if (kind == StepKind::Penalized && !(k >= 0.0))
        throw InvalidInput("solver: penalty level must be nonnegative");

    const int n = sc.n;
    const int d = sc.d;
    const int M = sc.steps;
    const double dt = sc.dt();
    const double C_clamp =
        sc.engine_config.clamp_bound(sc.terminal.xi_max, sc.barrier.S_plus_max);
    const double tol = sc.engine_config.picard_tol;
    const int max_iter = sc.engine_config.picard_max_iter;

    DiscreteSolution sol;
    sol.k = kind == StepKind::Penalized ? k : 0.0;
    sol.is_direct = kind == StepKind::DirectReflected;
    sol.tag = sol.is_direct ? "direct" : "k=" + std::to_string(k);
    sol.n = n;
    sol.d = d;
    sol.M = M;
    sol.T = sc.T;
    sol.Y.resize(M + 1);
    sol.Z.resize(M);
    sol.dK.resize(M);

    // terminal layer: Y_M = g(state) exactly
    {
        std::size_t L = eng.layer_size(M);
        std::vector<double> w(L * d);
        eng.states(M, w);
        sol.Y[M].resize(std::size_t(n) * L);
        for (std::size_t e = 0; e < L; ++e) {
            std::span<const double> we(w.data() + e * d, std::size_t(d));
            for (int i = 0; i < n; ++i) sol.Y[M][std::size_t(i) * L + e] = sc.terminal.eval(i, we);
        }
    }

    std::vector<double> a_buf, z_buf, s_buf, w_buf;
    std::vector<double> y_node(n), a_node(n), s_node(n), direct_b(n);

    for (int m = M - 1; m >= 0; --m) {
        const double t = sc.time(m);
        const std::size_t L = eng.layer_size(m);
        const std::size_t Lnext = eng.layer_size(m + 1);

        a_buf.assign(std::size_t(n) * L, 0.0);
        z_buf.assign(std::size_t(n) * L * d, 0.0);
        for (int i = 0; i < n; ++i) {
            std::span<const double> next(sol.Y[m + 1].data() + std::size_t(i) * Lnext, Lnext);
            eng.cond_exp(m, next, std::span<double>(a_buf.data() + std::size_t(i) * L, L));
            eng.cond_z(m, next,
                       std::span<double>(z_buf.data() + std::size_t(i) * L * d, L * std::size_t(d)));
        }

        w_buf.resize(L * d);
        eng.states(m, w_buf);
        s_buf.resize(std::size_t(n) * L);
        for (std::size_t e = 0; e < L; ++e) {
            std::span<const double> we(w_buf.data() + e * d, std::size_t(d));
            for (int i = 0; i < n; ++i) s_buf[std::size_t(i) * L + e] = sc.barrier.eval(i, t, we);
        }

        sol.Y[m].resize(std::size_t(n) * L);
        sol.Z[m] = z_buf;
        sol.dK[m].assign(std::size_t(n) * L, 0.0);

        for (std::size_t step = 0; step < L; ++step) {
            std::size_t e = opts.reverse_nodes ? L - 1 - step : step;
            for (int i = 0; i < n; ++i) {
                a_node[i] = a_buf[std::size_t(i) * L + e];
                s_node[i] = s_buf[std::size_t(i) * L + e];
            }
            // the node's n x d Z block, gathered component-major -> row-major
            double z_node[32];
            std::vector<double> z_heap;
            double* zb = z_node;
            if (std::size_t(n) * d > 32) {
                z_heap.resize(std::size_t(n) * d);
                zb = z_heap.data();
            }
            for (int i = 0; i < n; ++i)
                for (int r = 0; r < d; ++r)
                    zb[std::size_t(i) * d + r] = z_buf[(std::size_t(i) * L + e) * d + r];

            switch (opts.picard_start) {
                case PicardStart::Continuation:
                    for (int i = 0; i < n; ++i) y_node[i] = a_node[i];
                    break;
                case PicardStart::ClampUpper:
                    for (int i = 0; i < n; ++i) y_node[i] = C_clamp;
                    break;
                case PicardStart::ClampLower:
                    for (int i = 0; i < n; ++i) y_node[i] = -C_clamp;
                    break;
            }

            int iters = 0;
            try {
                if (kind == StepKind::Penalized) {
                    iters = picard_step(sc.generator, n, d, t, a_node,
                                        std::span<const double>(zb, std::size_t(n) * d), s_node, k,
                                        dt, tol, max_iter, y_node);
                } else {
                    // same Picard loop with the reflection applied exactly
                    double change = 0.0;
                    std::vector<double> nxt(n);
                    bool ok = false;
                    for (int it = 1; it <= max_iter; ++it) {
                        change = 0.0;
                        for (int i = 0; i < n; ++i) {
                            double f = sc.generator.eval(
                                i, t, std::span<const double>(y_node.data(), n),
                                std::span<const double>(zb + std::size_t(i) * d, std::size_t(d)));
                            nxt[i] = std::max(s_node[i], a_node[i] + dt * f);
                        }
                        for (int i = 0; i < n; ++i) {
                            change = std::max(change, std::abs(nxt[i] - y_node[i]));
                            y_node[i] = nxt[i];
                        }
                        if (!std::isfinite(change))
                            throw NonConvergence("direct step diverged", m, change);
                        if (change <= tol) {
                            iters = it;
                            ok = true;
                            break;
                        }
                    }
                    if (!ok)
                        throw NonConvergence("direct step: no convergence after " +
                                                 std::to_string(max_iter) + " sweeps",
                                             m, change);
                    // one more sweep so y and dK are derived from the same
                    // driver evaluation; otherwise a lagged y inside f leaves
                    // spurious roundoff-size dK off the contact set
                    for (int i = 0; i < n; ++i) {
                        double f = sc.generator.eval(
                            i, t, std::span<const double>(y_node.data(), n),
                            std::span<const double>(zb + std::size_t(i) * d, std::size_t(d)));
                        nxt[i] = a_node[i] + dt * f;
                    }
                    for (int i = 0; i < n; ++i) {
                        direct_b[i] = nxt[i];
                        y_node[i] = std::max(s_node[i], nxt[i]);
                    }
                }
            } catch (NonConvergence& nc) {
                throw NonConvergence(std::string(nc.what()) + " at layer " + std::to_string(m),
                                     m, nc.residual);
            }

            sol.picard.calls += 1;
            sol.picard.total_iters += iters;
            sol.picard.max_iters = std::max(sol.picard.max_iters, iters);

            for (int i = 0; i < n; ++i) {
                double y = y_node[i];
                if (y > C_clamp || y < -C_clamp) {
                    y = std::clamp(y, -C_clamp, C_clamp);
                    sol.clamp_warnings += 1;
                }
                sol.Y[m][std::size_t(i) * L + e] = y;
                if (kind == StepKind::Penalized) {
                    // recomputable from the stored Y: dK = dt k (Y - S)^-
                    sol.dK[m][std::size_t(i) * L + e] = dt * k * std::max(s_node[i] - y, 0.0);
                } else {
                    // y > S implies y == direct_b, so dK vanishes exactly off contact
                    sol.dK[m][std::size_t(i) * L + e] = std::max(y - direct_b[i], 0.0);
                }
            }
        }
    }
    return sol;
}

}  // namespace

DiscreteSolution solve_penalized(const Scenario& sc, double k, const ExpectationEngine& eng,
                                 const SolveOptions& opts) {
    return backward_solve(sc, k, eng, opts, StepKind::Penalized);
}

DiscreteSolution solve_direct_reflected(const Scenario& sc, const ExpectationEngine& eng,
                                        const SolveOptions& opts) {
    return backward_solve(sc, 0.0, eng, opts, StepKind::DirectReflected);
}

}  // namespace rbsde
