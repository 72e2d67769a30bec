#include "rbsde/verify.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rbsde/errors.hpp"

namespace rbsde {

bool VerificationReport::all_pass() const {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return true;
}

const CheckResult* VerificationReport::find(const std::string& name) const {
    for (const auto& c : checks)
        if (c.name == name) return &c;
    return nullptr;
}

// ---------------------------------------------------------------------------
// Optimal stopping representation
// ---------------------------------------------------------------------------

std::vector<std::vector<double>> optimal_stopping_value(const DiscreteSolution& sol,
                                                        const Scenario& sc,
                                                        const ExpectationEngine& eng) {
    const int n = sc.n;
    const int d = sc.d;
    const int M = sol.M;
    const double dt = sc.dt();

    std::vector<std::vector<double>> U(M + 1);
    U[M] = sol.Y[M];  // terminal data is shared by construction

    std::vector<double> cont, w;
    for (int m = M - 1; m >= 0; --m) {
        std::size_t L = sol.layer_nodes(m);
        std::size_t Lnext = sol.layer_nodes(m + 1);
        double t = sc.time(m);
        U[m].resize(std::size_t(n) * L);
        cont.resize(L);
        w.resize(L * d);
        eng.states(m, w);
        for (int i = 0; i < n; ++i) {
            eng.cond_exp(m, std::span<const double>(U[m + 1].data() + std::size_t(i) * Lnext, Lnext),
                         std::span<double>(cont.data(), L));
            for (std::size_t e = 0; e < L; ++e) {
                std::span<const double> we(w.data() + e * d, std::size_t(d));
                // driver frozen along the supplied solution
                double y_node[16];
                std::vector<double> y_heap;
                double* yb = y_node;
                if (n > 16) {
                    y_heap.resize(n);
                    yb = y_heap.data();
                }
                for (int jj = 0; jj < n; ++jj) yb[jj] = sol.Y[m][std::size_t(jj) * L + e];
                std::span<const double> zi(&sol.Z[m][(std::size_t(i) * L + e) * d], std::size_t(d));
                double f = sc.generator.eval(i, t, std::span<const double>(yb, std::size_t(n)), zi);
                double h = sc.barrier.eval(i, t, we);
                U[m][std::size_t(i) * L + e] = std::max(h, cont[e] + dt * f);
            }
        }
    }
    return U;
}

double representation_gap(const std::vector<std::vector<double>>& U, const DiscreteSolution& sol) {
    if (U.size() != sol.Y.size()) throw InvalidInput("representation_gap: layer count mismatch");
    double gap = 0.0;
    for (std::size_t m = 0; m < U.size(); ++m) {
        if (U[m].size() != sol.Y[m].size())
            throw InvalidInput("representation_gap: layer " + std::to_string(m) + " size mismatch");
        for (std::size_t e = 0; e < U[m].size(); ++e)
            gap = std::max(gap, std::abs(U[m][e] - sol.Y[m][e]));
    }
    return gap;
}

// ---------------------------------------------------------------------------
// Hitting time / flatness of K before contact
// ---------------------------------------------------------------------------

CheckResult hitting_time_check(const DiscreteSolution& sol, const Scenario& sc,
                               const ExpectationEngine& eng, double tol_contact,
                               double tol_flat) {
    const int n = sc.n;
    const int d = sc.d;
    const int M = sol.M;

    CheckResult res;
    res.name = "hitting_time_flatness";
    res.tolerance = tol_flat;

    // A_m(e) = dK accumulated from (m, e) until the first contact layer,
    // zeroed at contact; one backward sweep yields all starting layers.
    std::vector<double> w;
    double worst = 0.0;
    std::string worst_desc;
    for (int i = 0; i < n; ++i) {
        std::vector<double> A_next(sol.layer_nodes(M), 0.0);
        for (int m = M - 1; m >= 0; --m) {
            std::size_t L = sol.layer_nodes(m);
            std::size_t Lnext = sol.layer_nodes(m + 1);
            std::vector<double> A(L, 0.0);
            eng.cond_exp(m, std::span<const double>(A_next.data(), Lnext),
                         std::span<double>(A.data(), L));
            w.resize(L * d);
            eng.states(m, w);
            double t = sc.time(m);
            for (std::size_t e = 0; e < L; ++e) {
                std::span<const double> we(w.data() + e * d, std::size_t(d));
                double s = sc.barrier.eval(i, t, we);
                double y = sol.Y[m][std::size_t(i) * L + e];
                if (y - s <= tol_contact) {
                    A[e] = 0.0;  // contact: nothing before it to account for
                } else {
                    A[e] += sol.dK[m][std::size_t(i) * L + e];
                }
            }
            double expected = eng.expect(m, std::span<const double>(A.data(), L));
            if (expected > worst) {
                worst = expected;
                worst_desc = "component " + std::to_string(i + 1) + ", start layer " +
                             std::to_string(m);
            }
            A_next = std::move(A);
        }
    }

    res.residual = worst;
    res.pass = worst <= tol_flat;
    if (!res.pass) res.worst = worst_desc;
    return res;
}

// ---------------------------------------------------------------------------
// Cole-Hopf oracle
// ---------------------------------------------------------------------------

ColeHopfValues cole_hopf_oracle(const Scenario& sc, const ExpectationEngine& eng) {
    if (sc.n != 1) throw InvalidInput("cole_hopf_oracle: requires n = 1");
    const GeneratorSpec& gen = sc.generator;
    if (gen.custom || gen.family != "linear_quadratic")
        throw InvalidInput("cole_hopf_oracle: requires the linear_quadratic family");
    double gamma = gen.gamma[0];
    if (!(gamma > 0.0)) throw InvalidInput("cole_hopf_oracle: requires gamma > 0");
    auto all_zero = [](const std::vector<double>& v) {
        for (double x : v)
            if (x != 0.0) return false;
        return true;
    };
    if (!all_zero(gen.a) || !all_zero(gen.c[0]) || !all_zero(gen.b[0]))
        throw InvalidInput("cole_hopf_oracle: requires a = c = b = 0");

    const int d = sc.d;
    const int M = sc.steps;

    // V_M = e^{gamma g}; the unreflected value is a single direct sum over
    // the terminal layer, deliberately not reusing the backward recursion
    std::size_t LM = eng.layer_size(M);
    std::vector<double> V(LM), w(LM * d);
    eng.states(M, w);
    for (std::size_t e = 0; e < LM; ++e) {
        std::span<const double> we(w.data() + e * d, std::size_t(d));
        V[e] = std::exp(gamma * sc.terminal.eval(0, we));
    }

    ColeHopfValues out;
    out.unreflected = std::log(eng.expect(M, V)) / gamma;

    // reflected: V_m = max(e^{gamma h(t_m, .)}, E_m V_{m+1})
    std::vector<double> Vm;
    for (int m = M - 1; m >= 0; --m) {
        std::size_t L = eng.layer_size(m);
        Vm.resize(L);
        eng.cond_exp(m, std::span<const double>(V.data(), eng.layer_size(m + 1)),
                     std::span<double>(Vm.data(), L));
        w.resize(L * d);
        eng.states(m, w);
        double t = sc.time(m);
        for (std::size_t e = 0; e < L; ++e) {
            std::span<const double> we(w.data() + e * d, std::size_t(d));
            double hb = sc.barrier.eval(0, t, we);
            // an inactive floor keeps exp() away from underflow
            double floor_v = hb > -700.0 / gamma ? std::exp(gamma * hb) : 0.0;
            Vm[e] = std::max(floor_v, Vm[e]);
        }
        V = Vm;
    }
    out.reflected = std::log(eng.expect(0, V)) / gamma;
    return out;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

ComparisonReport compare_runs(const PenaltyRun& run_A, const PenaltyRun& run_B, double tolerance,
                              bool hypotheses_asserted) {
    ComparisonReport rep;
    rep.tolerance = tolerance;
    rep.hypotheses_asserted = hypotheses_asserted;

    if (run_A.ks.size() != run_B.ks.size())
        throw InvalidInput("compare_runs: the runs executed different schedule lengths");
    for (std::size_t j = 0; j < run_A.ks.size(); ++j)
        if (run_A.ks[j] != run_B.ks[j])
            throw InvalidInput("compare_runs: penalty levels differ at index " + std::to_string(j));

    auto check_pair = [&](const DiscreteSolution& a, const DiscreteSolution& b,
                          const std::string& label) {
        if (a.n != b.n || a.d != b.d || a.M != b.M || a.T != b.T)
            throw InvalidInput("compare_runs: mismatched discretizations (" + label + ")");
        double v = 0.0;
        std::string worst;
        for (int m = 0; m <= a.M; ++m) {
            if (a.Y[m].size() != b.Y[m].size())
                throw InvalidInput("compare_runs: layer " + std::to_string(m) + " size mismatch");
            for (std::size_t e = 0; e < a.Y[m].size(); ++e) {
                double excess = a.Y[m][e] - b.Y[m][e];
                if (excess > v) {
                    v = excess;
                    worst = label + " layer " + std::to_string(m) + " element " +
                            std::to_string(e);
                }
            }
        }
        if (v > rep.max_violation) {
            rep.max_violation = v;
            rep.worst = worst;
        }
        return v;
    };

    for (std::size_t j = 0; j < run_A.ks.size(); ++j) {
        rep.per_level.push_back(check_pair(run_A.solutions[j], run_B.solutions[j],
                                           "k=" + std::to_string(run_A.ks[j])));
    }
    rep.limit_violation = check_pair(run_A.limit, run_B.limit, "limit");
    rep.pass = rep.max_violation <= tolerance;
    return rep;
}

// ---------------------------------------------------------------------------
// BMO and K_T moment diagnostics
// ---------------------------------------------------------------------------

std::vector<double> bmo_estimate(const DiscreteSolution& sol, const ExpectationEngine& eng) {
    if (eng.kind() != EngineKind::Lattice)
        throw UnsupportedEngine(
            "bmo_estimate: conditional sup bounds need the lattice engine; the regression "
            "backend only estimates L2 quantities");

    const int n = sol.n;
    const int d = sol.d;
    const int M = sol.M;
    const double dt = sol.dt();

    std::vector<double> est(n, 0.0);
    for (int i = 0; i < n; ++i) {
        std::vector<double> R_next(sol.layer_nodes(M), 0.0);
        for (int m = M - 1; m >= 0; --m) {
            std::size_t L = sol.layer_nodes(m);
            std::vector<double> R(L, 0.0);
            eng.cond_exp(m, std::span<const double>(R_next.data(), R_next.size()),
                         std::span<double>(R.data(), L));
            for (std::size_t e = 0; e < L; ++e) {
                double z2 = 0.0;
                for (int r = 0; r < d; ++r) {
                    double z = sol.Z[m][(std::size_t(i) * L + e) * d + r];
                    z2 += z * z;
                }
                R[e] += z2 * dt;
                est[i] = std::max(est[i], R[e]);
            }
            R_next = std::move(R);
        }
    }
    return est;
}

namespace {

long binom(int q, int j) {
    long r = 1;
    for (int x = 0; x < j; ++x) r = r * (q - x) / (x + 1);
    return r;
}

}  // namespace

std::vector<double> k_moment(const DiscreteSolution& sol, int p, const ExpectationEngine& eng) {
    if (p < 2) throw InvalidInput("k_moment: p must be >= 2");

    const int n = sol.n;
    const int M = sol.M;
    std::vector<double> out(n, 0.0);

    if (eng.kind() == EngineKind::MonteCarlo) {
        // pathwise totals, plain average
        std::size_t N = sol.layer_nodes(0);
        std::vector<double> kt(N);
        for (int i = 0; i < n; ++i) {
            std::fill(kt.begin(), kt.end(), 0.0);
            for (int m = 0; m < M; ++m) {
                std::size_t L = sol.layer_nodes(m);
                for (std::size_t e = 0; e < L; ++e) kt[e] += sol.dK[m][std::size_t(i) * L + e];
            }
            double acc = 0.0;
            for (double v : kt) acc += std::pow(v, p);
            out[i] = std::pow(acc / double(N), 1.0 / p);
        }
        return out;
    }

    // Lattice: exact conditional moment recursion. mu_q(m, e) holds
    // E[(sum_{m'>=m} dK)^q | node e]; the node's own dK is known there, so
    //   mu_q(m) = sum_j C(q, j) dK^(q-j) cond_exp(mu_j(m+1)).
    for (int i = 0; i < n; ++i) {
        std::size_t LM = sol.layer_nodes(M);
        std::vector<std::vector<double>> mu_next(p + 1, std::vector<double>(LM, 0.0));
        mu_next[0].assign(LM, 1.0);

        for (int m = M - 1; m >= 0; --m) {
            std::size_t L = sol.layer_nodes(m);
            std::size_t Lnext = sol.layer_nodes(m + 1);
            std::vector<std::vector<double>> cexp(p + 1, std::vector<double>(L));
            for (int q = 0; q <= p; ++q)
                eng.cond_exp(m, std::span<const double>(mu_next[q].data(), Lnext),
                             std::span<double>(cexp[q].data(), L));

            std::vector<std::vector<double>> mu(p + 1, std::vector<double>(L, 0.0));
            mu[0].assign(L, 1.0);
            std::vector<double> dkp(p + 1);
            for (std::size_t e = 0; e < L; ++e) {
                double dk = sol.dK[m][std::size_t(i) * L + e];
                dkp[0] = 1.0;
                for (int q = 1; q <= p; ++q) dkp[q] = dkp[q - 1] * dk;
                for (int q = 1; q <= p; ++q) {
                    double acc = 0.0;
                    for (int j = 0; j <= q; ++j)
                        acc += double(binom(q, j)) * dkp[q - j] * cexp[j][e];
                    mu[q][e] = acc;
                }
            }
            mu_next = std::move(mu);
        }
        // layer 0 is the root; mu_p there is the time-0 expectation
        out[i] = std::pow(eng.expect(0, std::span<const double>(mu_next[p].data(),
                                                                mu_next[p].size())),
                          1.0 / p);
    }
    return out;
}

}  // namespace rbsde
