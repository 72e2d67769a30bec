#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/mc.hpp"
#include "rbsde/model.hpp"
#include "rbsde/solver.hpp"

using namespace rbsde;

TEST_CASE("simulate_paths invariants") {
    PathBundle pb = simulate_paths(7, 512, 16, 2, 2.0);
    SUBCASE("states start at zero and cumulate the increments") {
        for (std::size_t p = 0; p < pb.N; ++p)
            for (int r = 0; r < pb.d; ++r) {
                CHECK(pb.state(p, 0, r) == 0.0);
                for (int m = 0; m < pb.M; ++m)
                    CHECK(pb.state(p, m + 1, r) ==
                          doctest::Approx(pb.state(p, m, r) + pb.increment(p, m, r))
                              .epsilon(1e-15));
            }
    }
    SUBCASE("fixed seed reproduces the bundle") {
        PathBundle again = simulate_paths(7, 512, 16, 2, 2.0);
        CHECK(again.dW == pb.dW);
        CHECK(again.W == pb.W);
    }
    SUBCASE("terminal mean within 5 standard errors of zero") {
        PathBundle big = simulate_paths(11, 10'000, 8, 1, 1.0);
        double mean = 0.0;
        for (std::size_t p = 0; p < big.N; ++p) mean += big.state(p, big.M, 0);
        mean /= double(big.N);
        double se = std::sqrt(big.T / double(big.N));
        CHECK(std::abs(mean) <= 5.0 * se);
    }
}

TEST_CASE("regression basis") {
    RegressionBasis b1{3, 1};
    CHECK(b1.size() == 4);
    RegressionBasis b2{3, 2};
    CHECK(b2.size() == 10);
    CHECK(b2.feature_name(0) == "1");

    std::vector<double> w = {2.0, 3.0};
    std::vector<double> feats(b2.size());
    b2.eval(w, feats);
    CHECK(feats[0] == 1.0);
    double sum_deg1 = feats[1] + feats[2];
    CHECK(sum_deg1 == doctest::Approx(5.0));  // w0 + w1 in some order
}

TEST_CASE("N too small for the basis is rejected") {
    PathBundle pb = simulate_paths(3, 3, 4, 1, 1.0);
    RegressionBasis basis{1, 1};  // size 2, needs N >= 4
    std::vector<double> values(3, 1.0);
    CHECK_THROWS_AS(cond_exp_regress(pb, 1, values, basis), InvalidInput);
    CHECK_THROWS_AS(McEngine(pb, basis), InvalidInput);
}

TEST_CASE("cond_exp_regress") {
    PathBundle pb = simulate_paths(21, 4000, 10, 1, 1.0);
    RegressionBasis basis{3, 1};
    SUBCASE("constants reproduce exactly") {
        std::vector<double> values(pb.N, 9.0);
        auto fitted = cond_exp_regress(pb, 4, values, basis);
        for (double v : fitted) CHECK(v == doctest::Approx(9.0).epsilon(1e-12));
    }
    SUBCASE("in-span values reproduce") {
        std::vector<double> values(pb.N);
        for (std::size_t p = 0; p < pb.N; ++p) values[p] = pb.state(p, 4, 0);
        auto fitted = cond_exp_regress(pb, 4, values, basis);
        for (std::size_t p = 0; p < pb.N; ++p)
            CHECK(std::abs(fitted[p] - values[p]) <= 1e-10);
    }
    SUBCASE("martingale increments project away") {
        std::vector<double> values(pb.N);
        for (std::size_t p = 0; p < pb.N; ++p)
            values[p] = pb.state(p, 4, 0) + pb.increment(p, 4, 0);
        auto fitted = cond_exp_regress(pb, 4, values, basis);
        double rms = 0.0;
        for (std::size_t p = 0; p < pb.N; ++p) {
            double err = fitted[p] - pb.state(p, 4, 0);
            rms += err * err;
        }
        rms = std::sqrt(rms / double(pb.N));
        // the increment is mean-zero given W_m; the fit should shrink it to
        // a sampling-noise remnant, far below its own scale sqrt(dt) = 0.32
        CHECK(rms <= 0.05);
    }
    SUBCASE("degenerate design at the deterministic layer names a feature") {
        std::vector<double> values(pb.N, 1.0);
        CHECK_THROWS_AS(cond_exp_regress(pb, 0, values, basis), RegressionError);
        try {
            cond_exp_regress(pb, 0, values, basis);
        } catch (const RegressionError& e) {
            CHECK(!e.feature.empty());
        }
    }
}

TEST_CASE("regression is a projection: orthogonal additions do not move the fit") {
    PathBundle pb = simulate_paths(33, 2000, 6, 1, 1.0);
    RegressionBasis basis{2, 1};
    int m = 3;

    std::vector<double> values(pb.N);
    for (std::size_t p = 0; p < pb.N; ++p) {
        double w = pb.state(p, m, 0);
        values[p] = 1.0 + 0.5 * w - 0.2 * w * w;
    }
    auto fitted = cond_exp_regress(pb, m, values, basis);

    // build a vector orthogonal to the basis span with explicit Gram-Schmidt
    // (independent of the production QR path)
    std::vector<std::vector<double>> cols(basis.size(), std::vector<double>(pb.N));
    std::vector<double> feat(basis.size());
    for (std::size_t p = 0; p < pb.N; ++p) {
        double w[1] = {pb.state(p, m, 0)};
        basis.eval(std::span<const double>(w, 1), feat);
        for (std::size_t j = 0; j < basis.size(); ++j) cols[j][p] = feat[j];
    }
    std::vector<double> extra(pb.N);
    for (std::size_t p = 0; p < pb.N; ++p) extra[p] = std::sin(3.0 * pb.state(p, m, 0));

    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (std::size_t jj = 0; jj < j; ++jj) {
            double num = 0.0, den = 0.0;
            for (std::size_t p = 0; p < pb.N; ++p) {
                num += cols[j][p] * cols[jj][p];
                den += cols[jj][p] * cols[jj][p];
            }
            for (std::size_t p = 0; p < pb.N; ++p) cols[j][p] -= num / den * cols[jj][p];
        }
        double num = 0.0, den = 0.0;
        for (std::size_t p = 0; p < pb.N; ++p) {
            num += extra[p] * cols[j][p];
            den += cols[j][p] * cols[j][p];
        }
        for (std::size_t p = 0; p < pb.N; ++p) extra[p] -= num / den * cols[j][p];
    }

    std::vector<double> perturbed(pb.N);
    for (std::size_t p = 0; p < pb.N; ++p) perturbed[p] = values[p] + extra[p];
    auto fitted2 = cond_exp_regress(pb, m, perturbed, basis);
    for (std::size_t p = 0; p < pb.N; ++p) CHECK(std::abs(fitted2[p] - fitted[p]) <= 1e-9);
}

TEST_CASE("cond_z_regress") {
    PathBundle pb = simulate_paths(5, 20'000, 8, 2, 1.0);
    RegressionBasis basis{2, 2};
    int m = 3;
    SUBCASE("constants have zero loading") {
        std::vector<double> values(pb.N, 4.0);
        auto z = cond_z_regress(pb, m, values, basis);
        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t p = 0; p < pb.N; ++p) {
            mean0 += z[p * 2 + 0];
            mean1 += z[p * 2 + 1];
        }
        mean0 /= double(pb.N);
        mean1 /= double(pb.N);
        double se = 4.0 / std::sqrt(double(pb.N) * pb.dt());
        CHECK(std::abs(mean0) <= 5.0 * se);
        CHECK(std::abs(mean1) <= 5.0 * se);
    }
    SUBCASE("next-layer coordinate r has unit loading on r, zero crosswise") {
        std::vector<double> values(pb.N);
        for (std::size_t p = 0; p < pb.N; ++p) values[p] = pb.state(p, m + 1, 0);
        auto z = cond_z_regress(pb, m, values, basis);
        double mean0 = 0.0, mean1 = 0.0;
        for (std::size_t p = 0; p < pb.N; ++p) {
            mean0 += z[p * 2 + 0];
            mean1 += z[p * 2 + 1];
        }
        mean0 /= double(pb.N);
        mean1 /= double(pb.N);
        CHECK(mean0 == doctest::Approx(1.0).epsilon(0.05));
        CHECK(std::abs(mean1) <= 0.05);
    }
}

TEST_CASE("engine agreement with the lattice on a smooth scenario") {
    Scenario sc;
    sc.n = 1;
    sc.d = 1;
    sc.T = 1.0;
    sc.steps = 25;
    sc.generator.a = {0.0};
    sc.generator.c = {{0.0}};
    sc.generator.b = {{0.0}};
    sc.generator.gamma = {0.25};
    sc.barrier.cap = {-10.0};
    sc.barrier.alpha = {-10.0};
    sc.barrier.beta = {{0.0}};
    sc.barrier.delta = {0.0};
    sc.barrier.S_plus_max = 0.0;
    sc.terminal.alpha = {0.0};
    sc.terminal.beta = {{0.4}};
    sc.terminal.xi_max = 0.4;

    LatticeEngine lattice(sc.d, sc.T, sc.steps);
    double y0_lattice = solve_penalized(sc, 0.0, lattice).y0(0, lattice);

    const int n_seeds = 10;
    std::vector<double> y0s(n_seeds);
    for (int s = 0; s < n_seeds; ++s) {
        PathBundle pb = simulate_paths(1000 + s, 20'000, sc.steps, sc.d, sc.T);
        McEngine eng(std::move(pb), RegressionBasis{3, 1});
        y0s[s] = solve_penalized(sc, 0.0, eng).y0(0, eng);
    }
    double mean = 0.0;
    for (double v : y0s) mean += v;
    mean /= n_seeds;
    double var = 0.0;
    for (double v : y0s) var += (v - mean) * (v - mean);
    double se = std::sqrt(var / (n_seeds * (n_seeds - 1)));
    CHECK(std::abs(mean - y0_lattice) <= 3.0 * se);
}

TEST_CASE("bundle dump and load round-trip bitwise") {
    PathBundle pb = simulate_paths(99, 64, 5, 2, 0.5);
    auto path = std::filesystem::temp_directory_path() / "rbsde_bundle_test.bin";
    dump_bundle(pb, path);
    PathBundle back = load_bundle(path);
    CHECK(back.seed == pb.seed);
    CHECK(back.N == pb.N);
    CHECK(back.M == pb.M);
    CHECK(back.d == pb.d);
    CHECK(back.T == pb.T);
    CHECK(back.dW == pb.dW);
    CHECK(back.W == pb.W);
    std::filesystem::remove(path);
}

TEST_CASE("mc engine layer 0 conditions by averaging") {
    PathBundle pb = simulate_paths(13, 1000, 4, 1, 1.0);
    McEngine eng(std::move(pb), RegressionBasis{3, 1});
    std::vector<double> next(1000);
    for (std::size_t p = 0; p < next.size(); ++p) next[p] = eng.bundle().state(p, 1, 0);
    std::vector<double> out(1000);
    eng.cond_exp(0, next, out);
    double mean = eng.expect(0, next);
    for (double v : out) CHECK(v == mean);
}
