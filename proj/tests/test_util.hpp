#ifndef RBSDE_TESTS_UTIL_HPP
#define RBSDE_TESTS_UTIL_HPP

// Brute-force path enumeration over the recombining lattice. Walks all
// 2^(M*d) equally likely branch sequences and hands the visitor the node
// index at every layer. Only sane for M*d <= ~20; it exists so that pathwise
// functionals (K totals, quadratic variation, hitting times) can be checked
// against a route that shares nothing with the production backward sweeps.

#include <cstddef>
#include <functional>
#include <vector>

#include "rbsde/lattice.hpp"

namespace rbsde_test {

inline void enumerate_paths(const rbsde::Lattice& lat,
                            const std::function<void(const std::vector<std::size_t>&, double)>& visit) {
    const int d = lat.d;
    const int M = lat.M;
    const std::size_t branches = std::size_t(1) << (std::size_t(M) * d);
    const double prob = 1.0 / double(branches);

    std::vector<std::size_t> nodes(M + 1);
    std::vector<std::size_t> c(d);
    for (std::size_t code = 0; code < branches; ++code) {
        std::fill(c.begin(), c.end(), 0);
        nodes[0] = 0;
        std::size_t bits = code;
        for (int m = 1; m <= M; ++m) {
            for (int r = 0; r < d; ++r) {
                c[r] += bits & 1u;  // up move increments the coordinate offset
                bits >>= 1u;
            }
            std::size_t base = std::size_t(m) + 1;
            std::size_t idx = 0;
            for (int r = 0; r < d; ++r) idx = idx * base + c[r];
            nodes[m] = idx;
        }
        visit(nodes, prob);
    }
}

}  // namespace rbsde_test

#endif  // RBSDE_TESTS_UTIL_HPP
