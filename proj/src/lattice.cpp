#include "rbsde/lattice.hpp"

#include <cmath>
#include <string>

#include "rbsde/errors.hpp"

namespace rbsde {

namespace {

// pow for small integer exponents without drifting through doubles
std::size_t ipow(std::size_t base, int exp) {
    std::size_t r = 1;
    for (int i = 0; i < exp; ++i) r *= base;
    return r;
}

void check_layer(const Lattice& lat, int m, int max_layer) {
    if (m < 0 || m > max_layer) {
        throw InvalidInput("lattice: layer " + std::to_string(m) + " outside 0.." +
                           std::to_string(max_layer));
    }
    (void)lat;
}

}  // namespace

std::size_t Lattice::layer_size(int m) const {
    return ipow(std::size_t(m) + 1, d);
}

void Lattice::node_state(int m, std::size_t idx, std::span<double> out) const {
    // decode row-major offsets c_r in {0..m}; state is (2 c_r - m) sqrt(dt)
    std::size_t base = std::size_t(m) + 1;
    for (int r = d - 1; r >= 0; --r) {
        std::size_t c = idx % base;
        idx /= base;
        out[r] = (2.0 * double(c) - double(m)) * sqrt_dt;
    }
}

std::vector<std::size_t> Lattice::children(int m, std::size_t idx) const {
    std::size_t pbase = std::size_t(m) + 1;
    std::size_t cbase = std::size_t(m) + 2;
    // child keeps c_r on a down move, c_r + 1 on an up move
    std::vector<std::size_t> cs(ipow(2, d));
    std::size_t child_origin = 0;
    std::size_t stride = 1;
    std::vector<std::size_t> cstrides(d);
    for (int r = d - 1; r >= 0; --r) {
        std::size_t c = idx % pbase;
        idx /= pbase;
        child_origin += c * stride;
        cstrides[r] = stride;
        stride *= cbase;
    }
    for (std::size_t s = 0; s < cs.size(); ++s) {
        std::size_t off = 0;
        for (int r = 0; r < d; ++r)
            if (s & (std::size_t(1) << r)) off += cstrides[r];
        cs[s] = child_origin + off;
    }
    return cs;
}

std::vector<double> Lattice::layer_weights(int m) const {
    // per-coordinate binomial weights C(m, c) / 2^m via the stable ratio
    // recurrence, then the product over coordinates node by node
    std::vector<double> w1(std::size_t(m) + 1);
    w1[0] = std::exp2(double(-m));
    for (int c = 0; c < m; ++c) w1[c + 1] = w1[c] * double(m - c) / double(c + 1);

    std::size_t L = layer_size(m);
    std::vector<double> w(L, 1.0);
    std::size_t base = std::size_t(m) + 1;
    for (std::size_t idx = 0; idx < L; ++idx) {
        std::size_t rest = idx;
        double p = 1.0;
        for (int r = 0; r < d; ++r) {
            p *= w1[rest % base];
            rest /= base;
        }
        w[idx] = p;
    }
    return w;
}

Lattice build_lattice(int d, double T, int M, std::size_t node_budget) {
    if (d < 1) throw InvalidInput("lattice: d must be >= 1, got " + std::to_string(d));
    if (M < 1) throw InvalidInput("lattice: steps must be >= 1, got " + std::to_string(M));
    if (!(T > 0.0)) throw InvalidInput("lattice: horizon must be positive");

    double widest = std::pow(double(M) + 1.0, double(d));
    if (widest > double(node_budget)) {
        throw ResourceError("lattice: layer " + std::to_string(M) + " needs " +
                            std::to_string(std::llround(widest)) + " nodes, budget " +
                            std::to_string(node_budget));
    }
    // a backward solve keeps every layer alive, so the sum has to fit too
    double total = 0.0;
    for (int m = 0; m <= M && total <= double(node_budget); ++m)
        total += std::pow(double(m) + 1.0, double(d));
    if (total > double(node_budget)) {
        throw ResourceError("lattice: " + std::to_string(M + 1) + " layers hold more than " +
                            std::to_string(node_budget) + " nodes in total (budget)");
    }

    Lattice lat;
    lat.d = d;
    lat.M = M;
    lat.T = T;
    lat.dt = T / M;
    lat.sqrt_dt = std::sqrt(lat.dt);
    return lat;
}

void cond_exp(const Lattice& lat, int m, std::span<const double> next, std::span<double> out) {
    check_layer(lat, m, lat.M - 1);
    std::size_t Lp = lat.layer_size(m);
    std::size_t Lc = lat.layer_size(m + 1);
    if (next.size() != Lc || out.size() != Lp) {
        throw InvalidInput("cond_exp: field sizes " + std::to_string(next.size()) + "/" +
                           std::to_string(out.size()) + " do not match layers " +
                           std::to_string(Lc) + "/" + std::to_string(Lp));
    }

    int d = lat.d;
    std::size_t pbase = std::size_t(m) + 1;
    std::size_t cbase = std::size_t(m) + 2;
    std::size_t fan = ipow(2, d);

    // child strides and the 2^d up/down offset combinations
    std::vector<std::size_t> cstr(d);
    {
        std::size_t s = 1;
        for (int r = d - 1; r >= 0; --r) {
            cstr[r] = s;
            s *= cbase;
        }
    }
    std::vector<std::size_t> offs(fan, 0);
    for (std::size_t s = 0; s < fan; ++s)
        for (int r = 0; r < d; ++r)
            if (s & (std::size_t(1) << r)) offs[s] += cstr[r];

    double inv_fan = 1.0 / double(fan);
    std::vector<std::size_t> c(d, 0);
    std::size_t child_origin = 0;
    for (std::size_t p = 0; p < Lp; ++p) {
        double acc = 0.0;
        for (std::size_t s = 0; s < fan; ++s) acc += next[child_origin + offs[s]];
        out[p] = acc * inv_fan;

        // odometer over the parent multi-index, keeping the child origin in step
        for (int r = d - 1; r >= 0; --r) {
            if (++c[r] < pbase) {
                child_origin += cstr[r];
                break;
            }
            c[r] = 0;
            child_origin -= cstr[r] * (pbase - 1);
        }
    }
}

void cond_z(const Lattice& lat, int m, std::span<const double> next, std::span<double> out) {
    check_layer(lat, m, lat.M - 1);
    std::size_t Lp = lat.layer_size(m);
    std::size_t Lc = lat.layer_size(m + 1);
    int d = lat.d;
    if (next.size() != Lc || out.size() != Lp * std::size_t(d)) {
        throw InvalidInput("cond_z: field sizes " + std::to_string(next.size()) + "/" +
                           std::to_string(out.size()) + " do not match layers " +
                           std::to_string(Lc) + "/" + std::to_string(Lp * std::size_t(d)));
    }

    std::size_t pbase = std::size_t(m) + 1;
    std::size_t cbase = std::size_t(m) + 2;
    std::size_t fan = ipow(2, d);

    std::vector<std::size_t> cstr(d);
    {
        std::size_t s = 1;
        for (int r = d - 1; r >= 0; --r) {
            cstr[r] = s;
            s *= cbase;
        }
    }
    std::vector<std::size_t> offs(fan, 0);
    for (std::size_t s = 0; s < fan; ++s)
        for (int r = 0; r < d; ++r)
            if (s & (std::size_t(1) << r)) offs[s] += cstr[r];

    // E_m[v dW^r] / dt = (1/(2^d sqrt(dt))) sum_children (+-1)_r v(child)
    double scale = 1.0 / (double(fan) * lat.sqrt_dt);
    std::vector<std::size_t> c(d, 0);
    std::size_t child_origin = 0;
    for (std::size_t p = 0; p < Lp; ++p) {
        for (int r = 0; r < d; ++r) out[p * d + r] = 0.0;
        for (std::size_t s = 0; s < fan; ++s) {
            double v = next[child_origin + offs[s]];
            for (int r = 0; r < d; ++r) {
                bool up = (s >> r) & 1u;
                out[p * d + r] += up ? v : -v;
            }
        }
        for (int r = 0; r < d; ++r) out[p * d + r] *= scale;

        for (int r = d - 1; r >= 0; --r) {
            if (++c[r] < pbase) {
                child_origin += cstr[r];
                break;
            }
            c[r] = 0;
            child_origin -= cstr[r] * (pbase - 1);
        }
    }
}

double layer_expectation(const Lattice& lat, int m, std::span<const double> field) {
    check_layer(lat, m, lat.M);
    std::size_t L = lat.layer_size(m);
    if (field.size() != L) {
        throw InvalidInput("layer_expectation: field size " + std::to_string(field.size()) +
                           " does not match layer size " + std::to_string(L));
    }
    std::vector<double> w = lat.layer_weights(m);
    double acc = 0.0;
    for (std::size_t e = 0; e < L; ++e) acc += w[e] * field[e];
    return acc;
}

void LatticeEngine::states(int m, std::span<double> out) const {
    std::size_t L = lat_.layer_size(m);
    if (out.size() != L * std::size_t(lat_.d))
        throw InvalidInput("states: output size does not match layer " + std::to_string(m));
    for (std::size_t e = 0; e < L; ++e)
        lat_.node_state(m, e, out.subspan(e * lat_.d, lat_.d));
}

}  // namespace rbsde
