#include "rbsde/mc.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <string>

#include "rbsde/errors.hpp"

namespace rbsde {

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

PathBundle simulate_paths(std::uint64_t seed, std::size_t N, int M, int d, double T) {
    if (N < 1) throw InvalidInput("simulate_paths: N must be >= 1");
    if (M < 1 || d < 1 || !(T > 0.0))
        throw InvalidInput("simulate_paths: require M >= 1, d >= 1, T > 0");
    // increments plus states, in doubles
    double footprint = double(N) * (2.0 * M + 1.0) * d;
    if (footprint > 2.5e8)
        throw ResourceError("simulate_paths: bundle of " + std::to_string(N) + " x " +
                            std::to_string(M) + " x " + std::to_string(d) +
                            " exceeds the in-memory budget");

    PathBundle pb;
    pb.seed = seed;
    pb.N = N;
    pb.M = M;
    pb.d = d;
    pb.T = T;
    pb.dW.resize(N * std::size_t(M) * d);
    pb.W.resize(N * std::size_t(M + 1) * d, 0.0);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, std::sqrt(pb.dt()));
    for (auto& x : pb.dW) x = gauss(rng);

    for (std::size_t p = 0; p < N; ++p) {
        for (int m = 0; m < M; ++m) {
            for (int r = 0; r < d; ++r) {
                pb.W[(p * (M + 1) + m + 1) * d + r] =
                    pb.W[(p * (M + 1) + m) * d + r] + pb.dW[(p * std::size_t(M) + m) * d + r];
            }
        }
    }
    return pb;
}

// ---------------------------------------------------------------------------
// Binary dump (reproducibility audits)
// ---------------------------------------------------------------------------

namespace {

void write_u64(std::ofstream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;  // little-endian
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ofstream& os, double x) {
    std::uint64_t v;
    std::memcpy(&v, &x, 8);
    write_u64(os, v);
}

double read_f64(std::ifstream& is) {
    std::uint64_t v = read_u64(is);
    double x;
    std::memcpy(&x, &v, 8);
    return x;
}

}  // namespace

void dump_bundle(const PathBundle& pb, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidInput("dump_bundle: cannot open " + path.string());
    write_u64(os, pb.seed);
    write_u64(os, pb.N);
    write_u64(os, std::uint64_t(pb.M));
    write_u64(os, std::uint64_t(pb.d));
    write_f64(os, pb.T);
    for (double x : pb.dW) write_f64(os, x);
    if (!os) throw InvalidInput("dump_bundle: write failed for " + path.string());
}

PathBundle load_bundle(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InvalidInput("load_bundle: cannot open " + path.string());
    PathBundle pb;
    pb.seed = read_u64(is);
    pb.N = read_u64(is);
    pb.M = int(read_u64(is));
    pb.d = int(read_u64(is));
    pb.T = read_f64(is);
    if (!is || pb.N < 1 || pb.M < 1 || pb.d < 1 || !(pb.T > 0.0))
        throw InvalidInput("load_bundle: corrupt header in " + path.string());
    pb.dW.resize(pb.N * std::size_t(pb.M) * pb.d);
    for (double& x : pb.dW) x = read_f64(is);
    if (!is) throw InvalidInput("load_bundle: truncated increments in " + path.string());

    pb.W.assign(pb.N * std::size_t(pb.M + 1) * pb.d, 0.0);
    for (std::size_t p = 0; p < pb.N; ++p)
        for (int m = 0; m < pb.M; ++m)
            for (int r = 0; r < pb.d; ++r)
                pb.W[(p * (pb.M + 1) + m + 1) * pb.d + r] =
                    pb.W[(p * (pb.M + 1) + m) * pb.d + r] +
                    pb.dW[(p * std::size_t(pb.M) + m) * pb.d + r];
    return pb;
}

// ---------------------------------------------------------------------------
// RegressionBasis
// ---------------------------------------------------------------------------

static void collect_exponents(int d, int degree, std::vector<int>& cur, int used,
                              std::vector<std::vector<int>>& out) {
    if (int(cur.size()) == d) {
        out.push_back(cur);
        return;
    }
    for (int e = 0; e + used <= degree; ++e) {
        cur.push_back(e);
        collect_exponents(d, degree, cur, used + e, out);
        cur.pop_back();
    }
}

static const std::vector<std::vector<int>>& exponent_table(int d, int degree) {
    thread_local std::vector<std::vector<int>> table;
    thread_local int cached_d = -1, cached_deg = -1;
    if (cached_d != d || cached_deg != degree) {
        table.clear();
        std::vector<int> cur;
        collect_exponents(d, degree, cur, 0, table);
        // graded order: constant first, then by total degree
        std::stable_sort(table.begin(), table.end(),
                         [](const std::vector<int>& a, const std::vector<int>& b) {
                             int sa = 0, sb = 0;
                             for (int x : a) sa += x;
                             for (int x : b) sb += x;
                             return sa < sb;
                         });
        cached_d = d;
        cached_deg = degree;
    }
    return table;
}

std::size_t RegressionBasis::size() const { return exponent_table(d, degree).size(); }

void RegressionBasis::eval(std::span<const double> w, std::span<double> out) const {
    const auto& table = exponent_table(d, degree);
    for (std::size_t j = 0; j < table.size(); ++j) {
        double v = 1.0;
        for (int r = 0; r < d; ++r)
            for (int e = 0; e < table[j][r]; ++e) v *= w[r];
        out[j] = v;
    }
}

std::string RegressionBasis::feature_name(std::size_t j) const {
    const auto& table = exponent_table(d, degree);
    const auto& e = table[j];
    std::string name;
    for (int r = 0; r < d; ++r) {
        if (e[r] == 0) continue;
        if (!name.empty()) name += "*";
        name += "w" + std::to_string(r);
        if (e[r] > 1) name += "^" + std::to_string(e[r]);
    }
    return name.empty() ? "1" : name;
}

std::vector<int> RegressionBasis::exponents(std::size_t j) const {
    return exponent_table(d, degree)[j];
}

// ---------------------------------------------------------------------------
// Regression
// ---------------------------------------------------------------------------

namespace {

constexpr double kRankTol = 1e-10;

Eigen::MatrixXd design_matrix(const PathBundle& pb, int m, const RegressionBasis& basis) {
    std::size_t B = basis.size();
    Eigen::MatrixXd X(pb.N, B);
    std::vector<double> feat(B);
    for (std::size_t p = 0; p < pb.N; ++p) {
        std::span<const double> w(&pb.W[(p * (pb.M + 1) + m) * pb.d], std::size_t(pb.d));
        basis.eval(w, feat);
        for (std::size_t j = 0; j < B; ++j) X(p, j) = feat[j];
    }
    return X;
}

void check_regression_pre(const PathBundle& pb, int m, std::size_t n_values,
                          const RegressionBasis& basis) {
    if (m < 0 || m > pb.M)
        throw InvalidInput("regression: layer " + std::to_string(m) + " outside 0.." +
                           std::to_string(pb.M));
    if (basis.d != pb.d) throw InvalidInput("regression: basis dimension does not match bundle");
    if (n_values != pb.N)
        throw InvalidInput("regression: values must be indexed by path (got " +
                           std::to_string(n_values) + ", N = " + std::to_string(pb.N) + ")");
    if (pb.N < 2 * basis.size())
        throw InvalidInput("regression: N = " + std::to_string(pb.N) +
                           " too small for basis size " + std::to_string(basis.size()) +
                           " (need N >= 2*basis)");
}

struct RankRevealingFit {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
    Eigen::MatrixXd X;

    explicit RankRevealingFit(Eigen::MatrixXd design, const RegressionBasis& basis)
        : X(std::move(design)) {
        qr.setThreshold(kRankTol);
        qr.compute(X);
        Eigen::Index rank = qr.rank();
        if (rank < X.cols()) {
            // the pivot ordering puts dependent columns last
            Eigen::Index dead = qr.colsPermutation().indices()(X.cols() - 1);
            throw RegressionError(
                "regression: design matrix is rank-deficient (rank " + std::to_string(rank) +
                    " of " + std::to_string(X.cols()) + "), degenerate feature '" +
                    basis.feature_name(std::size_t(dead)) + "'",
                basis.feature_name(std::size_t(dead)));
        }
    }

    Eigen::VectorXd fitted(const Eigen::VectorXd& y) const { return X * qr.solve(y); }
};

}  // namespace

std::vector<double> cond_exp_regress(const PathBundle& pb, int m, std::span<const double> values,
                                     const RegressionBasis& basis) {
    check_regression_pre(pb, m, values.size(), basis);
    RankRevealingFit fit(design_matrix(pb, m, basis), basis);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
    Eigen::VectorXd f = fit.fitted(y);
    return std::vector<double>(f.data(), f.data() + f.size());
}

std::vector<double> cond_z_regress(const PathBundle& pb, int m, std::span<const double> values,
                                   const RegressionBasis& basis) {
    check_regression_pre(pb, m, values.size(), basis);
    if (m >= pb.M) throw InvalidInput("cond_z_regress: layer must be below M");
    RankRevealingFit fit(design_matrix(pb, m, basis), basis);

    double inv_dt = 1.0 / pb.dt();
    std::vector<double> out(pb.N * std::size_t(pb.d));
    Eigen::VectorXd rhs(pb.N);
    for (int r = 0; r < pb.d; ++r) {
        for (std::size_t p = 0; p < pb.N; ++p)
            rhs(p) = values[p] * pb.increment(p, m, r) * inv_dt;
        Eigen::VectorXd f = fit.fitted(rhs);
        for (std::size_t p = 0; p < pb.N; ++p) out[p * pb.d + r] = f(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// McEngine
// ---------------------------------------------------------------------------

struct McEngine::LayerSolver {
    int m = -1;
    Eigen::MatrixXd X;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr;
};

McEngine::~McEngine() = default;
McEngine::McEngine(McEngine&&) noexcept = default;
McEngine& McEngine::operator=(McEngine&&) noexcept = default;

McEngine::McEngine(PathBundle bundle, RegressionBasis basis)
    : bundle_(std::move(bundle)), basis_(std::move(basis)) {
    if (basis_.d != bundle_.d)
        throw InvalidInput("McEngine: basis dimension does not match bundle");
    if (bundle_.N < 2 * basis_.size())
        throw InvalidInput("McEngine: N = " + std::to_string(bundle_.N) +
                           " too small for basis size " + std::to_string(basis_.size()) +
                           " (need N >= 2*basis)");
}

const McEngine::LayerSolver& McEngine::solver_for(int m) const {
    if (!cache_ || cache_->m != m) {
        auto ls = std::make_unique<LayerSolver>();
        ls->m = m;
        ls->X = design_matrix(bundle_, m, basis_);
        ls->qr.setThreshold(kRankTol);
        ls->qr.compute(ls->X);
        if (ls->qr.rank() < ls->X.cols()) {
            Eigen::Index dead = ls->qr.colsPermutation().indices()(ls->X.cols() - 1);
            throw RegressionError("McEngine: rank-deficient design at layer " + std::to_string(m) +
                                      ", degenerate feature '" +
                                      basis_.feature_name(std::size_t(dead)) + "'",
                                  basis_.feature_name(std::size_t(dead)));
        }
        cache_ = std::move(ls);
    }
    return *cache_;
}

void McEngine::states(int m, std::span<double> out) const {
    if (m < 0 || m > bundle_.M) throw InvalidInput("McEngine::states: layer out of range");
    if (out.size() != bundle_.N * std::size_t(bundle_.d))
        throw InvalidInput("McEngine::states: output size mismatch");
    for (std::size_t p = 0; p < bundle_.N; ++p)
        for (int r = 0; r < bundle_.d; ++r) out[p * bundle_.d + r] = bundle_.state(p, m, r);
}

double McEngine::expect(int, std::span<const double> field) const {
    if (field.size() != bundle_.N) throw InvalidInput("McEngine::expect: field size mismatch");
    double acc = 0.0;
    for (double v : field) acc += v;
    return acc / double(bundle_.N);
}

void McEngine::cond_exp(int m, std::span<const double> next, std::span<double> out) const {
    if (next.size() != bundle_.N || out.size() != bundle_.N)
        throw InvalidInput("McEngine::cond_exp: field size mismatch");
    if (m == 0) {
        // W_0 = 0 on every path: conditioning on the deterministic initial
        // state is plain averaging
        double mean = expect(0, next);
        std::fill(out.begin(), out.end(), mean);
        return;
    }
    const LayerSolver& ls = solver_for(m);
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(next.data(), next.size());
    Eigen::VectorXd f = ls.X * ls.qr.solve(y);
    for (std::size_t p = 0; p < bundle_.N; ++p) out[p] = f(p);
}

void McEngine::cond_z(int m, std::span<const double> next, std::span<double> out) const {
    if (next.size() != bundle_.N || out.size() != bundle_.N * std::size_t(bundle_.d))
        throw InvalidInput("McEngine::cond_z: field size mismatch");
    double inv_dt = 1.0 / bundle_.dt();
    if (m == 0) {
        for (int r = 0; r < bundle_.d; ++r) {
            double acc = 0.0;
            for (std::size_t p = 0; p < bundle_.N; ++p)
                acc += next[p] * bundle_.increment(p, 0, r);
            acc = acc / double(bundle_.N) * inv_dt;
            for (std::size_t p = 0; p < bundle_.N; ++p) out[p * bundle_.d + r] = acc;
        }
        return;
    }
    const LayerSolver& ls = solver_for(m);
    Eigen::VectorXd rhs(bundle_.N);
    for (int r = 0; r < bundle_.d; ++r) {
        for (std::size_t p = 0; p < bundle_.N; ++p)
            rhs(p) = next[p] * bundle_.increment(p, m, r) * inv_dt;
        Eigen::VectorXd f = ls.X * ls.qr.solve(rhs);
        for (std::size_t p = 0; p < bundle_.N; ++p) out[p * bundle_.d + r] = f(p);
    }
}

}  // namespace rbsde
