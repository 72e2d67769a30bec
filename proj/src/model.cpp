#include "rbsde/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rbsde/errors.hpp"

namespace rbsde {

namespace {

double dot(std::span<const double> x, std::span<const double> y) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

std::string fmt_vec(std::span<const double> x) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << fmt(x[i]);
    os << ")";
    return os.str();
}

void require_shape(bool ok, const std::string& what) {
    if (!ok) throw InvalidInput(what);
}

}  // namespace

// ---------------------------------------------------------------------------
// GeneratorSpec
// ---------------------------------------------------------------------------

double GeneratorSpec::eval(int i, double t, std::span<const double> y,
                           std::span<const double> zi) const {
    if (custom) return custom(i, t, y, zi);
    double v = a[i];
    for (std::size_t j = 0; j < y.size(); ++j) v += c[i][j] * y[j];
    v += dot(std::span<const double>(b[i]), zi);
    v += 0.5 * gamma[i] * dot(zi, zi);
    return v;
}

double GeneratorSpec::implied_C(int n, int d) const {
    if (custom) return declared_C;
    (void)d;
    // |f^i| <= (|a_i| + |c_i.| + |b_i| + gamma_i/2) (1 + |y| + |z^i|^2)
    // using |z| <= 1 + |z|^2 and the row 2-norm for the y block
    double C = 0.0;
    for (int i = 0; i < n; ++i) {
        double ci = norm2(std::span<const double>(c[i]));
        double bi = norm2(std::span<const double>(b[i]));
        C = std::max(C, std::abs(a[i]) + ci + bi + 0.5 * gamma[i]);
    }
    return C;
}

double GeneratorSpec::structural_C(int n, int d) const {
    return declared_C >= 0.0 ? declared_C : implied_C(n, d);
}

bool GeneratorSpec::offdiag_nonneg(int n) const {
    if (custom) return true;  // sampling is the only check for custom drivers
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (j != i && c[i][j] < 0.0) return false;
    return true;
}

// ---------------------------------------------------------------------------
// BarrierSpec / TerminalSpec
// ---------------------------------------------------------------------------

double BarrierSpec::eval(int i, double t, std::span<const double> w) const {
    double v;
    if (custom) {
        v = custom(i, t, w);
    } else {
        v = std::min(cap[i], alpha[i] + dot(std::span<const double>(beta[i]), w) + delta[i] * t);
    }
    return std::max(v, kFloor);
}

double TerminalSpec::eval(int i, std::span<const double> w) const {
    if (custom) return custom(i, w);
    double lo = clamp_lo.empty() ? -xi_max : clamp_lo[i];
    double hi = clamp_hi.empty() ? xi_max : clamp_hi[i];
    return std::clamp(alpha[i] + dot(std::span<const double>(beta[i]), w), lo, hi);
}

// ---------------------------------------------------------------------------
// PenaltySchedule / EngineConfig / Scenario
// ---------------------------------------------------------------------------

double PenaltySchedule::level(int j) const { return k0 * std::pow(growth, j); }

double EngineConfig::clamp_bound(double xi_max, double s_plus_max) const {
    return clamp_multiplier * (xi_max + std::max(s_plus_max, 0.0) + 1.0);
}

void Scenario::check_shapes() const {
    require_shape(n >= 1, "scenario: n must be >= 1");
    require_shape(d >= 1, "scenario: d must be >= 1");
    require_shape(T > 0.0, "scenario: T must be positive");
    require_shape(steps >= 1, "scenario: steps must be >= 1");

    auto nn = std::size_t(n);
    auto dd = std::size_t(d);
    if (!generator.custom) {
        require_shape(generator.a.size() == nn, "generator.a must have n entries");
        require_shape(generator.c.size() == nn, "generator.c must have n rows");
        for (const auto& row : generator.c)
            require_shape(row.size() == nn, "generator.c rows must have n entries");
        require_shape(generator.b.size() == nn, "generator.b must have n rows");
        for (const auto& row : generator.b)
            require_shape(row.size() == dd, "generator.b rows must have d entries");
        require_shape(generator.gamma.size() == nn, "generator.gamma must have n entries");
        for (int i = 0; i < n; ++i)
            require_shape(generator.gamma[i] >= 0.0, "generator.gamma must be nonnegative");
    } else {
        require_shape(generator.declared_C >= 0.0,
                      "custom generators must declare a structural constant");
    }
    if (!barrier.custom) {
        require_shape(barrier.cap.size() == nn, "barrier.cap must have n entries");
        require_shape(barrier.alpha.size() == nn, "barrier.alpha must have n entries");
        require_shape(barrier.beta.size() == nn, "barrier.beta must have n rows");
        for (const auto& row : barrier.beta)
            require_shape(row.size() == dd, "barrier.beta rows must have d entries");
        require_shape(barrier.delta.size() == nn, "barrier.delta must have n entries");
    }
    if (!terminal.custom) {
        require_shape(terminal.alpha.size() == nn, "terminal.alpha must have n entries");
        require_shape(terminal.beta.size() == nn, "terminal.beta must have n rows");
        for (const auto& row : terminal.beta)
            require_shape(row.size() == dd, "terminal.beta rows must have d entries");
        require_shape(terminal.clamp_lo.empty() || terminal.clamp_lo.size() == nn,
                      "terminal.clamp_lo must have n entries when present");
        require_shape(terminal.clamp_hi.empty() || terminal.clamp_hi.size() == nn,
                      "terminal.clamp_hi must have n entries when present");
    }
    require_shape(terminal.xi_max > 0.0, "terminal.xi_max must be positive");
    require_shape(penalty_schedule.k0 > 0.0, "penalty_schedule.k0 must be positive");
    require_shape(penalty_schedule.growth > 1.0, "penalty_schedule.growth must exceed 1");
    require_shape(penalty_schedule.count >= 1, "penalty_schedule.count must be >= 1");
    require_shape(std::isfinite(penalty_schedule.max_level()),
                  "penalty_schedule levels must stay finite");
    require_shape(engine_config.picard_tol > 0.0, "engine_config.picard_tol must be positive");
    require_shape(engine_config.picard_max_iter >= 1,
                  "engine_config.picard_max_iter must be >= 1");
}

// ---------------------------------------------------------------------------
// Validators
// ---------------------------------------------------------------------------

AssumptionReport validate_growth(const GeneratorSpec& gen, int n, int d,
                                 std::span<const GrowthSample> samples) {
    if (samples.empty()) throw InvalidInput("validate_growth: empty sample set");

    AssumptionReport rep;
    rep.assumption = "growth";
    double declared = gen.structural_C(n, d);
    double worst_ratio = 0.0;
    std::string worst_desc;

    for (const auto& s : samples) {
        if (int(s.y.size()) != n || int(s.z.size()) != n)
            throw InvalidInput("validate_growth: sample shape does not match (n, d)");
        double ny = norm2(std::span<const double>(s.y));
        for (int i = 0; i < n; ++i) {
            if (int(s.z[i].size()) != d)
                throw InvalidInput("validate_growth: z rows must have d columns");
            std::span<const double> zi(s.z[i]);
            double f = gen.eval(i, s.t, std::span<const double>(s.y), zi);
            double bound = 1.0 + ny + dot(zi, zi);
            double ratio = std::abs(f) / bound;
            if (ratio > worst_ratio) {
                worst_ratio = ratio;
                worst_desc = "i=" + std::to_string(i + 1) + " t=" + fmt(s.t) + " y=" +
                             fmt_vec(std::span<const double>(s.y)) + " z^i=" + fmt_vec(zi) +
                             " |f|=" + fmt(std::abs(f)) + " > C*(1+|y|+|z|^2)=" +
                             fmt(declared * bound);
            }
        }
    }

    rep.estimated_C = worst_ratio;
    rep.pass = std::isfinite(worst_ratio) && worst_ratio <= declared + 1e-12;
    if (!rep.pass) rep.witness = worst_desc;
    return rep;
}

AssumptionReport validate_off_diagonal_monotonicity(const GeneratorSpec& gen, int n, int d,
                                                    std::span<const MonotonePair> pairs,
                                                    double tol) {
    AssumptionReport rep;
    rep.assumption = "offdiag_monotone";

    if (n == 1) {  // no off-diagonal components: vacuously monotone
        rep.pass = true;
        rep.estimated_C = 0.0;
        return rep;
    }

    double worst_margin = 0.0;  // most negative f(y_bar) - f(y)
    std::string worst_desc;
    for (const auto& p : pairs) {
        if (int(p.y.size()) != n || int(p.y_bar.size()) != n || int(p.zi.size()) != d ||
            p.i < 0 || p.i >= n)
            throw InvalidInput("validate_off_diagonal_monotonicity: sample shape mismatch");
        if (p.y[p.i] != p.y_bar[p.i])
            throw InvalidInput("validate_off_diagonal_monotonicity: pair must agree in component i");
        for (int j = 0; j < n; ++j)
            if (j != p.i && p.y[j] > p.y_bar[j])
                throw InvalidInput(
                    "validate_off_diagonal_monotonicity: pair violates y <= y_bar off the diagonal");

        double lo = gen.eval(p.i, p.t, std::span<const double>(p.y), std::span<const double>(p.zi));
        double hi = gen.eval(p.i, p.t, std::span<const double>(p.y_bar),
                             std::span<const double>(p.zi));
        double margin = hi - lo;
        if (margin < worst_margin) {
            worst_margin = margin;
            worst_desc = "i=" + std::to_string(p.i + 1) + " t=" + fmt(p.t) + " y=" +
                         fmt_vec(std::span<const double>(p.y)) + " y_bar=" +
                         fmt_vec(std::span<const double>(p.y_bar)) + " f(y)=" + fmt(lo) +
                         " > f(y_bar)=" + fmt(hi);
        }
    }

    bool closed_form = gen.offdiag_nonneg(n);
    rep.estimated_C = worst_margin;
    rep.pass = closed_form && worst_margin >= -tol;
    if (!rep.pass) {
        rep.witness = worst_desc.empty() ? "off-diagonal coefficient c_ij < 0" : worst_desc;
    }
    return rep;
}

AssumptionReport validate_bounds(const BarrierSpec& barrier, const TerminalSpec& terminal, int n,
                                 int d, double T, std::span<const BoundsSample> samples) {
    if (samples.empty()) throw InvalidInput("validate_bounds: empty sample set");

    AssumptionReport rep;
    rep.assumption = "bounds";
    double worst = 0.0;  // most positive violation
    std::string worst_desc;

    auto record = [&](double violation, const std::string& desc) {
        if (violation > worst) {
            worst = violation;
            worst_desc = desc;
        }
    };

    for (const auto& s : samples) {
        if (int(s.w.size()) != d) throw InvalidInput("validate_bounds: sample w must have d entries");
        std::span<const double> w(s.w);
        for (int i = 0; i < n; ++i) {
            double h = barrier.eval(i, s.t, w);
            record(std::max(h, 0.0) - barrier.S_plus_max,
                   "h^+(" + fmt(s.t) + ", " + fmt_vec(w) + ") = " + fmt(std::max(h, 0.0)) +
                       " exceeds S_plus_max = " + fmt(barrier.S_plus_max) +
                       " in component " + std::to_string(i + 1));
            double g = terminal.eval(i, w);
            record(std::abs(g) - terminal.xi_max,
                   "|g(" + fmt_vec(w) + ")| = " + fmt(std::abs(g)) + " exceeds xi_max = " +
                       fmt(terminal.xi_max) + " in component " + std::to_string(i + 1));
            double hT = barrier.eval(i, T, w);
            record(hT - g, "terminal consistency: g(" + fmt_vec(w) + ") = " + fmt(g) +
                               " < h(T, .) = " + fmt(hT) + " in component " +
                               std::to_string(i + 1));
        }
    }

    rep.estimated_C = worst;
    rep.pass = worst <= 1e-12;
    if (!rep.pass) rep.witness = worst_desc;
    return rep;
}

// ---------------------------------------------------------------------------
// Default probe sets (deterministic)
// ---------------------------------------------------------------------------

namespace {

std::vector<double> linspace(double lo, double hi, int count) {
    std::vector<double> v(count);
    if (count == 1) {
        v[0] = lo;
        return v;
    }
    for (int i = 0; i < count; ++i) v[i] = lo + (hi - lo) * double(i) / double(count - 1);
    return v;
}

// small deterministic generator for probe vectors
struct SplitMix {
    std::uint64_t s;
    double next_unit() {
        s += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = s;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        z = z ^ (z >> 31);
        return double(z >> 11) * 0x1.0p-53;
    }
    double next_in(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
};

}  // namespace

std::vector<GrowthSample> default_growth_samples(const Scenario& sc) {
    std::vector<GrowthSample> out;
    SplitMix rng{0x5eedULL};
    double yr = 2.0 * sc.terminal.xi_max + 1.0;
    double zr = 3.0;
    for (double t : linspace(0.0, sc.T, 5)) {
        for (int rep = 0; rep < 24; ++rep) {
            GrowthSample s;
            s.t = t;
            s.y.resize(sc.n);
            for (auto& v : s.y) v = rng.next_in(-yr, yr);
            s.z.assign(sc.n, std::vector<double>(sc.d));
            for (auto& row : s.z)
                for (auto& v : row) v = rng.next_in(-zr, zr);
            out.push_back(std::move(s));
        }
    }
    return out;
}

std::vector<MonotonePair> default_monotone_pairs(const Scenario& sc) {
    std::vector<MonotonePair> out;
    if (sc.n == 1) return out;
    SplitMix rng{0xabcdULL};
    double yr = 2.0 * sc.terminal.xi_max + 1.0;
    for (double t : linspace(0.0, sc.T, 3)) {
        for (int i = 0; i < sc.n; ++i) {
            for (int rep = 0; rep < 16; ++rep) {
                MonotonePair p;
                p.t = t;
                p.i = i;
                p.y.resize(sc.n);
                for (auto& v : p.y) v = rng.next_in(-yr, yr);
                p.y_bar = p.y;
                for (int j = 0; j < sc.n; ++j)
                    if (j != i) p.y_bar[j] += rng.next_in(0.0, yr);
                p.zi.resize(sc.d);
                for (auto& v : p.zi) v = rng.next_in(-3.0, 3.0);
                out.push_back(std::move(p));
            }
        }
    }
    return out;
}

std::vector<BoundsSample> default_bounds_samples(const Scenario& sc) {
    std::vector<BoundsSample> out;
    double wr = 3.0 * std::sqrt(sc.T) + 1.0;
    int per_axis = sc.d == 1 ? 41 : 13;
    std::vector<double> axis = linspace(-wr, wr, per_axis);
    std::vector<double> times = linspace(0.0, sc.T, 5);

    std::vector<int> idx(sc.d, 0);
    bool done = false;
    while (!done) {
        for (double t : times) {
            BoundsSample s;
            s.t = t;
            s.w.resize(sc.d);
            for (int r = 0; r < sc.d; ++r) s.w[r] = axis[idx[r]];
            out.push_back(std::move(s));
        }
        int r = sc.d - 1;
        while (r >= 0 && ++idx[r] == per_axis) {
            idx[r] = 0;
            --r;
        }
        done = r < 0;
    }
    return out;
}

std::vector<AssumptionReport> validate_scenario(const Scenario& sc) {
    sc.check_shapes();
    std::vector<AssumptionReport> reports;
    auto growth = default_growth_samples(sc);
    reports.push_back(validate_growth(sc.generator, sc.n, sc.d, growth));
    auto pairs = default_monotone_pairs(sc);
    AssumptionReport mono = validate_off_diagonal_monotonicity(sc.generator, sc.n, sc.d, pairs);
    reports.push_back(std::move(mono));
    auto bounds = default_bounds_samples(sc);
    reports.push_back(validate_bounds(sc.barrier, sc.terminal, sc.n, sc.d, sc.T, bounds));
    return reports;
}

void require_valid(const Scenario& sc) {
    for (const auto& rep : validate_scenario(sc)) {
        if (!rep.pass) {
            throw InvalidInput("scenario rejected by " + rep.assumption + " validator: " +
                               (rep.has_witness() ? rep.witness : "no witness"));
        }
    }
}

}  // namespace rbsde
