#include "rbsde/scenario_io.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

#include "rbsde/errors.hpp"

namespace rbsde {

using nlohmann::json;

namespace {

// field-by-field extraction so errors name the offending path

template <typename T>
T get_required(const json& j, const std::string& field, const std::string& ctx) {
    if (!j.contains(field))
        throw InvalidInput("scenario parse: missing field '" + ctx + field + "'");
    try {
        return j.at(field).get<T>();
    } catch (const json::exception& e) {
        throw InvalidInput("scenario parse: bad value for '" + ctx + field + "': " + e.what());
    }
}

template <typename T>
T get_optional(const json& j, const std::string& field, const std::string& ctx, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception& e) {
        throw InvalidInput("scenario parse: bad value for '" + ctx + field + "': " + e.what());
    }
}

using Vec = std::vector<double>;
using Mat = std::vector<std::vector<double>>;

GeneratorSpec generator_from_json(const json& j) {
    GeneratorSpec g;
    g.family = get_optional<std::string>(j, "family", "generator.", "linear_quadratic");
    if (g.family != "linear_quadratic")
        throw InvalidInput("scenario parse: unknown generator.family '" + g.family +
                           "' (files support 'linear_quadratic'; other drivers are code-level)");
    g.a = get_required<Vec>(j, "a", "generator.");
    g.c = get_required<Mat>(j, "c", "generator.");
    g.b = get_required<Mat>(j, "b", "generator.");
    g.gamma = get_required<Vec>(j, "gamma", "generator.");
    g.declared_C = get_optional<double>(j, "declared_C", "generator.", -1.0);
    return g;
}

BarrierSpec barrier_from_json(const json& j) {
    BarrierSpec b;
    b.family = get_optional<std::string>(j, "family", "barrier.", "clamped_affine");
    if (b.family != "clamped_affine")
        throw InvalidInput("scenario parse: unknown barrier.family '" + b.family + "'");
    b.cap = get_required<Vec>(j, "cap", "barrier.");
    b.alpha = get_required<Vec>(j, "alpha", "barrier.");
    b.beta = get_required<Mat>(j, "beta", "barrier.");
    b.delta = get_required<Vec>(j, "delta", "barrier.");
    b.S_plus_max = get_required<double>(j, "S_plus_max", "barrier.");
    return b;
}

TerminalSpec terminal_from_json(const json& j) {
    TerminalSpec t;
    t.family = get_optional<std::string>(j, "family", "terminal.", "clamped_affine");
    if (t.family != "clamped_affine")
        throw InvalidInput("scenario parse: unknown terminal.family '" + t.family + "'");
    t.alpha = get_required<Vec>(j, "alpha", "terminal.");
    t.beta = get_required<Mat>(j, "beta", "terminal.");
    t.xi_max = get_required<double>(j, "xi_max", "terminal.");
    t.clamp_lo = get_optional<Vec>(j, "clamp_lo", "terminal.", {});
    t.clamp_hi = get_optional<Vec>(j, "clamp_hi", "terminal.", {});
    return t;
}

PenaltySchedule schedule_from_json(const json& j) {
    PenaltySchedule s;
    s.k0 = get_required<double>(j, "k0", "penalty_schedule.");
    s.growth = get_required<double>(j, "growth", "penalty_schedule.");
    s.count = get_required<int>(j, "count", "penalty_schedule.");
    return s;
}

EngineConfig engine_from_json(const json& j) {
    EngineConfig e;
    e.node_budget = get_optional<std::size_t>(j, "node_budget", "engine_config.", e.node_budget);
    e.seed = get_optional<std::uint64_t>(j, "seed", "engine_config.", e.seed);
    e.paths = get_optional<std::size_t>(j, "paths", "engine_config.", e.paths);
    e.basis_degree = get_optional<int>(j, "basis_degree", "engine_config.", e.basis_degree);
    e.picard_tol = get_optional<double>(j, "picard_tol", "engine_config.", e.picard_tol);
    e.picard_max_iter =
        get_optional<int>(j, "picard_max_iter", "engine_config.", e.picard_max_iter);
    e.clamp_multiplier =
        get_optional<double>(j, "clamp_multiplier", "engine_config.", e.clamp_multiplier);
    e.tol_limit = get_optional<double>(j, "tol_limit", "engine_config.", e.tol_limit);
    e.tol_skorokhod = get_optional<double>(j, "tol_skorokhod", "engine_config.", e.tol_skorokhod);
    e.tol_contact = get_optional<double>(j, "tol_contact", "engine_config.", e.tol_contact);
    e.tol_flat = get_optional<double>(j, "tol_flat", "engine_config.", e.tol_flat);
    return e;
}

}  // namespace

Scenario scenario_from_json(const json& j) {
    Scenario sc;
    sc.n = get_required<int>(j, "n", "");
    sc.d = get_required<int>(j, "d", "");
    sc.T = get_required<double>(j, "T", "");
    sc.steps = get_required<int>(j, "steps", "");
    sc.generator = generator_from_json(get_required<json>(j, "generator", ""));
    sc.barrier = barrier_from_json(get_required<json>(j, "barrier", ""));
    sc.terminal = terminal_from_json(get_required<json>(j, "terminal", ""));
    sc.penalty_schedule = schedule_from_json(get_required<json>(j, "penalty_schedule", ""));
    if (j.contains("engine_config"))
        sc.engine_config = engine_from_json(j.at("engine_config"));
    sc.check_shapes();
    return sc;
}

json scenario_to_json(const Scenario& sc) {
    if (sc.generator.custom || sc.barrier.custom || sc.terminal.custom)
        throw InvalidInput("scenario_to_json: custom callables are not serializable");
    json j;
    j["n"] = sc.n;
    j["d"] = sc.d;
    j["T"] = sc.T;
    j["steps"] = sc.steps;
    j["generator"] = {{"family", sc.generator.family}, {"a", sc.generator.a},
                      {"c", sc.generator.c},           {"b", sc.generator.b},
                      {"gamma", sc.generator.gamma}};
    if (sc.generator.declared_C >= 0.0) j["generator"]["declared_C"] = sc.generator.declared_C;
    j["barrier"] = {{"family", sc.barrier.family}, {"cap", sc.barrier.cap},
                    {"alpha", sc.barrier.alpha},   {"beta", sc.barrier.beta},
                    {"delta", sc.barrier.delta},   {"S_plus_max", sc.barrier.S_plus_max}};
    j["terminal"] = {{"family", sc.terminal.family},
                     {"alpha", sc.terminal.alpha},
                     {"beta", sc.terminal.beta},
                     {"xi_max", sc.terminal.xi_max}};
    if (!sc.terminal.clamp_lo.empty()) j["terminal"]["clamp_lo"] = sc.terminal.clamp_lo;
    if (!sc.terminal.clamp_hi.empty()) j["terminal"]["clamp_hi"] = sc.terminal.clamp_hi;
    j["penalty_schedule"] = {{"k0", sc.penalty_schedule.k0},
                             {"growth", sc.penalty_schedule.growth},
                             {"count", sc.penalty_schedule.count}};
    j["engine_config"] = {{"node_budget", sc.engine_config.node_budget},
                          {"seed", sc.engine_config.seed},
                          {"paths", sc.engine_config.paths},
                          {"basis_degree", sc.engine_config.basis_degree},
                          {"picard_tol", sc.engine_config.picard_tol},
                          {"picard_max_iter", sc.engine_config.picard_max_iter},
                          {"clamp_multiplier", sc.engine_config.clamp_multiplier},
                          {"tol_limit", sc.engine_config.tol_limit},
                          {"tol_skorokhod", sc.engine_config.tol_skorokhod},
                          {"tol_contact", sc.engine_config.tol_contact},
                          {"tol_flat", sc.engine_config.tol_flat}};
    return j;
}

Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("load_scenario: cannot open " + path.string());
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw InvalidInput("load_scenario: " + path.string() + ": " + e.what());
    }
    Scenario sc = scenario_from_json(j);
    require_valid(sc);  // witness-carrying InvalidInput on failure
    return sc;
}

std::uint64_t fingerprint(const Scenario& sc) {
    std::string canon = scenario_to_json(sc).dump();  // keys are sorted by construction
    std::uint64_t h = 0xcbf29ce484222325ULL;           // FNV-1a 64
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string fingerprint_hex(const Scenario& sc) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fingerprint(sc)));
    return buf;
}

}  // namespace rbsde
