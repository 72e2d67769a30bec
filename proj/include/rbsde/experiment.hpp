#ifndef RBSDE_EXPERIMENT_HPP
#define RBSDE_EXPERIMENT_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/model.hpp"
#include "rbsde/reflection.hpp"
#include "rbsde/verify.hpp"

namespace rbsde {

inline constexpr const char* kVersion = "1.0.0";

struct RunConfig {
    std::filesystem::path scenario_path;
    std::string engine = "lattice";  // "lattice" | "mc"
    std::filesystem::path out_dir;

    // schedule / discretization overrides (empty: use the scenario's values)
    std::optional<double> k0;
    std::optional<double> kfactor;
    std::optional<int> kcount;
    std::optional<int> steps;

    // mc overrides
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<int> basis_degree;

    std::optional<double> tol_limit;
    std::optional<double> tol_skorokhod;

    int parallel_grain = 0;  // accepted for reproducibility probes; solves are
                             // pure per-element maps so the grain cannot change results
    bool with_verification = true;
};

/// One row of the per-level metric table (CSV column order:
/// k, Y0_1..n, shortfall_1..n, skorokhod_1..n, bmo_1..n, KT_p2_1..n,
/// picard_max, wall_ms).
struct MetricRow {
    double k = 0.0;
    std::vector<double> y0, shortfall, skorokhod, bmo, kt_p2;
    int picard_max = 0;
    double wall_ms = 0.0;
};

struct Report {
    std::string scenario_fingerprint;
    std::string version = kVersion;
    std::string engine;
    int n = 1;
    bool converged = false;
    double k_max = 0.0;
    std::vector<MetricRow> rows;  // sorted by k ascending
    VerificationReport verification;
    double wall_ms = 0.0;
    bool pass = false;  // all verification checks green
};

/// Applies the config's overrides to a copy of the scenario.
Scenario apply_overrides(Scenario sc, const RunConfig& cfg);

/// The full verification battery for one completed schedule run.
VerificationReport verify_run(const Scenario& sc, const ExpectationEngine& eng,
                              const PenaltyRun& run);

std::unique_ptr<ExpectationEngine> make_engine(const Scenario& sc, const std::string& kind);

/**
 * Loads and validates the scenario, runs the penalty schedule on the selected
 * engine, then (unless disabled) every verification that applies to it.
 * Writes metrics.csv, report.json and summary.json into out_dir, creating it
 * if needed; on error a partial report is written with a "failed" marker.
 */
Report run_experiment(const RunConfig& cfg);

std::string metrics_csv(const Report& report);
void write_report(const Report& report, const std::filesystem::path& out_dir);

/// Scenarios bundled for the acceptance suite, constructed in code so every
/// tolerance lives next to the check that uses it. Names:
/// "unreflected", "quadratic_unreflected", "quadratic_reflected", "coupled_pair".
Scenario bundled_scenario(const std::string& name);

/// Runs the full acceptance suite, printing one pass/fail line per criterion
/// to `os` and writing acceptance_summary.json plus the bundled scenario
/// files into out_dir. Returns the number of failed criteria.
int run_acceptance(const std::filesystem::path& out_dir, std::ostream& os);

}  // namespace rbsde

#endif  // RBSDE_EXPERIMENT_HPP
