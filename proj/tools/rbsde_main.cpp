// rbsde: penalized reflected-BSDE solver and verification CLI.
//
// Exit codes: 0 pass, 1 check failure, 2 usage/config error, 3 numerical error.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>

#include "rbsde/errors.hpp"
#include "rbsde/experiment.hpp"

namespace {

constexpr int kExitPass = 0;
constexpr int kExitCheckFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

void add_common_options(CLI::App* cmd, rbsde::RunConfig& cfg, std::string& scenario,
                        std::string& engine, std::string& out) {
    cmd->add_option("--scenario", scenario, "Scenario file (JSON)")->required();
    cmd->add_option("--engine", engine, "Expectation engine: lattice | mc")
        ->check(CLI::IsMember({"lattice", "mc"}));
    cmd->add_option("--out", out, "Output directory for reports");
    cmd->add_option("--k0", [&cfg](const CLI::results_t& r) {
        cfg.k0 = std::stod(r[0]);
        return true;
    }, "Initial penalty level override");
    cmd->add_option("--kfactor", [&cfg](const CLI::results_t& r) {
        cfg.kfactor = std::stod(r[0]);
        return true;
    }, "Penalty growth factor override");
    cmd->add_option("--kcount", [&cfg](const CLI::results_t& r) {
        cfg.kcount = std::stoi(r[0]);
        return true;
    }, "Penalty level count override");
    cmd->add_option("--steps", [&cfg](const CLI::results_t& r) {
        cfg.steps = std::stoi(r[0]);
        return true;
    }, "Time steps override");
    cmd->add_option("--seed", [&cfg](const CLI::results_t& r) {
        cfg.seed = std::stoull(r[0]);
        return true;
    }, "mc stream seed override");
    cmd->add_option("--paths", [&cfg](const CLI::results_t& r) {
        cfg.paths = std::stoull(r[0]);
        return true;
    }, "mc path count override");
    cmd->add_option("--basis-degree", [&cfg](const CLI::results_t& r) {
        cfg.basis_degree = std::stoi(r[0]);
        return true;
    }, "mc regression basis total degree");
    cmd->add_option("--tol-limit", [&cfg](const CLI::results_t& r) {
        cfg.tol_limit = std::stod(r[0]);
        return true;
    }, "Schedule convergence tolerance");
    cmd->add_option("--tol-skorokhod", [&cfg](const CLI::results_t& r) {
        cfg.tol_skorokhod = std::stod(r[0]);
        return true;
    }, "Skorokhod residual tolerance");
    cmd->add_option("--grain", cfg.parallel_grain, "Parallelism grain (reproducibility probe)");
}

int run_solve_or_verify(const rbsde::RunConfig& cfg) {
    rbsde::Report report = rbsde::run_experiment(cfg);
    std::cout << "scenario " << report.scenario_fingerprint << " engine=" << report.engine
              << " k_max=" << report.k_max << (report.converged ? " converged" : " unconverged")
              << "\n";
    for (const auto& row : report.rows) {
        std::cout << "  k=" << row.k << " Y0_1=" << (row.y0.empty() ? 0.0 : row.y0[0])
                  << " shortfall_1=" << (row.shortfall.empty() ? 0.0 : row.shortfall[0]) << "\n";
    }
    if (cfg.with_verification) {
        for (const auto& c : report.verification.checks) {
            std::cout << (c.pass ? "  PASS " : "  FAIL ") << c.name << " residual=" << c.residual
                      << (c.worst.empty() ? "" : " [" + c.worst + "]") << "\n";
        }
    }
    if (!cfg.out_dir.empty()) std::cout << "reports written to " << cfg.out_dir.string() << "\n";
    return report.pass || !cfg.with_verification ? kExitPass : kExitCheckFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Penalized solver for reflected BSDE systems with diagonally quadratic drivers"};
    app.require_subcommand(1);

    rbsde::RunConfig solve_cfg, verify_cfg;
    std::string solve_scenario, solve_engine = "lattice", solve_out;
    std::string verify_scenario, verify_engine = "lattice", verify_out;
    std::string acceptance_out = "acceptance_out";

    CLI::App* solve = app.add_subcommand("solve", "Run the penalty schedule and emit metrics");
    add_common_options(solve, solve_cfg, solve_scenario, solve_engine, solve_out);

    CLI::App* verify =
        app.add_subcommand("verify", "Run the schedule plus every applicable verification");
    add_common_options(verify, verify_cfg, verify_scenario, verify_engine, verify_out);

    CLI::App* acceptance = app.add_subcommand("acceptance", "Run the bundled acceptance suite");
    acceptance->add_option("--out", acceptance_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (solve->parsed()) {
            solve_cfg.scenario_path = solve_scenario;
            solve_cfg.engine = solve_engine;
            solve_cfg.out_dir = solve_out;
            solve_cfg.with_verification = false;
            return run_solve_or_verify(solve_cfg);
        }
        if (verify->parsed()) {
            verify_cfg.scenario_path = verify_scenario;
            verify_cfg.engine = verify_engine;
            verify_cfg.out_dir = verify_out;
            verify_cfg.with_verification = true;
            return run_solve_or_verify(verify_cfg);
        }
        if (acceptance->parsed()) {
            int failures = rbsde::run_acceptance(acceptance_out, std::cout);
            return failures == 0 ? kExitPass : kExitCheckFailure;
        }
    } catch (const rbsde::NonConvergence& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const rbsde::ResourceError& e) {
        std::cerr << "resource error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const rbsde::RegressionError& e) {
        std::cerr << "regression error: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const rbsde::InvalidInput& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitConfig;
}
