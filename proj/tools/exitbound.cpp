// exitbound: scenario runner for the exit-time comparison bound.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "exitbound/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Compare first exit times of two diffusions sharing one Wiener process.", "exitbound"};
    app.set_version_flag("--version", exitbound::kVersion);

    std::string command;
    std::string scenario;
    std::size_t workers = 0;
    std::string out;
    std::uint64_t seed = 0;

    app.add_option("command", command, "solve-pde | simulate | verify-bound | convergence")
        ->required()
        ->check(CLI::IsMember(exitbound::commands()));
    app.add_option("scenario", scenario, "Scenario file (.scn)")->required();
    auto* workers_opt = app.add_option("--workers", workers, "Monte Carlo worker threads (results do not depend on it)")
                            ->check(CLI::PositiveNumber);
    auto* out_opt = app.add_option("--out", out, "Output directory (overrides EXITBOUND_OUT and the scenario)");
    auto* seed_opt = app.add_option("--seed", seed, "Override mc.base_seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exitbound::kValidation;
    }

    exitbound::RunOptions opts;
    if (*workers_opt) opts.workers = workers;
    if (*out_opt) opts.out = out;
    if (*seed_opt) opts.seed = seed;
    return exitbound::run_command(command, scenario, opts);
}
