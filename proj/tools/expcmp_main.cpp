#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "expcmp/commands.hpp"
#include "expcmp/error.hpp"

namespace {

struct FlagSet {
    std::string config;
    std::string state;
    std::string out;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int workers = 0;
    int n_max = 0;
    double se_star = 0.0;
    int n0 = 0;

    expcmp::cli::Overrides overrides() const {
        expcmp::cli::Overrides o;
        if (seed_set) o.seed = seed;
        if (workers > 0) o.workers = workers;
        if (n_max > 0) o.n_max = n_max;
        if (se_star > 0.0) o.se_star = se_star;
        if (n0 > 0) o.n0 = n0;
        return o;
    }
};

void add_common_flags(CLI::App* cmd, FlagSet& f) {
    cmd->add_option("--seed", f.seed, "Override the experiment's global seed")
        ->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_option("--workers", f.workers, "Worker thread cap (or EXPCMP_WORKERS)");
    cmd->add_option("--n-max", f.n_max, "Per-instance total-run budget override");
    cmd->add_option("--se-star", f.se_star, "Per-instance standard-error threshold override");
    cmd->add_option("--n0", f.n0, "Initial runs per algorithm override");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"expcmp - design, run, and analyze comparative algorithm experiments"};
    app.require_subcommand(1);

    FlagSet f;
    std::string instance_id, truth_path, grid_text;
    int n_fixed = 0, n_sim = 10000;

    auto* design = app.add_subcommand(
        "design", "Compute the required number of instances for a configuration");
    design->add_option("--config", f.config, "Experiment configuration file")->required();
    design->add_option("--state", f.state, "State file to create")->required();
    add_common_flags(design, f);

    auto* run = app.add_subcommand("run", "Sample every instance (resumable)");
    run->add_option("--state", f.state, "State file")->required();
    add_common_flags(run, f);

    auto* sample = app.add_subcommand("sample", "Sample a single instance (debugging)");
    sample->add_option("--state", f.state, "State file")->required();
    sample->add_option("--instance", instance_id, "Instance id")->required();
    add_common_flags(sample, f);

    auto* analyze = app.add_subcommand("analyze", "Run the paired analyses and write exports");
    analyze->add_option("--state", f.state, "State file")->required();
    analyze->add_option("--out", f.out, "Output directory")->required();

    auto* curve = app.add_subcommand("powercurve", "Mean power over an effect-size grid");
    curve->add_option("--config", f.config, "Experiment configuration file")->required();
    curve->add_option("--n", n_fixed, "Fixed instance count")->required();
    curve->add_option("--d-grid", grid_text, "Effect grid: start:stop:step or d1,d2,...")
        ->required();
    curve->add_option("--out", f.out, "Output series file")->required();

    auto* validate = app.add_subcommand(
        "validate", "Monte Carlo check of a design's FWER and power");
    validate->add_option("--config", f.config, "Experiment configuration file")->required();
    validate->add_option("--truth", truth_path, "True-effect configuration file")->required();
    validate->add_option("--n-sim", n_sim, "Number of simulated experiments");
    validate->add_option("--out", f.out, "Output report file")->required();
    add_common_flags(validate, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (design->parsed()) {
            expcmp::cli::cmd_design(f.config, f.state, f.overrides(), std::cout);
        } else if (run->parsed()) {
            expcmp::cli::cmd_run(f.state, f.overrides(), std::cout);
        } else if (sample->parsed()) {
            expcmp::cli::cmd_sample(f.state, instance_id, f.overrides(), std::cout);
        } else if (analyze->parsed()) {
            expcmp::cli::cmd_analyze(f.state, f.out, std::cout);
        } else if (curve->parsed()) {
            expcmp::cli::cmd_powercurve(f.config, n_fixed,
                                        expcmp::cli::parse_d_grid(grid_text), f.out,
                                        std::cout);
        } else if (validate->parsed()) {
            expcmp::cli::cmd_validate(f.config, truth_path, n_sim, f.out, f.overrides(),
                                      std::cout);
        }
    } catch (const expcmp::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const expcmp::DomainError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
