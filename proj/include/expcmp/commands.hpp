#pragma once

// Command implementations behind the CLI: design, run, sample, analyze,
// powercurve, validate. Kept library-callable so tests can drive the same
// code paths the binary uses.

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "expcmp/state.hpp"

namespace expcmp::cli {

// Flag-level overrides; precedence is flags > config file > defaults.
struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    std::optional<int> n_max;
    std::optional<double> se_star;
    std::optional<int> n0;
};

// Worker count: --workers flag, then EXPCMP_WORKERS, then hardware threads.
int effective_workers(const std::optional<int>& flag);

// Fill num_comparisons from the algorithm list and comparison type when the
// config left it at 0; cross-checks an explicit value against the list.
void resolve_num_comparisons(state::ExperimentState& st);

void cmd_design(const std::string& config_path, const std::string& state_path,
                const Overrides& o, std::ostream& out);

void cmd_run(const std::string& state_path, const Overrides& o, std::ostream& out);

void cmd_sample(const std::string& state_path, const std::string& instance_id,
                const Overrides& o, std::ostream& out);

void cmd_analyze(const std::string& state_path, const std::string& out_dir,
                 std::ostream& out);

void cmd_powercurve(const std::string& config_path, int n_fixed,
                    std::vector<double> d_grid, const std::string& out_path,
                    std::ostream& out);

void cmd_validate(const std::string& config_path, const std::string& truth_path,
                  int n_sim, const std::string& out_path, const Overrides& o,
                  std::ostream& out);

// "a:b:step" or comma-separated values.
std::vector<double> parse_d_grid(const std::string& text);

}  // namespace expcmp::cli
