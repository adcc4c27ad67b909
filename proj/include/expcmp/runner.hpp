#pragma once

// Observation sources: external solver processes speaking a one-line result
// protocol, and seeded synthetic distributions for testing and validation.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "expcmp/power.hpp"

namespace expcmp::runner {

enum class RunnerKind { external, synthetic };
enum class Distribution { normal, lognormal, uniform };

// Synthetic parameters for one (algorithm, instance) cell; "*" matches any id.
struct SyntheticParam {
    std::string algorithm = "*";
    std::string instance = "*";
    double location = 0.0;
    double scale = 1.0;
};

struct ExternalSpec {
    // Shell command with {algorithm}, {instance} and {seed} placeholders.
    std::string command;
    double timeout_seconds = 3600.0;
};

struct SyntheticSpec {
    Distribution distribution = Distribution::normal;
    std::vector<SyntheticParam> params;

    // Most specific match wins: (a,i) > (a,*) > (*,i) > (*,*).
    const SyntheticParam& resolve(const std::string& algorithm,
                                  const std::string& instance) const;
};

struct RunnerSpec {
    RunnerKind kind = RunnerKind::synthetic;
    ExternalSpec external;
    SyntheticSpec synthetic;

    void validate() const;  // throws ConfigError
};

enum class RunStatus { ok, failed, timeout };

struct RunRecord {
    std::string algorithm_id;
    std::string instance_id;
    std::uint64_t seed = 0;
    double value = 0.0;  // meaningful only when status == ok
    double wall_time_seconds = 0.0;
    RunStatus status = RunStatus::failed;
    std::string message;  // diagnostics for non-ok runs
};

// One run. External runners substitute the placeholders, execute the command,
// and parse the result line "value=<decimal> [key=value ...]" from stdout
// (all other output is treated as solver logging). Synthetic runners draw
// deterministically from the configured distribution; the per-run seed is
// expected to already encode experiment seed, algorithm, instance and run
// index (see rng.hpp), and the ids are folded in again here.
RunRecord run_once(const RunnerSpec& spec, const std::string& algorithm_id,
                   const std::string& instance_id, std::uint64_t seed);

// True standardized per-hypothesis effects for design validation.
struct ValidationTruth {
    std::vector<double> effects;  // size K, or size 1 meaning "every pair"
};

struct ValidationReport {
    int n_sim = 0;
    int n_instances = 0;
    double alpha_f = 0.0;
    double empirical_fwer = 0.0;       // share of sims with >= 1 false rejection
    double fwer_se = 0.0;              // binomial standard error
    std::vector<double> per_hypothesis_power;  // rejection frequency per hypothesis
    std::vector<double> per_hypothesis_se;
    double mean_power = 0.0;           // mean rejection rate over non-null hypotheses
    bool has_null = false;
    bool has_effect = false;
};

// Simulates n_sim complete experiments at the design's instance count:
// per hypothesis k, N paired differences ~ Normal(effects[k], 1), then the
// paired-t + Holm analysis pipeline at alpha_f. Per-simulation seeds derive
// from `seed`, so results are independent of execution order.
ValidationReport validate_design(const power::DesignSpec& design_spec,
                                 const ValidationTruth& truth, int n_sim,
                                 std::uint64_t seed);

std::string to_string(RunnerKind k);
std::string to_string(Distribution d);
std::string to_string(RunStatus s);
RunnerKind runner_kind_from_string(const std::string& s);
Distribution distribution_from_string(const std::string& s);

}  // namespace expcmp::runner
