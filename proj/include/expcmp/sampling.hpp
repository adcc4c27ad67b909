#pragma once

// Adaptive allocation of repeated runs on a single problem instance.
//
// Starting from n0 runs of each algorithm, the sampler repeatedly finds the
// algorithm pair whose estimated standard error is largest and gives one more
// run to whichever of the two is further below its optimal share of runs,
// until every pairwise standard error of interest is at or below se_star or
// the instance's total-run budget is spent. Optimal run-count ratios minimize
// total runs subject to the standard-error constraint:
//   simple & percent all-vs-all:  n_i / n_j = S_i / S_j
//   percent all-vs-one:           n_1 / n_j = (S_1 / S_j) (mean_j / mean_1)

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace expcmp::sampling {

enum class Comparison { simple, percent_all_vs_one, percent_all_vs_all };
enum class SummaryKind { mean, median };

// All recorded performance values of one algorithm on one instance.
struct ObservationSet {
    std::string algorithm_id;
    std::string instance_id;
    std::vector<double> values;
    std::vector<std::uint64_t> seeds;  // one per run
};

struct SummaryStats {
    int n = 0;
    double mean = 0.0;
    double sd = 0.0;  // sample sd, n-1 denominator
};

// Throws InsufficientDataError unless values has >= 2 entries.
SummaryStats summarize(std::span<const double> values);

// Estimated paired difference for one algorithm pair on one instance.
struct PairEstimate {
    std::string first;   // i (the reference for percent all-vs-one)
    std::string second;  // j
    double phi_hat = 0.0;
    double se = 0.0;
    double ratio_opt = 1.0;  // optimal n_first / n_second; +inf when S_second = 0
};

struct SamplingConfig {
    Comparison comparison = Comparison::simple;
    std::optional<std::string> reference_id;  // required for percent all-vs-one
    double se_star = 0.05;
    int n0 = 10;     // initial runs per algorithm; must be >= 3
    int n_max = 0;   // total-run budget for the instance; must be >= A * n0
    int bootstrap_resamples = 999;
    SummaryKind summary = SummaryKind::mean;  // per-instance summary for analysis

    void validate(int num_algorithms) const;  // throws ConfigError
};

struct InstanceSampleReport {
    std::string instance_id;
    std::map<std::string, ObservationSet> observations;
    std::vector<PairEstimate> pair_estimates;  // final estimates
    long total_runs = 0;
    bool budget_exhausted = false;
    long iterations = 0;                 // adaptive-loop iterations after the n0 batch
    std::vector<double> max_se_trace;    // worst-pair se before each iteration
    std::vector<std::string> warnings;   // e.g. Fieller approximation diagnostics
};

// Standard error of the simple difference of means: sqrt(S_i^2/n_i + S_j^2/n_j).
double se_simple(const SummaryStats& si, const SummaryStats& sj);

// Standard error of the percent difference 1 - mean_j / mean_ref
// (Fieller approximation; the reference mean must be strictly positive).
double se_percent_one(const SummaryStats& s_ref, const SummaryStats& sj);

// Standard error of (mean_i - mean_j) / grand_mean across all algorithms.
// `all_stats` must hold every algorithm, keyed by id; i and j must differ.
double se_percent_all(const std::string& i, const std::string& j,
                      const std::map<std::string, SummaryStats>& all_stats);

// Optimal run-count ratio n_i / n_j for the given comparison type. For
// percent_all_vs_one, `si` must be the reference algorithm's stats.
// S_j = 0 makes the ratio +inf (all further runs go to i) unless S_i is also
// 0, in which case the pair needs no runs and 1.0 is returned.
double ratio_opt(Comparison comparison, const SummaryStats& si, const SummaryStats& sj);

// Which algorithm of the worst pair receives the next run:
// first if n_first / n_second < ratio_opt, otherwise second.
std::string choose_next(const PairEstimate& pair_max,
                        const std::map<std::string, int>& counts);

// Produces one observation of `algorithm` on `instance`; throws RunError on
// failure (the sampler retries once with a fresh seed, then aborts).
using RunFn = std::function<double(const std::string& algorithm, const std::string& instance,
                                   std::uint64_t seed)>;

// Seed context for deterministic derivation (see rng.hpp).
struct SeedContext {
    std::uint64_t experiment_seed = 0;
    std::uint64_t instance_index = 0;
};

InstanceSampleReport sample_instance(const std::string& instance_id,
                                     const std::vector<std::string>& algorithms,
                                     const RunFn& runner, const SamplingConfig& config,
                                     const SeedContext& seeds);

// Bootstrap standard error of an arbitrary two-sample statistic: sd of B
// resampled statistic values. Deterministic given the seed.
using PairStatistic =
    std::function<double(std::span<const double>, std::span<const double>)>;
double bootstrap_se(const PairStatistic& statistic, std::span<const double> obs_i,
                    std::span<const double> obs_j, int resamples, std::uint64_t seed);

// The hypothesis pairs implied by a comparison type, in deterministic order:
// all i<j pairs in list order, or (reference, j) pairs for all-vs-one.
std::vector<std::pair<std::string, std::string>> comparison_pairs(
    const std::vector<std::string>& algorithms, Comparison comparison,
    const std::optional<std::string>& reference_id);

std::string to_string(Comparison c);
std::string to_string(SummaryKind k);
Comparison comparison_from_string(const std::string& s);
SummaryKind summary_kind_from_string(const std::string& s);

}  // namespace expcmp::sampling
