#pragma once

// Final inference over per-instance summaries: paired difference vectors,
// paired tests, Holm step-down decisions, jointly adjusted confidence
// intervals, and Cohen's d estimates.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "expcmp/power.hpp"
#include "expcmp/sampling.hpp"

#include "json.hpp"

namespace expcmp::analysis {

using power::Alternative;
using power::TestFamily;
using sampling::Comparison;

// One summarized performance value per (instance, algorithm) cell.
// values[l][k] belongs to instances[l] and algorithms[k]; every cell must be
// present (incomplete designs are rejected).
struct SummaryTable {
    std::vector<std::string> algorithms;
    std::vector<std::string> instances;
    std::vector<std::vector<double>> values;
};

// Per-instance paired differences for one hypothesis.
struct PairedDifferenceVector {
    std::string first;
    std::string second;
    Comparison comparison = Comparison::simple;
    std::vector<double> values;  // one entry per instance, in instance order
};

// Difference vectors for every hypothesis pair implied by the comparison
// type. Percent variants are computed per instance from that instance's
// summaries. Throws IncompleteDesignError / PositivityError.
std::vector<PairedDifferenceVector> paired_differences(
    const SummaryTable& table, Comparison comparison,
    const std::optional<std::string>& reference_id);

struct TestOutcome {
    double estimate = 0.0;  // mean of the paired differences
    double se = 0.0;
    int df = 0;
    double t_stat = 0.0;
    double p_value = 1.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double d_hat = 0.0;      // Cohen's d: estimate / sd of differences
    bool degenerate = false; // zero-sd difference vector
};

// Paired t test of H0: mean difference = 0. Zero sd with nonzero mean is the
// infinite-t case (p = 0, degenerate point interval); zero sd with zero mean
// gives p = 1.
TestOutcome t_test_paired(const PairedDifferenceVector& vec, double alpha,
                          Alternative alternative);

// Wilcoxon signed-rank p-value (exact for n <= 30 without ties, otherwise
// normal approximation with tie correction) and exact binomial sign-test
// p-value. Zero differences are dropped, as is conventional.
double wilcoxon_signed_rank_p(std::span<const double> values, Alternative alternative);
double sign_test_p(std::span<const double> values, Alternative alternative);

struct HolmEntry {
    std::string label;
    double p_value = 1.0;
    int rank = 0;           // 1-based, ascending p
    double alpha_r = 0.0;   // alpha_f / (K - r + 1)
    double adjusted_p = 1.0;
    bool reject = false;
};

// Holm step-down over labeled p-values: rank by ascending p (ties broken by
// label), reject ranks 1..R where R is the last rank before the first
// non-rejection, adjusted_p_r = min(1, max_{s<=r} (K-s+1) p_s).
// Returned in rank order.
std::vector<HolmEntry> holm_stepdown(
    const std::vector<std::pair<std::string, double>>& pvalues, double alpha_f);

// Full per-hypothesis analysis record (Table-style row).
struct ComparisonResult {
    std::string first;
    std::string second;
    double estimate = 0.0;
    double se = 0.0;
    int df = 0;
    double t_stat = 0.0;
    double p_value = 1.0;
    int rank = 0;
    double alpha_r = 0.0;
    double adjusted_p = 1.0;
    bool reject = false;
    double ci_low = 0.0;
    double ci_high = 0.0;   // interval at joint level 1 - alpha_r
    double d_hat = 0.0;
    double skewness = 0.0;
    double excess_kurtosis = 0.0;
    bool degenerate = false;
    bool normality_warning = false;  // |skewness| > 2 advisory flag
};

struct AnalysisOptions {
    double alpha_f = 0.05;
    Alternative alternative = Alternative::two_sided;
    TestFamily test_family = TestFamily::paired_t;
    Comparison comparison = Comparison::simple;
    std::optional<std::string> reference_id;
};

// The whole pipeline: differences -> per-pair tests -> Holm ranking ->
// joint confidence intervals -> diagnostics. Results in Holm rank order.
std::vector<ComparisonResult> analyze(const SummaryTable& table,
                                      const AnalysisOptions& options);

// Recompute each result's confidence interval at joint level 1 - alpha_r.
// Requires rank/alpha_r already assigned; vectors must be the same hypotheses
// (matched by pair ids). For the Wilcoxon family intervals are left NaN.
void joint_confidence_intervals(std::vector<ComparisonResult>& results,
                                const std::vector<PairedDifferenceVector>& vectors,
                                TestFamily family, Alternative alternative);

// Machine-readable report document: per-hypothesis rows, per-instance
// standard errors and run counts, and plot-ready series (CI chart,
// SE-by-instance, run-count distribution). `reports` may be empty when the
// analysis ran on externally supplied summaries.
nlohmann::json summarize(const std::vector<ComparisonResult>& results,
                         const std::vector<sampling::InstanceSampleReport>& reports,
                         const AnalysisOptions& options);

}  // namespace expcmp::analysis
