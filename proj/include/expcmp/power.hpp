#pragma once

// Statistical power and required-instance-count designs for paired
// comparisons of A >= 2 algorithms under multiple-testing corrections.
//
// The design question: how many problem instances N are needed so that a
// paired test detects standardized effects of at least `mres` with
// probability `power_target`, while the familywise error rate across the K
// planned comparisons stays at `alpha_f`. Corrections based on Holm's
// step-down levels alpha'_r = alpha_f / (K - r + 1) support designing for the
// worst, median, mean, or a chosen rank of the per-rank power profile.

#include <string>
#include <vector>

namespace expcmp::power {

enum class Alternative { two_sided, one_sided };

enum class Correction {
    none,         // single comparison, K must be 1
    bonferroni,   // every test at alpha_f / K
    holm_mean,    // smallest N whose mean Holm-rank power reaches the target
    holm_median,  // median rank powered: kprime with K' = ceil(K / 2)
    holm_worst,   // rank 1 (strictest level alpha_f / K) powered; equals bonferroni's N
    holm_kprime,  // rank K' powered, i.e. test level alpha_f / (K - K' + 1);
                  // guarantees the K - K' + 1 least-strict ranks reach the target
};

enum class TestFamily { paired_t, wilcoxon, sign };

struct DesignSpec {
    double alpha_f = 0.05;      // familywise significance level
    double power_target = 0.8;  // pi* = 1 - beta*
    double mres = 0.5;          // d*, smallest standardized effect of interest
    int num_comparisons = 1;    // K
    Alternative alternative = Alternative::two_sided;
    Correction correction = Correction::holm_mean;
    int kprime = 1;  // only read for Correction::holm_kprime; 1 <= K' <= K
    TestFamily test_family = TestFamily::paired_t;

    // Asymptotic-relative-efficiency constants used to inflate the paired-t
    // instance count for the nonparametric families. Defaults are the
    // standard worst-case Wilcoxon bound and the normal-case sign-test value;
    // override if a different planning assumption is wanted.
    double are_wilcoxon = 0.86;
    double are_sign = 0.637;

    void validate() const;  // throws ConfigError
};

struct DesignResult {
    int n_instances = 0;  // N*, after any ARE inflation
    // Power of the rank-r test at level alpha_f / (K - r + 1), evaluated at
    // the designed paired-t instance count (pre-inflation for nonparametric
    // families, whose ARE-equivalent power this profile approximates).
    std::vector<double> per_rank_power;
    double mean_power = 0.0;
    double min_power = 0.0;
    double max_power = 0.0;
};

struct PowerCurvePoint {
    double effect_size = 0.0;
    double mean_power = 0.0;
};

// Power of a paired t test with n subjects against a true standardized
// effect d (noncentral t with df = n - 1, ncp = d sqrt(n)); two-sided power
// includes both rejection tails.
double power_paired_t(double alpha, int n, double d, Alternative alternative);

// Smallest n >= 5 with power_paired_t(alpha, n, d_star, alternative) >=
// power_target. Throws OverflowError if that would exceed `cap`.
int n_paired_t(double alpha, double power_target, double d_star, Alternative alternative,
               int cap = 1000000);

// Familywise error rate of K independent tests at level alpha: 1-(1-alpha)^K.
double fwer(double alpha, int K);

// Full design: N* for the requested correction plus the per-rank power
// profile at Holm levels. holm_mean scans N upward from the uncorrected
// design until the profile's mean reaches the target.
DesignResult design(const DesignSpec& spec);

// Mean Holm-rank power at fixed N for each effect size in d_grid
// (bonferroni/none use their flat levels instead of the Holm ladder).
std::vector<PowerCurvePoint> power_curve(int n_fixed, const DesignSpec& spec,
                                         const std::vector<double>& d_grid);

// Enum <-> string helpers shared by config parsing and exports.
std::string to_string(Alternative a);
std::string to_string(Correction c);
std::string to_string(TestFamily f);
Alternative alternative_from_string(const std::string& s);
Correction correction_from_string(const std::string& s);
TestFamily test_family_from_string(const std::string& s);

}  // namespace expcmp::power
