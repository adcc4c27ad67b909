#include "expcmp/power.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "expcmp/error.hpp"
#include "expcmp/tdist.hpp"

namespace expcmp::power {

namespace {

void require_prob(double p, const char* name) {
    if (!std::isfinite(p) || p <= 0.0 || p >= 1.0) {
        throw DomainError(std::string(name) + " must lie strictly in (0, 1)");
    }
}

constexpr int kMinInstances = 5;  // below this, residual df and normality
                                  // diagnostics stop being meaningful

double are_factor(const DesignSpec& spec) {
    switch (spec.test_family) {
        case TestFamily::paired_t: return 1.0;
        case TestFamily::wilcoxon: return spec.are_wilcoxon;
        case TestFamily::sign: return spec.are_sign;
    }
    throw ConfigError("unknown test family");
}

// Holm level of the rank-r test among K.
double holm_level(double alpha_f, int K, int r) {
    return alpha_f / static_cast<double>(K - r + 1);
}

// Per-rank design level for each correction; the divisor of alpha_f that the
// instance count must satisfy.
int design_divisor(const DesignSpec& spec) {
    const int K = spec.num_comparisons;
    switch (spec.correction) {
        case Correction::none: return 1;
        case Correction::bonferroni:
        case Correction::holm_worst: return K;
        case Correction::holm_median: return K - (K + 1) / 2 + 1;
        case Correction::holm_kprime: return K - spec.kprime + 1;
        case Correction::holm_mean: throw ConfigError("holm_mean has no fixed divisor");
    }
    throw ConfigError("unknown correction");
}

double mean_holm_power(double alpha_f, int K, int n, double d, Alternative alt) {
    double acc = 0.0;
    for (int r = 1; r <= K; ++r) {
        acc += power_paired_t(holm_level(alpha_f, K, r), n, d, alt);
    }
    return acc / static_cast<double>(K);
}

}  // namespace

void DesignSpec::validate() const {
    if (!std::isfinite(alpha_f) || alpha_f <= 0.0 || alpha_f >= 1.0) {
        throw ConfigError("alpha_f must lie strictly in (0, 1)");
    }
    if (!std::isfinite(power_target) || power_target <= 0.0 || power_target >= 1.0) {
        throw ConfigError("power_target must lie strictly in (0, 1)");
    }
    if (!(mres > 0.0) || !std::isfinite(mres)) {
        throw ConfigError("mres must be finite and > 0");
    }
    if (num_comparisons < 1) throw ConfigError("num_comparisons must be >= 1");
    if (correction == Correction::none && num_comparisons != 1) {
        throw ConfigError("correction 'none' requires num_comparisons == 1");
    }
    if (correction == Correction::holm_kprime &&
        (kprime < 1 || kprime > num_comparisons)) {
        throw ConfigError("holm_kprime needs 1 <= kprime <= num_comparisons");
    }
    if (!(are_wilcoxon > 0.0 && are_wilcoxon <= 1.0) ||
        !(are_sign > 0.0 && are_sign <= 1.0)) {
        throw ConfigError("ARE constants must lie in (0, 1]");
    }
}

double power_paired_t(double alpha, int n, double d, Alternative alternative) {
    require_prob(alpha, "alpha");
    if (n < 2) throw DomainError("power_paired_t needs n >= 2");
    if (!std::isfinite(d)) throw DomainError("effect size must be finite");

    const double df = n - 1;
    const double ncp = d * std::sqrt(static_cast<double>(n));
    if (alternative == Alternative::two_sided) {
        const double tc = stats::t_quantile(1.0 - alpha / 2.0, df);
        return (1.0 - stats::nct_cdf(tc, df, ncp)) + stats::nct_cdf(-tc, df, ncp);
    }
    const double tc = stats::t_quantile(1.0 - alpha, df);
    return 1.0 - stats::nct_cdf(tc, df, ncp);
}

int n_paired_t(double alpha, double power_target, double d_star, Alternative alternative,
               int cap) {
    require_prob(alpha, "alpha");
    require_prob(power_target, "power_target");
    if (!(d_star > 0.0) || !std::isfinite(d_star)) {
        throw DomainError("d_star must be finite and > 0");
    }
    if (cap < kMinInstances) throw DomainError("cap too small");

    if (power_paired_t(alpha, cap, d_star, alternative) < power_target) {
        throw OverflowError("required instance count exceeds cap of " +
                            std::to_string(cap));
    }
    for (int n = kMinInstances;; ++n) {
        if (power_paired_t(alpha, n, d_star, alternative) >= power_target) return n;
    }
}

double fwer(double alpha, int K) {
    require_prob(alpha, "alpha");
    if (K < 1) throw DomainError("K must be >= 1");
    return -std::expm1(static_cast<double>(K) * std::log1p(-alpha));
}

DesignResult design(const DesignSpec& spec) {
    spec.validate();
    const int K = spec.num_comparisons;
    constexpr int cap = 1000000;

    int n_t;  // instance count on the paired-t scale
    if (spec.correction == Correction::holm_mean) {
        // Scan upward from the uncorrected design; mean Holm-rank power is
        // monotone in N, so the first passing N is minimal.
        n_t = n_paired_t(spec.alpha_f, spec.power_target, spec.mres, spec.alternative, cap);
        if (mean_holm_power(spec.alpha_f, K, cap, spec.mres, spec.alternative) <
            spec.power_target) {
            throw OverflowError("holm_mean design exceeds cap of " + std::to_string(cap));
        }
        while (mean_holm_power(spec.alpha_f, K, n_t, spec.mres, spec.alternative) <
               spec.power_target) {
            ++n_t;
        }
    } else {
        const int divisor = design_divisor(spec);
        n_t = n_paired_t(spec.alpha_f / divisor, spec.power_target, spec.mres,
                         spec.alternative, cap);
    }

    DesignResult result;
    const double are = are_factor(spec);
    result.n_instances =
        are == 1.0 ? n_t : static_cast<int>(std::ceil(static_cast<double>(n_t) / are));
    result.per_rank_power.reserve(K);
    for (int r = 1; r <= K; ++r) {
        result.per_rank_power.push_back(
            power_paired_t(holm_level(spec.alpha_f, K, r), n_t, spec.mres, spec.alternative));
    }
    result.mean_power =
        std::accumulate(result.per_rank_power.begin(), result.per_rank_power.end(), 0.0) /
        static_cast<double>(K);
    result.min_power =
        *std::min_element(result.per_rank_power.begin(), result.per_rank_power.end());
    result.max_power =
        *std::max_element(result.per_rank_power.begin(), result.per_rank_power.end());
    return result;
}

std::vector<PowerCurvePoint> power_curve(int n_fixed, const DesignSpec& spec,
                                         const std::vector<double>& d_grid) {
    spec.validate();
    if (n_fixed < 2) throw ConfigError("power_curve needs n_fixed >= 2");
    if (d_grid.empty()) throw ConfigError("power_curve needs a non-empty effect grid");

    const double are = are_factor(spec);
    const int n_eff =
        are == 1.0 ? n_fixed
                   : std::max(2, static_cast<int>(std::floor(are * n_fixed + 0.5)));
    const int K = spec.num_comparisons;

    std::vector<PowerCurvePoint> curve;
    curve.reserve(d_grid.size());
    for (double d : d_grid) {
        if (d < 0.0 || !std::isfinite(d)) {
            throw ConfigError("effect grid entries must be finite and >= 0");
        }
        double p;  // d = 0 degrades to the test size, which is well defined
        if (spec.correction == Correction::bonferroni) {
            p = power_paired_t(spec.alpha_f / K, n_eff, d, spec.alternative);
        } else if (spec.correction == Correction::none) {
            p = power_paired_t(spec.alpha_f, n_eff, d, spec.alternative);
        } else {
            p = mean_holm_power(spec.alpha_f, K, n_eff, d, spec.alternative);
        }
        curve.push_back({d, p});
    }
    return curve;
}

std::string to_string(Alternative a) {
    return a == Alternative::two_sided ? "two-sided" : "one-sided";
}

std::string to_string(Correction c) {
    switch (c) {
        case Correction::none: return "none";
        case Correction::bonferroni: return "bonferroni";
        case Correction::holm_mean: return "holm-mean";
        case Correction::holm_median: return "holm-median";
        case Correction::holm_worst: return "holm-worst";
        case Correction::holm_kprime: return "holm-kprime";
    }
    throw ConfigError("unknown correction");
}

std::string to_string(TestFamily f) {
    switch (f) {
        case TestFamily::paired_t: return "paired-t";
        case TestFamily::wilcoxon: return "wilcoxon";
        case TestFamily::sign: return "sign";
    }
    throw ConfigError("unknown test family");
}

Alternative alternative_from_string(const std::string& s) {
    if (s == "two-sided") return Alternative::two_sided;
    if (s == "one-sided") return Alternative::one_sided;
    throw ConfigError("unknown alternative '" + s + "' (two-sided | one-sided)");
}

Correction correction_from_string(const std::string& s) {
    if (s == "none") return Correction::none;
    if (s == "bonferroni") return Correction::bonferroni;
    if (s == "holm-mean") return Correction::holm_mean;
    if (s == "holm-median") return Correction::holm_median;
    if (s == "holm-worst") return Correction::holm_worst;
    if (s == "holm-kprime") return Correction::holm_kprime;
    throw ConfigError("unknown correction '" + s + "'");
}

TestFamily test_family_from_string(const std::string& s) {
    if (s == "paired-t") return TestFamily::paired_t;
    if (s == "wilcoxon") return TestFamily::wilcoxon;
    if (s == "sign") return TestFamily::sign;
    throw ConfigError("unknown test family '" + s + "'");
}

}  // namespace expcmp::power
