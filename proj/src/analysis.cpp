#include "expcmp/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "expcmp/error.hpp"
#include "expcmp/moments.hpp"
#include "expcmp/tdist.hpp"

namespace expcmp::analysis {

namespace {

constexpr double kPositivityTol = 1e-12;
constexpr double kSkewWarnThreshold = 2.0;

void require_positive(double mean, const std::string& what) {
    if (!(mean > kPositivityTol)) {
        throw PositivityError("percent differences need a strictly positive " + what);
    }
}

double quiet_nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::vector<PairedDifferenceVector> paired_differences(
    const SummaryTable& table, Comparison comparison,
    const std::optional<std::string>& reference_id) {
    const std::size_t A = table.algorithms.size();
    const std::size_t L = table.instances.size();
    if (A < 2) throw ConfigError("paired differences need at least 2 algorithms");
    if (L == 0) throw IncompleteDesignError("no instances in the summary table");
    if (table.values.size() != L) {
        throw IncompleteDesignError("summary table has " + std::to_string(table.values.size()) +
                                    " rows for " + std::to_string(L) + " instances");
    }
    for (std::size_t l = 0; l < L; ++l) {
        if (table.values[l].size() != A) {
            throw IncompleteDesignError("instance '" + table.instances[l] + "' has " +
                                        std::to_string(table.values[l].size()) +
                                        " summaries for " + std::to_string(A) + " algorithms");
        }
        for (std::size_t k = 0; k < A; ++k) {
            if (!std::isfinite(table.values[l][k])) {
                throw IncompleteDesignError("missing summary for algorithm '" +
                                            table.algorithms[k] + "' on instance '" +
                                            table.instances[l] + "'");
            }
        }
    }

    const auto pairs = sampling::comparison_pairs(table.algorithms, comparison, reference_id);
    std::map<std::string, std::size_t> index;
    for (std::size_t k = 0; k < A; ++k) index[table.algorithms[k]] = k;

    std::vector<PairedDifferenceVector> out;
    out.reserve(pairs.size());
    for (const auto& [i, j] : pairs) {
        PairedDifferenceVector vec;
        vec.first = i;
        vec.second = j;
        vec.comparison = comparison;
        vec.values.reserve(L);
        const std::size_t ki = index.at(i);
        const std::size_t kj = index.at(j);
        for (std::size_t l = 0; l < L; ++l) {
            const double xi = table.values[l][ki];
            const double xj = table.values[l][kj];
            switch (comparison) {
                case Comparison::simple:
                    vec.values.push_back(xi - xj);
                    break;
                case Comparison::percent_all_vs_one:
                    require_positive(xi, "reference mean on instance '" + table.instances[l] + "'");
                    vec.values.push_back(1.0 - xj / xi);
                    break;
                case Comparison::percent_all_vs_all: {
                    double grand = 0.0;
                    for (std::size_t k = 0; k < A; ++k) grand += table.values[l][k];
                    grand /= static_cast<double>(A);
                    require_positive(grand, "grand mean on instance '" + table.instances[l] + "'");
                    vec.values.push_back((xi - xj) / grand);
                    break;
                }
            }
        }
        out.push_back(std::move(vec));
    }
    return out;
}

TestOutcome t_test_paired(const PairedDifferenceVector& vec, double alpha,
                          Alternative alternative) {
    const std::size_t n = vec.values.size();
    if (n < 2) throw InsufficientDataError("paired t test needs N >= 2 instances");
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0, 1)");

    TestOutcome out;
    out.df = static_cast<int>(n) - 1;
    out.estimate = stats::mean(vec.values);
    const double sd = stats::sample_sd(vec.values);
    const double sqrt_n = std::sqrt(static_cast<double>(n));
    out.se = sd / sqrt_n;

    if (sd == 0.0) {
        out.degenerate = true;
        if (out.estimate == 0.0) {
            out.t_stat = 0.0;
            out.p_value = 1.0;
            out.d_hat = 0.0;
        } else {
            const double sign = out.estimate > 0.0 ? 1.0 : -1.0;
            out.t_stat = sign * std::numeric_limits<double>::infinity();
            out.p_value = 0.0;
            out.d_hat = sign * std::numeric_limits<double>::infinity();
        }
        out.ci_low = out.estimate;
        out.ci_high = out.estimate;
        return out;
    }

    out.t_stat = out.estimate / out.se;
    out.d_hat = out.estimate / sd;
    if (alternative == Alternative::two_sided) {
        out.p_value = 2.0 * stats::t_cdf(-std::fabs(out.t_stat), out.df);
        const double tq = stats::t_quantile(1.0 - alpha / 2.0, out.df);
        out.ci_low = out.estimate - tq * out.se;
        out.ci_high = out.estimate + tq * out.se;
    } else {
        out.p_value = 1.0 - stats::t_cdf(out.t_stat, out.df);
        const double tq = stats::t_quantile(1.0 - alpha, out.df);
        out.ci_low = out.estimate - tq * out.se;
        out.ci_high = std::numeric_limits<double>::infinity();
    }
    return out;
}

namespace {

struct RankedValues {
    std::vector<double> ranks;       // rank of |d| for each nonzero difference
    std::vector<bool> positive;
    bool has_ties = false;
    double tie_correction = 0.0;     // sum over tie groups of (t^3 - t)
};

RankedValues rank_absolute(std::span<const double> values) {
    std::vector<double> nonzero;
    std::vector<bool> pos;
    for (double v : values) {
        if (v != 0.0) {
            nonzero.push_back(std::fabs(v));
            pos.push_back(v > 0.0);
        }
    }
    std::vector<std::size_t> order(nonzero.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return nonzero[a] < nonzero[b]; });

    RankedValues rv;
    rv.ranks.resize(nonzero.size());
    rv.positive = std::move(pos);
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && nonzero[order[j]] == nonzero[order[i]]) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
        for (std::size_t k = i; k < j; ++k) rv.ranks[order[k]] = avg_rank;
        if (j - i > 1) {
            rv.has_ties = true;
            const double t = static_cast<double>(j - i);
            rv.tie_correction += t * t * t - t;
        }
        i = j;
    }
    return rv;
}

// Exact null distribution of W+ for m untied ranks, as cumulative
// probabilities; counts fit doubles exactly for m <= 40.
std::vector<double> wplus_null_cdf(int m) {
    const int wmax = m * (m + 1) / 2;
    std::vector<double> count(wmax + 1, 0.0);
    count[0] = 1.0;
    for (int r = 1; r <= m; ++r) {
        for (int w = wmax; w >= r; --w) count[w] += count[w - r];
    }
    const double total = std::pow(2.0, m);
    std::vector<double> cdf(wmax + 1);
    double acc = 0.0;
    for (int w = 0; w <= wmax; ++w) {
        acc += count[w];
        cdf[w] = acc / total;
    }
    return cdf;
}

}  // namespace

double wilcoxon_signed_rank_p(std::span<const double> values, Alternative alternative) {
    const auto rv = rank_absolute(values);
    const int m = static_cast<int>(rv.ranks.size());
    if (m == 0) return 1.0;

    double wplus = 0.0;
    for (std::size_t i = 0; i < rv.ranks.size(); ++i) {
        if (rv.positive[i]) wplus += rv.ranks[i];
    }

    if (!rv.has_ties && m <= 30) {
        const auto cdf = wplus_null_cdf(m);
        const int w = static_cast<int>(std::llround(wplus));
        const double p_le = cdf[w];
        const double p_ge = w == 0 ? 1.0 : 1.0 - cdf[w - 1];
        if (alternative == Alternative::one_sided) return p_ge;
        return std::min(1.0, 2.0 * std::min(p_le, p_ge));
    }

    const double md = static_cast<double>(m);
    const double mean_w = md * (md + 1.0) / 4.0;
    const double var_w = md * (md + 1.0) * (2.0 * md + 1.0) / 24.0 - rv.tie_correction / 48.0;
    if (var_w <= 0.0) return 1.0;
    const double sd_w = std::sqrt(var_w);
    if (alternative == Alternative::one_sided) {
        const double z = (wplus - mean_w - 0.5) / sd_w;  // continuity correction
        return 1.0 - stats::normal_cdf(z);
    }
    const double z = (std::fabs(wplus - mean_w) - 0.5) / sd_w;
    return std::min(1.0, 2.0 * (1.0 - stats::normal_cdf(z)));
}

double sign_test_p(std::span<const double> values, Alternative alternative) {
    int m = 0, k = 0;
    for (double v : values) {
        if (v != 0.0) {
            ++m;
            if (v > 0.0) ++k;
        }
    }
    if (m == 0) return 1.0;

    // Binomial(m, 1/2) tails via the incomplete beta.
    auto cdf_le = [m](int x) {
        if (x >= m) return 1.0;
        if (x < 0) return 0.0;
        return stats::incomplete_beta(m - x, x + 1, 0.5);
    };
    const double p_le = cdf_le(k);
    const double p_ge = 1.0 - cdf_le(k - 1);
    if (alternative == Alternative::one_sided) return p_ge;
    return std::min(1.0, 2.0 * std::min(p_le, p_ge));
}

std::vector<HolmEntry> holm_stepdown(
    const std::vector<std::pair<std::string, double>>& pvalues, double alpha_f) {
    if (pvalues.empty()) return {};
    if (!(alpha_f > 0.0 && alpha_f < 1.0)) throw DomainError("alpha_f must lie in (0, 1)");
    for (const auto& [label, p] : pvalues) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw DomainError("p-value for '" + label + "' outside [0, 1]");
        }
    }

    const int K = static_cast<int>(pvalues.size());
    std::vector<HolmEntry> out;
    out.reserve(K);
    for (const auto& [label, p] : pvalues) out.push_back({label, p});
    // Ascending p; ties broken by label so permuting the input cannot change
    // any decision.
    std::sort(out.begin(), out.end(), [](const HolmEntry& a, const HolmEntry& b) {
        if (a.p_value != b.p_value) return a.p_value < b.p_value;
        return a.label < b.label;
    });

    double running_adj = 0.0;
    bool rejecting = true;
    for (int r = 1; r <= K; ++r) {
        HolmEntry& e = out[r - 1];
        e.rank = r;
        e.alpha_r = alpha_f / static_cast<double>(K - r + 1);
        running_adj = std::max(running_adj, (K - r + 1) * e.p_value);
        e.adjusted_p = std::min(1.0, running_adj);
        // Step-down semantics: stop at the first rank that fails its level.
        if (rejecting && e.p_value > e.alpha_r) rejecting = false;
        e.reject = rejecting;
    }
    return out;
}

void joint_confidence_intervals(std::vector<ComparisonResult>& results,
                                const std::vector<PairedDifferenceVector>& vectors,
                                TestFamily family, Alternative alternative) {
    std::map<std::pair<std::string, std::string>, const PairedDifferenceVector*> lookup;
    for (const auto& v : vectors) lookup[{v.first, v.second}] = &v;

    for (auto& res : results) {
        if (family != TestFamily::paired_t) {
            // Hodges-Lehmann style intervals are not provided; flagged as NaN.
            res.ci_low = quiet_nan();
            res.ci_high = quiet_nan();
            continue;
        }
        const auto it = lookup.find({res.first, res.second});
        if (it == lookup.end()) {
            throw DomainError("no difference vector for pair (" + res.first + ", " +
                              res.second + ")");
        }
        const auto outcome = t_test_paired(*it->second, res.alpha_r, alternative);
        res.ci_low = outcome.ci_low;
        res.ci_high = outcome.ci_high;
    }
}

std::vector<ComparisonResult> analyze(const SummaryTable& table,
                                      const AnalysisOptions& options) {
    const auto vectors =
        paired_differences(table, options.comparison, options.reference_id);

    std::vector<std::pair<std::string, double>> pvalues;
    std::map<std::string, const PairedDifferenceVector*> by_label;
    std::map<std::string, TestOutcome> outcomes;
    for (const auto& vec : vectors) {
        const std::string label = vec.first + " vs " + vec.second;
        double p;
        TestOutcome outcome = t_test_paired(vec, options.alpha_f, options.alternative);
        switch (options.test_family) {
            case TestFamily::paired_t: p = outcome.p_value; break;
            case TestFamily::wilcoxon:
                p = wilcoxon_signed_rank_p(vec.values, options.alternative);
                break;
            case TestFamily::sign: p = sign_test_p(vec.values, options.alternative); break;
        }
        pvalues.emplace_back(label, p);
        by_label[label] = &vec;
        outcomes[label] = outcome;
    }

    const auto holm = holm_stepdown(pvalues, options.alpha_f);

    std::vector<ComparisonResult> results;
    results.reserve(holm.size());
    for (const auto& entry : holm) {
        const PairedDifferenceVector& vec = *by_label.at(entry.label);
        const TestOutcome& outcome = outcomes.at(entry.label);
        ComparisonResult r;
        r.first = vec.first;
        r.second = vec.second;
        r.estimate = outcome.estimate;
        r.se = outcome.se;
        r.df = outcome.df;
        r.t_stat = outcome.t_stat;
        r.p_value = entry.p_value;
        r.rank = entry.rank;
        r.alpha_r = entry.alpha_r;
        r.adjusted_p = entry.adjusted_p;
        r.reject = entry.reject;
        r.d_hat = outcome.d_hat;
        r.degenerate = outcome.degenerate;
        if (vec.values.size() >= 4) {
            r.skewness = stats::skewness(vec.values);
            r.excess_kurtosis = stats::excess_kurtosis(vec.values);
            r.normality_warning = std::fabs(r.skewness) > kSkewWarnThreshold;
        }
        results.push_back(std::move(r));
    }

    joint_confidence_intervals(results, vectors, options.test_family, options.alternative);
    return results;
}

nlohmann::json summarize(const std::vector<ComparisonResult>& results,
                         const std::vector<sampling::InstanceSampleReport>& reports,
                         const AnalysisOptions& options) {
    using nlohmann::json;
    json doc;
    doc["alpha_f"] = options.alpha_f;
    doc["alternative"] = power::to_string(options.alternative);
    doc["test_family"] = power::to_string(options.test_family);
    doc["comparison"] = sampling::to_string(options.comparison);
    if (options.reference_id) doc["reference_id"] = *options.reference_id;

    json rows = json::array();
    json ci_chart = json::array();
    int rejections = 0;
    for (const auto& r : results) {
        rows.push_back({{"rank", r.rank},
                        {"first", r.first},
                        {"second", r.second},
                        {"estimate", r.estimate},
                        {"se", r.se},
                        {"df", r.df},
                        {"t_stat", r.t_stat},
                        {"p_value", r.p_value},
                        {"alpha_r", r.alpha_r},
                        {"adjusted_p", r.adjusted_p},
                        {"reject", r.reject},
                        {"ci_low", r.ci_low},
                        {"ci_high", r.ci_high},
                        {"d_hat", r.d_hat},
                        {"skewness", r.skewness},
                        {"excess_kurtosis", r.excess_kurtosis},
                        {"degenerate", r.degenerate},
                        {"normality_warning", r.normality_warning}});
        ci_chart.push_back({{"first", r.first},
                            {"second", r.second},
                            {"estimate", r.estimate},
                            {"ci_low", r.ci_low},
                            {"ci_high", r.ci_high},
                            {"reject", r.reject}});
        if (r.reject) ++rejections;
    }
    doc["hypotheses"] = rows;
    doc["rejections"] = rejections;

    json per_instance = json::object();
    json se_series = json::array();
    json run_series = json::array();
    for (const auto& rep : reports) {
        per_instance[rep.instance_id] = {{"total_runs", rep.total_runs},
                                         {"budget_exhausted", rep.budget_exhausted},
                                         {"iterations", rep.iterations},
                                         {"warnings", rep.warnings}};
        for (const auto& pe : rep.pair_estimates) {
            se_series.push_back({{"instance", rep.instance_id},
                                 {"first", pe.first},
                                 {"second", pe.second},
                                 {"phi_hat", pe.phi_hat},
                                 {"se", pe.se}});
        }
        for (const auto& [algo, obs] : rep.observations) {
            run_series.push_back({{"instance", rep.instance_id},
                                  {"algorithm", algo},
                                  {"runs", obs.values.size()}});
        }
    }
    doc["instances"] = per_instance;
    doc["series"] = {{"ci_chart", ci_chart},
                     {"se_by_instance", se_series},
                     {"run_counts", run_series}};
    return doc;
}

}  // namespace expcmp::analysis
