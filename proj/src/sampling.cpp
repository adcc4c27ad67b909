#include "expcmp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "expcmp/error.hpp"
#include "expcmp/moments.hpp"
#include "expcmp/rng.hpp"

namespace expcmp::sampling {

namespace {

constexpr double kPositivityTol = 1e-12;
constexpr double kSeTieTol = 1e-12;

void require_two(const SummaryStats& s, const char* which) {
    if (s.n < 2) {
        throw InsufficientDataError(std::string("standard error needs n >= 2 for ") + which);
    }
}

void require_positive_mean(double mean, const char* which) {
    if (!(mean > kPositivityTol)) {
        throw PositivityError(std::string("percent differences need a strictly positive ") +
                              which + " mean");
    }
}

}  // namespace

SummaryStats summarize(std::span<const double> values) {
    if (values.size() < 2) {
        throw InsufficientDataError("summary statistics need at least 2 observations");
    }
    SummaryStats s;
    s.n = static_cast<int>(values.size());
    s.mean = stats::mean(values);
    s.sd = stats::sample_sd(values);
    return s;
}

void SamplingConfig::validate(int num_algorithms) const {
    if (num_algorithms < 2) throw ConfigError("sampling needs at least 2 algorithms");
    if (!(se_star > 0.0) || !std::isfinite(se_star)) {
        throw ConfigError("se_star must be finite and > 0");
    }
    if (n0 < 3) throw ConfigError("n0 must be >= 3 (sds need n > 2 before the loop)");
    if (n_max < num_algorithms * n0) {
        throw ConfigError("n_max must be at least num_algorithms * n0");
    }
    if (bootstrap_resamples < 100) throw ConfigError("bootstrap_resamples must be >= 100");
    if (comparison == Comparison::percent_all_vs_one && !reference_id) {
        throw ConfigError("percent-all-vs-one needs a reference_id");
    }
}

double se_simple(const SummaryStats& si, const SummaryStats& sj) {
    require_two(si, "i");
    require_two(sj, "j");
    return std::sqrt(si.sd * si.sd / si.n + sj.sd * sj.sd / sj.n);
}

double se_percent_one(const SummaryStats& s_ref, const SummaryStats& sj) {
    require_two(s_ref, "reference");
    require_two(sj, "j");
    require_positive_mean(s_ref.mean, "reference");
    const double m1 = s_ref.mean;
    const double c1 = s_ref.sd * s_ref.sd * sj.mean * sj.mean / (m1 * m1 * m1 * m1);
    const double c2 = sj.sd * sj.sd / (m1 * m1);
    return std::sqrt(c1 / s_ref.n + c2 / sj.n);
}

double se_percent_all(const std::string& i, const std::string& j,
                      const std::map<std::string, SummaryStats>& all_stats) {
    if (i == j) throw DomainError("se_percent_all needs two distinct algorithms");
    const auto it_i = all_stats.find(i);
    const auto it_j = all_stats.find(j);
    if (it_i == all_stats.end() || it_j == all_stats.end()) {
        throw DomainError("se_percent_all: unknown algorithm id");
    }
    const int A = static_cast<int>(all_stats.size());
    double grand = 0.0;
    double third_party = 0.0;  // sum over k != i, j of S_k^2 / n_k
    for (const auto& [id, s] : all_stats) {
        require_two(s, id.c_str());
        grand += s.mean;
        if (id != i && id != j) third_party += s.sd * s.sd / s.n;
    }
    grand /= A;
    require_positive_mean(grand, "grand");

    const SummaryStats& si = it_i->second;
    const SummaryStats& sj = it_j->second;
    const double phi = (si.mean - sj.mean) / grand;
    const double g2 = grand * grand;
    const double a2 = static_cast<double>(A) * A;
    const double c1 = (1.0 + phi * phi / a2) / g2;
    const double c2 = phi * phi / (g2 * a2) * third_party;
    return std::sqrt(c1 * (si.sd * si.sd / si.n + sj.sd * sj.sd / sj.n) + c2);
}

double ratio_opt(Comparison comparison, const SummaryStats& si, const SummaryStats& sj) {
    if (sj.sd == 0.0) {
        // Degenerate pair: all remaining runs belong to i, unless i is also
        // deterministic and the pair needs nothing.
        return si.sd > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
    }
    switch (comparison) {
        case Comparison::simple:
        case Comparison::percent_all_vs_all:
            return si.sd / sj.sd;
        case Comparison::percent_all_vs_one:
            require_positive_mean(si.mean, "reference");
            return (si.sd / sj.sd) * (sj.mean / si.mean);
    }
    throw ConfigError("unknown comparison");
}

std::string choose_next(const PairEstimate& pair_max,
                        const std::map<std::string, int>& counts) {
    const double ni = static_cast<double>(counts.at(pair_max.first));
    const double nj = static_cast<double>(counts.at(pair_max.second));
    return ni / nj < pair_max.ratio_opt ? pair_max.first : pair_max.second;
}

std::vector<std::pair<std::string, std::string>> comparison_pairs(
    const std::vector<std::string>& algorithms, Comparison comparison,
    const std::optional<std::string>& reference_id) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (comparison == Comparison::percent_all_vs_one) {
        if (!reference_id) throw ConfigError("percent-all-vs-one needs a reference_id");
        if (std::find(algorithms.begin(), algorithms.end(), *reference_id) ==
            algorithms.end()) {
            throw ConfigError("reference_id '" + *reference_id +
                              "' is not in the algorithm list");
        }
        for (const auto& a : algorithms) {
            if (a != *reference_id) pairs.emplace_back(*reference_id, a);
        }
    } else {
        for (std::size_t i = 0; i < algorithms.size(); ++i) {
            for (std::size_t j = i + 1; j < algorithms.size(); ++j) {
                pairs.emplace_back(algorithms[i], algorithms[j]);
            }
        }
    }
    return pairs;
}

namespace {

struct PairContext {
    std::vector<std::pair<std::string, std::string>> pairs;
    Comparison comparison;
};

std::vector<PairEstimate> estimate_pairs(const PairContext& ctx,
                                         const std::map<std::string, SummaryStats>& stats) {
    std::vector<PairEstimate> out;
    out.reserve(ctx.pairs.size());
    for (const auto& [i, j] : ctx.pairs) {
        const SummaryStats& si = stats.at(i);
        const SummaryStats& sj = stats.at(j);
        PairEstimate e;
        e.first = i;
        e.second = j;
        switch (ctx.comparison) {
            case Comparison::simple:
                e.phi_hat = si.mean - sj.mean;
                e.se = se_simple(si, sj);
                break;
            case Comparison::percent_all_vs_one:
                require_positive_mean(si.mean, "reference");
                e.phi_hat = 1.0 - sj.mean / si.mean;
                e.se = se_percent_one(si, sj);
                break;
            case Comparison::percent_all_vs_all: {
                double grand = 0.0;
                for (const auto& [id, s] : stats) grand += s.mean;
                grand /= static_cast<double>(stats.size());
                require_positive_mean(grand, "grand");
                e.phi_hat = (si.mean - sj.mean) / grand;
                e.se = se_percent_all(i, j, stats);
                break;
            }
        }
        e.ratio_opt = ratio_opt(ctx.comparison, si, sj);
        out.push_back(std::move(e));
    }
    return out;
}

// Index of the pair with the largest se; ties within kSeTieTol go to the
// earliest pair in the deterministic pair order.
std::size_t max_se_index(const std::vector<PairEstimate>& estimates) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < estimates.size(); ++k) {
        if (estimates[k].se > estimates[best].se + kSeTieTol) best = k;
    }
    return best;
}

// Fieller approximation quality guard: the denominator mean's coefficient of
// variation should satisfy S / (mean sqrt(n)) < 0.5.
void check_fieller(const PairContext& ctx, const std::map<std::string, SummaryStats>& stats,
                   const std::optional<std::string>& reference_id,
                   std::set<std::string>& warnings) {
    if (ctx.comparison == Comparison::percent_all_vs_one) {
        const SummaryStats& r = stats.at(*reference_id);
        if (r.sd / (r.mean * std::sqrt(static_cast<double>(r.n))) >= 0.5) {
            warnings.insert(
                "reference mean coefficient of variation exceeds 0.5/sqrt(n); the "
                "Fieller standard-error approximation degrades");
        }
    } else if (ctx.comparison == Comparison::percent_all_vs_all) {
        double grand = 0.0, var = 0.0;
        for (const auto& [id, s] : stats) {
            grand += s.mean;
            var += s.sd * s.sd / s.n;
        }
        const double A = static_cast<double>(stats.size());
        grand /= A;
        const double cv = std::sqrt(var) / (A * grand);
        if (cv >= 0.5) {
            warnings.insert(
                "grand-mean coefficient of variation exceeds 0.5; the Fieller "
                "standard-error approximation degrades");
        }
    }
}

}  // namespace

InstanceSampleReport sample_instance(const std::string& instance_id,
                                     const std::vector<std::string>& algorithms,
                                     const RunFn& runner, const SamplingConfig& config,
                                     const SeedContext& seeds) {
    config.validate(static_cast<int>(algorithms.size()));
    {
        std::set<std::string> unique(algorithms.begin(), algorithms.end());
        if (unique.size() != algorithms.size()) {
            throw ConfigError("algorithm ids must be unique");
        }
    }

    PairContext ctx{comparison_pairs(algorithms, config.comparison, config.reference_id),
                    config.comparison};

    InstanceSampleReport report;
    report.instance_id = instance_id;

    std::map<std::string, std::size_t> algo_index;
    for (std::size_t k = 0; k < algorithms.size(); ++k) algo_index[algorithms[k]] = k;

    // One run of `algo`, with one automatic retry on failure; the retry seed
    // is derived from the same counters on a separate stream.
    auto run_one = [&](const std::string& algo) {
        ObservationSet& obs = report.observations[algo];
        if (obs.values.empty()) {
            obs.algorithm_id = algo;
            obs.instance_id = instance_id;
        }
        const std::uint64_t run_index = obs.values.size();
        const std::uint64_t seed = rng::derive_seed(seeds.experiment_seed,
                                                    algo_index.at(algo),
                                                    seeds.instance_index, run_index);
        double value;
        try {
            value = runner(algo, instance_id, seed);
        } catch (const RunError&) {
            const std::uint64_t retry_seed =
                rng::derive_seed(seeds.experiment_seed, algo_index.at(algo),
                                 seeds.instance_index, run_index, /*stream=*/1);
            value = runner(algo, instance_id, retry_seed);  // second failure propagates
            obs.seeds.push_back(retry_seed);
            obs.values.push_back(value);
            ++report.total_runs;
            return;
        }
        obs.seeds.push_back(seed);
        obs.values.push_back(value);
        ++report.total_runs;
    };

    // Initial batch: n0 runs of every algorithm.
    for (const auto& algo : algorithms) {
        for (int t = 0; t < config.n0; ++t) run_one(algo);
    }

    std::set<std::string> warnings;
    std::map<std::string, SummaryStats> stats;
    std::map<std::string, int> counts;
    auto refresh = [&] {
        for (const auto& algo : algorithms) {
            const auto& v = report.observations.at(algo).values;
            stats[algo] = summarize(v);
            counts[algo] = static_cast<int>(v.size());
        }
        check_fieller(ctx, stats, config.reference_id, warnings);
        report.pair_estimates = estimate_pairs(ctx, stats);
    };
    refresh();

    std::size_t worst = max_se_index(report.pair_estimates);
    while (report.pair_estimates[worst].se > config.se_star &&
           report.total_runs < config.n_max) {
        report.max_se_trace.push_back(report.pair_estimates[worst].se);
        ++report.iterations;
        run_one(choose_next(report.pair_estimates[worst], counts));
        refresh();
        worst = max_se_index(report.pair_estimates);
    }

    report.budget_exhausted = report.pair_estimates[worst].se > config.se_star;
    report.warnings.assign(warnings.begin(), warnings.end());
    return report;
}

double bootstrap_se(const PairStatistic& statistic, std::span<const double> obs_i,
                    std::span<const double> obs_j, int resamples, std::uint64_t seed) {
    if (obs_i.size() < 2 || obs_j.size() < 2) {
        throw InsufficientDataError("bootstrap_se needs >= 2 observations per sample");
    }
    if (resamples < 100) throw DomainError("bootstrap_se needs >= 100 resamples");

    auto eng = rng::make_engine(seed);
    std::vector<double> ri(obs_i.size()), rj(obs_j.size()), values;
    values.reserve(resamples);
    for (int b = 0; b < resamples; ++b) {
        for (auto& x : ri) x = obs_i[rng::next_below(eng, obs_i.size())];
        for (auto& x : rj) x = obs_j[rng::next_below(eng, obs_j.size())];
        values.push_back(statistic(ri, rj));
    }
    return stats::sample_sd(values);
}

std::string to_string(Comparison c) {
    switch (c) {
        case Comparison::simple: return "simple";
        case Comparison::percent_all_vs_one: return "percent-all-vs-one";
        case Comparison::percent_all_vs_all: return "percent-all-vs-all";
    }
    throw ConfigError("unknown comparison");
}

std::string to_string(SummaryKind k) {
    return k == SummaryKind::mean ? "mean" : "median";
}

Comparison comparison_from_string(const std::string& s) {
    if (s == "simple") return Comparison::simple;
    if (s == "percent-all-vs-one") return Comparison::percent_all_vs_one;
    if (s == "percent-all-vs-all") return Comparison::percent_all_vs_all;
    throw ConfigError("unknown comparison '" + s + "'");
}

SummaryKind summary_kind_from_string(const std::string& s) {
    if (s == "mean") return SummaryKind::mean;
    if (s == "median") return SummaryKind::median;
    throw ConfigError("unknown summary kind '" + s + "'");
}

}  // namespace expcmp::sampling
