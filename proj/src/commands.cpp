#include "expcmp/commands.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include "expcmp/analysis.hpp"
#include "expcmp/error.hpp"
#include "expcmp/moments.hpp"
#include "expcmp/rng.hpp"

namespace expcmp::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Shortest round-trip decimal form; CSV numbers stay byte-stable.
std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw StateError("cannot write '" + path.string() + "'");
    return f;
}

int implied_comparisons(const state::ExperimentState& st) {
    const int A = static_cast<int>(st.algorithms.size());
    if (A < 2) return 0;
    return st.sampling_config.comparison == sampling::Comparison::percent_all_vs_one
               ? A - 1
               : A * (A - 1) / 2;
}

void apply_overrides(state::ExperimentState& st, const Overrides& o) {
    if (o.seed) st.global_seed = *o.seed;
    if (o.n_max) st.sampling_config.n_max = *o.n_max;
    if (o.se_star) st.sampling_config.se_star = *o.se_star;
    if (o.n0) st.sampling_config.n0 = *o.n0;
}

// Default n_max to the conventional 50 runs per algorithm when unset.
void default_n_max(state::ExperimentState& st) {
    if (st.sampling_config.n_max == 0 && !st.algorithms.empty()) {
        st.sampling_config.n_max = 50 * static_cast<int>(st.algorithms.size());
    }
}

sampling::RunFn make_run_fn(const runner::RunnerSpec& spec) {
    return [&spec](const std::string& algorithm, const std::string& instance,
                   std::uint64_t seed) {
        const auto rec = runner::run_once(spec, algorithm, instance, seed);
        if (rec.status != runner::RunStatus::ok) {
            throw RunError(algorithm, instance, seed,
                           runner::to_string(rec.status) +
                               (rec.message.empty() ? "" : ": " + rec.message));
        }
        return rec.value;
    };
}

std::uint64_t instance_index_of(const state::ExperimentState& st, const std::string& id) {
    const auto it = std::find(st.instances.begin(), st.instances.end(), id);
    if (it == st.instances.end()) {
        throw ConfigError("instance '" + id + "' is not in the instance list");
    }
    return static_cast<std::uint64_t>(it - st.instances.begin());
}

sampling::InstanceSampleReport sample_one(const state::ExperimentState& st,
                                          const std::string& instance_id,
                                          const sampling::RunFn& run_fn) {
    return sampling::sample_instance(
        instance_id, st.algorithms, run_fn, st.sampling_config,
        sampling::SeedContext{st.global_seed, instance_index_of(st, instance_id)});
}

double mean_holm_power_at(const power::DesignSpec& spec, int n) {
    double are = 1.0;
    if (spec.test_family == power::TestFamily::wilcoxon) are = spec.are_wilcoxon;
    if (spec.test_family == power::TestFamily::sign) are = spec.are_sign;
    const int n_eff = std::max(2, static_cast<int>(std::floor(are * n + 0.5)));
    const int K = spec.num_comparisons;
    double acc = 0.0;
    for (int r = 1; r <= K; ++r) {
        acc += power::power_paired_t(spec.alpha_f / (K - r + 1), n_eff, spec.mres,
                                     spec.alternative);
    }
    return acc / K;
}

void warn_instance_count(const state::ExperimentState& st, std::ostream& out) {
    if (!st.design_result) return;
    const int n_star = st.design_result->n_instances;
    const int have = static_cast<int>(st.instances.size());
    if (have < n_star) {
        out << "warning: " << have << " instances supplied but the design asks for "
            << n_star << "; the experiment will be underpowered\n";
    } else if (have > n_star) {
        out << "note: " << have << " instances exceed the required " << n_star
            << "; achieved mean power rises to about "
            << fmt(mean_holm_power_at(st.design_spec, have)) << "\n";
    }
}

double summary_value(const sampling::ObservationSet& obs, sampling::SummaryKind kind) {
    if (kind == sampling::SummaryKind::mean) return stats::mean(obs.values);
    std::vector<double> v = obs.values;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

analysis::SummaryTable summary_table(const state::ExperimentState& st) {
    analysis::SummaryTable table;
    table.algorithms = st.algorithms;
    table.instances = st.instances;
    std::vector<std::string> missing;
    for (const auto& instance : st.instances) {
        const auto rep = st.reports.find(instance);
        std::vector<double> row;
        for (const auto& algo : st.algorithms) {
            if (rep == st.reports.end() ||
                rep->second.observations.find(algo) == rep->second.observations.end()) {
                missing.push_back("(" + algo + ", " + instance + ")");
                continue;
            }
            row.push_back(
                summary_value(rep->second.observations.at(algo), st.sampling_config.summary));
        }
        table.values.push_back(std::move(row));
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 20; ++i) {
            list += (i ? ", " : "") + missing[i];
        }
        if (missing.size() > 20) list += ", ...";
        throw IncompleteDesignError("sampling incomplete; missing cells: " + list);
    }
    return table;
}

}  // namespace

int effective_workers(const std::optional<int>& flag) {
    if (flag && *flag > 0) return *flag;
    if (const char* env = std::getenv("EXPCMP_WORKERS")) {
        const int w = std::atoi(env);
        if (w > 0) return w;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

void resolve_num_comparisons(state::ExperimentState& st) {
    const int implied = implied_comparisons(st);
    if (st.design_spec.num_comparisons == 0) {
        if (implied == 0) {
            throw ConfigError(
                "num_comparisons missing and no algorithm list to derive it from");
        }
        st.design_spec.num_comparisons = implied;
    } else if (implied != 0 && st.design_spec.num_comparisons != implied) {
        throw ConfigError("num_comparisons=" +
                          std::to_string(st.design_spec.num_comparisons) +
                          " does not match the " + std::to_string(implied) +
                          " comparisons implied by " +
                          std::to_string(st.algorithms.size()) + " algorithms under " +
                          sampling::to_string(st.sampling_config.comparison));
    }
}

void cmd_design(const std::string& config_path, const std::string& state_path,
                const Overrides& o, std::ostream& out) {
    state::ExperimentState st = state::load_config(config_path);
    apply_overrides(st, o);
    default_n_max(st);
    resolve_num_comparisons(st);
    st.design_spec.validate();

    st.design_result = power::design(st.design_spec);
    st.advance_status(state::Status::designed);

    const auto& r = *st.design_result;
    out << "N* = " << r.n_instances << " instances ("
        << power::to_string(st.design_spec.correction) << ", "
        << power::to_string(st.design_spec.alternative) << ", "
        << power::to_string(st.design_spec.test_family) << ", alpha_f=" << fmt(st.design_spec.alpha_f)
        << ", power_target=" << fmt(st.design_spec.power_target)
        << ", d*=" << fmt(st.design_spec.mres) << ", K=" << st.design_spec.num_comparisons
        << ")\n";
    out << "per-rank power: min=" << fmt(r.min_power) << " mean=" << fmt(r.mean_power)
        << " max=" << fmt(r.max_power) << "\n";
    warn_instance_count(st, out);

    state::save_state(st, state_path);
    out << "state written to " << state_path << "\n";
}

void cmd_run(const std::string& state_path, const Overrides& o, std::ostream& out) {
    state::FileLock lock(state_path);
    state::ExperimentState st = state::load_state(state_path);
    apply_overrides(st, o);
    default_n_max(st);
    if (!st.design_result) {
        throw ConfigError("state has no design result; run 'design' first");
    }
    if (st.instances.empty()) throw ConfigError("no instances to sample");
    st.sampling_config.validate(static_cast<int>(st.algorithms.size()));
    warn_instance_count(st, out);

    std::vector<std::string> pending;
    for (const auto& instance : st.instances) {
        if (st.reports.find(instance) == st.reports.end()) pending.push_back(instance);
    }
    if (pending.empty()) {
        st.advance_status(state::Status::sampled);
        state::save_state(st, state_path);
        out << "all " << st.instances.size() << " instances already sampled; nothing to do\n";
        return;
    }

    st.advance_status(state::Status::sampling);
    state::save_state(st, state_path);

    const auto run_fn = make_run_fn(st.runner_spec);
    const int workers =
        std::min(effective_workers(o.workers), static_cast<int>(pending.size()));

    std::mutex mu;  // guards state mutation, saving, and progress output
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= pending.size()) return;
            {
                std::lock_guard<std::mutex> g(mu);
                if (failure) return;
            }
            try {
                auto report = sample_one(st, pending[i], run_fn);
                std::lock_guard<std::mutex> g(mu);
                out << "sampled " << pending[i] << ": runs=" << report.total_runs
                    << (report.budget_exhausted ? " (budget exhausted)" : "") << "\n";
                for (const auto& w : report.warnings) {
                    out << "  warning [" << pending[i] << "]: " << w << "\n";
                }
                st.reports[pending[i]] = std::move(report);
                state::save_state(st, state_path);  // lose at most in-flight instances
            } catch (...) {
                std::lock_guard<std::mutex> g(mu);
                if (!failure) failure = std::current_exception();
                return;
            }
        }
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    st.advance_status(state::Status::sampled);
    state::save_state(st, state_path);
    out << "sampling complete: " << st.instances.size() << " instances\n";
}

void cmd_sample(const std::string& state_path, const std::string& instance_id,
                const Overrides& o, std::ostream& out) {
    state::FileLock lock(state_path);
    state::ExperimentState st = state::load_state(state_path);
    apply_overrides(st, o);
    default_n_max(st);
    st.sampling_config.validate(static_cast<int>(st.algorithms.size()));

    if (st.reports.find(instance_id) != st.reports.end()) {
        out << "instance " << instance_id << " already sampled; nothing to do\n";
        return;
    }
    auto report = sample_one(st, instance_id, make_run_fn(st.runner_spec));
    out << "sampled " << instance_id << ": runs=" << report.total_runs
        << " iterations=" << report.iterations
        << (report.budget_exhausted ? " (budget exhausted)" : "") << "\n";
    for (const auto& pe : report.pair_estimates) {
        out << "  " << pe.first << " vs " << pe.second << ": phi_hat=" << fmt(pe.phi_hat)
            << " se=" << fmt(pe.se) << "\n";
    }
    for (const auto& w : report.warnings) out << "  warning: " << w << "\n";

    st.reports[instance_id] = std::move(report);
    st.advance_status(st.reports.size() == st.instances.size() ? state::Status::sampled
                                                               : state::Status::sampling);
    state::save_state(st, state_path);
}

void cmd_analyze(const std::string& state_path, const std::string& out_dir,
                 std::ostream& out) {
    state::ExperimentState st = state::load_state(state_path);
    const auto table = summary_table(st);  // throws on missing cells

    analysis::AnalysisOptions options;
    options.alpha_f = st.design_spec.alpha_f;
    options.alternative = st.design_spec.alternative;
    options.test_family = st.design_spec.test_family;
    options.comparison = st.sampling_config.comparison;
    options.reference_id = st.sampling_config.reference_id;
    const auto results = analysis::analyze(table, options);

    fs::create_directories(out_dir);
    const fs::path dir(out_dir);

    {
        auto f = open_out(dir / "hypotheses.csv");
        f << "rank,first,second,estimate,se,df,t_stat,p_value,alpha_r,adjusted_p,reject,"
             "ci_low,ci_high,d_hat,skewness,excess_kurtosis,degenerate,normality_warning\n";
        for (const auto& r : results) {
            f << r.rank << ',' << r.first << ',' << r.second << ',' << fmt(r.estimate) << ','
              << fmt(r.se) << ',' << r.df << ',' << fmt(r.t_stat) << ',' << fmt(r.p_value)
              << ',' << fmt(r.alpha_r) << ',' << fmt(r.adjusted_p) << ','
              << (r.reject ? 1 : 0) << ',' << fmt(r.ci_low) << ',' << fmt(r.ci_high) << ','
              << fmt(r.d_hat) << ',' << fmt(r.skewness) << ',' << fmt(r.excess_kurtosis)
              << ',' << (r.degenerate ? 1 : 0) << ',' << (r.normality_warning ? 1 : 0)
              << "\n";
        }
    }
    {
        auto f = open_out(dir / "instance_se.csv");
        f << "instance,first,second,phi_hat,se\n";
        for (const auto& instance : st.instances) {
            for (const auto& pe : st.reports.at(instance).pair_estimates) {
                f << instance << ',' << pe.first << ',' << pe.second << ','
                  << fmt(pe.phi_hat) << ',' << fmt(pe.se) << "\n";
            }
        }
    }
    {
        auto f = open_out(dir / "run_counts.csv");
        f << "instance,algorithm,runs,total_runs_instance,budget_exhausted\n";
        for (const auto& instance : st.instances) {
            const auto& rep = st.reports.at(instance);
            for (const auto& algo : st.algorithms) {
                f << instance << ',' << algo << ','
                  << rep.observations.at(algo).values.size() << ',' << rep.total_runs << ','
                  << (rep.budget_exhausted ? 1 : 0) << "\n";
            }
        }
    }
    {
        auto f = open_out(dir / "ci_chart.csv");
        f << "first,second,estimate,ci_low,ci_high,reject\n";
        for (const auto& r : results) {
            f << r.first << ',' << r.second << ',' << fmt(r.estimate) << ',' << fmt(r.ci_low)
              << ',' << fmt(r.ci_high) << ',' << (r.reject ? 1 : 0) << "\n";
        }
    }
    {
        std::vector<sampling::InstanceSampleReport> reports;
        reports.reserve(st.instances.size());
        for (const auto& instance : st.instances) reports.push_back(st.reports.at(instance));
        json doc = analysis::summarize(results, reports, options);
        doc["schema_version"] = state::kSchemaVersion;
        doc["design"] = state::to_json(st)["design"];
        auto f = open_out(dir / "summary.json");
        f << doc.dump(2) << '\n';
        out << "analyze: " << results.size() << " hypotheses, "
            << doc.at("rejections").get<int>() << " rejected at familywise alpha "
            << fmt(st.design_spec.alpha_f) << "\n";
    }

    st.advance_status(state::Status::analyzed);
    state::save_state(st, state_path);
    out << "exports written to " << out_dir << "\n";
}

void cmd_powercurve(const std::string& config_path, int n_fixed,
                    std::vector<double> d_grid, const std::string& out_path,
                    std::ostream& out) {
    state::ExperimentState st = state::load_config(config_path);
    resolve_num_comparisons(st);
    st.design_spec.validate();
    if (n_fixed < 2) throw ConfigError("powercurve needs --n >= 2");
    if (d_grid.empty()) throw ConfigError("powercurve needs a non-empty effect grid");
    std::sort(d_grid.begin(), d_grid.end());

    auto curve = power::power_curve(n_fixed, st.design_spec, d_grid);

    // Interpolated point at the design's d*, if the grid brackets it.
    const double d_star = st.design_spec.mres;
    std::optional<power::PowerCurvePoint> at_dstar;
    for (std::size_t i = 0; i + 1 < curve.size(); ++i) {
        if (curve[i].effect_size <= d_star && d_star <= curve[i + 1].effect_size) {
            const double span = curve[i + 1].effect_size - curve[i].effect_size;
            const double w = span == 0.0 ? 0.0 : (d_star - curve[i].effect_size) / span;
            at_dstar = {d_star,
                        curve[i].mean_power + w * (curve[i + 1].mean_power - curve[i].mean_power)};
            break;
        }
    }
    if (at_dstar) {
        const bool present = std::any_of(curve.begin(), curve.end(), [&](const auto& p) {
            return p.effect_size == d_star;
        });
        if (!present) {
            curve.push_back(*at_dstar);
            std::sort(curve.begin(), curve.end(), [](const auto& a, const auto& b) {
                return a.effect_size < b.effect_size;
            });
        }
        out << "mean power at d*=" << fmt(d_star) << " (N=" << n_fixed
            << "): " << fmt(at_dstar->mean_power) << "\n";
    }

    auto f = open_out(out_path);
    f << "effect_size,mean_power\n";
    for (const auto& p : curve) f << fmt(p.effect_size) << ',' << fmt(p.mean_power) << "\n";
    out << "power curve (" << curve.size() << " points) written to " << out_path << "\n";
}

void cmd_validate(const std::string& config_path, const std::string& truth_path,
                  int n_sim, const std::string& out_path, const Overrides& o,
                  std::ostream& out) {
    state::ExperimentState st = state::load_config(config_path);
    apply_overrides(st, o);
    resolve_num_comparisons(st);
    st.design_spec.validate();

    runner::ValidationTruth truth;
    {
        std::ifstream f(truth_path);
        if (!f) throw ConfigError("cannot open truth file '" + truth_path + "'");
        json tj;
        try {
            tj = json::parse(f);
        } catch (const json::parse_error& e) {
            throw ConfigError("cannot parse truth file: " + std::string(e.what()));
        }
        if (tj.contains("effects")) {
            truth.effects = tj.at("effects").get<std::vector<double>>();
        } else if (tj.contains("effect")) {
            truth.effects = {tj.at("effect").get<double>()};
        }  // empty means all-null
    }

    const auto report = runner::validate_design(st.design_spec, truth, n_sim, st.global_seed);

    json doc;
    doc["n_sim"] = report.n_sim;
    doc["n_instances"] = report.n_instances;
    doc["alpha_f"] = report.alpha_f;
    doc["global_seed"] = st.global_seed;
    doc["empirical_fwer"] = report.empirical_fwer;
    doc["fwer_se"] = report.fwer_se;
    doc["per_hypothesis_power"] = report.per_hypothesis_power;
    doc["per_hypothesis_se"] = report.per_hypothesis_se;
    doc["mean_power"] = report.mean_power;
    auto f = open_out(out_path);
    f << doc.dump(2) << '\n';

    out << "validated design at N=" << report.n_instances << " over " << report.n_sim
        << " simulations\n";
    if (report.has_null) {
        out << "empirical FWER = " << fmt(report.empirical_fwer) << " (se "
            << fmt(report.fwer_se) << ", target <= " << fmt(report.alpha_f) << ")\n";
    }
    if (report.has_effect) {
        out << "mean empirical power over non-null hypotheses = " << fmt(report.mean_power)
            << "\n";
    }
    out << "report written to " << out_path << "\n";
}

std::vector<double> parse_d_grid(const std::string& text) {
    std::vector<double> grid;
    const auto colon1 = text.find(':');
    if (colon1 != std::string::npos) {
        const auto colon2 = text.find(':', colon1 + 1);
        if (colon2 == std::string::npos) {
            throw ConfigError("grid syntax is start:stop:step");
        }
        const double start = std::stod(text.substr(0, colon1));
        const double stop = std::stod(text.substr(colon1 + 1, colon2 - colon1 - 1));
        const double step = std::stod(text.substr(colon2 + 1));
        if (!(step > 0.0) || stop < start) throw ConfigError("bad grid range");
        for (double d = start; d <= stop + 1e-12; d += step) grid.push_back(d);
        return grid;
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        grid.push_back(std::stod(text.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return grid;
}

}  // namespace expcmp::cli
