#include "expcmp/state.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "expcmp/error.hpp"

namespace expcmp::state {

using nlohmann::json;

namespace {

// Ordered-key json alias keeps serialization deterministic (nlohmann's
// default object map is sorted; this just documents the reliance).
json sorted(json j) { return j; }

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return j.at(key).get<T>();
}

json design_spec_to_json(const power::DesignSpec& s) {
    json j{{"alpha_f", s.alpha_f},
           {"power_target", s.power_target},
           {"mres", s.mres},
           {"num_comparisons", s.num_comparisons},
           {"alternative", power::to_string(s.alternative)},
           {"correction", power::to_string(s.correction)},
           {"test_family", power::to_string(s.test_family)},
           {"are_wilcoxon", s.are_wilcoxon},
           {"are_sign", s.are_sign}};
    if (s.correction == power::Correction::holm_kprime) j["kprime"] = s.kprime;
    return j;
}

power::DesignSpec design_spec_from_json(const json& j) {
    power::DesignSpec s;
    s.alpha_f = get_or(j, "alpha_f", s.alpha_f);
    s.power_target = get_or(j, "power_target", s.power_target);
    s.mres = get_or(j, "mres", s.mres);
    s.num_comparisons = get_or(j, "num_comparisons", 0);  // 0: derive from algorithms
    if (j.contains("alternative")) {
        s.alternative = power::alternative_from_string(j.at("alternative"));
    }
    if (j.contains("correction")) {
        s.correction = power::correction_from_string(j.at("correction"));
    }
    s.kprime = get_or(j, "kprime", s.kprime);
    if (j.contains("test_family")) {
        s.test_family = power::test_family_from_string(j.at("test_family"));
    }
    s.are_wilcoxon = get_or(j, "are_wilcoxon", s.are_wilcoxon);
    s.are_sign = get_or(j, "are_sign", s.are_sign);
    return s;
}

json design_result_to_json(const power::DesignResult& r) {
    return json{{"n_instances", r.n_instances},
                {"per_rank_power", r.per_rank_power},
                {"mean_power", r.mean_power},
                {"min_power", r.min_power},
                {"max_power", r.max_power}};
}

power::DesignResult design_result_from_json(const json& j) {
    power::DesignResult r;
    r.n_instances = j.at("n_instances");
    r.per_rank_power = j.at("per_rank_power").get<std::vector<double>>();
    r.mean_power = j.at("mean_power");
    r.min_power = j.at("min_power");
    r.max_power = j.at("max_power");
    return r;
}

json sampling_to_json(const sampling::SamplingConfig& c) {
    json j{{"comparison", sampling::to_string(c.comparison)},
           {"se_star", c.se_star},
           {"n0", c.n0},
           {"n_max", c.n_max},
           {"bootstrap_resamples", c.bootstrap_resamples},
           {"summary", sampling::to_string(c.summary)}};
    if (c.reference_id) j["reference_id"] = *c.reference_id;
    return j;
}

sampling::SamplingConfig sampling_from_json(const json& j) {
    sampling::SamplingConfig c;
    if (j.contains("comparison")) {
        c.comparison = sampling::comparison_from_string(j.at("comparison"));
    }
    if (j.contains("reference_id")) c.reference_id = j.at("reference_id").get<std::string>();
    c.se_star = get_or(j, "se_star", c.se_star);
    c.n0 = get_or(j, "n0", c.n0);
    c.n_max = get_or(j, "n_max", c.n_max);
    c.bootstrap_resamples = get_or(j, "bootstrap_resamples", c.bootstrap_resamples);
    if (j.contains("summary")) {
        c.summary = sampling::summary_kind_from_string(j.at("summary"));
    }
    return c;
}

json runner_to_json(const runner::RunnerSpec& r) {
    json j{{"kind", runner::to_string(r.kind)}};
    if (r.kind == runner::RunnerKind::external) {
        j["external"] = {{"command", r.external.command},
                         {"timeout_seconds", r.external.timeout_seconds}};
    } else {
        json params = json::array();
        for (const auto& p : r.synthetic.params) {
            params.push_back({{"algorithm", p.algorithm},
                              {"instance", p.instance},
                              {"location", p.location},
                              {"scale", p.scale}});
        }
        j["synthetic"] = {{"distribution", runner::to_string(r.synthetic.distribution)},
                          {"params", params}};
    }
    return j;
}

runner::RunnerSpec runner_from_json(const json& j) {
    runner::RunnerSpec r;
    r.kind = runner::runner_kind_from_string(j.at("kind"));
    if (r.kind == runner::RunnerKind::external) {
        const json& e = j.at("external");
        r.external.command = e.at("command");
        r.external.timeout_seconds = get_or(e, "timeout_seconds", r.external.timeout_seconds);
    } else {
        const json& s = j.at("synthetic");
        r.synthetic.distribution = runner::distribution_from_string(s.at("distribution"));
        for (const auto& pj : s.at("params")) {
            runner::SyntheticParam p;
            p.algorithm = get_or<std::string>(pj, "algorithm", "*");
            p.instance = get_or<std::string>(pj, "instance", "*");
            p.location = get_or(pj, "location", 0.0);
            p.scale = get_or(pj, "scale", 1.0);
            r.synthetic.params.push_back(std::move(p));
        }
    }
    return r;
}

json report_to_json(const sampling::InstanceSampleReport& r) {
    json obs = json::object();
    for (const auto& [algo, o] : r.observations) {
        obs[algo] = {{"values", o.values}, {"seeds", o.seeds}};
    }
    json pairs = json::array();
    for (const auto& p : r.pair_estimates) {
        pairs.push_back({{"first", p.first},
                         {"second", p.second},
                         {"phi_hat", p.phi_hat},
                         {"se", p.se},
                         {"ratio_opt", p.ratio_opt}});
    }
    return json{{"observations", obs},
                {"pair_estimates", pairs},
                {"total_runs", r.total_runs},
                {"budget_exhausted", r.budget_exhausted},
                {"iterations", r.iterations},
                {"max_se_trace", r.max_se_trace},
                {"warnings", r.warnings}};
}

sampling::InstanceSampleReport report_from_json(const std::string& instance_id,
                                                const json& j) {
    sampling::InstanceSampleReport r;
    r.instance_id = instance_id;
    for (const auto& [algo, oj] : j.at("observations").items()) {
        sampling::ObservationSet o;
        o.algorithm_id = algo;
        o.instance_id = instance_id;
        o.values = oj.at("values").get<std::vector<double>>();
        o.seeds = oj.at("seeds").get<std::vector<std::uint64_t>>();
        if (o.values.size() != o.seeds.size()) {
            throw StateError("observation values/seeds length mismatch for '" + algo + "'");
        }
        r.observations[algo] = std::move(o);
    }
    for (const auto& pj : j.at("pair_estimates")) {
        sampling::PairEstimate p;
        p.first = pj.at("first");
        p.second = pj.at("second");
        p.phi_hat = pj.at("phi_hat");
        p.se = pj.at("se");
        // +inf ratios serialize as null in JSON
        p.ratio_opt = pj.at("ratio_opt").is_null()
                          ? std::numeric_limits<double>::infinity()
                          : pj.at("ratio_opt").get<double>();
        r.pair_estimates.push_back(std::move(p));
    }
    r.total_runs = j.at("total_runs");
    r.budget_exhausted = j.at("budget_exhausted");
    r.iterations = j.at("iterations");
    r.max_se_trace = j.at("max_se_trace").get<std::vector<double>>();
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    return r;
}

}  // namespace

std::string to_string(Status s) {
    switch (s) {
        case Status::designed: return "designed";
        case Status::sampling: return "sampling";
        case Status::sampled: return "sampled";
        case Status::analyzed: return "analyzed";
    }
    throw StateError("unknown status");
}

Status status_from_string(const std::string& s) {
    if (s == "designed") return Status::designed;
    if (s == "sampling") return Status::sampling;
    if (s == "sampled") return Status::sampled;
    if (s == "analyzed") return Status::analyzed;
    throw StateError("unknown status '" + s + "'");
}

void ExperimentState::advance_status(Status next) {
    if (static_cast<int>(next) < static_cast<int>(status)) {
        throw StateError("status may only move forward (" + to_string(status) + " -> " +
                         to_string(next) + ")");
    }
    status = next;
}

json to_json(const ExperimentState& s) {
    json j;
    j["schema_version"] = s.schema_version;
    j["status"] = to_string(s.status);
    j["global_seed"] = s.global_seed;
    j["design"] = json{{"spec", design_spec_to_json(s.design_spec)}};
    if (s.design_result) j["design"]["result"] = design_result_to_json(*s.design_result);
    j["sampling"] = sampling_to_json(s.sampling_config);
    j["algorithms"] = s.algorithms;
    j["instances"] = s.instances;
    j["runner"] = runner_to_json(s.runner_spec);
    json reports = json::object();
    for (const auto& [instance, report] : s.reports) {
        reports[instance] = report_to_json(report);
    }
    j["reports"] = reports;
    return sorted(j);
}

ExperimentState state_from_json(const json& j) {
    ExperimentState s;
    s.schema_version = j.at("schema_version");
    if (s.schema_version != kSchemaVersion) {
        throw StateError("unsupported schema_version " + std::to_string(s.schema_version) +
                         " (supported: " + std::to_string(kSchemaVersion) + ")");
    }
    s.status = status_from_string(j.at("status"));
    s.global_seed = j.at("global_seed");
    s.design_spec = design_spec_from_json(j.at("design").at("spec"));
    if (j.at("design").contains("result")) {
        s.design_result = design_result_from_json(j.at("design").at("result"));
    }
    s.sampling_config = sampling_from_json(j.at("sampling"));
    s.algorithms = j.at("algorithms").get<std::vector<std::string>>();
    s.instances = j.at("instances").get<std::vector<std::string>>();
    s.runner_spec = runner_from_json(j.at("runner"));
    if (j.contains("reports")) {
        for (const auto& [instance, rj] : j.at("reports").items()) {
            if (std::find(s.instances.begin(), s.instances.end(), instance) ==
                s.instances.end()) {
                throw StateError("report for unknown instance '" + instance + "'");
            }
            s.reports[instance] = report_from_json(instance, rj);
        }
    }
    return s;
}

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StateError("cannot open '" + path + "': " + std::strerror(errno));
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw StateError("cannot parse '" + path + "': " + e.what());
    }
}

}  // namespace

void save_state(const ExperimentState& state, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw StateError("cannot write '" + tmp + "': " + std::strerror(errno));
        out << to_json(state).dump(2) << '\n';
        if (!out) throw StateError("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw StateError("rename '" + tmp + "' -> '" + path + "' failed: " +
                         std::strerror(errno));
    }
}

ExperimentState load_state(const std::string& path) {
    return state_from_json(parse_file(path));
}

ExperimentState config_from_json(const json& j) {
    ExperimentState s;
    if (j.contains("schema_version") &&
        j.at("schema_version").get<int>() != kSchemaVersion) {
        throw ConfigError("unsupported config schema_version");
    }
    s.global_seed = get_or<std::uint64_t>(j, "global_seed", 0);
    if (j.contains("design")) {
        // Accept both the nested state layout and a flat config layout.
        const json& d = j.at("design");
        s.design_spec = design_spec_from_json(d.contains("spec") ? d.at("spec") : d);
    }
    if (j.contains("sampling")) s.sampling_config = sampling_from_json(j.at("sampling"));
    s.algorithms = get_or(j, "algorithms", std::vector<std::string>{});
    s.instances = get_or(j, "instances", std::vector<std::string>{});
    if (j.contains("runner")) s.runner_spec = runner_from_json(j.at("runner"));
    return s;
}

ExperimentState load_config(const std::string& path) {
    return config_from_json(parse_file(path));
}

FileLock::FileLock(const std::string& path) : lock_path_(path + ".lock") {
    fd_ = ::open(lock_path_.c_str(), O_CREAT | O_RDWR, 0644);
    if (fd_ < 0) {
        throw StateError("cannot open lock file '" + lock_path_ + "': " +
                         std::strerror(errno));
    }
    if (flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw StateError("state file '" + path + "' is locked by another process");
    }
}

FileLock::~FileLock() {
    if (fd_ >= 0) {
        flock(fd_, LOCK_UN);
        ::close(fd_);
        std::remove(lock_path_.c_str());
    }
}

}  // namespace expcmp::state
