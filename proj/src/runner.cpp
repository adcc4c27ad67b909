#include "expcmp/runner.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "expcmp/analysis.hpp"
#include "expcmp/error.hpp"
#include "expcmp/rng.hpp"

namespace expcmp::runner {

namespace {

std::string substitute(std::string templ, const std::string& key, const std::string& value) {
    std::string token = "{" + key + "}";
    std::size_t pos = 0;
    while ((pos = templ.find(token, pos)) != std::string::npos) {
        templ.replace(pos, token.size(), value);
        pos += value.size();
    }
    return templ;
}

// Last "value=<decimal>" field found on any stdout line wins; remaining
// output is solver logging. Returns false if no result line exists.
bool parse_result(const std::string& output, double& value) {
    std::istringstream stream(output);
    std::string line;
    bool found = false;
    while (std::getline(stream, line)) {
        std::istringstream fields(line);
        std::string field;
        while (fields >> field) {
            if (field.rfind("value=", 0) == 0) {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(field.substr(6), &used);
                    if (used == field.size() - 6 && std::isfinite(v)) {
                        value = v;
                        found = true;
                    }
                } catch (const std::exception&) {
                    // malformed number; keep scanning
                }
            }
        }
    }
    return found;
}

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string output;  // stdout and stderr interleaved
};

// Run `command` through /bin/sh with a wall-clock timeout; captures combined
// output. The child gets its own process group so a timeout kills the whole
// pipeline.
ProcessResult run_command(const std::string& command, double timeout_seconds) {
    int fds[2];
    if (pipe(fds) != 0) throw StateError("pipe() failed: " + std::string(strerror(errno)));

    const pid_t pid = fork();
    if (pid < 0) {
        close(fds[0]);
        close(fds[1]);
        throw StateError("fork() failed: " + std::string(strerror(errno)));
    }
    if (pid == 0) {
        setpgid(0, 0);
        dup2(fds[1], STDOUT_FILENO);
        dup2(fds[1], STDERR_FILENO);
        close(fds[0]);
        close(fds[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }

    close(fds[1]);
    ProcessResult result;
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_seconds);
    std::array<char, 4096> buf;
    bool open = true;
    while (open) {
        const auto remaining = deadline - std::chrono::steady_clock::now();
        const long ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(remaining).count();
        if (ms <= 0) {
            result.timed_out = true;
            break;
        }
        pollfd pfd{fds[0], POLLIN, 0};
        const int rc = poll(&pfd, 1, static_cast<int>(std::min(ms, 1000L)));
        if (rc < 0 && errno != EINTR) break;
        if (rc > 0) {
            const ssize_t n = read(fds[0], buf.data(), buf.size());
            if (n <= 0) {
                open = false;
            } else {
                result.output.append(buf.data(), static_cast<std::size_t>(n));
            }
        }
    }
    close(fds[0]);

    if (result.timed_out) {
        kill(-pid, SIGKILL);
    }
    int status = 0;
    waitpid(pid, &status, 0);
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    return result;
}

}  // namespace

const SyntheticParam& SyntheticSpec::resolve(const std::string& algorithm,
                                             const std::string& instance) const {
    const SyntheticParam* best = nullptr;
    int best_score = -1;
    for (const auto& p : params) {
        const bool algo_match = p.algorithm == algorithm || p.algorithm == "*";
        const bool inst_match = p.instance == instance || p.instance == "*";
        if (!algo_match || !inst_match) continue;
        const int score = (p.algorithm == algorithm ? 2 : 0) + (p.instance == instance ? 1 : 0);
        if (score > best_score) {
            best = &p;
            best_score = score;
        }
    }
    if (best == nullptr) {
        throw ConfigError("no synthetic parameters match (algorithm='" + algorithm +
                          "', instance='" + instance + "')");
    }
    return *best;
}

void RunnerSpec::validate() const {
    if (kind == RunnerKind::external) {
        if (external.command.empty()) throw ConfigError("external runner needs a command");
        if (!(external.timeout_seconds > 0.0)) {
            throw ConfigError("external runner timeout must be > 0");
        }
        return;
    }
    if (synthetic.params.empty()) {
        throw ConfigError("synthetic runner needs at least one parameter entry");
    }
    for (const auto& p : synthetic.params) {
        if (!std::isfinite(p.location) || !std::isfinite(p.scale)) {
            throw ConfigError("synthetic parameters must be finite");
        }
        switch (synthetic.distribution) {
            case Distribution::normal:
                // scale 0 is the degenerate point mass, which is allowed
                if (p.scale < 0.0) throw ConfigError("normal scale must be >= 0");
                break;
            case Distribution::lognormal:
                if (!(p.scale > 0.0)) throw ConfigError("lognormal scale must be > 0");
                break;
            case Distribution::uniform:
                if (!(p.scale > 0.0)) throw ConfigError("uniform width must be > 0");
                if (p.location < 0.0) {
                    throw ConfigError(
                        "uniform location must be >= 0 so outputs stay positive");
                }
                break;
        }
    }
}

RunRecord run_once(const RunnerSpec& spec, const std::string& algorithm_id,
                   const std::string& instance_id, std::uint64_t seed) {
    spec.validate();
    RunRecord rec;
    rec.algorithm_id = algorithm_id;
    rec.instance_id = instance_id;
    rec.seed = seed;

    const auto start = std::chrono::steady_clock::now();
    auto stamp = [&] {
        rec.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    };

    if (spec.kind == RunnerKind::synthetic) {
        const SyntheticParam& p = spec.synthetic.resolve(algorithm_id, instance_id);
        auto eng = rng::make_engine(rng::mix64(
            seed ^ rng::mix64(rng::hash_str(algorithm_id) ^ rng::hash_str(instance_id))));
        switch (spec.synthetic.distribution) {
            case Distribution::normal:
                rec.value = rng::next_normal(eng, p.location, p.scale);
                break;
            case Distribution::lognormal:
                rec.value = rng::next_lognormal(eng, p.location, p.scale);
                break;
            case Distribution::uniform:
                rec.value = rng::next_uniform_range(eng, p.location, p.scale);
                break;
        }
        rec.status = RunStatus::ok;
        stamp();
        return rec;
    }

    std::string command = substitute(spec.external.command, "algorithm", algorithm_id);
    command = substitute(command, "instance", instance_id);
    command = substitute(command, "seed", std::to_string(seed));

    const ProcessResult proc = run_command(command, spec.external.timeout_seconds);
    stamp();
    const std::string tail =
        proc.output.size() > 2048 ? proc.output.substr(proc.output.size() - 2048) : proc.output;
    if (proc.timed_out) {
        rec.status = RunStatus::timeout;
        rec.message = "timed out after " + std::to_string(spec.external.timeout_seconds) +
                      "s: " + command;
        return rec;
    }
    if (proc.exit_code != 0) {
        rec.status = RunStatus::failed;
        rec.message = "exit code " + std::to_string(proc.exit_code) + "; output tail: " + tail;
        return rec;
    }
    double value = 0.0;
    if (!parse_result(proc.output, value)) {
        rec.status = RunStatus::failed;
        rec.message = "no 'value=<decimal>' result line in output; tail: " + tail;
        return rec;
    }
    rec.value = value;
    rec.status = RunStatus::ok;
    return rec;
}

ValidationReport validate_design(const power::DesignSpec& design_spec,
                                 const ValidationTruth& truth, int n_sim,
                                 std::uint64_t seed) {
    design_spec.validate();
    if (n_sim < 1000) throw ConfigError("validate_design needs n_sim >= 1000");
    const int K = design_spec.num_comparisons;
    std::vector<double> effects = truth.effects;
    if (effects.size() == 1) effects.assign(K, effects[0]);
    if (effects.empty()) effects.assign(K, 0.0);
    if (static_cast<int>(effects.size()) != K) {
        throw ConfigError("truth must supply 1 or num_comparisons effects");
    }

    const auto design_result = power::design(design_spec);
    const int N = design_result.n_instances;

    ValidationReport report;
    report.n_sim = n_sim;
    report.n_instances = N;
    report.alpha_f = design_spec.alpha_f;

    std::vector<long> reject_count(K, 0);
    long fwer_count = 0;

    std::vector<std::pair<std::string, double>> pvalues(K);
    analysis::PairedDifferenceVector vec;
    vec.values.resize(N);

    for (int s = 0; s < n_sim; ++s) {
        // Per-simulation, per-hypothesis seeds keep results independent of
        // execution order.
        for (int k = 0; k < K; ++k) {
            auto eng = rng::make_engine(rng::derive_seed(seed, k, 0, s));
            for (int l = 0; l < N; ++l) {
                vec.values[l] = rng::next_normal(eng, effects[k], 1.0);
            }
            const auto outcome =
                analysis::t_test_paired(vec, design_spec.alpha_f, design_spec.alternative);
            // Stable zero-padded labels keep Holm tie-breaking deterministic.
            char label[16];
            std::snprintf(label, sizeof label, "h%05d", k);
            pvalues[k] = {label, outcome.p_value};
        }
        const auto holm = analysis::holm_stepdown(pvalues, design_spec.alpha_f);
        bool false_positive = false;
        for (const auto& entry : holm) {
            if (!entry.reject) continue;
            const int k = std::stoi(entry.label.substr(1));
            ++reject_count[k];
            if (effects[k] == 0.0) false_positive = true;
        }
        if (false_positive) ++fwer_count;
    }

    const double ns = static_cast<double>(n_sim);
    report.empirical_fwer = fwer_count / ns;
    report.fwer_se =
        std::sqrt(report.empirical_fwer * (1.0 - report.empirical_fwer) / ns);
    report.per_hypothesis_power.resize(K);
    report.per_hypothesis_se.resize(K);
    double mean_power = 0.0;
    int n_effect = 0;
    for (int k = 0; k < K; ++k) {
        const double rate = reject_count[k] / ns;
        report.per_hypothesis_power[k] = rate;
        report.per_hypothesis_se[k] = std::sqrt(rate * (1.0 - rate) / ns);
        if (effects[k] == 0.0) {
            report.has_null = true;
        } else {
            report.has_effect = true;
            mean_power += rate;
            ++n_effect;
        }
    }
    report.mean_power = n_effect > 0 ? mean_power / n_effect : 0.0;
    return report;
}

std::string to_string(RunnerKind k) {
    return k == RunnerKind::external ? "external" : "synthetic";
}

std::string to_string(Distribution d) {
    switch (d) {
        case Distribution::normal: return "normal";
        case Distribution::lognormal: return "lognormal";
        case Distribution::uniform: return "uniform";
    }
    throw ConfigError("unknown distribution");
}

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::ok: return "ok";
        case RunStatus::failed: return "failed";
        case RunStatus::timeout: return "timeout";
    }
    throw ConfigError("unknown run status");
}

RunnerKind runner_kind_from_string(const std::string& s) {
    if (s == "external") return RunnerKind::external;
    if (s == "synthetic") return RunnerKind::synthetic;
    throw ConfigError("unknown runner kind '" + s + "'");
}

Distribution distribution_from_string(const std::string& s) {
    if (s == "normal") return Distribution::normal;
    if (s == "lognormal") return Distribution::lognormal;
    if (s == "uniform") return Distribution::uniform;
    throw ConfigError("unknown distribution '" + s + "'");
}

}  // namespace expcmp::runner
