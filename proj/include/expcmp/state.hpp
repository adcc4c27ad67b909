#pragma once

// Durable experiment state: one JSON document holding the design, sampling
// configuration, runner specification, seeds, and every recorded observation.
// Status moves forward only: designed -> sampling -> sampled -> analyzed.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "expcmp/power.hpp"
#include "expcmp/runner.hpp"
#include "expcmp/sampling.hpp"

#include "json.hpp"

namespace expcmp::state {

constexpr int kSchemaVersion = 1;

enum class Status { designed, sampling, sampled, analyzed };

std::string to_string(Status s);
Status status_from_string(const std::string& s);

struct ExperimentState {
    int schema_version = kSchemaVersion;
    Status status = Status::designed;
    std::uint64_t global_seed = 0;

    power::DesignSpec design_spec;
    std::optional<power::DesignResult> design_result;

    sampling::SamplingConfig sampling_config;
    std::vector<std::string> algorithms;
    std::vector<std::string> instances;
    runner::RunnerSpec runner_spec;

    std::map<std::string, sampling::InstanceSampleReport> reports;  // keyed by instance

    // Forward-only transition; throws StateError on an attempt to move back.
    void advance_status(Status next);
};

// JSON (de)serialization. Keys are emitted in sorted order, so two states
// with equal content serialize byte-identically.
nlohmann::json to_json(const ExperimentState& state);
ExperimentState state_from_json(const nlohmann::json& j);

// Atomic save (write to a temp file, then rename) and load-with-validation.
void save_state(const ExperimentState& state, const std::string& path);
ExperimentState load_state(const std::string& path);

// Parse an experiment configuration document (same schema as the state file
// minus result fields); used by `design` and `validate`.
ExperimentState config_from_json(const nlohmann::json& j);
ExperimentState load_config(const std::string& path);

// Advisory exclusive lock on <path>.lock for the lifetime of the object.
class FileLock {
public:
    explicit FileLock(const std::string& path);
    ~FileLock();
    FileLock(const FileLock&) = delete;
    FileLock& operator=(const FileLock&) = delete;

private:
    int fd_ = -1;
    std::string lock_path_;
};

}  // namespace expcmp::state
