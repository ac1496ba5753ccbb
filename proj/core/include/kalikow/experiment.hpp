#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kalikow/model_io.hpp"
#include "kalikow/types.hpp"

namespace kalikow {

struct ExperimentConfig {
    /// Either an inline model or a path in `model_file` (resolved against base_dir).
    ModelConfig model;
    std::string model_file;

    struct Simulation {
        std::vector<NeuronId> F;
        std::int64_t m = 1;
        std::int64_t T = 1000;
        std::uint64_t seed = 1;
    } simulation;

    struct DictionarySection {
        std::string kind = "hawkes_spont";
        /// Empty: the simulation neurons.
        std::vector<NeuronId> F;
        /// 0: the simulation depth.
        std::int64_t m = 0;
        std::int64_t eta = 1;
        /// 0: m / eta.
        std::int64_t L = 0;
    } dictionary;

    struct Estimator {
        std::optional<NeuronId> target;
        double gamma = 2.0;
        std::optional<double> delta = 0.1;
        std::optional<double> d;
        double tol = 1e-10;
        std::int64_t max_iter = 100'000;
    } estimator;

    struct Diagnostics {
        std::vector<double> kappa;
        double re_c = 1.0;
        std::int64_t re_s = 1;
        std::string re_mode = "certified";
        std::optional<double> mu;
        double theta = 0.5;
        /// none | scalar | matrix
        std::string concentration = "none";
        double x = 3.0;
        std::int64_t replicas = 0;
    } diagnostics;

    struct Output {
        std::string dir = ".";
        std::string prefix = "run";
        std::string sample_format = "csv";
        /// Subset of simulate, assemble, estimate, diagnose, in this order.
        std::vector<std::string> stages{"simulate", "assemble", "estimate", "diagnose"};
    } output;

    std::filesystem::path base_dir;

    friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);
};

/// INI sections [model] (+ family section), [simulation], [dictionary],
/// [estimator], [diagnostics], [output]. Throws ConfigError.
ExperimentConfig parse_experiment_config(std::istream& in, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// Canonical text; parse(write(c)) == c.
void write_experiment_config(const ExperimentConfig& cfg, std::ostream& out);
std::string serialize_experiment_config(const ExperimentConfig& cfg);
/// Hex digest of the canonical text.
std::string config_fingerprint(const ExperimentConfig& cfg);
/// Every key with its default, as a commented config.
std::string explain_experiment_config();

/// Throws ConfigError when sections disagree (depths, target, neuron sets).
void check_consistency(const ExperimentConfig& cfg);

/// A stage failed; `stage` names it, `code` is the CLI exit status.
struct StageError : std::runtime_error {
    StageError(std::string stage_name, int exit_code, const std::string& what)
        : std::runtime_error(stage_name + ": " + what), stage(std::move(stage_name)), code(exit_code) {}
    std::string stage;
    int code;
};

struct RunOptions {
    bool write_files = true;
};

struct ExperimentReport {
    /// Deterministic JSON text.
    std::string json;
    /// check name -> pass | fail | not_applicable
    std::map<std::string, std::string> checks;
    std::map<std::string, double> metrics;
    std::vector<std::filesystem::path> artifacts;
    bool convergence_failure = false;

    bool checks_passed() const;
};

/// Runs the configured stages. Writes <dir>/<prefix>.{sample.csv|sample.bin,
/// gram.json, solution.json, report.json}; a <prefix>.partial marker exists
/// while running and is kept, naming the failed stage, on error.
ExperimentReport run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

struct ReplicateSummary {
    std::string json;
    std::size_t n = 0;
    std::size_t failures = 0;
    std::map<std::string, std::string> checks;
    bool ok() const;
};

/// Seeds base_seed .. base_seed + n - 1, run in parallel without writing
/// per-replica files; aggregates check rates and metric quantiles.
ReplicateSummary replicate(const ExperimentConfig& cfg, std::size_t n, std::uint64_t base_seed);

}  // namespace kalikow
