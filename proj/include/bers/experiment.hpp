#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bers/benchmark_functions.hpp"
#include "bers/bers.hpp"
#include "bers/diffevo.hpp"
#include "bers/neural_linear.hpp"
#include "bers/supply_chain.hpp"

namespace bers {

enum class Profile { paper, desk };

std::string profile_name(Profile p);
std::optional<Profile> parse_profile(const std::string& name);

struct ModelSettings {
    EncoderShape shape;
    TrainConfig train;
    std::size_t pretrain_batches = 2000;
    std::size_t refine_batches = 5;
    std::size_t batch_size = 256;
};

struct OptSettings {
    ModelSettings model;
    std::vector<std::string> sources{"rosenbrock", "ackley", "sphere"};
    std::string target = "sphere";
    Strategy strategy = Strategy::bers;
    std::size_t single_source = 0;
    ReuseSchedule schedule = ReuseSchedule::geometric(0.99);
    std::size_t generations = 200;
    DEConfig de;
    StopRule source_stop;
    std::vector<std::string> multitask{"rosenbrock", "ackley", "sphere", "rastrigin"};
    double multitask_p = 0.3;
};

struct SupplySettings {
    ModelSettings model;
    /// Built-in scenario names or paths to scenario JSON files.
    std::vector<std::string> sources{"scenario1", "scenario2", "scenario3"};
    std::string target = "target";
    supply::CollectionConfig collection;
    double trim = 0.025;
    double cheap_bias = 0.0;
    ReuseSchedule schedule = ReuseSchedule::geometric(0.95);
    std::size_t episodes = 200;
    /// Learner batches drawn through the reuse context per episode.
    std::size_t train_batches = 1;
    std::size_t train_batch_size = 32;
    std::vector<std::size_t> snapshots{0, 10, 50, 100, 200};
};

struct WeightsOnlySettings {
    ModelSettings model;
    std::vector<std::string> sources;
    std::string target;
    /// "identity" or "log1p", applied to y on load.
    std::string transform = "identity";
    std::size_t rounds = 50;
};

struct ExperimentConfig {
    Profile profile = Profile::desk;
    std::uint64_t seed = 1;
    /// 0 picks the command default of the profile.
    std::size_t trials = 0;
    /// 0 means one job per hardware thread.
    std::size_t jobs = 0;
    std::filesystem::path out = "runs";
    /// Where transfer commands read source datasets; defaults to out/sources.
    std::filesystem::path source_dir;
    OptSettings opt;
    SupplySettings supply;
    WeightsOnlySettings weights_only;

    /// Echo of the effective configuration (every key).
    nlohmann::json to_json() const;
    std::filesystem::path sources_path() const;
    std::size_t opt_trials() const;
    std::size_t supply_trials() const;
};

/// Full default document for a profile.
nlohmann::json default_config_json(Profile profile);
/// Defaults of `profile` merged with `overrides` (JSON merge patch). Throws
/// ConfigError on unknown keys or invalid values.
ExperimentConfig make_config(Profile profile, const nlohmann::json& overrides = {});
/// Reads a JSON config file; its "profile" key (default desk) picks the base
/// defaults. Throws ConfigError or MissingDataset.
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<Profile> profile_override = std::nullopt);

std::uint64_t fnv1a(std::string_view bytes);
std::uint64_t file_hash(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);
std::uint64_t config_hash(const ExperimentConfig& config);

/// Dataset files: header x0..x{D-1},y,task then one row per demonstration.
void write_dataset_csv(const std::filesystem::path& path, const Dataset& ds);
/// Throws MissingDataset when the file is absent and IOFailure when malformed.
Dataset read_dataset_csv(const std::filesystem::path& path, std::size_t task_id);
/// Same rows with y replaced by log(1 + y).
Dataset with_log1p_targets(const Dataset& ds);

/// Writes manifest.json with the config echo, its hash, seeds, and dataset hashes.
void write_manifest(const std::filesystem::path& dir, const std::string& command,
                    const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds,
                    const std::vector<std::filesystem::path>& datasets);

/// Seed of trial k.
std::uint64_t trial_seed(const ExperimentConfig& config, std::size_t trial);

/// Per-episode mean and standard error of the trace objectives.
struct Aggregate {
    std::vector<double> mean;
    std::vector<double> stderr_;
};
Aggregate aggregate_objectives(const std::vector<RunTrace>& traces);
void write_aggregate_csv(const std::filesystem::path& path, const std::vector<RunTrace>& traces);

/// Runs the source demonstrators to the stop rule and writes one dataset per source
/// into sources_path(). Returns the written paths.
std::vector<std::filesystem::path> cmd_gen_source_opt(const ExperimentConfig& config);
/// Reuse runs on the target benchmark, one trace per trial.
std::vector<RunTrace> cmd_transfer_opt(const ExperimentConfig& config);
/// traces[trial][task].
std::vector<std::vector<RunTrace>> cmd_multitask_opt(const ExperimentConfig& config);
std::vector<std::filesystem::path> cmd_gen_source_supply(const ExperimentConfig& config);
std::vector<RunTrace> cmd_transfer_supply(const ExperimentConfig& config);
/// One weight sequence per trial.
std::vector<std::vector<QpSolution>> cmd_weights_only(const ExperimentConfig& config);

/// Source datasets for a benchmark run with DE, as collected (transformed fitness).
Dataset generate_opt_source(const BenchmarkTask& task, const DEConfig& de, const StopRule& stop,
                            std::uint64_t seed, std::size_t task_id,
                            std::vector<GenerationStats>* history = nullptr);

/// Built-in name or scenario file.
std::pair<supply::ScenarioCosts, supply::EconParams> resolve_scenario(const std::string& ref);

/// Fresh model with `heads` heads and Glorot weights drawn from a seed-derived stream.
MultiHeadModel make_model(const ModelSettings& settings, Index input_dim, std::size_t heads,
                          std::uint64_t seed);

}  // namespace bers
