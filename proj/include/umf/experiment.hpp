#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "umf/baselines.hpp"
#include "umf/codec.hpp"
#include "umf/reward.hpp"

namespace umf {

struct ProblemSpec {
    std::string id;
    std::string vocabulary;
    std::vector<TokenId> prompt;
    std::size_t gen_length = 0;
    std::vector<TokenId> target;              // empty unless given
    std::vector<nlohmann::json> denoisers;    // per-problem additions / overrides
};

struct RewardSpec {
    std::string type;   // exact_match | test_command | remote
    MatchMode mode = MatchMode::fraction;
    std::string command;
    std::size_t concurrency = 1;
    std::string url;
    int retries = 0;
    double timeout_s = 30.0;
};

struct ExperimentConfig {
    nlohmann::json raw;
    std::vector<std::uint64_t> seeds;
    RatioSchedule schedule = RatioSchedule::standard();
    bool cache = true;
    std::map<std::string, VocabularyPtr> vocabularies;
    CodecRegistry codecs;
    std::vector<nlohmann::json> denoisers;
    std::vector<ProblemSpec> problems;
    std::vector<Action> actions;
    std::vector<MethodSpec> methods;
    std::map<std::string, std::string> sweep_groups;  // variant label -> swept method label
    std::vector<std::uint64_t> budgets;
    RewardSpec reward;
    std::optional<RewardSpec> held_out;
    nlohmann::json analysis;
};

/// Validates a config document. Relative file references resolve against
/// `base_dir`. Errors are ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                              std::optional<std::uint64_t> seed_override = std::nullopt);
ExperimentConfig load_config(const std::filesystem::path& path,
                             std::optional<std::uint64_t> seed_override = std::nullopt);

/// Denoisers and reward providers materialised for one problem.
struct ProblemContext {
    MaskedState initial;
    DenoiserRegistry denoisers;
    std::map<std::string, DenoiserPtr> by_id;
    RewardPtr reward;
    RewardPtr held_out;
};

ProblemContext build_problem(const ExperimentConfig& config, const ProblemSpec& problem);

/// Fixed column order of summary.csv.
const std::vector<std::string>& summary_columns();

struct CellResult {
    std::string problem;
    std::uint64_t seed = 0;
    std::string method;
    std::uint64_t budget = 0;
    MethodResult result;
    std::optional<double> held_out_reward;
    std::string status = "ok";
    std::string error;
    double wall_time_s = 0.0;
};

struct RunSummary {
    std::size_t cells = 0;
    std::size_t failed = 0;
    std::vector<CellResult> results;
};

/// Seed of a cell: independent of method and budget so that larger budgets
/// extend the same stochastic streams.
std::uint64_t cell_seed(std::uint64_t seed, const std::string& problem_id);

/// Runs every (problem, seed, method, budget) cell and writes the result
/// directory. Cell failures are recorded and do not stop other cells.
RunSummary run_experiment(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                          int workers = 1, std::optional<std::uint64_t> seed_override = std::nullopt);

/// Tree renderings plus best-so-far-vs-NFE tables. Also written to
/// <dir>/report.txt. Throws MissingResults when the directory lacks results.
std::string report(const std::filesystem::path& dir);

/// Re-checks trace and tree invariants; returns the violations found.
std::vector<std::string> verify_results(const std::filesystem::path& dir);

}  // namespace umf
