#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "uavtrack/config.hpp"
#include "uavtrack/metrics.hpp"

namespace uavtrack {

namespace fs = std::filesystem;

struct TrainArgs {
    fs::path config;
    std::optional<std::string> algo;
    std::uint64_t seed = 0;
    std::optional<int> episodes;
    fs::path out;
};

struct EvalArgs {
    // Defaults to the config stored with the model.
    std::optional<fs::path> config;
    std::optional<fs::path> model;
    std::optional<std::string> algo;
    std::optional<int> episodes;
    std::uint64_t seed = 0;
    fs::path out;
    double r = 1.0;
    bool lifelong = false;
    bool force = false;
    // Second policy rolled out on the same seeds for a side-by-side table.
    std::optional<std::string> compare;
};

struct SweepArgs {
    fs::path config;
    std::vector<double> speeds;
    std::optional<std::string> mode;
    std::vector<std::string> algos;
    std::uint64_t seed = 0;
    std::optional<int> episodes;
    std::optional<int> eval_episodes;
    int parallel = 1;
    fs::path out;
};

struct CurriculumArgs {
    fs::path model;
    fs::path config;
    double budget = 0.2;
    std::uint64_t seed = 0;
    std::optional<int> eval_episodes;
    fs::path out;
};

struct MetricsArgs {
    std::vector<fs::path> logs;
    std::optional<fs::path> config;
    fs::path out;
};

// Each command reports errors on stderr and returns a nonzero status.
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_sweep_drift(const SweepArgs& args);
int cmd_curriculum(const CurriculumArgs& args);
int cmd_metrics(const MetricsArgs& args);

// Parses `uav-track <command> [flags]`.
int run_cli(int argc, const char* const* argv);

// Reads UAVTRACK_LOG (error|info|debug).
void configure_logging();

struct ComparisonRow {
    std::string metric;
    double a = 0.0;
    double b = 0.0;
    // "a", "b" or "tie".
    std::string winner;
};

std::vector<ComparisonRow> compare_reports(const MetricsReport& a, const MetricsReport& b);
std::string comparison_table(const std::string& name_a, const std::string& name_b,
                             const std::vector<ComparisonRow>& rows);

std::string curriculum_label(int from_obstacles, int to_obstacles);

// Run manifest written next to weights and trajectories.
struct Manifest {
    std::string config_text;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string algo;
    int episodes = 0;
    double t_tr_hours = 0.0;
    bool has_weights = false;
    std::optional<std::size_t> param_count;
};

nlohmann::json to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);

}  // namespace uavtrack
