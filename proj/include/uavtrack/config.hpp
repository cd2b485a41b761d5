#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "uavtrack/baseline.hpp"
#include "uavtrack/learner.hpp"
#include "uavtrack/metrics.hpp"
#include "uavtrack/reward.hpp"
#include "uavtrack/sim_core.hpp"
#include "uavtrack/trajectory.hpp"

namespace uavtrack {

struct RunConfig {
    EnvConfig env;
    RewardConfig reward;
    TrainParams train;
    ScheduleParams schedule;
    BaselineConfig baseline;
    MetricsOptions metrics;
    EvalOptions eval;
    std::string output_dir = "out";

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Checks every sub-config; messages are prefixed with the section name.
void validate(const RunConfig& cfg);

// Flat `section.key = value` lines; '#' starts a comment. Missing keys take
// their defaults and a generated obstacle layout is written out explicitly,
// so the result is fully materialized.
RunConfig parse_config_text(std::string_view text);
RunConfig parse_config(const std::filesystem::path& path);

// Every key, one per line, fixed order, doubles at full precision.
std::string serialize_config(const RunConfig& cfg);

// FNV-1a 64 of the canonical serialization, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

std::string_view to_string(Algo a);
Algo algo_from_string(std::string_view s);

inline constexpr std::string_view kTrajectoryHeader = "t,xD,yD,zD,xT,yT,reward,visible,branch";

std::string trajectory_csv(const TrajectoryLog& log);
TrajectoryLog parse_trajectory_csv(std::string_view text);
void write_trajectory(const std::filesystem::path& path, const TrajectoryLog& log);
TrajectoryLog read_trajectory(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace uavtrack
