#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "uavtrack/trajectory.hpp"

namespace uavtrack {

enum class RewMode : std::uint8_t { mean, sum };
enum class TimeMode : std::uint8_t { steps, percent };

// Generalized metrics. The span overloads average the per-episode values.
double dis(const TrajectoryLog& log);
double dis(std::span<const TrajectoryLog> logs);
double time_in_fov(const TrajectoryLog& log, TimeMode mode = TimeMode::steps);
double time_in_fov(std::span<const TrajectoryLog> logs, TimeMode mode = TimeMode::steps);
double rew(const TrajectoryLog& log, RewMode mode = RewMode::mean);
double rew(std::span<const TrajectoryLog> logs, RewMode mode = RewMode::mean);

struct Checkpoint {
    Vec2 position;
    double radius = 1.0;
};

std::vector<Vec2> uav_path(const TrajectoryLog& log);
std::vector<Vec2> target_path(const TrajectoryLog& log);

// `count` checkpoints at equally spaced time indices, endpoints included.
std::vector<Checkpoint> place_checkpoints_dense(std::span<const Vec2> target_path, int count, double radius);

// Endpoints plus heading-change points; when there are too many corners the
// sharpest turns are kept (earlier first on ties).
std::vector<Checkpoint> place_checkpoints_sparse(std::span<const Vec2> target_path, int max_count, double radius);

double tracking_time_pct(std::span<const Vec2> uav_path, std::span<const Checkpoint> checkpoints);
double tracking_success_pct(std::span<const Vec2> uav_path, std::span<const Checkpoint> checkpoints);

inline constexpr double kErrorFloor = 1e-9;

struct ErrorMetrics {
    double rmse = 0.0;
    double aee = 0.0;
    double ahe = 0.0;
    double age = 0.0;
};

// Both paths sampled at K equally spaced indices of their common length.
ErrorMetrics error_metrics(std::span<const Vec2> uav_path, std::span<const Vec2> target_path, int k);

// t_tr in hours, t_ev in seconds.
double computation_time(double t_tr_hours, double t_ev_seconds, double r);

struct MetricsOptions {
    int k = 100;
    int dense_checkpoints = 15;
    int sparse_checkpoints = 10;
    // <= 0 selects 0.1 * side_s.
    double checkpoint_radius = 0.0;
    RewMode rew_mode = RewMode::mean;
    TimeMode time_mode = TimeMode::steps;

    friend bool operator==(const MetricsOptions&, const MetricsOptions&) = default;
};

struct MetricsReport {
    int episodes = 0;
    double dis = 0.0;                   // grid units
    double time_in_fov = 0.0;           // steps (or percent of the episode)
    double rew = 0.0;                   // reward per step (or per episode)
    double tracking_time_pct = 0.0;     // percent
    double tracking_success_pct = 0.0;  // percent
    double rmse = 0.0;                  // grid units
    double aee = 0.0;
    double ahe = 0.0;
    double age = 0.0;
    std::optional<double> ct;  // hours * seconds^r; absent for untrained policies
    std::optional<std::size_t> param_count;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

// Trajectory-derived part of the report; ct and param_count are left empty.
MetricsReport compute_report(std::span<const TrajectoryLog> logs, const MetricsOptions& opts, double side_s);

nlohmann::json to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
std::string to_text(const MetricsReport& report);

// True when a larger value of the named metric is better.
bool higher_is_better(const std::string& metric);

}  // namespace uavtrack
