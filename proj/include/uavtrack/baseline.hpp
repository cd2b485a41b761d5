#pragma once

#include <vector>

#include "uavtrack/reward.hpp"
#include "uavtrack/sim_core.hpp"
#include "uavtrack/trajectory.hpp"

namespace uavtrack {

struct BaselineConfig {
    double fov_theta = 0.5235987755982988;
    int avoid_lookahead = 1;

    friend bool operator==(const BaselineConfig&, const BaselineConfig&) = default;
};

void validate(const BaselineConfig& cfg);

// Altitude level the baseline climbs to and holds.
int baseline_level(const EnvConfig& env);

// Obstacles the baseline can see: footprint intersecting its FOV square.
std::vector<ObstacleSpec> visible_obstacles(const Vec3& uav, const EnvConfig& env, double fov_theta);

// Vision baseline: greedy planar pursuit while the target is in view, a
// planar random walk at the held altitude otherwise. Moves into obstacles
// inside the FOV square are skipped.
Action baseline_action(const WorldState& world, const EnvConfig& env, const BaselineConfig& cfg, Rng& rng);

std::vector<TrajectoryLog> evaluate_baseline(const EnvConfig& env, const RewardConfig& reward,
                                             const BaselineConfig& cfg, int episodes, std::uint64_t seed);

}  // namespace uavtrack
