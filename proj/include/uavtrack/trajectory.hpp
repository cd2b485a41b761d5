#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uavtrack/reward.hpp"
#include "uavtrack/sim_core.hpp"

namespace uavtrack {

struct StepRecord {
    int t = 0;
    Vec3 uav;
    Vec2 target;
    double reward = 0.0;
    bool visible = false;
    RewardBranch branch = RewardBranch::non_visible;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

// Post-step records of one episode, t = 1..t_max.
struct TrajectoryLog {
    std::uint64_t seed = 0;
    std::string config_hash;
    int episode = 0;
    std::vector<StepRecord> steps;

    friend bool operator==(const TrajectoryLog&, const TrajectoryLog&) = default;
};

}  // namespace uavtrack
