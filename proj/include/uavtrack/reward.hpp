#pragma once

#include <string_view>

#include "uavtrack/sim_core.hpp"

namespace uavtrack {

struct RewardConfig {
    double r_collision = -1500.0;
    double r_obstruction = -60.0;
    double r_visible_dist = 3500.0;
    double r_visible_height = 2000.0;
    double r_nonvisible = -25.0;
    double beta = 2.0;
    // Planar distance below which the visible reward stops growing.
    double dist_floor = 1.0;
    // Opt-in: non-visible penalty magnitude grows with t_nv instead of decaying.
    bool inverted_decay = false;
    int t_cap = 5;

    friend bool operator==(const RewardConfig&, const RewardConfig&) = default;
};

void validate(const RewardConfig& cfg);

enum class RewardBranch : std::uint8_t { collision, obstruction, visible, non_visible };

std::string_view to_string(RewardBranch b);
RewardBranch branch_from_string(std::string_view s);

struct RewardOutcome {
    double value = 0.0;
    RewardBranch branch = RewardBranch::non_visible;
    int t_nv_after = 0;
};

double positive_reward(const Vec3& uav, const Vec2& target, const RewardConfig& cfg);
double nonvisible_reward(int t_nv, const RewardConfig& cfg);

// Branch order: collision, obstruction, visible, non-visible. Uses the
// pre-step t_nv stored in `world` and reports the updated count.
RewardOutcome compute_reward(const WorldState& world, const EnvConfig& config, const RewardConfig& cfg);

}  // namespace uavtrack
