#pragma once

#include <cstdint>
#include <functional>

#include "uavtrack/reward.hpp"
#include "uavtrack/sim_core.hpp"
#include "uavtrack/trajectory.hpp"

namespace uavtrack {

struct EnvStep {
    WorldState next;
    RewardOutcome outcome;
};

// advance() followed by reward evaluation; next.t_nv holds the updated count.
EnvStep env_step(const WorldState& world, Action a, const EnvConfig& env, const RewardConfig& reward);

StepRecord make_record(const EnvStep& step, const EnvConfig& env);

using Policy = std::function<Action(const WorldState&)>;

// One full episode (t_max steps) under `policy`; env must be materialized.
TrajectoryLog run_episode(const EnvConfig& env, const RewardConfig& reward, std::uint64_t episode_seed,
                          const Policy& policy);

// Environment seed of evaluation episode k; shared by every policy.
std::uint64_t eval_episode_seed(std::uint64_t seed, int k);
std::uint64_t train_episode_seed(std::uint64_t seed, int k);

}  // namespace uavtrack
