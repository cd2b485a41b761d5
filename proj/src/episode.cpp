#include "uavtrack/episode.hpp"

namespace uavtrack {

EnvStep env_step(const WorldState& world, Action a, const EnvConfig& env, const RewardConfig& reward) {
    EnvStep step{advance(world, a, env), {}};
    step.outcome = compute_reward(step.next, env, reward);
    step.next.t_nv = step.outcome.t_nv_after;
    return step;
}

StepRecord make_record(const EnvStep& step, const EnvConfig& env) {
    const auto& w = step.next;
    return {w.t, w.uav, w.target, step.outcome.value, visibility(w.uav, w.target, env.theta_fov, env.fov_shape),
            step.outcome.branch};
}

TrajectoryLog run_episode(const EnvConfig& env, const RewardConfig& reward, std::uint64_t episode_seed,
                          const Policy& policy) {
    TrajectoryLog log;
    log.seed = episode_seed;
    log.steps.reserve(static_cast<std::size_t>(env.t_max));
    WorldState world = reset(env, episode_seed);
    for (int t = 0; t < env.t_max; ++t) {
        const Action a = policy(world);
        EnvStep step = env_step(world, a, env, reward);
        log.steps.push_back(make_record(step, env));
        world = std::move(step.next);
    }
    return log;
}

std::uint64_t eval_episode_seed(std::uint64_t seed, int k) {
    return derive_seed(derive_seed(seed, "eval"), static_cast<std::uint64_t>(k));
}

std::uint64_t train_episode_seed(std::uint64_t seed, int k) {
    return derive_seed(derive_seed(seed, "env"), static_cast<std::uint64_t>(k));
}

}  // namespace uavtrack
