#include "uavtrack/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

#include "uavtrack/episode.hpp"
#include "uavtrack/errors.hpp"

namespace uavtrack {

namespace {

bool disk_meets_square(const Vec2& center, double radius, const Vec3& uav, double half) {
    const double cx = std::clamp(center.x, uav.x - half, uav.x + half);
    const double cy = std::clamp(center.y, uav.y - half, uav.y + half);
    return std::hypot(center.x - cx, center.y - cy) <= radius;
}

bool planar(Action a) { return a != Action::up && a != Action::down; }

bool along_x(Action a) { return a == Action::west || a == Action::east; }

}  // namespace

void validate(const BaselineConfig& cfg) {
    if (!(cfg.fov_theta > 0.0 && cfg.fov_theta < std::numbers::pi / 2))
        throw ConfigError("fov_theta: 0 < fov_theta < pi/2 violated");
    if (cfg.avoid_lookahead < 1) throw ConfigError("avoid_lookahead: avoid_lookahead >= 1 violated");
}

std::vector<ObstacleSpec> visible_obstacles(const Vec3& uav, const EnvConfig& env, double fov_theta) {
    const double half = 0.5 * fov_diameter(uav.z, fov_theta);
    std::vector<ObstacleSpec> out;
    for (const auto& o : env.obstacles)
        if (disk_meets_square(o.center, o.radius, uav, half)) out.push_back(o);
    return out;
}

int baseline_level(const EnvConfig& env) { return env.n_h / 2; }

Action baseline_action(const WorldState& world, const EnvConfig& env, const BaselineConfig& cfg, Rng& rng) {
    const auto seen = visible_obstacles(world.uav, env, cfg.fov_theta);
    auto blocked = [&](Action a) {
        return any_collision(commanded_position(world.uav, world.altitude_level, a, env), seen);
    };
    const int mid = baseline_level(env);
    const Action toward_mid = world.altitude_level < mid ? Action::up : Action::down;

    if (visibility(world.uav, world.target, cfg.fov_theta, env.fov_shape)) {
        const bool x_wider = std::abs(world.target.x - world.uav.x) >= std::abs(world.target.y - world.uav.y);
        auto key = [&](Action a) {
            const double d = planar_distance(commanded_position(world.uav, world.altitude_level, a, env), world.target);
            int rank = 3;
            if (planar(a)) rank = along_x(a) == x_wider ? 0 : 1;
            else if (world.altitude_level != mid && a == toward_mid) rank = 2;
            return std::tuple{d, rank, static_cast<int>(a)};
        };
        std::array<Action, kNumActions> order = kAllActions;
        std::sort(order.begin(), order.end(), [&](Action a, Action b) { return key(a) < key(b); });
        for (Action a : order)
            if (!blocked(a)) return a;
        return order.front();
    }

    if (world.altitude_level != mid && !blocked(toward_mid)) return toward_mid;
    std::vector<Action> free;
    for (std::size_t i = 0; i < 4; ++i)
        if (!blocked(kAllActions[i])) free.push_back(kAllActions[i]);
    if (free.empty()) return kAllActions[uniform_index(rng, 4)];
    return free[uniform_index(rng, free.size())];
}

std::vector<TrajectoryLog> evaluate_baseline(const EnvConfig& env, const RewardConfig& reward,
                                             const BaselineConfig& cfg, int episodes, std::uint64_t seed) {
    validate(cfg);
    const EnvConfig world_env = materialize(env);
    std::vector<TrajectoryLog> logs;
    for (int k = 0; k < episodes; ++k) {
        Rng rng(derive_seed(derive_seed(seed, "baseline"), static_cast<std::uint64_t>(k)));
        auto policy = [&](const WorldState& w) { return baseline_action(w, world_env, cfg, rng); };
        auto log = run_episode(world_env, reward, eval_episode_seed(seed, k), policy);
        log.episode = k;
        logs.push_back(std::move(log));
    }
    return logs;
}

}  // namespace uavtrack
