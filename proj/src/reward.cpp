#include "uavtrack/reward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "uavtrack/errors.hpp"

namespace uavtrack {

void validate(const RewardConfig& cfg) {
    auto require = [](bool ok, const char* what) {
        if (!ok) throw ConfigError(std::string(what) + " violated");
    };
    require(cfg.r_collision < 0.0, "R_c < 0");
    require(cfg.r_obstruction < 0.0, "R_i < 0");
    require(cfg.r_nonvisible < 0.0, "R_nv < 0");
    require(cfg.r_visible_dist > 0.0, "R_v_c > 0");
    require(cfg.r_visible_height > 0.0, "h_v_c > 0");
    require(cfg.beta > 0.0, "beta > 0");
    require(cfg.dist_floor > 0.0, "dist_floor > 0");
    require(cfg.t_cap >= 1, "t_cap >= 1");
}

std::string_view to_string(RewardBranch b) {
    switch (b) {
        case RewardBranch::collision: return "collision";
        case RewardBranch::obstruction: return "obstruction";
        case RewardBranch::visible: return "visible";
        case RewardBranch::non_visible: return "non_visible";
    }
    return "?";
}

RewardBranch branch_from_string(std::string_view s) {
    if (s == "collision") return RewardBranch::collision;
    if (s == "obstruction") return RewardBranch::obstruction;
    if (s == "visible") return RewardBranch::visible;
    if (s == "non_visible") return RewardBranch::non_visible;
    throw FormatError("unknown reward branch '" + std::string(s) + "'");
}

double positive_reward(const Vec3& uav, const Vec2& target, const RewardConfig& cfg) {
    if (uav.z <= 0.0) throw DomainError("positive_reward: altitude must be > 0");
    const double d = std::max(cfg.dist_floor, planar_distance(uav, target));
    return cfg.r_visible_dist / d + cfg.r_visible_height / uav.z;
}

double nonvisible_reward(int t_nv, const RewardConfig& cfg) {
    if (cfg.inverted_decay) return cfg.r_nonvisible * std::exp(cfg.beta * std::min(t_nv, cfg.t_cap));
    return cfg.r_nonvisible * std::exp(-cfg.beta * t_nv);
}

RewardOutcome compute_reward(const WorldState& w, const EnvConfig& config, const RewardConfig& cfg) {
    bool collision = w.collided;
    bool intersection = false;
    for (const auto& o : config.obstacles) {
        if (collision_check(w.uav, o)) {
            collision = true;
            break;
        }
        const bool hit = config.obstruction == ObstructionModel::closed_form ? obstruction_closed_form(w.uav, w.target, o)
                                                                       : obstruction_geometric(w.uav, w.target, o);
        if (hit) intersection = true;
    }
    if (collision) return {cfg.r_collision, RewardBranch::collision, w.t_nv + 1};
    if (intersection) return {cfg.r_obstruction, RewardBranch::obstruction, w.t_nv + 1};
    if (visibility(w.uav, w.target, config.theta_fov, config.fov_shape)) {
        return {positive_reward(w.uav, w.target, cfg), RewardBranch::visible, 0};
    }
    const int t_nv = w.t_nv + 1;
    return {nonvisible_reward(t_nv, cfg), RewardBranch::non_visible, t_nv};
}

}  // namespace uavtrack
