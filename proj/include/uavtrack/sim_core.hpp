#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "uavtrack/random.hpp"

namespace uavtrack {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
    friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    friend bool operator==(const Vec3&, const Vec3&) = default;
};

inline double planar_distance(const Vec3& uav, const Vec2& p) {
    const double dx = uav.x - p.x;
    const double dy = uav.y - p.y;
    return std::sqrt(dx * dx + dy * dy);
}

enum class Action : std::uint8_t { north = 0, south = 1, west = 2, east = 3, up = 4, down = 5 };
inline constexpr std::size_t kNumActions = 6;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::north, Action::south, Action::west, Action::east, Action::up, Action::down};

std::string_view to_string(Action a);

// Planar heading of the target vehicle; north is +y, east is +x.
enum class Heading : std::uint8_t { north = 0, south = 1, west = 2, east = 3 };

Heading reverse(Heading h);
Vec2 unit_vector(Heading h);

enum class WindMode : std::uint8_t { none, static_direction, random_direction };
enum class FovShape : std::uint8_t { square, circle };
enum class ObstructionModel : std::uint8_t { geometric, closed_form };

struct ObstacleSpec {
    Vec2 center;
    double radius = 5.0;
    double height = 20.0;
    friend bool operator==(const ObstacleSpec&, const ObstacleSpec&) = default;
};

struct WindSpec {
    double speed = 0.0;
    WindMode mode = WindMode::none;
    Vec2 static_dir{1.0, 0.0};
    friend bool operator==(const WindSpec&, const WindSpec&) = default;
};

struct EnvConfig {
    int side_s = 100;
    int n_obstacles = 3;
    // Either empty (layout generated from `seed`) or exactly n_obstacles entries.
    std::vector<ObstacleSpec> obstacles;
    double h_min = 5.0;
    double h_max = 30.0;
    int n_h = 10;
    double theta_fov = 0.5235987755982988;  // 30 degrees
    WindSpec wind;
    int road_spacing = 20;
    int t_max = 500;
    int uav_speed = 1;
    int target_speed = 1;
    std::uint64_t seed = 0;
    std::optional<Vec2> uav_spawn;
    FovShape fov_shape = FovShape::square;
    ObstructionModel obstruction = ObstructionModel::geometric;
    // UAV may leave the square by this fraction of side_s.
    double margin_fraction = 0.1;

    friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

// Throws ConfigError naming the first violated invariant.
void validate(const EnvConfig& config);

// Deterministic obstacle layout from config.seed: obstacles sit inside road
// blocks, do not overlap each other, and leave the spawn point free. A
// layout for n obstacles is a prefix of the layout for n + k obstacles.
std::vector<ObstacleSpec> generate_obstacles(const EnvConfig& config);

// Returns config with generated obstacles filled in when none are given.
EnvConfig materialize(EnvConfig config);

struct WorldState {
    Vec3 uav;
    int altitude_level = 0;
    Vec2 target;
    Heading target_heading = Heading::east;
    int t = 0;
    int t_nv = 0;
    // Last UAV move (or drift) was rejected because it entered an obstacle.
    bool collided = false;
    std::optional<Vec2> last_seen;
    int steps_since_seen = 0;
    Rng target_rng;
    Rng wind_rng;

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

WorldState reset(const EnvConfig& config, std::uint64_t seed);

// h_c: altitude change of one up/down action.
double altitude_increment(const EnvConfig& config);
double altitude_of_level(const EnvConfig& config, int level);

// Position after action `a` before drift, clamped to the flight area.
Vec3 commanded_position(const Vec3& uav, int level, Action a, const EnvConfig& config);

// Moves the UAV, applies drift, and reverts the move if it would collide.
WorldState step_uav(WorldState state, Action a, const EnvConfig& config);

Vec3 apply_wind(const Vec3& pos, const WindSpec& wind, Rng& rng);

// Legal headings at a junction: inside the square, reverse excluded unless it is the only way out.
std::vector<Heading> junction_headings(const Vec2& junction, Heading arriving, const EnvConfig& config);
Heading choose_heading(std::span<const Heading> options, Rng& rng);
bool on_road(const Vec2& p, const EnvConfig& config);
bool is_junction(const Vec2& p, const EnvConfig& config);

WorldState step_target(WorldState state, const EnvConfig& config);

double fov_diameter(double z, double theta_fov);

bool visibility(const Vec3& uav, const Vec2& target, double theta_fov, FovShape shape = FovShape::square);
bool collision_check(const Vec3& uav, const ObstacleSpec& obstacle);
bool any_collision(const Vec3& uav, std::span<const ObstacleSpec> obstacles);

// Original closed-form two-condition test, evaluated verbatim. Its point-line
// term is signed and ignores the UAV offset, so it over-reports obstruction
// for obstacles on one side of the sight line. Falls back to the geometric
// predicate when target and UAV share an x coordinate.
bool obstruction_closed_form(const Vec3& uav, const Vec2& target, const ObstacleSpec& obstacle);

// Exact test of the segment UAV -> (target, ground level) against the solid cylinder.
bool obstruction_geometric(const Vec3& uav, const Vec2& target, const ObstacleSpec& obstacle);

bool obstructed(const Vec3& uav, const Vec2& target, const EnvConfig& config);

// Target is in the field of view and the line of sight is clear.
bool target_observed(const WorldState& state, const EnvConfig& config);

// One environment tick: UAV move, target move, observation memory update.
// Reward bookkeeping (t_nv) is the reward engine's job.
WorldState advance(WorldState state, Action a, const EnvConfig& config);

}  // namespace uavtrack
