#include "uavtrack/sim_core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "uavtrack/errors.hpp"

namespace uavtrack {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what + " violated");
}

bool is_integral(double v) { return std::floor(v) == v; }

double margin(const EnvConfig& c) { return std::floor(c.margin_fraction * c.side_s); }

Vec3 clamp_planar(Vec3 p, const EnvConfig& c) {
    const double m = margin(c);
    p.x = std::clamp(p.x, -m, c.side_s + m);
    p.y = std::clamp(p.y, -m, c.side_s + m);
    return p;
}

Vec2 spawn_point(const EnvConfig& c) {
    if (c.uav_spawn) return *c.uav_spawn;
    const double mid = std::floor(c.side_s / 2.0);
    return {mid, mid};
}

long as_long(double v) { return std::lround(v); }

bool in_square(const Vec2& p, const EnvConfig& c) {
    return p.x >= 0.0 && p.y >= 0.0 && p.x <= c.side_s && p.y <= c.side_s;
}

std::vector<Heading> outgoing(const Vec2& junction, const EnvConfig& c) {
    std::vector<Heading> out;
    for (Heading h : {Heading::north, Heading::south, Heading::west, Heading::east}) {
        const Vec2 u = unit_vector(h);
        const Vec2 next{junction.x + u.x * c.road_spacing, junction.y + u.y * c.road_spacing};
        if (in_square(next, c)) out.push_back(h);
    }
    return out;
}

}  // namespace

std::string_view to_string(Action a) {
    switch (a) {
        case Action::north: return "north";
        case Action::south: return "south";
        case Action::west: return "west";
        case Action::east: return "east";
        case Action::up: return "up";
        case Action::down: return "down";
    }
    return "?";
}

Heading reverse(Heading h) {
    switch (h) {
        case Heading::north: return Heading::south;
        case Heading::south: return Heading::north;
        case Heading::west: return Heading::east;
        case Heading::east: return Heading::west;
    }
    return h;
}

Vec2 unit_vector(Heading h) {
    switch (h) {
        case Heading::north: return {0.0, 1.0};
        case Heading::south: return {0.0, -1.0};
        case Heading::west: return {-1.0, 0.0};
        case Heading::east: return {1.0, 0.0};
    }
    return {};
}

void validate(const EnvConfig& c) {
    require(c.side_s > 0, "side_s > 0");
    require(c.t_max > 0, "t_max > 0");
    require(c.h_min > 0.0, "h_min > 0");
    require(c.h_min < c.h_max, "h_min < h_max");
    require(c.n_h >= 1, "n_h >= 1");
    require(c.theta_fov > 0.0 && c.theta_fov < std::numbers::pi / 2, "0 < theta_fov < pi/2");
    require(c.uav_speed >= 1, "uav_speed >= 1");
    require(c.target_speed >= 1, "target_speed >= 1");
    require(c.target_speed <= c.uav_speed, "target_speed <= uav_speed");
    require(c.road_spacing > 0 && c.road_spacing <= c.side_s, "0 < road_spacing <= side_s");
    require(c.side_s % c.road_spacing == 0, "side_s multiple of road_spacing");
    require(c.road_spacing % c.target_speed == 0, "road_spacing multiple of target_speed");
    require(c.wind.speed >= 0.0, "wind.speed >= 0");
    if (c.wind.mode == WindMode::static_direction) {
        const double n = std::hypot(c.wind.static_dir.x, c.wind.static_dir.y);
        require(std::abs(n - 1.0) < 1e-9, "wind.static_dir unit norm");
    }
    require(c.margin_fraction >= 0.0, "margin_fraction >= 0");
    require(c.n_obstacles >= 0, "n_obstacles >= 0");
    if (!c.obstacles.empty() && static_cast<int>(c.obstacles.size()) != c.n_obstacles) {
        throw ConfigError("obstacle count mismatch: n_obstacles = " + std::to_string(c.n_obstacles) + " but " +
                          std::to_string(c.obstacles.size()) + " obstacle specs given");
    }
    for (const auto& o : c.obstacles) {
        require(o.radius > 0.0, "obstacle radius > 0");
        require(o.height > 0.0, "obstacle height > 0");
        require(in_square(o.center, c), "obstacle center inside [0, side_s]^2");
    }
    if (c.uav_spawn) {
        require(is_integral(c.uav_spawn->x) && is_integral(c.uav_spawn->y), "uav_spawn on grid");
    }
}

std::vector<ObstacleSpec> generate_obstacles(const EnvConfig& c) {
    Rng rng(derive_seed(c.seed, "obstacles"));
    const int blocks = c.side_s / c.road_spacing;
    const double clearance = 1.0;
    const double max_radius = std::min(10.0, c.road_spacing / 2.0 - clearance - 0.5);
    if (max_radius < 0.5) {
        throw ConfigError("road_spacing too small to place obstacles between roads");
    }
    const double min_radius = std::min(2.5, max_radius);
    const Vec2 spawn = spawn_point(c);
    const Vec3 spawn3{spawn.x, spawn.y, c.h_min};

    std::vector<ObstacleSpec> out;
    int attempts = 0;
    while (static_cast<int>(out.size()) < c.n_obstacles) {
        if (++attempts > 10000) throw ConfigError("could not place " + std::to_string(c.n_obstacles) + " obstacles");
        const auto bx = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(blocks)));
        const auto by = static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(blocks)));
        ObstacleSpec o;
        o.radius = uniform_real(rng, min_radius, max_radius);
        o.height = uniform_real(rng, 1.0, 50.0);
        const double lo = o.radius + clearance;
        const double hi = c.road_spacing - o.radius - clearance;
        o.center.x = bx * c.road_spacing + uniform_real(rng, lo, hi);
        o.center.y = by * c.road_spacing + uniform_real(rng, lo, hi);
        if (collision_check(spawn3, o)) continue;
        bool overlaps = false;
        for (const auto& p : out) {
            const double d = std::hypot(p.center.x - o.center.x, p.center.y - o.center.y);
            if (d < p.radius + o.radius + clearance) overlaps = true;
        }
        if (!overlaps) out.push_back(o);
    }
    return out;
}

EnvConfig materialize(EnvConfig config) {
    validate(config);
    if (config.obstacles.empty() && config.n_obstacles > 0) config.obstacles = generate_obstacles(config);
    return config;
}

double altitude_increment(const EnvConfig& c) { return (c.h_max - c.h_min) / c.n_h; }

double altitude_of_level(const EnvConfig& c, int level) {
    if (level >= c.n_h) return c.h_max;
    return c.h_min + level * altitude_increment(c);
}

WorldState reset(const EnvConfig& c, std::uint64_t seed) {
    validate(c);
    if (static_cast<int>(c.obstacles.size()) != c.n_obstacles) {
        throw ConfigError("obstacle layout not materialized (n_obstacles = " + std::to_string(c.n_obstacles) + ")");
    }
    WorldState s;
    s.target_rng.seed(derive_seed(seed, "target"));
    s.wind_rng.seed(derive_seed(seed, "wind"));

    const Vec2 spawn = spawn_point(c);
    s.altitude_level = 0;
    s.uav = {spawn.x, spawn.y, altitude_of_level(c, 0)};

    const auto per_axis = static_cast<std::uint64_t>(c.side_s / c.road_spacing + 1);
    const auto ix = static_cast<double>(uniform_index(s.target_rng, per_axis));
    const auto iy = static_cast<double>(uniform_index(s.target_rng, per_axis));
    s.target = {ix * c.road_spacing, iy * c.road_spacing};
    const auto options = outgoing(s.target, c);
    s.target_heading = choose_heading(options, s.target_rng);

    if (target_observed(s, c)) s.last_seen = s.target;
    return s;
}

Vec3 apply_wind(const Vec3& pos, const WindSpec& wind, Rng& rng) {
    if (wind.mode == WindMode::none || wind.speed == 0.0) return pos;
    double dx = 0.0;
    double dy = 0.0;
    if (wind.mode == WindMode::static_direction) {
        dx = wind.speed * wind.static_dir.x;
        dy = wind.speed * wind.static_dir.y;
    } else {
        const double angle = 2.0 * std::numbers::pi * uniform01(rng);
        const double magnitude = wind.speed * uniform01(rng);
        dx = magnitude * std::cos(angle);
        dy = magnitude * std::sin(angle);
    }
    // Nearest grid displacement whose length stays within the drift magnitude.
    const double limit = wind.speed * (1.0 + 1e-12);
    double best_x = std::trunc(dx);
    double best_y = std::trunc(dy);
    double best_err = std::hypot(dx - best_x, dy - best_y);
    for (double cx : {std::floor(dx), std::ceil(dx)}) {
        for (double cy : {std::floor(dy), std::ceil(dy)}) {
            if (std::hypot(cx, cy) > limit) continue;
            const double err = std::hypot(dx - cx, dy - cy);
            if (err < best_err) {
                best_err = err;
                best_x = cx;
                best_y = cy;
            }
        }
    }
    return {pos.x + best_x, pos.y + best_y, pos.z};
}

Vec3 commanded_position(const Vec3& uav, int level, Action a, const EnvConfig& c) {
    Vec3 moved = uav;
    switch (a) {
        case Action::north: moved.y += c.uav_speed; break;
        case Action::south: moved.y -= c.uav_speed; break;
        case Action::west: moved.x -= c.uav_speed; break;
        case Action::east: moved.x += c.uav_speed; break;
        case Action::up: level = std::min(level + 1, c.n_h); break;
        case Action::down: level = std::max(level - 1, 0); break;
    }
    moved.z = altitude_of_level(c, level);
    return clamp_planar(moved, c);
}

WorldState step_uav(WorldState s, Action a, const EnvConfig& c) {
    s.collided = false;
    const Vec3 old = s.uav;
    int level = s.altitude_level;
    if (a == Action::up) level = std::min(level + 1, c.n_h);
    if (a == Action::down) level = std::max(level - 1, 0);
    const Vec3 moved = commanded_position(old, s.altitude_level, a, c);

    const Vec3 drifted = clamp_planar(apply_wind(moved, c.wind, s.wind_rng), c);
    if (!any_collision(drifted, c.obstacles)) {
        s.uav = drifted;
        s.altitude_level = level;
        return s;
    }
    s.collided = true;
    const Vec3 drift_only = clamp_planar({old.x + (drifted.x - moved.x), old.y + (drifted.y - moved.y), old.z}, c);
    s.uav = any_collision(drift_only, c.obstacles) ? old : drift_only;
    return s;
}

bool on_road(const Vec2& p, const EnvConfig& c) {
    if (!in_square(p, c)) return false;
    return as_long(p.x) % c.road_spacing == 0 || as_long(p.y) % c.road_spacing == 0;
}

bool is_junction(const Vec2& p, const EnvConfig& c) {
    return in_square(p, c) && as_long(p.x) % c.road_spacing == 0 && as_long(p.y) % c.road_spacing == 0;
}

std::vector<Heading> junction_headings(const Vec2& junction, Heading arriving, const EnvConfig& c) {
    auto options = outgoing(junction, c);
    if (options.size() > 1) std::erase(options, reverse(arriving));
    return options;
}

Heading choose_heading(std::span<const Heading> options, Rng& rng) {
    return options[uniform_index(rng, options.size())];
}

WorldState step_target(WorldState s, const EnvConfig& c) {
    if (is_junction(s.target, c)) {
        const auto options = junction_headings(s.target, s.target_heading, c);
        s.target_heading = choose_heading(options, s.target_rng);
    }
    const Vec2 u = unit_vector(s.target_heading);
    s.target.x += u.x * c.target_speed;
    s.target.y += u.y * c.target_speed;
    return s;
}

double fov_diameter(double z, double theta_fov) {
    if (!(theta_fov < std::numbers::pi / 2)) throw DomainError("fov_diameter: theta_fov must be < pi/2");
    if (z < 0.0) throw DomainError("fov_diameter: altitude must be >= 0");
    return 2.0 * z * std::tan(theta_fov);
}

bool visibility(const Vec3& uav, const Vec2& target, double theta_fov, FovShape shape) {
    // Inclusive boundary with a relative slack of 1e-12.
    const double half = fov_diameter(uav.z, theta_fov) / 2.0 * (1.0 + 1e-12) + 1e-12;
    const double dx = std::abs(target.x - uav.x);
    const double dy = std::abs(target.y - uav.y);
    if (shape == FovShape::circle) return dx * dx + dy * dy <= half * half;
    return dx <= half && dy <= half;
}

bool collision_check(const Vec3& uav, const ObstacleSpec& o) {
    const double d = std::hypot(uav.x - o.center.x, uav.y - o.center.y);
    return d <= o.radius && uav.z <= o.height;
}

bool any_collision(const Vec3& uav, std::span<const ObstacleSpec> obstacles) {
    return std::any_of(obstacles.begin(), obstacles.end(), [&](const auto& o) { return collision_check(uav, o); });
}

bool obstruction_closed_form(const Vec3& uav, const Vec2& target, const ObstacleSpec& o) {
    const double dx = target.x - uav.x;
    const double dy = target.y - uav.y;
    if (dx == 0.0) return obstruction_geometric(uav, target, o);
    const double height_term = uav.z * (-o.center.x + uav.x) / dx + uav.z;
    const double line_term = (dx * o.center.y + dy * o.center.x) / std::sqrt(dx * dx + dy * dy);
    return height_term <= o.height && line_term <= o.radius;
}

bool obstruction_geometric(const Vec3& uav, const Vec2& target, const ObstacleSpec& o) {
    // Segment P(t) = D + t (T - D), t in [0, 1], with z(t) = z_D (1 - t).
    // Below the cylinder top: t >= 1 - h / z_D.
    double t_lo = 0.0;
    double t_hi = 1.0;
    if (uav.z > 0.0) t_lo = std::max(t_lo, 1.0 - o.height / uav.z);
    if (t_lo > t_hi) return false;

    // Inside the disk: |A + t B|^2 <= r^2.
    const double ax = uav.x - o.center.x;
    const double ay = uav.y - o.center.y;
    const double bx = target.x - uav.x;
    const double by = target.y - uav.y;
    const double qa = bx * bx + by * by;
    const double qb = 2.0 * (ax * bx + ay * by);
    const double qc = ax * ax + ay * ay - o.radius * o.radius;
    if (qa == 0.0) return qc <= 0.0;
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc < 0.0) return false;
    const double root = std::sqrt(disc);
    const double r1 = (-qb - root) / (2.0 * qa);
    const double r2 = (-qb + root) / (2.0 * qa);
    return std::max(t_lo, r1) <= std::min(t_hi, r2);
}

bool obstructed(const Vec3& uav, const Vec2& target, const EnvConfig& c) {
    for (const auto& o : c.obstacles) {
        const bool hit = c.obstruction == ObstructionModel::closed_form ? obstruction_closed_form(uav, target, o)
                                                                  : obstruction_geometric(uav, target, o);
        if (hit) return true;
    }
    return false;
}

bool target_observed(const WorldState& s, const EnvConfig& c) {
    return visibility(s.uav, s.target, c.theta_fov, c.fov_shape) && !obstructed(s.uav, s.target, c);
}

WorldState advance(WorldState s, Action a, const EnvConfig& c) {
    s = step_uav(std::move(s), a, c);
    s = step_target(std::move(s), c);
    s.t += 1;
    if (target_observed(s, c)) {
        s.last_seen = s.target;
        s.steps_since_seen = 0;
    } else {
        s.steps_since_seen += 1;
    }
    return s;
}

}  // namespace uavtrack
