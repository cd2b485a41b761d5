#include "uavtrack/observation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "uavtrack/errors.hpp"

namespace uavtrack {

namespace {

float clip1(double v) { return static_cast<float>(std::clamp(v, -1.0, 1.0)); }

double staleness(const WorldState& w, const ObservationConfig& oc) {
    if (!w.last_seen) return 0.0;
    return std::pow(oc.staleness_decay, w.steps_since_seen);
}

std::vector<float> encode_vector(const WorldState& w, const EnvConfig& c, const ObservationConfig& oc) {
    const double half = c.side_s / 2.0;
    const double span = half + std::floor(c.margin_fraction * c.side_s);
    std::vector<float> f(kVectorFeatures, 0.0f);
    f[0] = clip1((w.uav.x - half) / span);
    f[1] = clip1((w.uav.y - half) / span);
    f[2] = clip1(2.0 * (w.uav.z - c.h_min) / (c.h_max - c.h_min) - 1.0);
    if (w.last_seen) {
        const double dx = w.last_seen->x - w.uav.x;
        const double dy = w.last_seen->y - w.uav.y;
        f[3] = clip1((w.last_seen->x - half) / half);
        f[4] = clip1((w.last_seen->y - half) / half);
        f[5] = clip1(dx / half);
        f[6] = clip1(dy / half);
        f[7] = static_cast<float>(std::tanh(dx / 3.0));
        f[8] = static_cast<float>(std::tanh(dy / 3.0));
    }
    f[9] = static_cast<float>(2.0 * staleness(w, oc) - 1.0);
    f[10] = clip1(std::min(w.t_nv, 20) / 10.0 - 1.0);

    const ObstacleSpec* nearest = nullptr;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& o : c.obstacles) {
        const double d = std::hypot(o.center.x - w.uav.x, o.center.y - w.uav.y) - o.radius;
        if (d < best) {
            best = d;
            nearest = &o;
        }
    }
    if (nearest) {
        const double dx = nearest->center.x - w.uav.x;
        const double dy = nearest->center.y - w.uav.y;
        const double reach = std::max(1.0, nearest->radius + 3.0);
        f[11] = clip1(dx / reach);
        f[12] = clip1(dy / reach);
        // > 0 when the UAV is above the obstacle top.
        f[13] = clip1((w.uav.z - nearest->height) / (c.h_max - c.h_min));
    }
    return f;
}

std::vector<float> encode_grid(const WorldState& w, const EnvConfig& c, const ObservationConfig& oc) {
    const auto n = static_cast<std::size_t>(oc.crop);
    const std::size_t plane = n * n;
    std::vector<float> g(kGridChannels * plane, 0.0f);
    const int centre = oc.crop / 2;
    auto world_of = [&](int row, int col) {
        return Vec2{w.uav.x + (col - centre) * oc.cell, w.uav.y + (row - centre) * oc.cell};
    };

    const auto altitude = static_cast<float>((w.uav.z - c.h_min) / (c.h_max - c.h_min));
    std::fill(g.begin(), g.begin() + static_cast<long>(plane), altitude);

    if (w.last_seen) {
        const double fx = (w.last_seen->x - w.uav.x) / oc.cell + centre;
        const double fy = (w.last_seen->y - w.uav.y) / oc.cell + centre;
        const auto col = static_cast<std::size_t>(std::clamp<long>(std::lround(fx), 0, oc.crop - 1));
        const auto row = static_cast<std::size_t>(std::clamp<long>(std::lround(fy), 0, oc.crop - 1));
        g[plane + row * n + col] = static_cast<float>(staleness(w, oc));
    }

    for (int row = 0; row < oc.crop; ++row) {
        for (int col = 0; col < oc.crop; ++col) {
            const Vec2 p = world_of(row, col);
            const std::size_t idx = static_cast<std::size_t>(row) * n + static_cast<std::size_t>(col);
            for (const auto& o : c.obstacles) {
                if (std::hypot(p.x - o.center.x, p.y - o.center.y) <= o.radius) {
                    g[2 * plane + idx] = std::max(g[2 * plane + idx], static_cast<float>(std::min(1.0, o.height / c.h_max)));
                }
            }
            const Vec2 snapped{std::round(p.x), std::round(p.y)};
            const bool inside = p.x >= 0 && p.y >= 0 && p.x <= c.side_s && p.y <= c.side_s;
            g[3 * plane + idx] = !inside ? -1.0f : (on_road(snapped, c) ? 1.0f : 0.0f);
        }
    }
    return g;
}

}  // namespace

Shape observation_shape(const ObservationConfig& oc) {
    if (oc.mode == EncodingMode::vector) return {kVectorFeatures};
    if (oc.crop < 3 || oc.crop % 2 == 0) throw ConfigError("grid crop odd and >= 3 violated");
    return {kGridChannels, static_cast<std::size_t>(oc.crop), static_cast<std::size_t>(oc.crop)};
}

std::vector<float> encode(const WorldState& world, const EnvConfig& config, const ObservationConfig& oc) {
    if (oc.mode == EncodingMode::vector) return encode_vector(world, config, oc);
    observation_shape(oc);
    return encode_grid(world, config, oc);
}

}  // namespace uavtrack
