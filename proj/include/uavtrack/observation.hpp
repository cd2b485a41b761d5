#pragma once

#include <vector>

#include "uavtrack/neural.hpp"
#include "uavtrack/sim_core.hpp"

namespace uavtrack {

enum class EncodingMode : std::uint8_t { grid, vector };

struct ObservationConfig {
    EncodingMode mode = EncodingMode::grid;
    // Grid mode: square crop centred on the UAV, `cell` grid units per pixel.
    int crop = 21;
    double cell = 1.0;
    // Per-step decay of the last-seen target marker.
    double staleness_decay = 0.95;

    friend bool operator==(const ObservationConfig&, const ObservationConfig&) = default;
};

inline constexpr std::size_t kGridChannels = 4;
inline constexpr std::size_t kVectorFeatures = 14;

Shape observation_shape(const ObservationConfig& oc);

// Pure function of the world state. Grid channels: altitude plane, last-seen
// target marker (clamped to the crop border when outside), obstacle
// footprint scaled by height, road mask (-1 outside the square).
// Vector mode: UAV position, last-seen target position, target offset
// (coarse and fine), staleness, t_nv, nearest-obstacle offset, clearance;
// each in [-1, 1].
std::vector<float> encode(const WorldState& world, const EnvConfig& config, const ObservationConfig& oc);

}  // namespace uavtrack
