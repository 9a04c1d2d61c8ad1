#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "defid/errors.hpp"
#include "defid/linalg.hpp"

namespace defid {

enum class ParticleTag : std::uint8_t { body, tip, center, corner, grip };

enum class GripperMode { position_track, impulse };

// Kinematic gripper. position_track moves pinned particles along piecewise-
// linear waypoints at the segment's constant velocity and holds after the
// last waypoint. impulse assigns the action vector as the pinned velocity for
// one frame starting at impulse_time, then holds the anchor in place.
// release_time (if set) unpins everything from that moment on.
//
// Besides overwriting pinned-particle velocities, grid nodes within
// anchor_radius of the gripper point are clamped to the gripper velocity
// while anything is pinned. A thin pinned band alone cannot hold a rope on a
// coarse grid (surrounding body mass outvotes it on shared nodes and the
// material tears off); the clamp zone is kinematic, so it stays independent
// of the material parameters and keeps the rollout differentiable.
struct GripperPath {
    GripperMode mode = GripperMode::position_track;
    std::vector<std::pair<double, Vec3>> waypoints;
    std::vector<ParticleTag> pinned_tags;
    std::optional<double> release_time;
    Vec3 impulse_velocity{0, 0, 0};
    double impulse_time = 0.0;
    Vec3 anchor{0, 0, 0};
    double anchor_radius = -1.0;  // <0: auto (1.25 grid cells), 0: disabled

    static GripperPath none() { return {}; }

    static GripperPath hold(std::vector<ParticleTag> tags, const Vec3& anchor_point = {}) {
        GripperPath g;
        g.pinned_tags = std::move(tags);
        g.anchor = anchor_point;
        return g;
    }

    bool pins(ParticleTag tag, double t) const {
        if (release_time && t >= *release_time) return false;
        for (ParticleTag p : pinned_tags)
            if (p == tag) return true;
        return false;
    }

    Vec3 velocity_at(double t, double frame_dt) const {
        if (mode == GripperMode::impulse) {
            if (t >= impulse_time && t < impulse_time + frame_dt) return impulse_velocity;
            return {0, 0, 0};
        }
        if (waypoints.size() < 2) return {0, 0, 0};
        for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
            if (t >= waypoints[i].first && t < waypoints[i + 1].first) {
                const double span = waypoints[i + 1].first - waypoints[i].first;
                const Vec3 d = waypoints[i + 1].second - waypoints[i].second;
                return d * (1.0 / span);
            }
        }
        return {0, 0, 0};
    }

    Vec3 position_at(double t, double frame_dt) const {
        if (mode == GripperMode::impulse) {
            const double moved = std::clamp(t - impulse_time, 0.0, frame_dt);
            return anchor + impulse_velocity * moved;
        }
        if (waypoints.empty()) return anchor;
        if (t <= waypoints.front().first) return waypoints.front().second;
        for (std::size_t i = 0; i + 1 < waypoints.size(); ++i) {
            if (t < waypoints[i + 1].first) {
                const double span = waypoints[i + 1].first - waypoints[i].first;
                const double a = (t - waypoints[i].first) / span;
                return waypoints[i].second * (1.0 - a) + waypoints[i + 1].second * a;
            }
        }
        return waypoints.back().second;
    }

    bool active_at(double t) const {
        if (pinned_tags.empty()) return false;
        return !release_time || t < *release_time;
    }

    void validate(double horizon_end) const {
        for (std::size_t i = 0; i + 1 < waypoints.size(); ++i)
            if (!(waypoints[i].first < waypoints[i + 1].first))
                throw ConfigError("gripper: waypoint times must be strictly increasing");
        if (release_time && (*release_time < 0.0 || *release_time > horizon_end))
            throw ConfigError("gripper: release_time outside simulated horizon");
    }
};

}  // namespace defid
