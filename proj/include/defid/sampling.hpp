#pragma once

#include <cmath>
#include <cstdint>

#include "defid/errors.hpp"
#include "defid/rng.hpp"
#include "defid/sim.hpp"

namespace defid {

// Vertical rope hangs downward from the anchor (the gripped-end center);
// along_x lays it on the +x axis for scenarios that lift it off the floor.
enum class RopeAxis { down, along_x };

struct RopeGeometry {
    double length = 0.35;
    double radius = 0.012;
    double particle_spacing = 0.0043;  // ~2,000 particles at the defaults
    Vec3 anchor{0.5, 0.85, 0.5};
    RopeAxis axis = RopeAxis::down;
    double jitter = 0.25;  // fraction of the spacing
    double density = 1.0;
};

struct ClothGeometry {
    double side = 0.2;
    double thickness = 0.008;
    double particle_spacing = 0.0045;  // ~4,000 particles at the defaults
    Vec3 anchor{0.5, 0.5, 0.5};        // sheet-center position, sheet in the x-z plane
    double jitter = 0.25;
    double density = 1.0;
};

namespace detail {

inline void check_inside_world(const Vec3& p) {
    if (p.x < 0.0 || p.x > 1.0 || p.y < 0.0 || p.y > 1.0 || p.z < 0.0 || p.z > 1.0)
        throw ConfigError("sampling: geometry extends outside the unit-cube world");
}

}  // namespace detail

// Jittered lattice fill of a cylinder. Particles within 1.5 spacings of the
// anchor end are tagged grip, of the far end tip.
inline SimState sample_rope(const RopeGeometry& g, std::uint64_t seed) {
    const double s = g.particle_spacing;
    if (2.0 * g.radius / s < 4.0 - 1e-9)
        throw ConfigError("sample_rope: spacing too coarse, need >= 4 particles across the "
                          "diameter");
    if (g.length < 4.0 * s) throw ConfigError("sample_rope: rope too short for spacing");

    Rng rng(seed);
    SimState state;
    const double mass = g.density * s * s * s;
    const int n_axial = static_cast<int>(std::floor(g.length / s));
    const int n_rad = static_cast<int>(std::floor(g.radius / s)) + 1;

    for (int ia = 0; ia < n_axial; ++ia) {
        const double a = (ia + 0.5) * s;
        for (int iu = -n_rad; iu <= n_rad; ++iu)
            for (int iv = -n_rad; iv <= n_rad; ++iv) {
                const double u = (iu + 0.5) * s;
                const double v = (iv + 0.5) * s;
                if (u * u + v * v > g.radius * g.radius) continue;
                double ja = a + rng.uniform(-g.jitter * s, g.jitter * s);
                double ju = u + rng.uniform(-g.jitter * s, g.jitter * s);
                double jv = v + rng.uniform(-g.jitter * s, g.jitter * s);
                // Project jittered points back into the cylinder.
                ja = std::clamp(ja, 0.0, g.length);
                const double rr = std::sqrt(ju * ju + jv * jv);
                if (rr > g.radius) {
                    ju *= g.radius / rr;
                    jv *= g.radius / rr;
                }
                ParticleT<double> p;
                if (g.axis == RopeAxis::down)
                    p.x = g.anchor + Vec3{ju, -ja, jv};
                else
                    p.x = g.anchor + Vec3{ja, ju, jv};
                detail::check_inside_world(p.x);
                p.mass = mass;
                p.rest_volume = s * s * s;
                if (a < 1.5 * s)
                    p.tag = ParticleTag::grip;
                else if (a > g.length - 1.5 * s)
                    p.tag = ParticleTag::tip;
                state.particles.push_back(p);
            }
    }
    if (state.particles.empty()) throw ConfigError("sample_rope: no particles generated");
    return state;
}

// Thin sheet in the x-z plane. Center band tagged center, corner
// neighborhoods tagged corner.
inline SimState sample_cloth(const ClothGeometry& g, std::uint64_t seed) {
    const double s = g.particle_spacing;
    if (g.side / s < 8.0) throw ConfigError("sample_cloth: spacing too coarse for side");

    Rng rng(seed);
    SimState state;
    const double mass = g.density * s * s * s;
    const int n_side = static_cast<int>(std::floor(g.side / s));
    const int n_layers = std::max(1, static_cast<int>(std::lround(g.thickness / s)));
    const double half = 0.5 * g.side;

    for (int iy = 0; iy < n_layers; ++iy)
        for (int ix = 0; ix < n_side; ++ix)
            for (int iz = 0; iz < n_side; ++iz) {
                const double px = (ix + 0.5) * s - half;
                const double pz = (iz + 0.5) * s - half;
                const double py = (iy - 0.5 * (n_layers - 1)) * s;
                Vec3 local{px + rng.uniform(-g.jitter * s, g.jitter * s),
                           py + rng.uniform(-g.jitter * s, g.jitter * s),
                           pz + rng.uniform(-g.jitter * s, g.jitter * s)};
                local.x = std::clamp(local.x, -half, half);
                local.z = std::clamp(local.z, -half, half);
                ParticleT<double> p;
                p.x = g.anchor + local;
                detail::check_inside_world(p.x);
                p.mass = mass;
                p.rest_volume = s * s * s;
                // One liftable corner (+x, +z); the center band is the
                // spreading-task grip.
                const double corner_d = std::hypot(half - px, half - pz);
                if (std::hypot(px, pz) < 1.5 * s)
                    p.tag = ParticleTag::center;
                else if (corner_d < 1.5 * s)
                    p.tag = ParticleTag::corner;
                state.particles.push_back(p);
            }
    if (state.particles.empty()) throw ConfigError("sample_cloth: no particles generated");
    return state;
}

}  // namespace defid
