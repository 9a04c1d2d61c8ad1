#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "defid/errors.hpp"
#include "defid/gripper.hpp"
#include "defid/material.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace defid {

// Grid nodes inside this band of the unit cube get boundary conditions.
inline constexpr int kBorderCells = 3;

enum class BoundaryKind { sticky, separate };

struct SimConfig {
    int grid_resolution = 64;
    double substep_dt = 1e-4;
    double frame_dt = 1e-2;
    Vec3 gravity{0.0, -9.8, 0.0};
    BoundaryKind boundary = BoundaryKind::separate;
    double damping = 0.0;  // per-substep velocity scale is (1 - damping)

    double dx() const { return 1.0 / grid_resolution; }

    int substeps_per_frame() const {
        const int k = static_cast<int>(std::lround(frame_dt / substep_dt));
        if (k < 1 || std::abs(frame_dt - k * substep_dt) > 1e-9 * frame_dt)
            throw ConfigError("sim: substep_dt must divide frame_dt");
        return k;
    }

    // Elastic CFL-style bound with safety factor 0.3.
    static double max_stable_substep(int grid_resolution, double e_max, double rho) {
        return 0.3 / (grid_resolution * std::sqrt(e_max / rho));
    }

    void validate(double e_max, double rho = 1.0) const {
        if (grid_resolution < 8) throw ConfigError("sim: grid_resolution must be >= 8");
        if (!(substep_dt > 0.0) || !(frame_dt > 0.0))
            throw ConfigError("sim: time steps must be positive");
        if (damping < 0.0 || damping >= 1.0)
            throw ConfigError("sim: damping must lie in [0, 1)");
        substeps_per_frame();
        const double bound = max_stable_substep(grid_resolution, e_max, rho);
        if (substep_dt > bound * (1.0 + 1e-12))
            throw ConfigError("sim: substep_dt " + std::to_string(substep_dt) +
                              " violates stability bound " + std::to_string(bound) +
                              " at E_max " + std::to_string(e_max));
    }

    // Largest substep_dt of the form frame_dt / k that satisfies the bound.
    SimConfig with_stable_dt(double e_max, double rho = 1.0) const {
        SimConfig c = *this;
        const double bound = max_stable_substep(grid_resolution, e_max, rho);
        const int k = std::max(1, static_cast<int>(std::ceil(frame_dt / bound - 1e-12)));
        c.substep_dt = frame_dt / k;
        return c;
    }
};

template <class S>
struct ParticleT {
    Vec3T<S> x, v;
    Mat3T<S> F = Mat3T<S>::identity();
    Mat3T<S> C;
    double mass = 0.0;
    double rest_volume = 0.0;
    ParticleTag tag = ParticleTag::body;
    bool pinned = false;
};

template <class S>
struct SimStateT {
    std::vector<ParticleT<S>> particles;
    double time = 0.0;
};

using SimState = SimStateT<double>;

template <class S>
inline SimStateT<S> to_state(const SimState& in) {
    if constexpr (std::is_same_v<S, double>) {
        return in;
    } else {
        SimStateT<S> out;
        out.time = in.time;
        out.particles.reserve(in.particles.size());
        for (const auto& p : in.particles) {
            ParticleT<S> q;
            q.x = {S(p.x.x), S(p.x.y), S(p.x.z)};
            q.v = {S(p.v.x), S(p.v.y), S(p.v.z)};
            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    q.F.m[i][j] = S(p.F.m[i][j]);
                    q.C.m[i][j] = S(p.C.m[i][j]);
                }
            q.mass = p.mass;
            q.rest_volume = p.rest_volume;
            q.tag = p.tag;
            q.pinned = p.pinned;
            out.particles.push_back(q);
        }
        return out;
    }
}

template <class S>
inline double total_mass(const SimStateT<S>& s) {
    double m = 0.0;
    for (const auto& p : s.particles) m += p.mass;
    return m;
}

template <class S>
struct FrameT {
    double time = 0.0;
    std::vector<Vec3T<S>> positions;
};

template <class S>
struct TrajectoryT {
    std::vector<FrameT<S>> frames;
    std::vector<ParticleTag> tags;

    // Centroid of all particles carrying `tag` in the given frame.
    Vec3T<S> tag_centroid(std::size_t frame, ParticleTag tag) const {
        Vec3T<S> sum{};
        int count = 0;
        const auto& xs = frames[frame].positions;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (tags[i] == tag) {
                sum += xs[i];
                ++count;
            }
        }
        if (count == 0) throw ConfigError("trajectory: no particles with requested tag");
        return sum * (S(1.0 / count));
    }
};

using Trajectory = TrajectoryT<double>;

// Scatter grids. The parallel path gives each thread a private buffer over
// the active node box and reduces them in thread order, so results are
// deterministic for a fixed thread count.
template <class S>
struct MpmWorkspace {
    int lo[3] = {0, 0, 0};
    int size[3] = {0, 0, 0};
    std::vector<S> mass;
    std::vector<Vec3T<S>> vel;  // momentum during P2G, velocity afterwards
    std::vector<std::vector<S>> thread_mass;
    std::vector<std::vector<Vec3T<S>>> thread_vel;

    std::size_t node_count() const {
        return static_cast<std::size_t>(size[0]) * size[1] * size[2];
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i - lo[0]) * size[1] + (j - lo[1])) * size[2] +
               (k - lo[2]);
    }
};

namespace mpm {

template <class S>
inline void quadratic_weights(const Vec3T<S>& fx, Vec3T<S> w[3]) {
    const Vec3T<S> a{S(1.5) - fx.x, S(1.5) - fx.y, S(1.5) - fx.z};
    const Vec3T<S> b{fx.x - S(1), fx.y - S(1), fx.z - S(1)};
    const Vec3T<S> c{fx.x - S(0.5), fx.y - S(0.5), fx.z - S(0.5)};
    w[0] = {S(0.5) * a.x * a.x, S(0.5) * a.y * a.y, S(0.5) * a.z * a.z};
    w[1] = {S(0.75) - b.x * b.x, S(0.75) - b.y * b.y, S(0.75) - b.z * b.z};
    w[2] = {S(0.5) * c.x * c.x, S(0.5) * c.y * c.y, S(0.5) * c.z * c.z};
}

// Active node range: every node touched by the quadratic stencil plus one
// node of padding, clipped to the grid.
template <class S>
inline void compute_active_box(const SimStateT<S>& state, const SimConfig& cfg,
                               MpmWorkspace<S>& ws) {
    const double inv_dx = cfg.grid_resolution;
    double mn[3] = {1.0, 1.0, 1.0}, mx[3] = {0.0, 0.0, 0.0};
    for (const auto& p : state.particles) {
        const double c[3] = {value_of(p.x.x), value_of(p.x.y), value_of(p.x.z)};
        for (int a = 0; a < 3; ++a) {
            mn[a] = std::min(mn[a], c[a]);
            mx[a] = std::max(mx[a], c[a]);
        }
    }
    for (int a = 0; a < 3; ++a) {
        int lo = static_cast<int>(std::floor(mn[a] * inv_dx - 0.5)) - 1;
        int hi = static_cast<int>(std::floor(mx[a] * inv_dx - 0.5)) + 4;
        lo = std::clamp(lo, 0, cfg.grid_resolution);
        hi = std::clamp(hi, lo + 1, cfg.grid_resolution + 1);
        ws.lo[a] = lo;
        ws.size[a] = hi - lo;
    }
}

// Pin bookkeeping: overwrite pinned particle velocity from the gripper (or
// impulse) before P2G so the grid sees the kinematic motion.
template <class S>
inline void apply_gripper(SimStateT<S>& state, const SimConfig& cfg, const GripperPath& grip) {
    const Vec3 gv = grip.velocity_at(state.time, cfg.frame_dt);
    for (auto& p : state.particles) {
        p.pinned = grip.pins(p.tag, state.time);
        if (p.pinned) {
            p.v = {S(gv.x), S(gv.y), S(gv.z)};
            p.C = Mat3T<S>{};
        }
    }
}

template <class S>
inline void p2g(const SimStateT<S>& state, const SimConfig& cfg, const Lame<S>& lame,
                MpmWorkspace<S>& ws) {
    const double inv_dx = cfg.grid_resolution;
    const double dxl = cfg.dx();
    const double dt = cfg.substep_dt;
    const std::size_t nodes = ws.node_count();
    const std::size_t np = state.particles.size();
    std::atomic<long> inverted{-1};

#ifdef _OPENMP
    const int max_threads = omp_get_max_threads();
#else
    const int max_threads = 1;
#endif
    if (static_cast<int>(ws.thread_mass.size()) < max_threads) {
        ws.thread_mass.resize(max_threads);
        ws.thread_vel.resize(max_threads);
    }

#ifdef _OPENMP
#pragma omp parallel
#endif
    {
#ifdef _OPENMP
        const int nt = omp_get_num_threads();
        const int tid = omp_get_thread_num();
#else
        const int nt = 1;
        const int tid = 0;
#endif
        auto& gm = ws.thread_mass[tid];
        auto& gv = ws.thread_vel[tid];
        gm.assign(nodes, S(0));
        gv.assign(nodes, Vec3T<S>{});

        const std::size_t chunk = (np + nt - 1) / nt;
        const std::size_t begin = std::min(np, chunk * tid);
        const std::size_t end = std::min(np, begin + chunk);
        for (std::size_t pi = begin; pi < end; ++pi) {
            const auto& p = state.particles[pi];
            S det_f = determinant(p.F);
            if (!(value_of(det_f) > 0.0)) {
                long expect = -1;
                inverted.compare_exchange_strong(expect, static_cast<long>(pi));
                continue;
            }
            const Vec3T<S> pos = p.x * S(inv_dx);
            const int base[3] = {static_cast<int>(std::floor(value_of(pos.x) - 0.5)),
                                 static_cast<int>(std::floor(value_of(pos.y) - 0.5)),
                                 static_cast<int>(std::floor(value_of(pos.z) - 0.5))};
            const Vec3T<S> fx = pos - Vec3T<S>{S(base[0]), S(base[1]), S(base[2])};
            Vec3T<S> w[3];
            quadratic_weights(fx, w);
            S dposx[3], dposy[3], dposz[3];
            for (int i = 0; i < 3; ++i) {
                dposx[i] = (S(i) - fx.x) * S(dxl);
                dposy[i] = (S(i) - fx.y) * S(dxl);
                dposz[i] = (S(i) - fx.z) * S(dxl);
            }

            const Mat3T<S> stress = corotated_stress(p.F, lame.mu, lame.lambda);
            Mat3T<S> affine =
                (stress * transposed(p.F)) * S(-4.0 * inv_dx * inv_dx * dt * p.rest_volume);
            affine += p.C * S(p.mass);
            const Vec3T<S> mv = p.v * S(p.mass);

            for (int i = 0; i < 3; ++i)
                for (int j = 0; j < 3; ++j) {
                    const S wxy = w[i].x * w[j].y;
                    const Vec3T<S> axy{affine.m[0][0] * dposx[i] + affine.m[0][1] * dposy[j],
                                       affine.m[1][0] * dposx[i] + affine.m[1][1] * dposy[j],
                                       affine.m[2][0] * dposx[i] + affine.m[2][1] * dposy[j]};
                    const std::size_t row = ws.index(base[0] + i, base[1] + j, base[2]);
                    for (int k = 0; k < 3; ++k) {
                        const S weight = wxy * w[k].z;
                        const Vec3T<S> contrib{
                            mv.x + axy.x + affine.m[0][2] * dposz[k],
                            mv.y + axy.y + affine.m[1][2] * dposz[k],
                            mv.z + axy.z + affine.m[2][2] * dposz[k]};
                        gm[row + k] += weight * S(p.mass);
                        gv[row + k] += contrib * weight;
                    }
                }
        }

#ifdef _OPENMP
#pragma omp barrier
#pragma omp for schedule(static)
#endif
        for (std::ptrdiff_t n = 0; n < static_cast<std::ptrdiff_t>(nodes); ++n) {
            S m = ws.thread_mass[0][n];
            Vec3T<S> mom = ws.thread_vel[0][n];
            for (int t = 1; t < nt; ++t) {
                m += ws.thread_mass[t][n];
                mom += ws.thread_vel[t][n];
            }
            ws.mass[n] = m;
            ws.vel[n] = mom;
        }
    }

    if (inverted.load() >= 0)
        throw InvertedElementError("p2g: inverted element (det(F) <= 0) at particle " +
                                       std::to_string(inverted.load()),
                                   inverted.load());
}

// Momentum -> velocity, gravity, gripper clamp zone, border conditions.
template <class S>
inline void grid_update(const SimConfig& cfg, MpmWorkspace<S>& ws, const GripperPath& grip,
                        double time) {
    const double dt = cfg.substep_dt;
    const int n = cfg.grid_resolution;
    const double dxl = cfg.dx();
    const Vec3 g = cfg.gravity;
    const bool sticky = cfg.boundary == BoundaryKind::sticky;

    const bool clamp_zone = grip.active_at(time) && grip.anchor_radius != 0.0;
    const double radius = grip.anchor_radius > 0.0 ? grip.anchor_radius : 1.25 * dxl;
    const Vec3 center = clamp_zone ? grip.position_at(time, cfg.frame_dt) : Vec3{};
    const Vec3 gv = clamp_zone ? grip.velocity_at(time, cfg.frame_dt) : Vec3{};

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = ws.lo[0]; i < ws.lo[0] + ws.size[0]; ++i) {
        for (int j = ws.lo[1]; j < ws.lo[1] + ws.size[1]; ++j)
            for (int k = ws.lo[2]; k < ws.lo[2] + ws.size[2]; ++k) {
                const std::size_t idx = ws.index(i, j, k);
                const S m = ws.mass[idx];
                if (!(value_of(m) > 0.0)) continue;
                Vec3T<S> v = ws.vel[idx] * (S(1) / m);
                v.x += S(dt * g.x);
                v.y += S(dt * g.y);
                v.z += S(dt * g.z);
                if (clamp_zone) {
                    const double nx = i * dxl - center.x;
                    const double ny = j * dxl - center.y;
                    const double nz = k * dxl - center.z;
                    if (nx * nx + ny * ny + nz * nz <= radius * radius)
                        v = {S(gv.x), S(gv.y), S(gv.z)};
                }
                const int node[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (node[a] < kBorderCells) {
                        if (sticky)
                            v = Vec3T<S>{};
                        else if (value_of(v[a]) < 0.0)
                            v[a] = S(0);
                    } else if (node[a] > n - kBorderCells) {
                        if (sticky)
                            v = Vec3T<S>{};
                        else if (value_of(v[a]) > 0.0)
                            v[a] = S(0);
                    }
                }
                ws.vel[idx] = v;
            }
    }
}

template <class S>
inline void g2p(SimStateT<S>& state, const SimConfig& cfg, MpmWorkspace<S>& ws,
                bool* finite_ok) {
    const double inv_dx = cfg.grid_resolution;
    const double dxl = cfg.dx();
    const double dt = cfg.substep_dt;
    const S damp = S(1.0 - cfg.damping);
    const double xmin = cfg.dx();
    const double xmax = 1.0 - cfg.dx();
    std::atomic<bool> ok{true};

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t pi = 0; pi < static_cast<std::ptrdiff_t>(state.particles.size());
         ++pi) {
        auto& p = state.particles[pi];
        using std::clamp;
        using defid::clamp;
        if (p.pinned) {
            // Kinematic: position integrates the gripper velocity set pre-P2G.
            p.x += p.v * S(dt);
            p.x.x = clamp(p.x.x, S(xmin), S(xmax));
            p.x.y = clamp(p.x.y, S(xmin), S(xmax));
            p.x.z = clamp(p.x.z, S(xmin), S(xmax));
            continue;
        }
        const Vec3T<S> pos = p.x * S(inv_dx);
        const int base[3] = {static_cast<int>(std::floor(value_of(pos.x) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.y) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.z) - 0.5))};
        const Vec3T<S> fx = pos - Vec3T<S>{S(base[0]), S(base[1]), S(base[2])};
        Vec3T<S> w[3];
        quadratic_weights(fx, w);
        S dposx[3], dposy[3], dposz[3];
        for (int i = 0; i < 3; ++i) {
            dposx[i] = (S(i) - fx.x) * S(dxl);
            dposy[i] = (S(i) - fx.y) * S(dxl);
            dposz[i] = (S(i) - fx.z) * S(dxl);
        }

        Vec3T<S> v_new{};
        Mat3T<S> b{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const S wxy = w[i].x * w[j].y;
                const std::size_t row = ws.index(base[0] + i, base[1] + j, base[2]);
                Vec3T<S> sk{}, skz{};
                for (int k = 0; k < 3; ++k) {
                    const Vec3T<S> wv = ws.vel[row + k] * (wxy * w[k].z);
                    sk += wv;
                    skz += wv * dposz[k];
                }
                v_new += sk;
                for (int a = 0; a < 3; ++a) {
                    b.m[a][0] += sk[a] * dposx[i];
                    b.m[a][1] += sk[a] * dposy[j];
                    b.m[a][2] += skz[a];
                }
            }
        p.v = v_new * damp;
        p.C = b * S(4.0 * inv_dx * inv_dx);
        p.x += p.v * S(dt);
        p.x.x = clamp(p.x.x, S(xmin), S(xmax));
        p.x.y = clamp(p.x.y, S(xmin), S(xmax));
        p.x.z = clamp(p.x.z, S(xmin), S(xmax));
        p.F = (Mat3T<S>::identity() + p.C * S(dt)) * p.F;
        if (!all_finite(p.x) || !all_finite(p.v)) ok.store(false, std::memory_order_relaxed);
    }
    if (finite_ok) *finite_ok = ok.load();
}

template <class S>
inline void substep(SimStateT<S>& state, const SimConfig& cfg, const Lame<S>& lame,
                    const GripperPath& grip, MpmWorkspace<S>& ws, long substep_index) {
    apply_gripper(state, cfg, grip);
    compute_active_box(state, cfg, ws);
    // The P2G reduction overwrites every node in the box, so a resize without
    // clearing is enough here.
    const std::size_t nodes = ws.node_count();
    ws.mass.resize(nodes);
    ws.vel.resize(nodes);
    try {
        p2g(state, cfg, lame, ws);
    } catch (const InvertedElementError& e) {
        throw InvertedElementError(std::string(e.what()) + " at substep " +
                                       std::to_string(substep_index),
                                   e.particle_index);
    }
    grid_update(cfg, ws, grip, state.time);
    bool finite_ok = true;
    g2p(state, cfg, ws, &finite_ok);
    state.time += cfg.substep_dt;
    if (!finite_ok)
        throw SimError("simulation diverged (non-finite state) at substep " +
                           std::to_string(substep_index),
                       substep_index);
}

// Straight-line single-threaded textbook step over the full dense grid. Kept
// as the reference the optimized kernels are tested and benchmarked against.
template <class S>
inline void substep_reference(SimStateT<S>& state, const SimConfig& cfg, const Lame<S>& lame,
                              const GripperPath& grip) {
    const int n = cfg.grid_resolution;
    const double inv_dx = n;
    const double dxl = cfg.dx();
    const double dt = cfg.substep_dt;
    const std::size_t nodes = static_cast<std::size_t>(n + 1) * (n + 1) * (n + 1);
    std::vector<S> gm(nodes, S(0));
    std::vector<Vec3T<S>> gv(nodes, Vec3T<S>{});
    auto at = [n](int i, int j, int k) {
        return (static_cast<std::size_t>(i) * (n + 1) + j) * (n + 1) + k;
    };

    apply_gripper(state, cfg, grip);

    for (std::size_t pi = 0; pi < state.particles.size(); ++pi) {
        const auto& p = state.particles[pi];
        if (!(value_of(determinant(p.F)) > 0.0))
            throw InvertedElementError("substep_reference: inverted element at particle " +
                                           std::to_string(pi),
                                       static_cast<long>(pi));
        const Vec3T<S> pos = p.x * S(inv_dx);
        const int base[3] = {static_cast<int>(std::floor(value_of(pos.x) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.y) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.z) - 0.5))};
        const Vec3T<S> fx = pos - Vec3T<S>{S(base[0]), S(base[1]), S(base[2])};
        Vec3T<S> w[3];
        quadratic_weights(fx, w);
        const Mat3T<S> stress = corotated_stress(p.F, lame.mu, lame.lambda);
        Mat3T<S> affine =
            (stress * transposed(p.F)) * S(-4.0 * inv_dx * inv_dx * dt * p.rest_volume);
        affine += p.C * S(p.mass);
        const Vec3T<S> mv = p.v * S(p.mass);
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                    const Vec3T<S> dpos = (Vec3T<S>{S(i), S(j), S(k)} - fx) * S(dxl);
                    const S weight = w[i].x * w[j].y * w[k].z;
                    gm[at(base[0] + i, base[1] + j, base[2] + k)] += weight * S(p.mass);
                    gv[at(base[0] + i, base[1] + j, base[2] + k)] +=
                        (mv + affine * dpos) * weight;
                }
    }

    const bool sticky = cfg.boundary == BoundaryKind::sticky;
    const bool clamp_zone = grip.active_at(state.time) && grip.anchor_radius != 0.0;
    const double radius = grip.anchor_radius > 0.0 ? grip.anchor_radius : 1.25 * dxl;
    const Vec3 center = clamp_zone ? grip.position_at(state.time, cfg.frame_dt) : Vec3{};
    const Vec3 gvel = clamp_zone ? grip.velocity_at(state.time, cfg.frame_dt) : Vec3{};
    for (int i = 0; i <= n; ++i)
        for (int j = 0; j <= n; ++j)
            for (int k = 0; k <= n; ++k) {
                const std::size_t idx = at(i, j, k);
                if (!(value_of(gm[idx]) > 0.0)) continue;
                Vec3T<S> v = gv[idx] * (S(1) / gm[idx]);
                v.x += S(dt * cfg.gravity.x);
                v.y += S(dt * cfg.gravity.y);
                v.z += S(dt * cfg.gravity.z);
                if (clamp_zone) {
                    const double nx = i * dxl - center.x;
                    const double ny = j * dxl - center.y;
                    const double nz = k * dxl - center.z;
                    if (nx * nx + ny * ny + nz * nz <= radius * radius)
                        v = {S(gvel.x), S(gvel.y), S(gvel.z)};
                }
                const int node[3] = {i, j, k};
                for (int a = 0; a < 3; ++a) {
                    if (node[a] < kBorderCells) {
                        if (sticky)
                            v = Vec3T<S>{};
                        else if (value_of(v[a]) < 0.0)
                            v[a] = S(0);
                    } else if (node[a] > n - kBorderCells) {
                        if (sticky)
                            v = Vec3T<S>{};
                        else if (value_of(v[a]) > 0.0)
                            v[a] = S(0);
                    }
                }
                gv[idx] = v;
            }

    const S damp = S(1.0 - cfg.damping);
    const double xmin = cfg.dx();
    const double xmax = 1.0 - cfg.dx();
    bool finite_ok = true;
    for (auto& p : state.particles) {
        using std::clamp;
        using defid::clamp;
        if (p.pinned) {
            p.x += p.v * S(dt);
            p.x.x = clamp(p.x.x, S(xmin), S(xmax));
            p.x.y = clamp(p.x.y, S(xmin), S(xmax));
            p.x.z = clamp(p.x.z, S(xmin), S(xmax));
            continue;
        }
        const Vec3T<S> pos = p.x * S(inv_dx);
        const int base[3] = {static_cast<int>(std::floor(value_of(pos.x) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.y) - 0.5)),
                             static_cast<int>(std::floor(value_of(pos.z) - 0.5))};
        const Vec3T<S> fx = pos - Vec3T<S>{S(base[0]), S(base[1]), S(base[2])};
        Vec3T<S> w[3];
        quadratic_weights(fx, w);
        Vec3T<S> v_new{};
        Mat3T<S> b{};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                for (int k = 0; k < 3; ++k) {
                    const S weight = w[i].x * w[j].y * w[k].z;
                    const Vec3T<S> wv = gv[at(base[0] + i, base[1] + j, base[2] + k)] * weight;
                    v_new += wv;
                    const Vec3T<S> dpos = (Vec3T<S>{S(i), S(j), S(k)} - fx) * S(dxl);
                    b += outer(wv, dpos);
                }
        p.v = v_new * damp;
        p.C = b * S(4.0 * inv_dx * inv_dx);
        p.x += p.v * S(dt);
        p.x.x = clamp(p.x.x, S(xmin), S(xmax));
        p.x.y = clamp(p.x.y, S(xmin), S(xmax));
        p.x.z = clamp(p.x.z, S(xmin), S(xmax));
        p.F = (Mat3T<S>::identity() + p.C * S(dt)) * p.F;
        if (!all_finite(p.x) || !all_finite(p.v)) finite_ok = false;
    }
    state.time += cfg.substep_dt;
    if (!finite_ok) throw SimError("substep_reference: simulation diverged");
}

}  // namespace mpm

template <class S>
TrajectoryT<S> rollout(const SimStateT<S>& initial, const SimConfig& cfg,
                       const MaterialParamsT<S>& material, const GripperPath& gripper,
                       int n_frames) {
    cfg.validate(value_of(material.youngs_modulus), material.density);
    gripper.validate(initial.time + n_frames * cfg.frame_dt);
    if (initial.particles.empty()) throw ConfigError("rollout: empty state");

    const Lame<S> lame =
        lame_parameters<S>(material.youngs_modulus, material.poissons_ratio);
    SimStateT<S> state = initial;
    TrajectoryT<S> traj;
    traj.tags.reserve(state.particles.size());
    for (const auto& p : state.particles) traj.tags.push_back(p.tag);

    auto snapshot = [&]() {
        FrameT<S> f;
        f.time = state.time;
        f.positions.reserve(state.particles.size());
        for (const auto& p : state.particles) f.positions.push_back(p.x);
        traj.frames.push_back(std::move(f));
    };
    snapshot();

    MpmWorkspace<S> ws;
    const int per_frame = cfg.substeps_per_frame();
    long step = 0;
    for (int f = 0; f < n_frames; ++f) {
        for (int s = 0; s < per_frame; ++s) mpm::substep(state, cfg, lame, gripper, ws, step++);
        snapshot();
    }
    return traj;
}

}  // namespace defid
