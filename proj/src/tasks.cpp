#include "defid/tasks.hpp"

#include <cmath>
#include <unordered_set>

#include "defid/rng.hpp"

namespace defid {

std::string to_string(TaskId t) {
    switch (t) {
        case TaskId::rope_reaching: return "rope_reaching";
        case TaskId::rope_casting: return "rope_casting";
        case TaskId::cloth_spreading: return "cloth_spreading";
    }
    return "unknown";
}

TaskId task_from_string(const std::string& s) {
    if (s == "rope_reaching") return TaskId::rope_reaching;
    if (s == "rope_casting") return TaskId::rope_casting;
    if (s == "cloth_spreading") return TaskId::cloth_spreading;
    throw ConfigError("unknown task '" + s + "'");
}

void TaskSpec::validate() const {
    bounds.validate();
    if (horizon_frames < 2) throw ConfigError("task: horizon too short");
    if (task == TaskId::rope_reaching) {
        if (!(release_box.hi.x > release_box.lo.x && release_box.hi.y > release_box.lo.y &&
              release_box.hi.z > release_box.lo.z))
            throw ConfigError("task: degenerate release box");
        if (!(carry_speed > 0.0)) throw ConfigError("task: carry speed must be positive");
    }
    if (task == TaskId::rope_casting && !(action_range.hi > action_range.lo))
        throw ConfigError("task: degenerate action range");
    if (task == TaskId::cloth_spreading) {
        if (!(accel_range.hi > accel_range.lo) || accel_range.lo < 0.0 ||
            accel_range.hi >= 0.25)
            throw ConfigError("task: acceleration range must sit in [0, 0.25)");
        if (sweep_step <= 0.0) throw ConfigError("task: sweep step must be positive");
    }
}

TaskSpec TaskSpec::desk_default(TaskId task) {
    TaskSpec s;
    s.task = task;
    s.sim.frame_dt = 1e-2;
    switch (task) {
        case TaskId::rope_reaching:
            s.sim.grid_resolution = 24;
            s.rope.length = 0.3;
            s.rope.radius = 0.015;
            s.rope.particle_spacing = 0.0075;
            s.rope.anchor = {0.5, 0.72, 0.5};
            s.release_box = {{0.44, 0.58, 0.44}, {0.56, 0.75, 0.56}};
            s.carry_speed = 1.1;
            s.hold_time = 0.05;
            s.horizon_frames = 68;
            break;
        case TaskId::rope_casting:
            s.sim.grid_resolution = 24;
            s.rope.length = 0.3;
            s.rope.radius = 0.015;
            s.rope.particle_spacing = 0.0075;
            s.rope.anchor = {0.4, 0.52, 0.5};
            s.action_range = {4.0, 18.0};  // one-frame flick velocity
            s.impulse_time = 0.08;
            s.horizon_frames = 70;
            break;
        case TaskId::cloth_spreading:
            s.sim.grid_resolution = 32;
            s.sim.boundary = BoundaryKind::sticky;
            s.cloth.side = 0.24;
            s.cloth.thickness = 0.008;
            s.cloth.particle_spacing = 0.0055;
            s.cloth.anchor = {0.28, 0.38, 0.5};
            s.accel_range = {0.0, 0.12};
            s.sweep_step = 0.01;
            s.frames_per_step = 2;
            s.step_length = 0.015;
            s.drape_time = 0.15;
            s.settle_frames = 50;
            s.bounds = {1500.0, 10500.0, 0.2, 0.4};
            break;
    }
    return s;
}

double cloth_step_distance(double accel, int step) {
    if (step < 1 || step > 16) throw ConfigError("cloth_step_distance: step must be 1..16");
    if (accel < 0.0) throw ConfigError("cloth_step_distance: acceleration must be >= 0");
    const double d = step <= 8 ? 1.0 - (4.5 - 0.5 * step) * accel
                               : 1.0 + (0.5 * step - 4.0) * accel;
    if (d <= 0.0)
        throw ConfigError("cloth_step_distance: non-positive step distance at A=" +
                          std::to_string(accel));
    return d;
}

double spread_ratio(std::span<const Vec3> positions, const ClothGeometry& cloth) {
    const double s = cloth.particle_spacing;
    const int n_side = static_cast<int>(std::floor(cloth.side / s));
    const double reference = static_cast<double>(n_side) * n_side;
    std::unordered_set<std::int64_t> occupied;
    for (const auto& p : positions) {
        const auto ix = static_cast<std::int64_t>(std::floor(p.x / s));
        const auto iz = static_cast<std::int64_t>(std::floor(p.z / s));
        occupied.insert(ix * (1 << 20) + iz);
    }
    return std::min(1.0, static_cast<double>(occupied.size()) / reference);
}

namespace {

// Frames are checked against the wall and ceiling bands (the floor is the
// landing surface, so touching it is fine). Only frames up to `last_frame`
// count: what the rope does after the task window ended (e.g. sliding along
// the frictionless floor after landing) is irrelevant.
bool leaves_workspace(const Trajectory& traj, const SimConfig& cfg, std::size_t last_frame) {
    const double margin = kBorderCells * cfg.dx();
    last_frame = std::min(last_frame, traj.frames.size() - 1);
    for (std::size_t f = 0; f <= last_frame; ++f)
        for (const auto& p : traj.frames[f].positions) {
            if (p.x < margin || p.x > 1.0 - margin) return true;
            if (p.z < margin || p.z > 1.0 - margin) return true;
            if (p.y > 1.0 - margin) return true;
        }
    return false;
}

std::size_t frame_at(const Trajectory& traj, double time) {
    std::size_t best = 0;
    double best_dt = std::numeric_limits<double>::infinity();
    for (std::size_t f = 0; f < traj.frames.size(); ++f) {
        const double dt = std::abs(traj.frames[f].time - time);
        if (dt < best_dt) {
            best_dt = dt;
            best = f;
        }
    }
    return best;
}

}  // namespace

Outcome reaching_outcome(const MaterialParams& mat, const TaskSpec& spec, const Vec3& release,
                         std::uint64_t seed) {
    validate(mat);
    const SimState init = sample_rope(spec.rope, seed);
    const Vec3 anchor = spec.rope.anchor;
    const double carry = norm(release - anchor) / spec.carry_speed;

    GripperPath grip;
    grip.pinned_tags = {ParticleTag::grip};
    grip.anchor = anchor;
    grip.waypoints = {{0.0, anchor}, {spec.hold_time, anchor}, {spec.hold_time + carry, release}};
    grip.release_time = spec.hold_time + carry;

    const SimConfig cfg = spec.sim.with_stable_dt(mat.youngs_modulus, mat.density);
    const double horizon_end = spec.horizon_frames * cfg.frame_dt;
    if (*grip.release_time >= horizon_end)
        throw TaskError("reaching: carry does not fit in the horizon");
    const auto traj = rollout(init, cfg, mat, grip, spec.horizon_frames);

    // The swing ends when the tip reaches the desk; afterwards the rope just
    // slides, which is outside the task window.
    const std::size_t release_frame = frame_at(traj, *grip.release_time);
    const double floor_surface = kBorderCells * cfg.dx();
    std::size_t window_end = traj.frames.size() - 1;
    for (std::size_t f = release_frame; f < traj.frames.size(); ++f) {
        const Vec3 tip = traj.tag_centroid(f, ParticleTag::tip);
        if (tip.y <= floor_surface + 1.2 * spec.rope.radius) {
            window_end = f;
            break;
        }
    }

    Outcome out;
    out.left_workspace = leaves_workspace(traj, cfg, window_end);

    // First local maximum of the tip's horizontal distance from the release
    // point within the swing window; falls back to the window maximum when
    // the distance is monotone.
    std::vector<double> dist;
    for (std::size_t f = release_frame; f <= window_end; ++f) {
        const Vec3 tip = traj.tag_centroid(f, ParticleTag::tip);
        dist.push_back(std::hypot(tip.x - release.x, tip.z - release.z));
    }
    std::size_t pick = 0;
    bool found = false;
    for (std::size_t i = 1; i + 1 < dist.size(); ++i) {
        if (dist[i] >= dist[i - 1] && dist[i] > dist[i + 1]) {
            pick = i;
            found = true;
            break;
        }
    }
    if (!found)
        pick = std::max_element(dist.begin(), dist.end()) - dist.begin();
    const Vec3 goal = traj.tag_centroid(release_frame + pick, ParticleTag::tip);
    out.y = {goal.x, goal.y, goal.z};
    return out;
}

Outcome casting_outcome(const MaterialParams& mat, const TaskSpec& spec, double action,
                        std::uint64_t seed) {
    validate(mat);
    const SimState init = sample_rope(spec.rope, seed);

    GripperPath grip;
    grip.mode = GripperMode::impulse;
    grip.pinned_tags = {ParticleTag::grip};
    grip.anchor = spec.rope.anchor;
    grip.impulse_time = spec.impulse_time;
    grip.impulse_velocity = {action, 0.0, 0.0};

    const SimConfig cfg = spec.sim.with_stable_dt(mat.youngs_modulus, mat.density);
    const auto traj = rollout(init, cfg, mat, grip, spec.horizon_frames);

    Outcome out;
    out.left_workspace = leaves_workspace(traj, cfg, traj.frames.size() - 1);

    // Highest tip position after the impulse.
    const std::size_t start = frame_at(traj, spec.impulse_time) + 1;
    double best_y = -std::numeric_limits<double>::infinity();
    Vec3 best{};
    for (std::size_t f = start; f < traj.frames.size(); ++f) {
        const Vec3 tip = traj.tag_centroid(f, ParticleTag::tip);
        if (tip.y > best_y) {
            best_y = tip.y;
            best = tip;
        }
    }
    out.y = {best.x, best.y};
    return out;
}

double cloth_spread_outcome(const MaterialParams& mat, const TaskSpec& spec, double accel,
                            std::uint64_t seed) {
    validate(mat);
    const SimState init = sample_cloth(spec.cloth, seed);
    const Vec3 anchor = spec.cloth.anchor;

    GripperPath grip;
    grip.pinned_tags = {ParticleTag::center};
    grip.anchor = anchor;
    const double step_time = spec.frames_per_step * spec.sim.frame_dt;
    grip.waypoints.push_back({0.0, anchor});
    grip.waypoints.push_back({spec.drape_time, anchor});
    Vec3 pos = anchor;
    double t = spec.drape_time;
    for (int i = 1; i <= 16; ++i) {
        pos.x += spec.step_length * cloth_step_distance(accel, i);
        t += step_time;
        grip.waypoints.push_back({t, pos});
    }
    grip.release_time = t;

    const SimConfig cfg = spec.sim.with_stable_dt(mat.youngs_modulus, mat.density);
    const int frames =
        static_cast<int>(std::ceil(t / cfg.frame_dt)) + spec.settle_frames;
    const auto traj = rollout(init, cfg, mat, grip, frames);
    return spread_ratio(traj.frames.back().positions, spec.cloth);
}

Outcome task_outcome(const MaterialParams& mat, const TaskSpec& spec,
                     const std::vector<double>& x, std::uint64_t seed) {
    switch (spec.task) {
        case TaskId::rope_reaching:
            if (x.size() != 3) throw ConfigError("reaching action must have 3 components");
            return reaching_outcome(mat, spec, {x[0], x[1], x[2]}, seed);
        case TaskId::rope_casting:
            if (x.size() != 1) throw ConfigError("casting action must have 1 component");
            return casting_outcome(mat, spec, x[0], seed);
        case TaskId::cloth_spreading: {
            if (x.size() != 1) throw ConfigError("cloth action must have 1 component");
            Outcome out;
            out.y = {cloth_spread_outcome(mat, spec, x[0], seed)};
            return out;
        }
    }
    throw ConfigError("task_outcome: bad task");
}

namespace {

constexpr int kMaxRetries = 5;

}  // namespace

Demonstration gen_rope_reaching_demo(const MaterialParams& mat, const TaskSpec& spec,
                                     std::uint64_t seed) {
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const std::uint64_t sub = mix_seed(seed, 0xAE5Cull + attempt);
        Rng rng(sub);
        const Vec3 release = rng.in_box(spec.release_box.lo, spec.release_box.hi);
        const Outcome out = reaching_outcome(mat, spec, release, sub);
        if (out.left_workspace) continue;
        Demonstration d;
        d.task = TaskId::rope_reaching;
        d.e = mat.youngs_modulus;
        d.nu = mat.poissons_ratio;
        d.y = out.y;
        d.x = {release.x, release.y, release.z};
        d.seed = sub;
        return d;
    }
    throw TaskError("reaching demo: rope left the workspace in every retry");
}

Demonstration gen_rope_casting_demo(const MaterialParams& mat, const TaskSpec& spec,
                                    std::uint64_t seed) {
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
        const std::uint64_t sub = mix_seed(seed, 0xCA57ull + attempt);
        Rng rng(sub);
        const double action = rng.uniform(spec.action_range.lo, spec.action_range.hi);
        const Outcome out = casting_outcome(mat, spec, action, sub);
        if (out.left_workspace) continue;
        Demonstration d;
        d.task = TaskId::rope_casting;
        d.e = mat.youngs_modulus;
        d.nu = mat.poissons_ratio;
        d.y = out.y;
        d.x = {action};
        d.seed = sub;
        return d;
    }
    throw TaskError("casting demo: rope left the workspace in every retry");
}

Demonstration gen_cloth_spreading_demo(const MaterialParams& mat, const TaskSpec& spec,
                                       std::uint64_t seed) {
    const std::uint64_t sub = mix_seed(seed, 0xC107ull);
    double best_ratio = 0.0;
    for (double a = spec.accel_range.lo; a <= spec.accel_range.hi + 1e-12;
         a += spec.sweep_step) {
        const double ratio = cloth_spread_outcome(mat, spec, a, sub);
        best_ratio = std::max(best_ratio, ratio);
        if (ratio >= spec.spread_target) {
            Demonstration d;
            d.task = TaskId::cloth_spreading;
            d.e = mat.youngs_modulus;
            d.nu = mat.poissons_ratio;
            d.y = {};
            d.x = {a};
            d.seed = sub;
            return d;
        }
    }
    throw TaskError("cloth demo: no acceleration in [" + std::to_string(spec.accel_range.lo) +
                    ", " + std::to_string(spec.accel_range.hi) + "] reached spread " +
                    std::to_string(spec.spread_target) + " (best " +
                    std::to_string(best_ratio) + ")");
}

Demonstration gen_demo(const MaterialParams& mat, const TaskSpec& spec, std::uint64_t seed) {
    switch (spec.task) {
        case TaskId::rope_reaching: return gen_rope_reaching_demo(mat, spec, seed);
        case TaskId::rope_casting: return gen_rope_casting_demo(mat, spec, seed);
        case TaskId::cloth_spreading: return gen_cloth_spreading_demo(mat, spec, seed);
    }
    throw ConfigError("gen_demo: bad task");
}

std::vector<Demonstration> gen_dataset(const TaskSpec& spec, int count, std::uint64_t seed) {
    spec.validate();
    if (count < 1) throw ConfigError("gen_dataset: count must be >= 1");
    std::vector<Demonstration> demos(count);
    std::vector<std::string> errors(count);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < count; ++i) {
        const std::uint64_t demo_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        Rng rng(mix_seed(demo_seed, 0x9A12ull));
        // A demo whose material keeps escaping the workspace after all its
        // retries gets a fresh material draw a few times before giving up.
        std::string last_error;
        for (int redraw = 0; redraw < 4; ++redraw) {
            const MaterialParams mat{rng.uniform(spec.bounds.e_min, spec.bounds.e_max),
                                     rng.uniform(spec.bounds.nu_min, spec.bounds.nu_max), 1.0};
            try {
                demos[i] = gen_demo(mat, spec, mix_seed(demo_seed, redraw));
                last_error.clear();
                break;
            } catch (const std::exception& e) {
                last_error = e.what();
            }
        }
        errors[i] = last_error;
    }
    for (int i = 0; i < count; ++i)
        if (!errors[i].empty())
            throw TaskError("gen_dataset: demo " + std::to_string(i) + " failed: " + errors[i]);
    return demos;
}

}  // namespace defid
