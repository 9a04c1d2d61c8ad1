// Benchmarks the OpenMP substep kernels against the serial reference, for
// plain-double and dual-number rollouts, plus the rasterizer.
#include <chrono>
#include <cstdio>

#include "defid/density.hpp"
#include "defid/sampling.hpp"
#include "defid/sim.hpp"
#include "defid/threads.hpp"

using namespace defid;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class S>
double time_substeps(SimStateT<S> state, const SimConfig& cfg, const Lame<S>& lame,
                     const GripperPath& grip, int steps, bool reference) {
    MpmWorkspace<S> ws;
    const auto t0 = Clock::now();
    for (int s = 0; s < steps; ++s) {
        if (reference)
            mpm::substep_reference(state, cfg, lame, grip);
        else
            mpm::substep(state, cfg, lame, grip, ws, s);
    }
    return seconds_since(t0);
}

void bench_spacing(double spacing) {
    SimConfig cfg;
    cfg.grid_resolution = 24;
    cfg.frame_dt = 1e-2;
    cfg = cfg.with_stable_dt(3000.0);

    RopeGeometry g;
    g.length = 0.3;
    g.radius = 0.015;
    g.particle_spacing = spacing;
    g.anchor = {0.5, 0.8, 0.5};
    const SimState init = sample_rope(g, 7);
    const GripperPath grip = GripperPath::hold({ParticleTag::grip}, g.anchor);
    const Lame<double> lame = lame_parameters<double>(3000.0, 0.35);
    const auto dual_mat = seeded({3000.0, 0.35, 1.0});
    const Lame<Dual2> dual_lame =
        lame_parameters<Dual2>(dual_mat.youngs_modulus, dual_mat.poissons_ratio);

    const int steps = 400;
    const double ser = time_substeps(init, cfg, lame, grip, steps, true);
    const double par = time_substeps(init, cfg, lame, grip, steps, false);
    const double dual_par =
        time_substeps(to_state<Dual2>(init), cfg, dual_lame, grip, steps, false);

    std::printf("%8zu | %9.1f | %9.1f | %6.2fx | %9.1f\n", init.particles.size(),
                steps / ser, steps / par, ser / par, steps / dual_par);
}

}  // namespace

int main() {
    apply_thread_cap();
    std::printf("threads: %d\n", thread_count());
    std::printf("substep throughput (steps/s), rope on a 24-grid\n");
    std::printf("particles | reference |  parallel | speedup | dual par.\n");
    for (double spacing : {0.0075, 0.006, 0.0045}) bench_spacing(spacing);

    // Rasterizer: points -> 64^3 density grid.
    Rng rng(3);
    std::vector<Vec3> pts;
    for (int i = 0; i < 4000; ++i) pts.push_back(rng.in_box({0.2, 0.2, 0.2}, {0.8, 0.8, 0.8}));
    const auto t0 = Clock::now();
    const int reps = 200;
    double sink = 0.0;
    for (int r = 0; r < reps; ++r) {
        const auto grid = rasterize<double>(pts, 64, {0, 0, 0}, {1, 1, 1});
        sink += value_of(grid.values[0]);
    }
    const double dt = seconds_since(t0);
    std::printf("rasterize 4k pts -> 64^3: %.0f grids/s (%g)\n", reps / dt, sink);
    return 0;
}
