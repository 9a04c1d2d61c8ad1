#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "defid/rng.hpp"
#include "defid/sampling.hpp"
#include "defid/sim.hpp"

using namespace defid;

namespace {

// Test-side energy of the fixed corotated model, evaluated through svd3:
//   Psi(F) = mu * sum (sigma_i - 1)^2 + lambda/2 * (J - 1)^2
double corotated_energy(const Mat3& f, double mu, double lambda) {
    Mat3 u, v;
    Vec3 s;
    svd3(f, u, s, v);
    const double j = s.x * s.y * s.z;
    return mu * ((s.x - 1) * (s.x - 1) + (s.y - 1) * (s.y - 1) + (s.z - 1) * (s.z - 1)) +
           0.5 * lambda * (j - 1) * (j - 1);
}

SimConfig desk_config(double e_max, int n = 24) {
    SimConfig cfg;
    cfg.grid_resolution = n;
    cfg.frame_dt = 1e-2;
    return cfg.with_stable_dt(e_max);
}

RopeGeometry small_rope() {
    RopeGeometry g;
    g.length = 0.2;
    g.radius = 0.012;
    g.particle_spacing = 0.006;
    g.anchor = {0.5, 0.7, 0.5};
    return g;
}

// A compact blob of particles away from the border, with randomized state.
SimState random_blob(Rng& rng, int count) {
    SimState state;
    for (int i = 0; i < count; ++i) {
        ParticleT<double> p;
        p.x = rng.in_box({0.35, 0.35, 0.35}, {0.65, 0.65, 0.65});
        p.v = rng.in_box({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5});
        p.mass = rng.uniform(0.5, 2.0);
        p.rest_volume = rng.uniform(0.5, 2.0) * 1e-7;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) {
                p.F(a, b) = (a == b ? 1.0 : 0.0) + rng.uniform(-0.05, 0.05);
                p.C(a, b) = rng.uniform(-0.1, 0.1);
            }
        state.particles.push_back(p);
    }
    return state;
}

}  // namespace

TEST_CASE("lame_parameters") {
    auto l = lame_parameters<double>(1000.0, 0.25);
    CHECK(l.mu == doctest::Approx(400.0));
    CHECK(l.lambda == doctest::Approx(400.0));

    l = lame_parameters<double>(2600.0, 0.3);
    CHECK(l.mu == doctest::Approx(1000.0));
    CHECK(l.lambda == doctest::Approx(1500.0));

    l = lame_parameters<double>(1000.0, 1e-9);
    CHECK(l.mu == doctest::Approx(500.0));
    CHECK(l.lambda == doctest::Approx(0.0).epsilon(1e-5));

    CHECK_THROWS_AS(lame_parameters<double>(1000.0, 0.5), ConfigError);
    CHECK_THROWS_AS(lame_parameters<double>(1000.0, -0.1), ConfigError);
}

TEST_CASE("corotated stress: rest and rotated configurations are stress-free") {
    CHECK(max_abs(corotated_stress(Mat3::identity(), 40.0, 60.0)) < 1e-12);

    Rng rng(42);
    for (int t = 0; t < 20; ++t) {
        Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        axis *= 1.0 / norm(axis);
        const double th = rng.uniform(0, 3.0);
        Mat3 k;
        k(0, 1) = -axis.z;
        k(0, 2) = axis.y;
        k(1, 0) = axis.z;
        k(1, 2) = -axis.x;
        k(2, 0) = -axis.y;
        k(2, 1) = axis.x;
        const Mat3 r = Mat3::identity() + std::sin(th) * k + (1 - std::cos(th)) * (k * k);
        CHECK(max_abs(corotated_stress(r, 40.0, 60.0)) < 1e-9);
    }

    Mat3 inverted = Mat3::identity();
    inverted(0, 0) = -1.0;
    CHECK_THROWS_AS(corotated_stress(inverted, 1.0, 1.0), InvertedElementError);
}

TEST_CASE("corotated stress matches finite differences of the energy") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        Mat3 f = Mat3::identity();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) f(i, j) += rng.uniform(-0.15, 0.15);
        if (determinant(f) < 0.3) continue;
        double mu = rng.uniform(0.5, 3.0);
        double lambda = rng.uniform(0.5, 3.0);
        if (trial == 0) {
            f = Mat3::identity();
            f(0, 0) = 1.1;
            mu = 1.0;
            lambda = 1.0;
        }
        const Mat3 p = corotated_stress(f, mu, lambda);
        const double h = 1e-6;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                Mat3 fp = f, fm = f;
                fp(i, j) += h;
                fm(i, j) -= h;
                const double fd = (corotated_energy(fp, mu, lambda) -
                                   corotated_energy(fm, mu, lambda)) /
                                  (2 * h);
                CHECK(p(i, j) == doctest::Approx(fd).epsilon(5e-4));
            }
    }
}

TEST_CASE("sim config stability bound") {
    SimConfig cfg;  // defaults: n=64, dt=1e-4
    CHECK_NOTHROW(cfg.validate(2000.0));
    CHECK_THROWS_AS(cfg.validate(10500.0), ConfigError);

    const SimConfig stable = cfg.with_stable_dt(10500.0);
    CHECK_NOTHROW(stable.validate(10500.0));
    CHECK(stable.substeps_per_frame() * stable.substep_dt == doctest::Approx(stable.frame_dt));

    SimConfig bad;
    bad.substep_dt = 3e-3;  // does not divide frame_dt
    CHECK_THROWS_AS(bad.substeps_per_frame(), ConfigError);
}

TEST_CASE("zero gravity uniform translation keeps F and shape") {
    SimConfig cfg = desk_config(2000.0);
    cfg.gravity = {0, 0, 0};
    RopeGeometry g = small_rope();
    SimState state = sample_rope(g, 11);
    const Vec3 v0{0.2, -0.1, 0.15};
    for (auto& p : state.particles) p.v = v0;
    const SimState initial = state;

    const Lame<double> lame = lame_parameters<double>(2000.0, 0.3);
    MpmWorkspace<double> ws;
    const int steps = 50;
    for (int s = 0; s < steps; ++s)
        mpm::substep(state, cfg, lame, GripperPath::none(), ws, s);

    const double t = steps * cfg.substep_dt;
    for (std::size_t i = 0; i < state.particles.size(); ++i) {
        const Vec3 expect = initial.particles[i].x + v0 * t;
        CHECK(std::abs(state.particles[i].x.x - expect.x) < 1e-9);
        CHECK(std::abs(state.particles[i].x.y - expect.y) < 1e-9);
        CHECK(std::abs(state.particles[i].x.z - expect.z) < 1e-9);
        CHECK(max_abs(state.particles[i].F - Mat3::identity()) < 1e-9);
    }
}

TEST_CASE("single particle at a cell center keeps its velocity") {
    SimConfig cfg = desk_config(2000.0, 32);
    cfg.gravity = {0, 0, 0};
    SimState state;
    ParticleT<double> p;
    const double dx = cfg.dx();
    p.x = {16.5 * dx, 16.5 * dx, 16.5 * dx};  // exact cell center
    p.v = {0.37, -0.21, 0.11};
    p.mass = 1.0;
    p.rest_volume = 1e-6;
    state.particles.push_back(p);

    const Lame<double> lame = lame_parameters<double>(2000.0, 0.3);
    MpmWorkspace<double> ws;
    mpm::substep(state, cfg, lame, GripperPath::none(), ws, 0);
    // Exact up to summation roundoff of the eight dyadic weights.
    CHECK(std::abs(state.particles[0].v.x - p.v.x) < 1e-15);
    CHECK(std::abs(state.particles[0].v.y - p.v.y) < 1e-15);
    CHECK(std::abs(state.particles[0].v.z - p.v.z) < 1e-15);

    for (int s = 1; s < 10; ++s) mpm::substep(state, cfg, lame, GripperPath::none(), ws, s);
    CHECK(std::abs(state.particles[0].v.x - p.v.x) < 1e-12);
    CHECK(std::abs(state.particles[0].v.y - p.v.y) < 1e-12);
    CHECK(std::abs(state.particles[0].v.z - p.v.z) < 1e-12);
}

TEST_CASE("mass and momentum conservation over random substeps") {
    Rng rng(2024);
    const Lame<double> lame = lame_parameters<double>(1500.0, 0.3);
    for (int trial = 0; trial < 20; ++trial) {
        SimConfig cfg = desk_config(1500.0);
        cfg.gravity = {0, 0, 0};
        SimState state = random_blob(rng, 200);
        const double mass_before = total_mass(state);

        Vec3 mom_before{};
        for (const auto& p : state.particles) mom_before += p.v * p.mass;

        MpmWorkspace<double> ws;
        mpm::apply_gripper(state, cfg, GripperPath::none());
        mpm::compute_active_box(state, cfg, ws);
        ws.mass.resize(ws.node_count());
        ws.vel.resize(ws.node_count());
        mpm::p2g(state, cfg, lame, ws);

        double grid_mass = 0.0;
        for (const auto& m : ws.mass) grid_mass += m;
        CHECK(std::abs(grid_mass - mass_before) < 1e-12 * mass_before);

        mpm::grid_update(cfg, ws, GripperPath::none(), 0.0);
        bool ok = true;
        mpm::g2p(state, cfg, ws, &ok);
        CHECK(ok);

        Vec3 mom_after{};
        for (const auto& p : state.particles) mom_after += p.v * p.mass;
        const double scale = std::max(1.0, norm(mom_before));
        CHECK(norm(mom_after - mom_before) < 1e-9 * scale);
        CHECK(std::abs(total_mass(state) - mass_before) == 0.0);
    }
}

TEST_CASE("rollout determinism and frame layout") {
    const SimConfig cfg = desk_config(3000.0);
    const MaterialParams mat{3000.0, 0.35, 1.0};
    RopeGeometry g = small_rope();
    const SimState init = sample_rope(g, 5);

    const auto t0 = rollout(init, cfg, mat, GripperPath::hold({ParticleTag::grip}, g.anchor), 0);
    CHECK(t0.frames.size() == 1);

    const auto a = rollout(init, cfg, mat, GripperPath::hold({ParticleTag::grip}, g.anchor), 12);
    const auto b = rollout(init, cfg, mat, GripperPath::hold({ParticleTag::grip}, g.anchor), 12);
    CHECK(a.frames.size() == 13);
    REQUIRE(a.frames.size() == b.frames.size());
    for (std::size_t f = 0; f < a.frames.size(); ++f)
        CHECK(std::memcmp(a.frames[f].positions.data(), b.frames[f].positions.data(),
                          a.frames[f].positions.size() * sizeof(Vec3)) == 0);
}

TEST_CASE("dual rollout primal is bit-identical to the double rollout") {
    const SimConfig cfg = desk_config(2500.0);
    const MaterialParams mat{2500.0, 0.32, 1.0};
    RopeGeometry g = small_rope();
    const SimState init = sample_rope(g, 9);
    GripperPath grip = GripperPath::hold({ParticleTag::grip}, g.anchor);

    const auto plain = rollout(init, cfg, mat, grip, 8);
    const auto dual = rollout(to_state<Dual2>(init), cfg, seeded(mat), grip, 8);

    REQUIRE(plain.frames.size() == dual.frames.size());
    bool tangents_alive = false;
    for (std::size_t f = 0; f < plain.frames.size(); ++f)
        for (std::size_t i = 0; i < plain.frames[f].positions.size(); ++i) {
            const Vec3& p = plain.frames[f].positions[i];
            const Vec3T<Dual2>& d = dual.frames[f].positions[i];
            CHECK(p.x == d.x.val);
            CHECK(p.y == d.y.val);
            CHECK(p.z == d.z.val);
            if (std::abs(d.x.de) > 0 || std::abs(d.y.de) > 0) tangents_alive = true;
        }
    CHECK(tangents_alive);  // gravity sag depends on E, so tangents must flow
}

TEST_CASE("optimized kernels match the serial reference") {
    SimConfig cfg = desk_config(2000.0);
    const Lame<double> lame = lame_parameters<double>(2000.0, 0.3);
    RopeGeometry g = small_rope();
    SimState fast = sample_rope(g, 3);
    SimState ref = fast;
    GripperPath grip = GripperPath::hold({ParticleTag::grip}, g.anchor);

    MpmWorkspace<double> ws;
    for (int s = 0; s < 40; ++s) {
        mpm::substep(fast, cfg, lame, grip, ws, s);
        mpm::substep_reference(ref, cfg, lame, grip);
    }
    double d = 0.0;
    for (std::size_t i = 0; i < fast.particles.size(); ++i) {
        const Vec3 delta = fast.particles[i].x - ref.particles[i].x;
        d = std::max(d, norm(delta));
    }
    CHECK(d < 1e-11);
}

TEST_CASE("hanging rope reaches static equilibrium with damping") {
    SimConfig cfg = desk_config(2000.0);
    cfg.damping = 0.05;
    const MaterialParams mat{2000.0, 0.3, 1.0};
    RopeGeometry g = small_rope();
    const SimState init = sample_rope(g, 3);

    const auto traj = rollout(init, cfg, mat, GripperPath::hold({ParticleTag::grip}, g.anchor), 200);
    const auto& last = traj.frames[traj.frames.size() - 1].positions;
    const auto& prev = traj.frames[traj.frames.size() - 2].positions;
    double vmax = 0.0;
    for (std::size_t i = 0; i < last.size(); ++i)
        vmax = std::max(vmax, norm(last[i] - prev[i]) / cfg.frame_dt);
    CHECK(vmax < 1e-3);
}

TEST_CASE("rollouts stay finite across the paper parameter box") {
    const double es[] = {500.0, 10500.0, 500.0, 10500.0, 5500.0};
    const double nus[] = {0.2, 0.2, 0.4, 0.4, 0.3};
    RopeGeometry g = small_rope();
    g.particle_spacing = 0.0075;
    g.radius = 0.015;
    const SimState init = sample_rope(g, 21);
    for (int c = 0; c < 5; ++c) {
        const SimConfig cfg = desk_config(es[c]);
        const MaterialParams mat{es[c], nus[c], 1.0};
        const auto traj = rollout(init, cfg, mat, GripperPath::hold({ParticleTag::grip}, g.anchor), 300);
        const auto& last = traj.frames.back().positions;
        for (const auto& p : last) CHECK(all_finite(p));
    }
}

TEST_CASE("sample_rope geometry contract") {
    RopeGeometry g;  // defaults
    const SimState a = sample_rope(g, 123);
    const SimState b = sample_rope(g, 123);
    const SimState c = sample_rope(g, 124);
    CHECK(a.particles.size() == b.particles.size());
    bool same = true, diff = false;
    for (std::size_t i = 0; i < a.particles.size(); ++i) {
        same &= std::memcmp(&a.particles[i].x, &b.particles[i].x, sizeof(Vec3)) == 0;
        diff |= std::memcmp(&a.particles[i].x, &c.particles[i].x, sizeof(Vec3)) != 0;
    }
    CHECK(same);
    CHECK(diff);

    const double expected =
        M_PI * g.radius * g.radius * g.length /
        (g.particle_spacing * g.particle_spacing * g.particle_spacing);
    CHECK(a.particles.size() > 0.9 * expected);
    CHECK(a.particles.size() < 1.1 * expected);

    bool has_grip = false, has_tip = false;
    for (const auto& p : a.particles) {
        const Vec3 d = p.x - g.anchor;
        const double axial = -d.y;
        const double radial = std::hypot(d.x, d.z);
        CHECK(axial >= -1e-12);
        CHECK(axial <= g.length + 1e-12);
        CHECK(radial <= g.radius + 1e-12);
        has_grip |= p.tag == ParticleTag::grip;
        has_tip |= p.tag == ParticleTag::tip;
    }
    CHECK(has_grip);
    CHECK(has_tip);

    RopeGeometry coarse = g;
    coarse.particle_spacing = 0.01;  // fewer than 4 particles across the diameter
    CHECK_THROWS_AS(sample_rope(coarse, 1), ConfigError);
}

TEST_CASE("sample_cloth geometry contract") {
    ClothGeometry g;  // defaults
    const SimState a = sample_cloth(g, 9);
    const double expected = (g.side / g.particle_spacing) * (g.side / g.particle_spacing) *
                            std::max(1.0, std::round(g.thickness / g.particle_spacing));
    CHECK(a.particles.size() > 0.9 * expected);
    CHECK(a.particles.size() < 1.1 * expected);

    bool has_center = false, has_corner = false;
    for (const auto& p : a.particles) {
        CHECK(std::abs(p.x.x - g.anchor.x) <= 0.5 * g.side + 1e-12);
        CHECK(std::abs(p.x.z - g.anchor.z) <= 0.5 * g.side + 1e-12);
        has_center |= p.tag == ParticleTag::center;
        has_corner |= p.tag == ParticleTag::corner;
    }
    CHECK(has_center);
    CHECK(has_corner);

    const SimState b = sample_cloth(g, 9);
    CHECK(std::memcmp(&a.particles[0].x, &b.particles[0].x, sizeof(Vec3)) == 0);
}

TEST_CASE("gripper waypoint interpolation, impulse and release") {
    GripperPath g;
    g.waypoints = {{0.0, {0, 0, 0}}, {0.5, {0.1, 0, 0}}, {1.0, {0.1, 0.2, 0}}};
    g.pinned_tags = {ParticleTag::grip};
    g.release_time = 0.8;
    g.validate(1.0);

    CHECK(g.velocity_at(0.25, 0.01).x == doctest::Approx(0.2));
    CHECK(g.velocity_at(0.75, 0.01).y == doctest::Approx(0.4));
    CHECK(g.velocity_at(1.5, 0.01).y == doctest::Approx(0.0));
    CHECK(g.pins(ParticleTag::grip, 0.5));
    CHECK(!g.pins(ParticleTag::grip, 0.9));
    CHECK(!g.pins(ParticleTag::body, 0.1));

    GripperPath imp;
    imp.mode = GripperMode::impulse;
    imp.impulse_velocity = {1.5, 0, 0};
    imp.impulse_time = 0.2;
    imp.pinned_tags = {ParticleTag::grip};
    CHECK(imp.velocity_at(0.205, 0.01).x == doctest::Approx(1.5));
    CHECK(imp.velocity_at(0.25, 0.01).x == doctest::Approx(0.0));
    CHECK(imp.pins(ParticleTag::grip, 5.0));

    GripperPath bad;
    bad.waypoints = {{0.5, {0, 0, 0}}, {0.5, {1, 0, 0}}};
    CHECK_THROWS_AS(bad.validate(1.0), ConfigError);
}
