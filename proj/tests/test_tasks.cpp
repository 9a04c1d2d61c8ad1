#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "defid/rng.hpp"
#include "defid/tasks.hpp"

using namespace defid;

namespace {

TaskSpec small_cloth_spec() {
    TaskSpec spec = TaskSpec::desk_default(TaskId::cloth_spreading);
    spec.cloth.side = 0.18;
    spec.cloth.particle_spacing = 0.0065;
    spec.cloth.anchor = {0.3, 0.36, 0.5};
    spec.step_length = 0.012;
    spec.settle_frames = 40;
    spec.accel_range = {0.0, 0.04};
    return spec;
}

bool same_demo(const Demonstration& a, const Demonstration& b) {
    return a.task == b.task && a.e == b.e && a.nu == b.nu && a.seed == b.seed &&
           a.x == b.x && a.y == b.y;
}

}  // namespace

TEST_CASE("cloth step distance formula") {
    for (int i = 1; i <= 16; ++i) CHECK(cloth_step_distance(0.0, i) == 1.0);
    CHECK(cloth_step_distance(0.1, 1) == doctest::Approx(0.6));
    CHECK(cloth_step_distance(0.1, 16) == doctest::Approx(1.4));
    CHECK(cloth_step_distance(0.1, 8) == doctest::Approx(0.95));
    CHECK(cloth_step_distance(0.1, 9) == doctest::Approx(1.05));

    for (double a : {0.0, 0.05, 0.2}) {
        double total = 0.0;
        for (int i = 1; i <= 16; ++i) total += cloth_step_distance(a, i);
        CHECK(total == doctest::Approx(16.0).epsilon(1e-12));
    }

    CHECK_THROWS_AS(cloth_step_distance(0.1, 0), ConfigError);
    CHECK_THROWS_AS(cloth_step_distance(0.1, 17), ConfigError);
    CHECK_THROWS_AS(cloth_step_distance(0.25, 1), ConfigError);  // step 1 collapses to 0
    CHECK_THROWS_AS(cloth_step_distance(-0.01, 1), ConfigError);
}

TEST_CASE("spread ratio on constructed configurations") {
    ClothGeometry g;
    g.side = 0.2;
    g.particle_spacing = 0.005;
    g.anchor = {0.5, 0.3, 0.5};
    const SimState flat = sample_cloth(g, 4);

    std::vector<Vec3> rest;
    for (const auto& p : flat.particles) rest.push_back(p.x);
    CHECK(spread_ratio(rest, g) == doctest::Approx(1.0).epsilon(0.05));

    // Folded in half: mirror the +x half onto the -x half.
    std::vector<Vec3> folded;
    for (Vec3 p : rest) {
        if (p.x > g.anchor.x) p.x = 2.0 * g.anchor.x - p.x;
        folded.push_back(p);
    }
    CHECK(spread_ratio(folded, g) == doctest::Approx(0.5).epsilon(0.1));

    // Crumpled pile inside a quarter-footprint ball.
    Rng rng(8);
    std::vector<Vec3> pile;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        const double r = 0.25 * 0.5 * g.side;
        pile.push_back(g.anchor + Vec3{rng.uniform(-r, r), rng.uniform(0, r), rng.uniform(-r, r)});
    }
    CHECK(spread_ratio(pile, g) < 0.3);
}

TEST_CASE("rope reaching demos: determinism, sensitivity, hindsight consistency") {
    const TaskSpec spec = TaskSpec::desk_default(TaskId::rope_reaching);
    const MaterialParams mat{3000.0, 0.3, 1.0};

    const Demonstration a = gen_rope_reaching_demo(mat, spec, 11);
    const Demonstration b = gen_rope_reaching_demo(mat, spec, 11);
    CHECK(same_demo(a, b));
    CHECK(a.y.size() == 3);
    CHECK(a.x.size() == 3);
    CHECK(a.e == mat.youngs_modulus);

    // Re-simulating the stored action reproduces the stored goal.
    const Outcome replay = task_outcome(mat, spec, a.x, a.seed);
    for (int i = 0; i < 3; ++i) CHECK(std::abs(replay.y[i] - a.y[i]) < 1e-6);

    // Same release, very different stiffness: goals must separate.
    const Vec3 r{0.55, 0.65, 0.52};
    const Outcome soft = reaching_outcome({1500.0, 0.35, 1.0}, spec, r, 99);
    const Outcome stiff = reaching_outcome({8200.0, 0.35, 1.0}, spec, r, 99);
    const Vec3 ds{soft.y[0] - stiff.y[0], soft.y[1] - stiff.y[1], soft.y[2] - stiff.y[2]};
    CHECK(norm(ds) > 0.02);

    // Goal varies continuously in nu: a small step moves the goal no more
    // than the whole range does.
    const Outcome n0 = reaching_outcome({3000.0, 0.34, 1.0}, spec, r, 99);
    const Outcome n1 = reaching_outcome({3000.0, 0.35, 1.0}, spec, r, 99);
    const Outcome n2 = reaching_outcome({3000.0, 0.2, 1.0}, spec, r, 99);
    const Outcome n3 = reaching_outcome({3000.0, 0.4, 1.0}, spec, r, 99);
    auto dist = [](const Outcome& p, const Outcome& q) {
        return std::hypot(p.y[0] - q.y[0], p.y[1] - q.y[1], p.y[2] - q.y[2]);
    };
    CHECK(dist(n0, n1) <= dist(n2, n3) + 1e-12);
}

TEST_CASE("rope casting demos: determinism, flick monotonicity, hindsight") {
    const TaskSpec spec = TaskSpec::desk_default(TaskId::rope_casting);
    const MaterialParams mat{3000.0, 0.3, 1.0};

    const Demonstration a = gen_rope_casting_demo(mat, spec, 21);
    const Demonstration b = gen_rope_casting_demo(mat, spec, 21);
    CHECK(same_demo(a, b));
    CHECK(a.y.size() == 2);
    CHECK(a.x.size() == 1);

    const Outcome replay = task_outcome(mat, spec, a.x, a.seed);
    CHECK(std::abs(replay.y[0] - a.y[0]) < 1e-6);
    CHECK(std::abs(replay.y[1] - a.y[1]) < 1e-6);

    // Stronger flicks raise the tip's highest point.
    double prev = -1.0;
    for (int i = 0; i < 5; ++i) {
        const double action =
            spec.action_range.lo +
            (spec.action_range.hi - spec.action_range.lo) * i / 4.0;
        const Outcome out = casting_outcome(mat, spec, action, 55);
        CHECK(out.y[1] > prev);
        prev = out.y[1];
    }
}

TEST_CASE("cloth spreading demo matches the exhaustive sweep and rejects hopeless ranges") {
    const TaskSpec spec = small_cloth_spec();

    for (double e : {600.0, 6000.0}) {
        const MaterialParams mat{e, 0.32, 1.0};
        const Demonstration d = gen_cloth_spreading_demo(mat, spec, 77);

        // Exhaustive sweep oracle: the minimal grid value reaching the target.
        double oracle = -1.0;
        for (double a = spec.accel_range.lo; a <= spec.accel_range.hi + 1e-12;
             a += spec.sweep_step) {
            if (cloth_spread_outcome(mat, spec, a, d.seed) >= spec.spread_target) {
                oracle = a;
                break;
            }
        }
        REQUIRE(oracle >= 0.0);
        CHECK(d.x[0] == doctest::Approx(oracle));
        CHECK(cloth_spread_outcome(mat, spec, d.x[0], d.seed) >= spec.spread_target);
        if (d.x[0] >= spec.sweep_step)
            CHECK(cloth_spread_outcome(mat, spec, d.x[0] - spec.sweep_step, d.seed) <
                  spec.spread_target);
        CHECK(d.y.empty());
    }

    TaskSpec hopeless = spec;
    hopeless.accel_range = {0.0, 0.004};  // a single sweep value that cannot spread
    CHECK_THROWS_AS(gen_cloth_spreading_demo({600.0, 0.32, 1.0}, hopeless, 77), TaskError);
}

TEST_CASE("dataset generation honors count, bounds, and seed streams") {
    TaskSpec spec = TaskSpec::desk_default(TaskId::rope_reaching);
    spec.horizon_frames = 50;
    spec.bounds = {1500.0, 8200.0, 0.34, 0.36};

    const auto demos = gen_dataset(spec, 6, 123);
    CHECK(demos.size() == 6);
    for (const auto& d : demos) {
        CHECK(d.e >= spec.bounds.e_min);
        CHECK(d.e <= spec.bounds.e_max);
        CHECK(d.nu >= spec.bounds.nu_min);
        CHECK(d.nu <= spec.bounds.nu_max);
        CHECK(d.y.size() == 3);
    }

    const auto again = gen_dataset(spec, 6, 123);
    for (int i = 0; i < 6; ++i) CHECK(same_demo(demos[i], again[i]));

    const auto other = gen_dataset(spec, 6, 124);
    bool any_diff = false;
    for (int i = 0; i < 6; ++i) any_diff |= !same_demo(demos[i], other[i]);
    CHECK(any_diff);
}
