#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "defid/estimator.hpp"
#include "defid/rng.hpp"
#include "defid/sampling.hpp"

using namespace defid;

namespace {

struct Scenario {
    SimConfig cfg;
    SimState init;
    GripperPath grip;
    int frames = 12;
};

Scenario lift_scenario(double e_max) {
    Scenario s;
    s.cfg.grid_resolution = 24;
    s.cfg.frame_dt = 1e-2;
    s.cfg = s.cfg.with_stable_dt(e_max);
    RopeGeometry g;
    g.length = 0.2;
    g.radius = 0.015;
    g.particle_spacing = 0.0075;
    g.anchor = {0.5, 0.6, 0.5};
    s.init = sample_rope(g, 21);
    s.grip.pinned_tags = {ParticleTag::grip};
    s.grip.anchor = g.anchor;
    s.grip.waypoints = {{0.0, g.anchor}, {0.12, g.anchor + Vec3{0.06, 0.1, 0.0}}};
    return s;
}

std::vector<PointCloudFrame> reference_for(const Scenario& s, const MaterialParams& mat) {
    const auto traj = rollout(s.init, s.cfg, mat, s.grip, s.frames);
    std::vector<PointCloudFrame> out;
    for (const auto& f : traj.frames) out.push_back({f.time, f.positions});
    return out;
}

}  // namespace

TEST_CASE("bound reparameterization") {
    CHECK(from_unbounded(0.0, 10.0, 20.0) == doctest::Approx(15.0));
    CHECK(from_unbounded(50.0, 10.0, 20.0) <= 20.0);
    CHECK(from_unbounded(50.0, 10.0, 20.0) > 19.999);
    CHECK(from_unbounded(-50.0, 10.0, 20.0) >= 10.0);
    CHECK(from_unbounded(-50.0, 10.0, 20.0) < 10.001);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        const double lo = rng.uniform(0.1, 5.0);
        const double hi = lo + rng.uniform(0.5, 100.0);
        const double p = rng.uniform(lo + 1e-6 * (hi - lo), hi - 1e-6 * (hi - lo));
        const double back = from_unbounded(to_unbounded(p, lo, hi), lo, hi);
        CHECK(back == doctest::Approx(p).epsilon(1e-12));
    }

    CHECK_THROWS_AS(to_unbounded(9.0, 10.0, 20.0), ConfigError);
    CHECK_THROWS_AS(to_unbounded(10.0, 10.0, 20.0), ConfigError);
}

TEST_CASE("loss_and_grad at the generating parameters is a global minimum") {
    const Scenario s = lift_scenario(5000.0);
    const MaterialParams truth{3200.0, 0.35, 1.0};
    const auto ref = reference_for(s, truth);

    const auto lg = loss_and_grad(s.init, truth.youngs_modulus, truth.poissons_ratio, ref,
                                  s.grip, s.cfg, LossMode::all_steps, 64, {0, 0, 0},
                                  {1, 1, 1});
    CHECK(lg.finite);
    CHECK(lg.loss < 1e-9);
    CHECK(std::abs(lg.d_e) < 1e-6);
    CHECK(std::abs(lg.d_nu) < 1e-6);
}

TEST_CASE("loss gradient sign: stiff query against a soft reference") {
    const Scenario s = lift_scenario(5000.0);
    const auto ref = reference_for(s, {2000.0, 0.35, 1.0});
    const auto lg = loss_and_grad(s.init, 4500.0, 0.35, ref, s.grip, s.cfg,
                                  LossMode::all_steps, 64, {0, 0, 0}, {1, 1, 1});
    CHECK(lg.finite);
    CHECK(lg.loss > 1e-4);
    CHECK(lg.d_e > 0.0);  // moving stiffer increases the mismatch
}

TEST_CASE("estimate: self-consistency, lattice dominance, determinism") {
    const Scenario s = lift_scenario(5000.0);
    const ParamBounds bounds{1800.0, 5000.0, 0.30, 0.40};
    const MaterialParams truth{2600.0, 0.36, 1.0};
    const auto ref = reference_for(s, truth);

    EstimateConfig cfg;
    cfg.restarts = 3;
    cfg.iterations = 40;
    cfg.step_size = 0.3;
    cfg.plateau_window = 8;
    cfg.plateau_rtol = 1e-3;
    cfg.seed = 7;

    const EstimateResult res = estimate(s.init, ref, s.grip, s.cfg, bounds, cfg);
    CHECK(std::abs(res.e_hat - truth.youngs_modulus) <=
          0.05 * (bounds.e_max - bounds.e_min));
    CHECK(std::abs(res.nu_hat - truth.poissons_ratio) <= 0.01);

    // Every recorded iterate strictly inside the bounds.
    for (const auto& rec : res.per_restart) {
        CHECK(rec.e > bounds.e_min);
        CHECK(rec.e < bounds.e_max);
        CHECK(rec.nu > bounds.nu_min);
        CHECK(rec.nu < bounds.nu_max);
        CHECK(rec.loss == doctest::Approx(*std::min_element(
                              rec.loss_history.begin(), rec.loss_history.end())));
    }
    CHECK(res.final_loss ==
          doctest::Approx(res.per_restart[res.best_restart].loss));

    // Beats a coarse lattice scan of the box.
    double lattice_best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
            const double e = bounds.e_min + (bounds.e_max - bounds.e_min) * (i + 0.5) / 8;
            const double nu =
                bounds.nu_min + (bounds.nu_max - bounds.nu_min) * (j + 0.5) / 8;
            const auto lg = loss_and_grad(s.init, e, nu, ref, s.grip, s.cfg,
                                          LossMode::all_steps, 64, {0, 0, 0}, {1, 1, 1});
            if (lg.finite) lattice_best = std::min(lattice_best, lg.loss);
        }
    CHECK(res.final_loss <= lattice_best);

    const EstimateResult again = estimate(s.init, ref, s.grip, s.cfg, bounds, cfg);
    CHECK(again.e_hat == res.e_hat);
    CHECK(again.nu_hat == res.nu_hat);
    CHECK(again.final_loss == res.final_loss);
}

TEST_CASE("estimate starting at the truth converges immediately") {
    const Scenario s = lift_scenario(4000.0);
    const MaterialParams truth{3000.0, 0.35, 1.0};
    const auto ref = reference_for(s, truth);

    const ParamBounds bounds{1500.0, 4000.0, 0.3, 0.4};
    EstimateConfig cfg;
    cfg.restarts = 1;
    cfg.iterations = 50;
    cfg.seed = 3;
    cfg.init_overrides = {{truth.youngs_modulus, truth.poissons_ratio}};
    const EstimateResult res = estimate(s.init, ref, s.grip, s.cfg, bounds, cfg);
    CHECK(res.per_restart[0].iterations <= 5);
    CHECK(res.final_loss < 1e-9);
}
