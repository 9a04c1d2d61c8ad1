#pragma once

#include <cstdint>
#include <vector>

#include "defid/density.hpp"
#include "defid/gripper.hpp"
#include "defid/sim.hpp"

namespace defid {

struct ParamBounds {
    double e_min = 1500.0;
    double e_max = 8200.0;
    double nu_min = 0.34;
    double nu_max = 0.36;

    void validate() const {
        if (!(0.0 < e_min && e_min < e_max))
            throw ConfigError("bounds: need 0 < e_min < e_max");
        if (!(0.0 < nu_min && nu_min < nu_max && nu_max < 0.5))
            throw ConfigError("bounds: need 0 < nu_min < nu_max < 0.5");
    }
};

struct EstimateConfig {
    int restarts = 5;
    int iterations = 150;
    double step_size = 0.05;  // Adam learning rate in reparameterized space
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    LossMode mode = LossMode::all_steps;
    std::uint64_t seed = 0;
    // Early stopping: loss at or below loss_tol, or no relative improvement
    // of plateau_rtol over plateau_window iterations (0 disables).
    double loss_tol = 1e-9;
    int plateau_window = 0;
    double plateau_rtol = 1e-3;
    // Restart r starts here instead of a random draw when provided.
    std::vector<std::pair<double, double>> init_overrides;
    int raster_resolution = 64;
    Vec3 raster_lo{0, 0, 0};
    Vec3 raster_hi{1, 1, 1};

    void validate() const {
        if (restarts < 1) throw ConfigError("estimate: restarts must be >= 1");
        if (iterations < 1) throw ConfigError("estimate: iterations must be >= 1");
        if (!(step_size > 0.0)) throw ConfigError("estimate: step_size must be > 0");
    }
};

struct RestartRecord {
    double e_init = 0.0, nu_init = 0.0;
    double e = 0.0, nu = 0.0;  // best iterate seen
    double loss = std::numeric_limits<double>::infinity();
    int iterations = 0;
    int failures = 0;  // rejected diverged iterates
    std::vector<double> loss_history;
};

struct EstimateResult {
    double e_hat = 0.0;
    double nu_hat = 0.0;
    double final_loss = std::numeric_limits<double>::infinity();
    int best_restart = -1;
    std::vector<RestartRecord> per_restart;
};

// Sigmoid reparameterization keeping iterates strictly inside (lo, hi).
double to_unbounded(double p, double lo, double hi);
double from_unbounded(double theta, double lo, double hi);

struct LossGrad {
    double loss = std::numeric_limits<double>::quiet_NaN();
    double d_e = 0.0;
    double d_nu = 0.0;
    bool finite = false;
};

// One dual-seeded rollout through trajectory_loss. Divergence comes back as
// finite=false rather than an exception.
LossGrad loss_and_grad(const SimState& initial, double e, double nu,
                       const std::vector<PointCloudFrame>& ref, const GripperPath& gripper,
                       const SimConfig& sim, LossMode mode, int raster_resolution,
                       const Vec3& raster_lo, const Vec3& raster_hi);

// Multi-restart bounded Adam on (E, nu). Restarts run in parallel; the winner
// is the lowest best-seen loss (ties to the lower restart index).
EstimateResult estimate(const SimState& initial, const std::vector<PointCloudFrame>& ref,
                        const GripperPath& gripper, const SimConfig& sim,
                        const ParamBounds& bounds, const EstimateConfig& cfg);

// Frame count needed for a rollout to cover the last reference time.
int frames_to_cover(const SimState& initial, const std::vector<PointCloudFrame>& ref,
                    const SimConfig& sim);

}  // namespace defid
