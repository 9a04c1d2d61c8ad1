#include "defid/estimator.hpp"

#include <cmath>

#include "defid/rng.hpp"

namespace defid {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Keeps from_unbounded strictly inside the open interval in floating point.
constexpr double kThetaClip = 30.0;

}  // namespace

double from_unbounded(double theta, double lo, double hi) {
    theta = std::clamp(theta, -kThetaClip, kThetaClip);
    return lo + (hi - lo) * sigmoid(theta);
}

double to_unbounded(double p, double lo, double hi) {
    if (!(p > lo && p < hi))
        throw ConfigError("to_unbounded: value " + std::to_string(p) + " outside (" +
                          std::to_string(lo) + ", " + std::to_string(hi) + ")");
    const double s = (p - lo) / (hi - lo);
    return std::log(s / (1.0 - s));
}

int frames_to_cover(const SimState& initial, const std::vector<PointCloudFrame>& ref,
                    const SimConfig& sim) {
    if (ref.empty()) throw ConfigError("estimate: no reference frames");
    double t_last = ref.front().time;
    for (const auto& f : ref) t_last = std::max(t_last, f.time);
    const int n = static_cast<int>(std::lround((t_last - initial.time) / sim.frame_dt));
    return std::max(0, n);
}

LossGrad loss_and_grad(const SimState& initial, double e, double nu,
                       const std::vector<PointCloudFrame>& ref, const GripperPath& gripper,
                       const SimConfig& sim, LossMode mode, int raster_resolution,
                       const Vec3& raster_lo, const Vec3& raster_hi) {
    LossGrad out;
    const int n_frames = frames_to_cover(initial, ref, sim);
    try {
        const auto mat = seeded({e, nu, 1.0});
        const auto traj = rollout(to_state<Dual2>(initial), sim, mat, gripper, n_frames);
        const Dual2 loss =
            trajectory_loss(traj, ref, mode, raster_resolution, raster_lo, raster_hi);
        out.loss = loss.val;
        out.d_e = loss.de;
        out.d_nu = loss.dnu;
        out.finite = isfinite(loss);
    } catch (const NumericError&) {
        out.finite = false;
    }
    return out;
}

namespace {

RestartRecord run_restart(const SimState& initial, const std::vector<PointCloudFrame>& ref,
                          const GripperPath& gripper, const SimConfig& sim,
                          const ParamBounds& bounds, const EstimateConfig& cfg,
                          int restart_index) {
    Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(restart_index)));
    RestartRecord rec;
    if (static_cast<std::size_t>(restart_index) < cfg.init_overrides.size()) {
        rec.e_init = cfg.init_overrides[restart_index].first;
        rec.nu_init = cfg.init_overrides[restart_index].second;
    } else {
        rec.e_init = rng.uniform(bounds.e_min, bounds.e_max);
        rec.nu_init = rng.uniform(bounds.nu_min, bounds.nu_max);
    }

    double theta[2] = {to_unbounded(rec.e_init, bounds.e_min, bounds.e_max),
                       to_unbounded(rec.nu_init, bounds.nu_min, bounds.nu_max)};
    double m[2] = {0, 0}, v[2] = {0, 0};
    double last_update[2] = {0, 0};
    bool retried = false;
    int since_improvement = 0;
    int adam_steps = 0;

    for (int it = 0; it < cfg.iterations; ++it) {
        rec.iterations = it + 1;
        const double e = from_unbounded(theta[0], bounds.e_min, bounds.e_max);
        const double nu = from_unbounded(theta[1], bounds.nu_min, bounds.nu_max);
        const LossGrad lg = loss_and_grad(initial, e, nu, ref, gripper, sim, cfg.mode,
                                          cfg.raster_resolution, cfg.raster_lo, cfg.raster_hi);
        rec.loss_history.push_back(lg.finite ? lg.loss
                                             : std::numeric_limits<double>::quiet_NaN());

        if (!lg.finite) {
            ++rec.failures;
            if (retried || (last_update[0] == 0.0 && last_update[1] == 0.0)) break;
            // Step back half of the update that produced this iterate, once.
            theta[0] += 0.5 * last_update[0];
            theta[1] += 0.5 * last_update[1];
            last_update[0] *= 0.5;
            last_update[1] *= 0.5;
            retried = true;
            continue;
        }
        retried = false;

        const double improvement = rec.loss - lg.loss;
        if (lg.loss < rec.loss) {
            rec.loss = lg.loss;
            rec.e = e;
            rec.nu = nu;
        }
        if (lg.loss <= cfg.loss_tol) break;
        if (cfg.plateau_window > 0) {
            if (improvement > cfg.plateau_rtol * std::max(rec.loss, 1e-300))
                since_improvement = 0;
            else if (++since_improvement >= cfg.plateau_window)
                break;
        }

        // Chain rule through the sigmoid, then a standard Adam step.
        const double s_e = sigmoid(std::clamp(theta[0], -kThetaClip, kThetaClip));
        const double s_nu = sigmoid(std::clamp(theta[1], -kThetaClip, kThetaClip));
        const double grad[2] = {lg.d_e * (bounds.e_max - bounds.e_min) * s_e * (1.0 - s_e),
                                lg.d_nu * (bounds.nu_max - bounds.nu_min) * s_nu *
                                    (1.0 - s_nu)};
        ++adam_steps;
        for (int a = 0; a < 2; ++a) {
            m[a] = cfg.beta1 * m[a] + (1.0 - cfg.beta1) * grad[a];
            v[a] = cfg.beta2 * v[a] + (1.0 - cfg.beta2) * grad[a] * grad[a];
            const double mhat = m[a] / (1.0 - std::pow(cfg.beta1, adam_steps));
            const double vhat = v[a] / (1.0 - std::pow(cfg.beta2, adam_steps));
            const double update = cfg.step_size * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            theta[a] = std::clamp(theta[a] - update, -kThetaClip, kThetaClip);
            last_update[a] = update;
        }
    }
    return rec;
}

}  // namespace

EstimateResult estimate(const SimState& initial, const std::vector<PointCloudFrame>& ref,
                        const GripperPath& gripper, const SimConfig& sim,
                        const ParamBounds& bounds, const EstimateConfig& cfg) {
    bounds.validate();
    cfg.validate();
    sim.validate(bounds.e_max);
    if (ref.empty()) throw ConfigError("estimate: no reference frames");
    gripper.validate(initial.time + frames_to_cover(initial, ref, sim) * sim.frame_dt +
                     0.5 * sim.frame_dt);

    EstimateResult result;
    result.per_restart.resize(cfg.restarts);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int r = 0; r < cfg.restarts; ++r)
        result.per_restart[r] = run_restart(initial, ref, gripper, sim, bounds, cfg, r);

    for (int r = 0; r < cfg.restarts; ++r) {
        const auto& rec = result.per_restart[r];
        if (std::isfinite(rec.loss) && rec.loss < result.final_loss) {
            result.final_loss = rec.loss;
            result.e_hat = rec.e;
            result.nu_hat = rec.nu;
            result.best_restart = r;
        }
    }
    if (result.best_restart < 0) {
        std::string detail;
        for (const auto& rec : result.per_restart)
            detail += " [init E=" + std::to_string(rec.e_init) +
                      " nu=" + std::to_string(rec.nu_init) +
                      " failures=" + std::to_string(rec.failures) + "]";
        throw NumericError("estimate: every restart diverged;" + detail);
    }
    return result;
}

}  // namespace defid
