#include "defid/evalharness.hpp"

#include <cmath>

#include "defid/rng.hpp"

namespace defid {

void EvalReport::finalize() {
    double sum = 0.0;
    int n = 0;
    failures = 0;
    for (const auto& r : records) {
        if (r.failed) {
            ++failures;
            continue;
        }
        sum += r.error;
        ++n;
    }
    mean = n > 0 ? sum / n : 0.0;
    double var = 0.0;
    for (const auto& r : records)
        if (!r.failed) var += (r.error - mean) * (r.error - mean);
    stddev = n > 1 ? std::sqrt(var / (n - 1)) : 0.0;
}

PolicyFn wrap_policy(const MlpPolicy& p) {
    return [p](const GoalContext& g) { return p.forward(g.y, g.e, g.nu); };
}

PolicyFn oracle_policy() {
    return [](const GoalContext& g) { return g.oracle_x; };
}

PolicyFn constant_policy(std::vector<double> x) {
    return [x = std::move(x)](const GoalContext&) { return x; };
}

namespace {

double goal_error(const TaskSpec& spec, const Demonstration& goal_demo,
                  const std::vector<double>& x_hat, const Outcome& achieved) {
    if (spec.task == TaskId::cloth_spreading) {
        // |dA| surrogate; the achieved spread ratio is reported alongside.
        return std::abs(x_hat[0] - goal_demo.x[0]);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < goal_demo.y.size(); ++i)
        s += (achieved.y[i] - goal_demo.y[i]) * (achieved.y[i] - goal_demo.y[i]);
    return std::sqrt(s);
}

}  // namespace

EvalReport evaluate_policy(const PolicyFn& policy, const TaskSpec& spec,
                           const ParamBounds& sampler_box, int n_goals, std::uint64_t seed,
                           std::optional<Conditioning> condition,
                           std::optional<MaterialParams> fixed_material) {
    spec.validate();
    if (n_goals < 1) throw ConfigError("evaluate_policy: need at least one goal");

    EvalReport report;
    report.task = spec.task;
    report.seed = seed;
    report.records.resize(n_goals);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n_goals; ++i) {
        GoalRecord rec;
        const std::uint64_t goal_seed = mix_seed(seed, static_cast<std::uint64_t>(i));
        Rng rng(mix_seed(goal_seed, 0xE7A1ull));
        const MaterialParams mat =
            fixed_material ? *fixed_material
                           : MaterialParams{rng.uniform(sampler_box.e_min, sampler_box.e_max),
                                            rng.uniform(sampler_box.nu_min, sampler_box.nu_max),
                                            1.0};
        rec.e = mat.youngs_modulus;
        rec.nu = mat.poissons_ratio;
        try {
            const Demonstration goal_demo = gen_demo(mat, spec, goal_seed);
            rec.y = goal_demo.y;

            GoalContext ctx;
            ctx.y = goal_demo.y;
            ctx.e = condition ? condition->e : mat.youngs_modulus;
            ctx.nu = condition ? condition->nu : mat.poissons_ratio;
            ctx.oracle_x = goal_demo.x;
            rec.x_hat = policy(ctx);

            const Outcome achieved = task_outcome(mat, spec, rec.x_hat, goal_demo.seed);
            rec.y_achieved = achieved.y;
            rec.error = goal_error(spec, goal_demo, rec.x_hat, achieved);
        } catch (const NumericError&) {
            rec.failed = true;
        }
        report.records[i] = rec;
    }
    report.finalize();
    return report;
}

AblationResult ablation_suite(const std::vector<Demonstration>& dataset, const TaskSpec& spec,
                              int n_goals, std::uint64_t seed, const TrainConfig& train_cfg) {
    AblationResult result;
    for (std::size_t m = 0; m < result.masks.size(); ++m) {
        const auto trained = train_policy(dataset, spec.task, result.masks[m], train_cfg);
        result.train_val_loss[m] = trained.best_val_loss;
        result.reports[m] = evaluate_policy(wrap_policy(trained.policy), spec, spec.bounds,
                                            n_goals, seed);
        result.reports[m].label = to_string(result.masks[m]);
    }
    return result;
}

std::pair<EvalReport, EvalReport> id_ood_suite(const MlpPolicy& policy, const TaskSpec& spec,
                                               const ParamBounds& ood_box, int n_goals,
                                               std::uint64_t seed) {
    ood_box.validate();
    // The suite only makes sense when the policy was trained away from the
    // OOD box; overlap with the sampler bounds is the caller's contract.
    EvalReport id = evaluate_policy(wrap_policy(policy), spec, spec.bounds, n_goals,
                                    mix_seed(seed, 1));
    id.label = "id";
    EvalReport ood =
        evaluate_policy(wrap_policy(policy), spec, ood_box, n_goals, mix_seed(seed, 2));
    ood.label = "ood";
    return {std::move(id), std::move(ood)};
}

E2eResult estimate_then_act(const SimState& ref_initial,
                            const std::vector<PointCloudFrame>& ref,
                            const GripperPath& ref_gripper, const SimConfig& ref_sim,
                            const ParamBounds& bounds, const EstimateConfig& est_cfg,
                            const MlpPolicy& policy, const TaskSpec& spec,
                            const MaterialParams& hidden_truth, int n_goals,
                            std::uint64_t seed) {
    E2eResult out;
    out.estimate = estimate(ref_initial, ref, ref_gripper, ref_sim, bounds, est_cfg);

    const double e_mid = 0.5 * (bounds.e_min + bounds.e_max);
    const double nu_mid = 0.5 * (bounds.nu_min + bounds.nu_max);
    out.opposite = {hidden_truth.youngs_modulus > e_mid ? bounds.e_min : bounds.e_max,
                    hidden_truth.poissons_ratio > nu_mid ? bounds.nu_min : bounds.nu_max};

    const PolicyFn fn = wrap_policy(policy);
    out.with_estimated = evaluate_policy(fn, spec, bounds, n_goals, seed,
                                         Conditioning{out.estimate.e_hat, out.estimate.nu_hat},
                                         hidden_truth);
    out.with_estimated.label = "estimated";
    out.with_true = evaluate_policy(
        fn, spec, bounds, n_goals, seed,
        Conditioning{hidden_truth.youngs_modulus, hidden_truth.poissons_ratio}, hidden_truth);
    out.with_true.label = "true";
    out.with_opposite =
        evaluate_policy(fn, spec, bounds, n_goals, seed, out.opposite, hidden_truth);
    out.with_opposite.label = "opposite";
    return out;
}

}  // namespace defid
