#pragma once

#include <array>
#include <functional>
#include <optional>

#include "defid/policy.hpp"
#include "defid/tasks.hpp"

namespace defid {

struct GoalRecord {
    double e = 0.0, nu = 0.0;
    std::vector<double> y;           // goal (feasible by construction)
    std::vector<double> x_hat;       // action the policy chose
    std::vector<double> y_achieved;  // what that action actually produced
    double error = 0.0;
    bool failed = false;  // rollout diverged; excluded from the mean
};

struct EvalReport {
    TaskId task = TaskId::rope_reaching;
    std::vector<GoalRecord> records;
    double mean = 0.0;
    double stddev = 0.0;
    int failures = 0;
    std::uint64_t seed = 0;
    std::string label;

    void finalize();
};

// The context a policy sees for one goal. oracle_x is the hindsight action
// that generated the goal; real policies must ignore it, the oracle baseline
// returns it.
struct GoalContext {
    std::vector<double> y;
    double e = 0.0, nu = 0.0;
    std::vector<double> oracle_x;
};

using PolicyFn = std::function<std::vector<double>(const GoalContext&)>;

PolicyFn wrap_policy(const MlpPolicy& p);
PolicyFn oracle_policy();
PolicyFn constant_policy(std::vector<double> x);

// Conditioning override: evaluate the policy as if the object had these
// parameters, regardless of the true simulated ones.
struct Conditioning {
    double e = 0.0, nu = 0.0;
};

// Per goal: draw (E, nu) from sampler_box, synthesize a feasible goal by
// hindsight under those parameters, query the policy, execute its action
// under the true parameters, and score the achieved goal quantity.
// `condition` replaces the policy's parameter inputs when set.
EvalReport evaluate_policy(const PolicyFn& policy, const TaskSpec& spec,
                           const ParamBounds& sampler_box, int n_goals, std::uint64_t seed,
                           std::optional<Conditioning> condition = {},
                           std::optional<MaterialParams> fixed_material = {});

struct AblationResult {
    std::array<InputMask, 4> masks{InputMask::both, InputMask::e_only, InputMask::nu_only,
                                   InputMask::none};
    std::array<EvalReport, 4> reports;
    std::array<double, 4> train_val_loss{};
};

// Trains the four masked variants on the same dataset and seed and evaluates
// them on the identical goal set.
AblationResult ablation_suite(const std::vector<Demonstration>& dataset, const TaskSpec& spec,
                              int n_goals, std::uint64_t seed, const TrainConfig& train_cfg);

// Paired in-domain / out-of-distribution reports with the same goal count.
std::pair<EvalReport, EvalReport> id_ood_suite(const MlpPolicy& policy, const TaskSpec& spec,
                                               const ParamBounds& ood_box, int n_goals,
                                               std::uint64_t seed);

struct E2eResult {
    EstimateResult estimate;
    EvalReport with_estimated;
    EvalReport with_true;
    EvalReport with_opposite;
    Conditioning opposite;
};

// One-shot closed loop: estimate (E, nu) from the reference clouds, then
// evaluate the policy conditioned on the estimate, on the hidden truth, and
// on the farthest corner of the bounds, all on the same goal set rolled out
// under the hidden truth.
E2eResult estimate_then_act(const SimState& ref_initial,
                            const std::vector<PointCloudFrame>& ref,
                            const GripperPath& ref_gripper, const SimConfig& ref_sim,
                            const ParamBounds& bounds, const EstimateConfig& est_cfg,
                            const MlpPolicy& policy, const TaskSpec& spec,
                            const MaterialParams& hidden_truth, int n_goals,
                            std::uint64_t seed);

}  // namespace defid
