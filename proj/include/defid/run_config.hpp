#pragma once

#include <optional>
#include <string>

#include "defid/estimator.hpp"
#include "defid/policy.hpp"
#include "defid/tasks.hpp"

namespace defid {

// The object and predefined action used by simulate/estimate (the lifting
// demonstration the parameters are identified from).
struct ScenarioSpec {
    enum class Object { rope, cloth };
    Object object = Object::rope;
    RopeGeometry rope;
    ClothGeometry cloth;

    // "lift": hold, then move by lift_displacement over lift_duration.
    // "hold": static pin. "none": free body. "waypoints": explicit path.
    std::string gripper = "lift";
    double hold_time = 0.05;
    Vec3 lift_displacement{0.0, 0.22, 0.0};
    double lift_duration = 0.25;
    std::optional<double> release_time;
    std::vector<std::pair<double, Vec3>> waypoints;
    int frames = 60;
    double material_e = 3000.0;  // simulate's default material
    double material_nu = 0.35;

    SimState initial_state(std::uint64_t seed) const;
    GripperPath build_gripper() const;
};

struct EvalSection {
    int n_goals = 30;
    ParamBounds ood_bounds{500.0, 1500.0, 0.3, 0.33};
};

struct TrainSection {
    TrainConfig config;
    std::vector<int> hidden{64, 64, 64};
};

// One document covering every pipeline stage; unknown keys are rejected.
struct RunConfig {
    SimConfig sim;          // simulate/estimate scenario simulation
    ScenarioSpec scenario;  // simulate/estimate object + predefined action
    ParamBounds bounds{1500.0, 8200.0, 0.34, 0.36};  // estimation box
    EstimateConfig estimate;
    TaskSpec task = TaskSpec::desk_default(TaskId::rope_reaching);
    TrainSection train;
    EvalSection eval;
    std::uint64_t seed = 0;

    // Desk-scale defaults used when no --config is given.
    static RunConfig desk_default();

    static RunConfig from_json_text(const std::string& text);
    static RunConfig from_file(const std::string& path);
    std::string to_json_text() const;  // effective config, echo-stable
};

}  // namespace defid
