#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defid/estimator.hpp"
#include "defid/sampling.hpp"
#include "defid/sim.hpp"

namespace defid {

enum class TaskId { rope_reaching, rope_casting, cloth_spreading };

std::string to_string(TaskId t);
TaskId task_from_string(const std::string& s);

struct Interval {
    double lo = 0.0, hi = 1.0;
};

struct Box3 {
    Vec3 lo{0, 0, 0}, hi{1, 1, 1};
};

struct TaskSpec {
    TaskId task = TaskId::rope_reaching;
    ParamBounds bounds{500.0, 10500.0, 0.2, 0.4};
    int horizon_frames = 80;
    SimConfig sim;  // substep_dt is re-derived per material from the stability bound
    RopeGeometry rope;
    ClothGeometry cloth;

    // rope reaching
    Box3 release_box{{0.38, 0.55, 0.38}, {0.62, 0.78, 0.62}};
    double carry_speed = 1.2;
    double hold_time = 0.05;

    // rope casting
    Interval action_range{0.4, 2.2};
    double impulse_time = 0.08;

    // cloth spreading
    Interval accel_range{0.0, 0.2};
    double sweep_step = 0.01;
    double spread_target = 0.75;
    double step_length = 0.01;  // world units per schedule unit
    int frames_per_step = 2;
    int settle_frames = 35;
    double drape_time = 0.1;

    void validate() const;

    int y_dim() const { return task == TaskId::rope_reaching ? 3
                                                             : task == TaskId::rope_casting ? 2 : 0; }
    int x_dim() const { return task == TaskId::rope_reaching ? 3 : 1; }

    // Tuned desk-scale scenarios; the CLI's built-in config and the
    // acceptance suite start from these.
    static TaskSpec desk_default(TaskId task);
};

// One hindsight-relabeled training record.
struct Demonstration {
    TaskId task = TaskId::rope_reaching;
    double e = 0.0;
    double nu = 0.0;
    std::vector<double> y;
    std::vector<double> x;
    std::uint64_t seed = 0;
};

struct TaskError : NumericError {
    using NumericError::NumericError;
};

// Rolls out action X under the given material and returns the goal quantity
// the task records (the hindsight label). Shared by demo generation and
// closed-loop evaluation so oracle replay is exact.
struct Outcome {
    std::vector<double> y;
    bool left_workspace = false;
};

Outcome reaching_outcome(const MaterialParams& mat, const TaskSpec& spec, const Vec3& release,
                         std::uint64_t seed);
Outcome casting_outcome(const MaterialParams& mat, const TaskSpec& spec, double action,
                        std::uint64_t seed);
// For cloth the outcome is the spread ratio achieved by acceleration shape A.
double cloth_spread_outcome(const MaterialParams& mat, const TaskSpec& spec, double accel,
                            std::uint64_t seed);
Outcome task_outcome(const MaterialParams& mat, const TaskSpec& spec,
                     const std::vector<double>& x, std::uint64_t seed);

// The paper-defined per-step travel of the cloth spreading schedule.
double cloth_step_distance(double accel, int step);

// Footprint coverage relative to the flat rest pose, in [0, 1].
double spread_ratio(std::span<const Vec3> positions, const ClothGeometry& cloth);

Demonstration gen_rope_reaching_demo(const MaterialParams& mat, const TaskSpec& spec,
                                     std::uint64_t seed);
Demonstration gen_rope_casting_demo(const MaterialParams& mat, const TaskSpec& spec,
                                    std::uint64_t seed);
Demonstration gen_cloth_spreading_demo(const MaterialParams& mat, const TaskSpec& spec,
                                       std::uint64_t seed);
Demonstration gen_demo(const MaterialParams& mat, const TaskSpec& spec, std::uint64_t seed);

// count independent demos, (E, nu) uniform in spec.bounds, parallel across
// demos, ordered by index.
std::vector<Demonstration> gen_dataset(const TaskSpec& spec, int count, std::uint64_t seed);

}  // namespace defid
