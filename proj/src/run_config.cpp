#include "defid/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace defid {

using nlohmann::json;

namespace {

// Wraps a JSON object so every key must be consumed; finish() rejects typos.
class ObjectReader {
  public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        if (!j_.contains(key)) return;
        seen_.insert(key);
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(where_ + "." + key + ": " + e.what());
        }
    }

    bool has(const char* key) {
        if (j_.contains(key)) {
            seen_.insert(key);
            return true;
        }
        return false;
    }

    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.count(key))
                throw ConfigError(where_ + ": unknown key '" + key + "'");
    }

  private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

Vec3 vec3_from(const json& j, const std::string& where) {
    if (!j.is_array() || j.size() != 3)
        throw ConfigError(where + ": expected [x, y, z]");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json vec3_to(const Vec3& v) { return json::array({v.x, v.y, v.z}); }

void read_sim(const json& j, SimConfig& sim, const std::string& where) {
    ObjectReader r(j, where);
    r.get("grid_resolution", sim.grid_resolution);
    r.get("substep_dt", sim.substep_dt);
    r.get("frame_dt", sim.frame_dt);
    if (r.has("gravity")) sim.gravity = vec3_from(r.raw("gravity"), where + ".gravity");
    if (r.has("boundary")) {
        const auto s = r.raw("boundary").get<std::string>();
        if (s == "sticky")
            sim.boundary = BoundaryKind::sticky;
        else if (s == "separate")
            sim.boundary = BoundaryKind::separate;
        else
            throw ConfigError(where + ".boundary: expected 'sticky' or 'separate'");
    }
    r.get("damping", sim.damping);
    r.finish();
}

json sim_to_json(const SimConfig& sim) {
    json j;
    j["grid_resolution"] = sim.grid_resolution;
    j["substep_dt"] = sim.substep_dt;
    j["frame_dt"] = sim.frame_dt;
    j["gravity"] = vec3_to(sim.gravity);
    j["boundary"] = sim.boundary == BoundaryKind::sticky ? "sticky" : "separate";
    j["damping"] = sim.damping;
    return j;
}

void read_rope(const json& j, RopeGeometry& g, const std::string& where) {
    ObjectReader r(j, where);
    r.get("length", g.length);
    r.get("radius", g.radius);
    r.get("particle_spacing", g.particle_spacing);
    if (r.has("anchor")) g.anchor = vec3_from(r.raw("anchor"), where + ".anchor");
    if (r.has("axis")) {
        const auto s = r.raw("axis").get<std::string>();
        if (s == "down")
            g.axis = RopeAxis::down;
        else if (s == "along_x")
            g.axis = RopeAxis::along_x;
        else
            throw ConfigError(where + ".axis: expected 'down' or 'along_x'");
    }
    r.get("jitter", g.jitter);
    r.get("density", g.density);
    r.finish();
}

json rope_to_json(const RopeGeometry& g) {
    json j;
    j["length"] = g.length;
    j["radius"] = g.radius;
    j["particle_spacing"] = g.particle_spacing;
    j["anchor"] = vec3_to(g.anchor);
    j["axis"] = g.axis == RopeAxis::down ? "down" : "along_x";
    j["jitter"] = g.jitter;
    j["density"] = g.density;
    return j;
}

void read_cloth(const json& j, ClothGeometry& g, const std::string& where) {
    ObjectReader r(j, where);
    r.get("side", g.side);
    r.get("thickness", g.thickness);
    r.get("particle_spacing", g.particle_spacing);
    if (r.has("anchor")) g.anchor = vec3_from(r.raw("anchor"), where + ".anchor");
    r.get("jitter", g.jitter);
    r.get("density", g.density);
    r.finish();
}

json cloth_to_json(const ClothGeometry& g) {
    json j;
    j["side"] = g.side;
    j["thickness"] = g.thickness;
    j["particle_spacing"] = g.particle_spacing;
    j["anchor"] = vec3_to(g.anchor);
    j["jitter"] = g.jitter;
    j["density"] = g.density;
    return j;
}

void read_bounds(const json& j, ParamBounds& b, const std::string& where) {
    ObjectReader r(j, where);
    r.get("e_min", b.e_min);
    r.get("e_max", b.e_max);
    r.get("nu_min", b.nu_min);
    r.get("nu_max", b.nu_max);
    r.finish();
    b.validate();
}

json bounds_to_json(const ParamBounds& b) {
    json j;
    j["e_min"] = b.e_min;
    j["e_max"] = b.e_max;
    j["nu_min"] = b.nu_min;
    j["nu_max"] = b.nu_max;
    return j;
}

void read_scenario(const json& j, ScenarioSpec& s, const std::string& where) {
    ObjectReader r(j, where);
    if (r.has("object")) {
        const auto o = r.raw("object").get<std::string>();
        if (o == "rope")
            s.object = ScenarioSpec::Object::rope;
        else if (o == "cloth")
            s.object = ScenarioSpec::Object::cloth;
        else
            throw ConfigError(where + ".object: expected 'rope' or 'cloth'");
    }
    if (r.has("rope")) read_rope(r.raw("rope"), s.rope, where + ".rope");
    if (r.has("cloth")) read_cloth(r.raw("cloth"), s.cloth, where + ".cloth");
    r.get("gripper", s.gripper);
    r.get("hold_time", s.hold_time);
    if (r.has("lift_displacement"))
        s.lift_displacement =
            vec3_from(r.raw("lift_displacement"), where + ".lift_displacement");
    r.get("lift_duration", s.lift_duration);
    if (r.has("release_time")) s.release_time = r.raw("release_time").get<double>();
    if (r.has("waypoints")) {
        s.waypoints.clear();
        for (const auto& w : r.raw("waypoints")) {
            if (!w.is_array() || w.size() != 4)
                throw ConfigError(where + ".waypoints: expected [t, x, y, z] entries");
            s.waypoints.emplace_back(w[0].get<double>(),
                                     Vec3{w[1].get<double>(), w[2].get<double>(),
                                          w[3].get<double>()});
        }
    }
    r.get("frames", s.frames);
    r.get("material_e", s.material_e);
    r.get("material_nu", s.material_nu);
    r.finish();
    if (s.gripper != "lift" && s.gripper != "hold" && s.gripper != "none" &&
        s.gripper != "waypoints")
        throw ConfigError(where + ".gripper: expected lift|hold|none|waypoints");
}

json scenario_to_json(const ScenarioSpec& s) {
    json j;
    j["object"] = s.object == ScenarioSpec::Object::rope ? "rope" : "cloth";
    j["rope"] = rope_to_json(s.rope);
    j["cloth"] = cloth_to_json(s.cloth);
    j["gripper"] = s.gripper;
    j["hold_time"] = s.hold_time;
    j["lift_displacement"] = vec3_to(s.lift_displacement);
    j["lift_duration"] = s.lift_duration;
    if (s.release_time) j["release_time"] = *s.release_time;
    if (!s.waypoints.empty()) {
        json w = json::array();
        for (const auto& [t, p] : s.waypoints) w.push_back(json::array({t, p.x, p.y, p.z}));
        j["waypoints"] = w;
    }
    j["frames"] = s.frames;
    j["material_e"] = s.material_e;
    j["material_nu"] = s.material_nu;
    return j;
}

void read_estimate(const json& j, EstimateConfig& e, const std::string& where) {
    ObjectReader r(j, where);
    r.get("restarts", e.restarts);
    r.get("iterations", e.iterations);
    r.get("step_size", e.step_size);
    r.get("beta1", e.beta1);
    r.get("beta2", e.beta2);
    r.get("adam_eps", e.adam_eps);
    if (r.has("mode")) {
        const auto m = r.raw("mode").get<std::string>();
        if (m == "all_steps")
            e.mode = LossMode::all_steps;
        else if (m == "last_step")
            e.mode = LossMode::last_step;
        else
            throw ConfigError(where + ".mode: expected all_steps|last_step");
    }
    r.get("seed", e.seed);
    r.get("loss_tol", e.loss_tol);
    r.get("plateau_window", e.plateau_window);
    r.get("plateau_rtol", e.plateau_rtol);
    r.get("raster_resolution", e.raster_resolution);
    if (r.has("raster_lo")) e.raster_lo = vec3_from(r.raw("raster_lo"), where + ".raster_lo");
    if (r.has("raster_hi")) e.raster_hi = vec3_from(r.raw("raster_hi"), where + ".raster_hi");
    r.finish();
}

json estimate_to_json(const EstimateConfig& e) {
    json j;
    j["restarts"] = e.restarts;
    j["iterations"] = e.iterations;
    j["step_size"] = e.step_size;
    j["beta1"] = e.beta1;
    j["beta2"] = e.beta2;
    j["adam_eps"] = e.adam_eps;
    j["mode"] = e.mode == LossMode::all_steps ? "all_steps" : "last_step";
    j["seed"] = e.seed;
    j["loss_tol"] = e.loss_tol;
    j["plateau_window"] = e.plateau_window;
    j["plateau_rtol"] = e.plateau_rtol;
    j["raster_resolution"] = e.raster_resolution;
    j["raster_lo"] = vec3_to(e.raster_lo);
    j["raster_hi"] = vec3_to(e.raster_hi);
    return j;
}

void read_task(const json& j, TaskSpec& t, const std::string& where) {
    // The task id selects the desk defaults the other keys override.
    if (j.contains("task")) t = TaskSpec::desk_default(task_from_string(j.at("task")));
    ObjectReader r(j, where);
    r.has("task");
    if (r.has("bounds")) read_bounds(r.raw("bounds"), t.bounds, where + ".bounds");
    r.get("horizon_frames", t.horizon_frames);
    if (r.has("sim")) read_sim(r.raw("sim"), t.sim, where + ".sim");
    if (r.has("rope")) read_rope(r.raw("rope"), t.rope, where + ".rope");
    if (r.has("cloth")) read_cloth(r.raw("cloth"), t.cloth, where + ".cloth");
    if (r.has("release_box")) {
        const auto& b = r.raw("release_box");
        if (!b.is_array() || b.size() != 2)
            throw ConfigError(where + ".release_box: expected [[lo...],[hi...]]");
        t.release_box.lo = vec3_from(b[0], where + ".release_box.lo");
        t.release_box.hi = vec3_from(b[1], where + ".release_box.hi");
    }
    r.get("carry_speed", t.carry_speed);
    r.get("hold_time", t.hold_time);
    if (r.has("action_range")) {
        const auto& a = r.raw("action_range");
        t.action_range = {a.at(0).get<double>(), a.at(1).get<double>()};
    }
    r.get("impulse_time", t.impulse_time);
    if (r.has("accel_range")) {
        const auto& a = r.raw("accel_range");
        t.accel_range = {a.at(0).get<double>(), a.at(1).get<double>()};
    }
    r.get("sweep_step", t.sweep_step);
    r.get("spread_target", t.spread_target);
    r.get("step_length", t.step_length);
    r.get("frames_per_step", t.frames_per_step);
    r.get("settle_frames", t.settle_frames);
    r.get("drape_time", t.drape_time);
    r.finish();
    t.validate();
}

json task_to_json(const TaskSpec& t) {
    json j;
    j["task"] = to_string(t.task);
    j["bounds"] = bounds_to_json(t.bounds);
    j["horizon_frames"] = t.horizon_frames;
    j["sim"] = sim_to_json(t.sim);
    j["rope"] = rope_to_json(t.rope);
    j["cloth"] = cloth_to_json(t.cloth);
    j["release_box"] =
        json::array({vec3_to(t.release_box.lo), vec3_to(t.release_box.hi)});
    j["carry_speed"] = t.carry_speed;
    j["hold_time"] = t.hold_time;
    j["action_range"] = json::array({t.action_range.lo, t.action_range.hi});
    j["impulse_time"] = t.impulse_time;
    j["accel_range"] = json::array({t.accel_range.lo, t.accel_range.hi});
    j["sweep_step"] = t.sweep_step;
    j["spread_target"] = t.spread_target;
    j["step_length"] = t.step_length;
    j["frames_per_step"] = t.frames_per_step;
    j["settle_frames"] = t.settle_frames;
    j["drape_time"] = t.drape_time;
    return j;
}

void read_train(const json& j, TrainSection& t, const std::string& where) {
    ObjectReader r(j, where);
    r.get("batch_size", t.config.batch_size);
    r.get("epochs", t.config.epochs);
    r.get("learning_rate", t.config.learning_rate);
    r.get("train_fraction", t.config.train_fraction);
    r.get("seed", t.config.seed);
    r.get("hidden", t.hidden);
    r.finish();
    t.config.validate();
}

json train_to_json(const TrainSection& t) {
    json j;
    j["batch_size"] = t.config.batch_size;
    j["epochs"] = t.config.epochs;
    j["learning_rate"] = t.config.learning_rate;
    j["train_fraction"] = t.config.train_fraction;
    j["seed"] = t.config.seed;
    j["hidden"] = t.hidden;
    return j;
}

void read_eval(const json& j, EvalSection& e, const std::string& where) {
    ObjectReader r(j, where);
    r.get("n_goals", e.n_goals);
    if (r.has("ood_bounds")) read_bounds(r.raw("ood_bounds"), e.ood_bounds, where + ".ood_bounds");
    r.finish();
}

json eval_to_json(const EvalSection& e) {
    json j;
    j["n_goals"] = e.n_goals;
    j["ood_bounds"] = bounds_to_json(e.ood_bounds);
    return j;
}

}  // namespace

SimState ScenarioSpec::initial_state(std::uint64_t seed) const {
    return object == Object::rope ? sample_rope(rope, seed) : sample_cloth(cloth, seed);
}

GripperPath ScenarioSpec::build_gripper() const {
    GripperPath g;
    if (gripper == "none") return g;
    // The cloth identification action grabs the tagged (+x, +z) corner.
    const Vec3 anchor =
        object == Object::rope
            ? rope.anchor
            : cloth.anchor + Vec3{0.5 * cloth.side - cloth.particle_spacing, 0.0,
                                  0.5 * cloth.side - cloth.particle_spacing};
    g.anchor = anchor;
    if (object == Object::rope)
        g.pinned_tags = {ParticleTag::grip};
    else
        g.pinned_tags = {ParticleTag::corner};
    if (gripper == "lift") {
        g.waypoints = {{0.0, anchor},
                       {hold_time, anchor},
                       {hold_time + lift_duration, anchor + lift_displacement}};
    } else if (gripper == "waypoints") {
        if (waypoints.size() < 2)
            throw ConfigError("scenario: waypoint gripper needs at least 2 waypoints");
        g.waypoints = waypoints;
    }
    g.release_time = release_time;
    return g;
}

RunConfig RunConfig::desk_default() {
    RunConfig c;
    c.sim.grid_resolution = 24;
    c.sim.frame_dt = 5e-3;
    c.sim = c.sim.with_stable_dt(c.bounds.e_max);

    // Rope lying on the floor along +x, lifted vertically by one end: the
    // predefined identification action.
    c.scenario.rope.length = 0.35;
    c.scenario.rope.radius = 0.012;
    c.scenario.rope.particle_spacing = 0.0058;
    c.scenario.rope.axis = RopeAxis::along_x;
    const double floor_y = kBorderCells * c.sim.dx();
    c.scenario.rope.anchor = {0.3, floor_y + c.scenario.rope.radius + 0.004, 0.5};
    c.scenario.hold_time = 0.05;
    c.scenario.lift_displacement = {0.0, 0.22, 0.0};
    c.scenario.lift_duration = 0.25;
    c.scenario.frames = 60;

    c.estimate.iterations = 40;
    c.estimate.step_size = 0.3;
    c.estimate.plateau_window = 8;

    c.train.config.epochs = 200;
    return c;
}

RunConfig RunConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }
    RunConfig c = desk_default();
    ObjectReader r(j, "config");
    if (r.has("sim")) read_sim(r.raw("sim"), c.sim, "sim");
    if (r.has("scenario")) read_scenario(r.raw("scenario"), c.scenario, "scenario");
    if (r.has("bounds")) read_bounds(r.raw("bounds"), c.bounds, "bounds");
    if (r.has("estimate")) read_estimate(r.raw("estimate"), c.estimate, "estimate");
    if (r.has("task")) read_task(r.raw("task"), c.task, "task");
    if (r.has("train")) read_train(r.raw("train"), c.train, "train");
    if (r.has("eval")) read_eval(r.raw("eval"), c.eval, "eval");
    r.get("seed", c.seed);
    r.finish();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config: " + path);
    std::stringstream ss;
    ss << is.rdbuf();
    return from_json_text(ss.str());
}

std::string RunConfig::to_json_text() const {
    json j;
    j["sim"] = sim_to_json(sim);
    j["scenario"] = scenario_to_json(scenario);
    j["bounds"] = bounds_to_json(bounds);
    j["estimate"] = estimate_to_json(estimate);
    j["task"] = task_to_json(task);
    j["train"] = train_to_json(train);
    j["eval"] = eval_to_json(eval);
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

}  // namespace defid
