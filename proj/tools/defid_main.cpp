// Command-line surface for the deformable-object identification toolkit:
// simulate / estimate / gen-data / train / eval / gradcheck.
#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include <nlohmann/json.hpp>

#include "defid/evalharness.hpp"
#include "defid/io.hpp"
#include "defid/run_config.hpp"
#include "defid/threads.hpp"

using namespace defid;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
};

RunConfig load_config(const Common& c) {
    RunConfig cfg =
        c.config_path.empty() ? RunConfig::desk_default() : RunConfig::from_file(c.config_path);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

void echo_config(const RunConfig& cfg, const std::string& beside) {
    atomic_write_text(beside, cfg.to_json_text());
}

std::pair<double, double> parse_material(const std::string& s) {
    double e = 0.0, nu = 0.0;
    if (std::sscanf(s.c_str(), "%lf,%lf", &e, &nu) != 2)
        throw ConfigError("expected --material E,NU");
    return {e, nu};
}

json report_record(const GoalRecord& r) {
    json j;
    j["e"] = r.e;
    j["nu"] = r.nu;
    j["y"] = r.y;
    j["x_hat"] = r.x_hat;
    j["y_achieved"] = r.y_achieved;
    j["error"] = r.error;
    j["failed"] = r.failed;
    return j;
}

void write_report(const EvalReport& rep, const std::string& path) {
    std::string out;
    for (const auto& r : rep.records) out += report_record(r).dump() + "\n";
    atomic_write_text(path, out);
}

std::string summary_row(const std::string& suite, const EvalReport& rep) {
    const int n = static_cast<int>(rep.records.size()) - rep.failures;
    return suite + "," + rep.label + "," + format_double(rep.mean) + "," +
           format_double(rep.stddev) + "," + std::to_string(n) + "," +
           std::to_string(rep.failures) + "\n";
}

json estimate_to_json(const EstimateResult& res) {
    json j;
    j["e_hat"] = res.e_hat;
    j["nu_hat"] = res.nu_hat;
    j["final_loss"] = res.final_loss;
    j["best_restart"] = res.best_restart;
    json rs = json::array();
    for (const auto& r : res.per_restart) {
        json rj;
        rj["e_init"] = r.e_init;
        rj["nu_init"] = r.nu_init;
        rj["e"] = r.e;
        rj["nu"] = r.nu;
        rj["loss"] = r.loss;
        rj["iterations"] = r.iterations;
        rj["failures"] = r.failures;
        rs.push_back(rj);
    }
    j["per_restart"] = rs;
    return j;
}

void write_loss_history(const EstimateResult& res, const std::string& path) {
    std::string out = "restart,iteration,loss\n";
    for (std::size_t r = 0; r < res.per_restart.size(); ++r)
        for (std::size_t i = 0; i < res.per_restart[r].loss_history.size(); ++i)
            out += std::to_string(r) + "," + std::to_string(i) + "," +
                   format_double(res.per_restart[r].loss_history[i]) + "\n";
    atomic_write_text(path, out);
}

int run_simulate(const Common& common, const std::string& material_opt,
                 const std::string& gripper_opt, int frames_opt, const std::string& out) {
    RunConfig cfg = load_config(common);
    if (!material_opt.empty()) {
        const auto [e, nu] = parse_material(material_opt);
        cfg.scenario.material_e = e;
        cfg.scenario.material_nu = nu;
    }
    if (!gripper_opt.empty()) cfg.scenario.gripper = gripper_opt;
    if (frames_opt > 0) cfg.scenario.frames = frames_opt;

    const MaterialParams mat{cfg.scenario.material_e, cfg.scenario.material_nu, 1.0};
    try {
        validate(mat);
        cfg.sim.validate(mat.youngs_modulus, mat.density);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(e.what()) + " (estimation bounds: E in [" +
                          format_double(cfg.bounds.e_min) + ", " +
                          format_double(cfg.bounds.e_max) + "], nu in [" +
                          format_double(cfg.bounds.nu_min) + ", " +
                          format_double(cfg.bounds.nu_max) + "])");
    }

    const SimState initial = cfg.scenario.initial_state(cfg.seed);
    const GripperPath gripper = cfg.scenario.build_gripper();
    const auto traj = rollout(initial, cfg.sim, mat, gripper, cfg.scenario.frames);
    write_cloud_trajectory(out, to_clouds(traj));
    echo_config(cfg, out + ".config.json");
    std::cout << "wrote " << traj.frames.size() << " frames (" << initial.particles.size()
              << " particles) to " << out << "\n";
    return kExitOk;
}

int run_estimate(const Common& common, const std::string& ref_path, const std::string& mode,
                 const std::string& out_dir) {
    RunConfig cfg = load_config(common);
    if (!mode.empty()) {
        if (mode == "all_steps")
            cfg.estimate.mode = LossMode::all_steps;
        else if (mode == "last_step")
            cfg.estimate.mode = LossMode::last_step;
        else
            throw ConfigError("--mode must be all_steps or last_step");
    }
    cfg.estimate.seed = cfg.seed;

    const auto ref = read_cloud_trajectory(ref_path);
    const SimState initial = cfg.scenario.initial_state(cfg.seed);
    const GripperPath gripper = cfg.scenario.build_gripper();

    const EstimateResult res =
        estimate(initial, ref, gripper, cfg.sim, cfg.bounds, cfg.estimate);

    fs::create_directories(out_dir);
    atomic_write_text(out_dir + "/estimate.json", estimate_to_json(res).dump(2) + "\n");
    write_loss_history(res, out_dir + "/loss_history.csv");
    echo_config(cfg, out_dir + "/config.echo.json");
    std::cout << "estimated E=" << format_double(res.e_hat)
              << " nu=" << format_double(res.nu_hat)
              << " loss=" << format_double(res.final_loss) << "\n";
    return kExitOk;
}

int run_gen_data(const Common& common, const std::string& task_opt, int count,
                 const std::string& out) {
    RunConfig cfg = load_config(common);
    if (!task_opt.empty() && to_string(cfg.task.task) != task_opt)
        cfg.task = TaskSpec::desk_default(task_from_string(task_opt));
    if (count < 1) throw ConfigError("--count must be >= 1");

    const auto demos = gen_dataset(cfg.task, count, cfg.seed);
    DatasetFile data;
    data.demos = demos;
    const std::string task_echo = cfg.to_json_text();
    data.spec_hash = fnv1a(task_echo);
    json gen;
    gen["count"] = count;
    gen["seed"] = cfg.seed;
    gen["task"] = to_string(cfg.task.task);
    data.generation_config = gen.dump();
    write_dataset(out, data);
    echo_config(cfg, out + ".config.json");
    std::cout << "wrote " << demos.size() << " demonstrations to " << out << "\n";
    return kExitOk;
}

int run_train(const Common& common, const std::string& data_path, const std::string& mask_opt,
              const std::string& out) {
    RunConfig cfg = load_config(common);
    const DatasetFile data = read_dataset(data_path);
    if (data.demos.empty()) throw ConfigError("train: dataset is empty");
    const TaskId task = data.demos.front().task;
    const InputMask mask = mask_from_string(mask_opt.empty() ? "both" : mask_opt);

    TrainConfig tc = cfg.train.config;
    tc.seed = cfg.seed;
    const TrainResult res = train_policy(data.demos, task, mask, tc, cfg.train.hidden);
    save_policy(res.policy, out);

    std::string curve = "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < res.train_curve.size(); ++e)
        curve += std::to_string(e) + "," + format_double(res.train_curve[e]) + "," +
                 format_double(res.val_curve[e]) + "\n";
    atomic_write_text(out + ".curve.csv", curve);
    echo_config(cfg, out + ".config.json");
    std::cout << "trained mask=" << to_string(mask)
              << " best_val=" << format_double(res.best_val_loss) << " at epoch "
              << res.best_epoch << ", saved to " << out << "\n";
    return kExitOk;
}

int run_eval(const Common& common, const std::string& suite, const std::string& model_path,
             const std::string& data_path, const std::string& ref_path,
             const std::string& true_material, int goals_opt, bool oracle,
             const std::string& out_dir) {
    RunConfig cfg = load_config(common);
    const int n_goals = goals_opt > 0 ? goals_opt : cfg.eval.n_goals;
    fs::create_directories(out_dir);
    std::string summary = "suite,config,mean,std,n,failures\n";

    if (suite == "ablation") {
        if (oracle) throw ConfigError("--oracle is not meaningful for the ablation suite");
        if (data_path.empty()) throw ConfigError("ablation suite needs --data");
        const DatasetFile data = read_dataset(data_path);
        TrainConfig tc = cfg.train.config;
        tc.seed = cfg.seed;
        const AblationResult res =
            ablation_suite(data.demos, cfg.task, n_goals, cfg.seed, tc);
        for (std::size_t m = 0; m < res.reports.size(); ++m) {
            write_report(res.reports[m],
                         out_dir + "/ablation_" + res.reports[m].label + ".jsonl");
            summary += summary_row("ablation", res.reports[m]);
        }
    } else if (suite == "idood") {
        EvalReport id, ood;
        if (oracle) {
            id = evaluate_policy(oracle_policy(), cfg.task, cfg.task.bounds, n_goals,
                                 mix_seed(cfg.seed, 1));
            id.label = "id_oracle";
            ood = evaluate_policy(oracle_policy(), cfg.task, cfg.eval.ood_bounds, n_goals,
                                  mix_seed(cfg.seed, 2));
            ood.label = "ood_oracle";
        } else {
            if (model_path.empty()) throw ConfigError("idood suite needs --model");
            const MlpPolicy policy = load_policy(model_path);
            std::tie(id, ood) =
                id_ood_suite(policy, cfg.task, cfg.eval.ood_bounds, n_goals, cfg.seed);
        }
        write_report(id, out_dir + "/id.jsonl");
        write_report(ood, out_dir + "/ood.jsonl");
        summary += summary_row("idood", id);
        summary += summary_row("idood", ood);
    } else if (suite == "e2e") {
        if (model_path.empty() || ref_path.empty() || true_material.empty())
            throw ConfigError("e2e suite needs --model, --ref, and --true-material");
        const MlpPolicy policy = load_policy(model_path);
        const auto [te, tnu] = parse_material(true_material);
        const auto ref = read_cloud_trajectory(ref_path);
        EstimateConfig ec = cfg.estimate;
        ec.seed = cfg.seed;
        const E2eResult res = estimate_then_act(
            cfg.scenario.initial_state(cfg.seed), ref, cfg.scenario.build_gripper(), cfg.sim,
            cfg.bounds, ec, policy, cfg.task, {te, tnu, 1.0}, n_goals, mix_seed(cfg.seed, 3));
        atomic_write_text(out_dir + "/estimate.json",
                          estimate_to_json(res.estimate).dump(2) + "\n");
        for (const EvalReport* rep : {&res.with_estimated, &res.with_true, &res.with_opposite}) {
            write_report(*rep, out_dir + "/e2e_" + rep->label + ".jsonl");
            summary += summary_row("e2e", *rep);
        }
    } else {
        throw ConfigError("--suite must be ablation, idood, or e2e");
    }

    atomic_write_text(out_dir + "/summary.csv", summary);
    echo_config(cfg, out_dir + "/config.echo.json");
    std::cout << summary;
    return kExitOk;
}

int run_gradcheck(const Common& common, int n_points, bool break_tangent) {
    RunConfig cfg = load_config(common);

    // Smooth scenario: hanging rope lifted diagonally, no release, no floor
    // contact over the horizon.
    RopeGeometry rope;
    rope.length = 0.2;
    rope.radius = 0.015;
    rope.particle_spacing = 0.0075;
    rope.anchor = {0.45, 0.6, 0.5};
    SimConfig sim = cfg.sim;
    sim.frame_dt = 1e-2;
    sim = sim.with_stable_dt(cfg.bounds.e_max);
    const SimState initial = sample_rope(rope, cfg.seed + 17);
    GripperPath grip;
    grip.pinned_tags = {ParticleTag::grip};
    grip.anchor = rope.anchor;
    grip.waypoints = {{0.0, rope.anchor}, {0.3, rope.anchor + Vec3{0.08, 0.12, 0.0}}};
    const int frames = 50;

    Rng rng(mix_seed(cfg.seed, 0x6AADull));
    const MaterialParams truth{rng.uniform(cfg.bounds.e_min, cfg.bounds.e_max),
                               rng.uniform(cfg.bounds.nu_min, cfg.bounds.nu_max), 1.0};
    const auto ref = to_clouds(rollout(initial, sim, truth, grip, frames));

    auto loss_at = [&](double e, double nu) {
        const auto t = rollout(initial, sim, MaterialParams{e, nu, 1.0}, grip, frames);
        return value_of(trajectory_loss(t, ref, cfg.estimate.mode,
                                        cfg.estimate.raster_resolution, cfg.estimate.raster_lo,
                                        cfg.estimate.raster_hi));
    };

    std::printf("%10s %10s | %12s %12s %9s | %12s %12s %9s\n", "E", "nu", "dL/dE(fwd)",
                "dL/dE(fd)", "rel", "dL/dnu(fwd)", "dL/dnu(fd)", "rel");
    bool ok = true;
    for (int p = 0; p < n_points; ++p) {
        const double e = rng.uniform(cfg.bounds.e_min + 50.0, cfg.bounds.e_max - 50.0);
        const double nu =
            rng.uniform(cfg.bounds.nu_min + 2e-4, cfg.bounds.nu_max - 2e-4);
        LossGrad lg = loss_and_grad(initial, e, nu, ref, grip, sim, cfg.estimate.mode,
                                    cfg.estimate.raster_resolution, cfg.estimate.raster_lo,
                                    cfg.estimate.raster_hi);
        if (break_tangent) lg.d_e *= 1.05;  // test hook
        const double de = 1.0, dnu = 1e-4;
        const double fd_e = (loss_at(e + de, nu) - loss_at(e - de, nu)) / (2 * de);
        const double fd_nu = (loss_at(e, nu + dnu) - loss_at(e, nu - dnu)) / (2 * dnu);
        const double rel_e = std::abs(lg.d_e - fd_e) / std::max(std::abs(fd_e), 1e-12);
        const double rel_nu = std::abs(lg.d_nu - fd_nu) / std::max(std::abs(fd_nu), 1e-12);
        std::printf("%10.1f %10.4f | %12.4e %12.4e %9.2e | %12.4e %12.4e %9.2e\n", e, nu,
                    lg.d_e, fd_e, rel_e, lg.d_nu, fd_nu, rel_nu);
        ok &= lg.finite && rel_e < 1e-2 && rel_nu < 1e-2;
    }
    std::printf("gradcheck: %s\n", ok ? "PASS" : "FAIL");
    if (!ok) throw NumericError("gradcheck failed");
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    apply_thread_cap();
    CLI::App app{"Differentiable deformable-object simulation toolkit"};
    app.require_subcommand(1);

    Common common;
    std::string material, gripper, mode, out, ref, data, model, suite, true_material, task, mask;
    int frames = 0, count = 0, goals = 0, points = 3;
    bool oracle = false, break_tangent = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", common.config_path, "run configuration JSON");
        cmd->add_option("--seed", common.seed, "master seed (overrides the config)");
    };

    auto* sim_cmd = app.add_subcommand("simulate", "roll out the scenario, write point clouds");
    add_common(sim_cmd);
    sim_cmd->add_option("--material", material, "E,NU material override");
    sim_cmd->add_option("--gripper", gripper, "lift|hold|none|waypoints");
    sim_cmd->add_option("--frames", frames, "frames to simulate");
    sim_cmd->add_option("--out", out, "output trajectory file")->required();

    auto* est_cmd = app.add_subcommand("estimate", "identify (E, nu) from a recorded trajectory");
    add_common(est_cmd);
    est_cmd->add_option("--ref", ref, "reference cloud-trajectory file")->required();
    est_cmd->add_option("--mode", mode, "all_steps|last_step");
    est_cmd->add_option("--out", out, "output directory")->required();

    auto* gen_cmd = app.add_subcommand("gen-data", "synthesize hindsight demonstrations");
    add_common(gen_cmd);
    gen_cmd->add_option("--task", task, "rope_reaching|rope_casting|cloth_spreading");
    gen_cmd->add_option("--count", count, "demonstrations to generate")->required();
    gen_cmd->add_option("--out", out, "output dataset file")->required();

    auto* train_cmd = app.add_subcommand("train", "fit the parameter-conditioned policy");
    add_common(train_cmd);
    train_cmd->add_option("--data", data, "dataset file")->required();
    train_cmd->add_option("--mask", mask, "both|e|nu|none");
    train_cmd->add_option("--out", out, "output model file")->required();

    auto* eval_cmd = app.add_subcommand("eval", "run an evaluation suite");
    add_common(eval_cmd);
    eval_cmd->add_option("--suite", suite, "ablation|idood|e2e")->required();
    eval_cmd->add_option("--model", model, "trained model file");
    eval_cmd->add_option("--data", data, "dataset file (ablation)");
    eval_cmd->add_option("--ref", ref, "reference trajectory (e2e)");
    eval_cmd->add_option("--true-material", true_material, "E,NU hidden truth (e2e)");
    eval_cmd->add_option("--goals", goals, "evaluation goals per report");
    eval_cmd->add_flag("--oracle", oracle, "use the hindsight oracle instead of a model");
    eval_cmd->add_option("--out", out, "output directory")->required();

    auto* grad_cmd = app.add_subcommand("gradcheck", "forward-mode vs finite differences");
    add_common(grad_cmd);
    grad_cmd->add_option("--points", points, "parameter points to test");
    grad_cmd->add_flag("--break-tangent", break_tangent)->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim_cmd->parsed()) return run_simulate(common, material, gripper, frames, out);
        if (est_cmd->parsed()) return run_estimate(common, ref, mode, out);
        if (gen_cmd->parsed()) return run_gen_data(common, task, count, out);
        if (train_cmd->parsed()) return run_train(common, data, mask, out);
        if (eval_cmd->parsed())
            return run_eval(common, suite, model, data, ref, true_material, goals, oracle, out);
        if (grad_cmd->parsed()) return run_gradcheck(common, points, break_tangent);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return kExitIo;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    }
    return kExitUsage;
}
