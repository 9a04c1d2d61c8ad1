#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "defid/policy.hpp"
#include "defid/rng.hpp"

using namespace defid;

namespace {

// Synthetic parameter-sensitive dataset: the action depends linearly on the
// goal and on E; no simulator involved.
std::vector<Demonstration> synthetic_reaching(int n, std::uint64_t seed,
                                              bool param_sensitive = true) {
    Rng rng(seed);
    std::vector<Demonstration> out;
    for (int i = 0; i < n; ++i) {
        Demonstration d;
        d.task = TaskId::rope_reaching;
        d.e = rng.uniform(500, 10500);
        d.nu = rng.uniform(0.2, 0.4);
        d.y = {rng.uniform(0.3, 0.7), rng.uniform(0.2, 0.5), rng.uniform(0.3, 0.7)};
        const double k = param_sensitive ? (d.e - 500.0) / 10000.0 : 0.5;
        d.x = {d.y[0] * (0.5 + 0.5 * k), d.y[1] + 0.1 * k, d.y[2] * (1.0 - 0.3 * k)};
        d.seed = seed + i;
        out.push_back(d);
    }
    return out;
}

}  // namespace

TEST_CASE("all-zero weights give the label-space midpoint") {
    const auto demos = synthetic_reaching(50, 1);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 1;
    auto trained = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    MlpPolicy p = trained.policy;
    for (auto& w : p.weights) std::fill(w.begin(), w.end(), 0.0);
    for (auto& b : p.biases) std::fill(b.begin(), b.end(), 0.0);
    const auto out = p.forward({0.5, 0.3, 0.5}, 2000.0, 0.3);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const auto& r = p.norm.out_ranges[i];
        CHECK(out[i] == doctest::Approx(0.5 * (r.first + r.second)));
    }
}

TEST_CASE("identity passthrough on a linear layer") {
    MlpPolicy p;
    p.task = TaskId::rope_casting;
    p.mask = InputMask::both;
    p.layer_sizes = {4, 4};
    p.weights.push_back(std::vector<double>(16, 0.0));
    for (int i = 0; i < 4; ++i) p.weights[0][i * 4 + i] = 1.0;
    p.biases.emplace_back(4, 0.0);
    p.norm.in_ranges.assign(4, {-1.0, 1.0});
    p.norm.out_ranges.assign(4, {-1.0, 1.0});
    const auto out = p.forward({0.25, -0.5}, 0.125, 0.75);
    CHECK(out[0] == doctest::Approx(0.25));
    CHECK(out[1] == doctest::Approx(-0.5));
    CHECK(out[2] == doctest::Approx(0.125));
    CHECK(out[3] == doctest::Approx(0.75));
}

TEST_CASE("tiny net on y = 2x matches the normal-equations oracle") {
    // Labels are exactly 2x; the least-squares line through the data is 2x.
    Rng rng(17);
    std::vector<Demonstration> demos;
    for (int i = 0; i < 200; ++i) {
        Demonstration d;
        d.task = TaskId::rope_casting;
        d.e = 1000.0;  // constant; masked out anyway
        d.nu = 0.3;
        const double x = rng.uniform(-1.0, 1.0);
        d.y = {x, 0.0};
        d.x = {2.0 * x};
        demos.push_back(d);
    }
    // Normal equations for y = a x + b on the same data.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = demos.size();
    for (const auto& d : demos) {
        sx += d.y[0];
        sy += d.x[0];
        sxx += d.y[0] * d.y[0];
        sxy += d.y[0] * d.x[0];
    }
    const double a = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double b = (sy - a * sx) / n;

    TrainConfig cfg;
    cfg.epochs = 1200;
    cfg.batch_size = 32;
    cfg.learning_rate = 2e-3;
    cfg.seed = 3;
    const auto trained =
        train_policy(demos, TaskId::rope_casting, InputMask::none, cfg, {16, 16});
    for (double x : {-0.8, -0.3, 0.1, 0.6, 0.9}) {
        const double pred = trained.policy.forward({x, 0.0}, 1000.0, 0.3)[0];
        CHECK(std::abs(pred - (a * x + b)) < 1e-3);
    }
}

TEST_CASE("memorizes a 10-sample dataset") {
    const auto demos = synthetic_reaching(10, 5);
    TrainConfig cfg;
    cfg.epochs = 2000;
    cfg.batch_size = 10;
    cfg.train_fraction = 1.0;
    cfg.learning_rate = 3e-3;
    cfg.seed = 5;
    const auto trained = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    CHECK(trained.train_curve.back() < 1e-6);
}

TEST_CASE("backprop gradients match central finite differences") {
    const auto demos = synthetic_reaching(8, 6);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.seed = 6;
    MlpPolicy p = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg, {6, 5})
                      .policy;

    std::vector<std::vector<double>> xs, ts;
    for (const auto& d : demos) {
        xs.push_back(policy_features(p, d.y, d.e, d.nu));
        std::vector<double> t;
        for (std::size_t f = 0; f < d.x.size(); ++f)
            t.push_back(Normalizer::encode(d.x[f], p.norm.out_ranges[f]));
        ts.push_back(t);
    }

    const auto grad = batch_gradient(p, xs, ts);
    const double h = 1e-6;
    std::size_t k = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        auto check_param = [&](double& param) {
            const double saved = param;
            param = saved + h;
            const double up = batch_loss(p, xs, ts);
            param = saved - h;
            const double dn = batch_loss(p, xs, ts);
            param = saved;
            const double fd = (up - dn) / (2 * h);
            if (std::abs(fd) > 1e-10)
                CHECK(grad[k] == doctest::Approx(fd).epsilon(1e-4));
            else
                CHECK(std::abs(grad[k] - fd) < 1e-8);
            ++k;
        };
        for (auto& w : p.weights[l]) check_param(w);
        for (auto& b : p.biases[l]) check_param(b);
    }
}

TEST_CASE("duplicating the dataset leaves the mean loss unchanged") {
    const auto demos = synthetic_reaching(240, 7);
    std::vector<Demonstration> doubled = demos;
    doubled.insert(doubled.end(), demos.begin(), demos.end());

    // The loss is a mean, so for fixed weights the duplicated set scores
    // identically.
    TrainConfig probe;
    probe.epochs = 3;
    probe.seed = 7;
    const MlpPolicy p =
        train_policy(demos, TaskId::rope_reaching, InputMask::both, probe).policy;
    std::vector<std::vector<double>> xs, ts, xs2, ts2;
    for (const auto& d : demos) {
        xs.push_back(policy_features(p, d.y, d.e, d.nu));
        std::vector<double> t;
        for (std::size_t f = 0; f < d.x.size(); ++f)
            t.push_back(Normalizer::encode(d.x[f], p.norm.out_ranges[f]));
        ts.push_back(t);
    }
    xs2 = xs;
    ts2 = ts;
    xs2.insert(xs2.end(), xs.begin(), xs.end());
    ts2.insert(ts2.end(), ts.begin(), ts.end());
    CHECK(batch_loss(p, xs, ts) == doctest::Approx(batch_loss(p, xs2, ts2)).epsilon(1e-12));

    // And training both to convergence lands at the same loss within noise.
    TrainConfig cfg;
    cfg.epochs = 600;
    cfg.batch_size = 32;
    cfg.learning_rate = 3e-3;
    cfg.train_fraction = 1.0;
    cfg.seed = 7;
    const auto a = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    const auto b = train_policy(doubled, TaskId::rope_reaching, InputMask::both, cfg);
    CHECK(a.train_curve.back() < 5e-3);
    CHECK(b.train_curve.back() < 5e-3);
    CHECK(std::abs(a.train_curve.back() - b.train_curve.back()) < 5e-3);
}

TEST_CASE("input masks: none ignores parameters, both uses them") {
    const auto demos = synthetic_reaching(400, 8);
    TrainConfig cfg;
    cfg.epochs = 120;
    cfg.seed = 8;

    const auto masked = train_policy(demos, TaskId::rope_reaching, InputMask::none, cfg);
    const auto out1 = masked.policy.forward({0.5, 0.3, 0.5}, 600.0, 0.21);
    const auto out2 = masked.policy.forward({0.5, 0.3, 0.5}, 10400.0, 0.39);
    for (std::size_t i = 0; i < out1.size(); ++i) CHECK(out1[i] == out2[i]);

    const auto both = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    const auto b1 = both.policy.forward({0.5, 0.3, 0.5}, 600.0, 0.21);
    const auto b2 = both.policy.forward({0.5, 0.3, 0.5}, 10400.0, 0.39);
    double diff = 0.0;
    for (std::size_t i = 0; i < b1.size(); ++i) diff += std::abs(b1[i] - b2[i]);
    CHECK(diff > 1e-3);

    // The parameter-aware policy fits parameter-sensitive data better.
    CHECK(both.best_val_loss < masked.best_val_loss);
}

TEST_CASE("training is reproducible by seed") {
    const auto demos = synthetic_reaching(60, 9);
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.seed = 9;
    const auto a = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    const auto b = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    CHECK(a.policy.weights == b.policy.weights);
    CHECK(a.val_curve == b.val_curve);
}

TEST_CASE("model serialization round trip preserves everything") {
    const auto demos = synthetic_reaching(40, 10);
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.seed = 10;
    for (InputMask mask :
         {InputMask::both, InputMask::e_only, InputMask::nu_only, InputMask::none}) {
        const auto trained = train_policy(demos, TaskId::rope_reaching, mask, cfg);
        const std::string path = "/tmp/defid_test_model.bin";
        save_policy(trained.policy, path);
        const MlpPolicy back = load_policy(path);
        CHECK(back.task == trained.policy.task);
        CHECK(back.mask == trained.policy.mask);
        CHECK(back.layer_sizes == trained.policy.layer_sizes);
        CHECK(back.weights == trained.policy.weights);
        CHECK(back.biases == trained.policy.biases);
        CHECK(back.norm.in_ranges == trained.policy.norm.in_ranges);
        CHECK(back.norm.out_ranges == trained.policy.norm.out_ranges);

        const auto a = trained.policy.forward({0.4, 0.3, 0.6}, 3000.0, 0.3);
        const auto b = back.forward({0.4, 0.3, 0.6}, 3000.0, 0.3);
        CHECK(a == b);
    }

    CHECK_THROWS_AS(load_policy("/tmp/defid_missing_model.bin"), IoError);
    std::FILE* f = std::fopen("/tmp/defid_bad_model.bin", "wb");
    std::fputs("NOT-A-MODEL-FILE-AT-ALL", f);
    std::fclose(f);
    CHECK_THROWS_AS(load_policy("/tmp/defid_bad_model.bin"), ParseError);
}

TEST_CASE("out-of-range inputs are clamped and counted") {
    const auto demos = synthetic_reaching(30, 11);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.seed = 11;
    const auto trained = train_policy(demos, TaskId::rope_reaching, InputMask::both, cfg);
    long clamped = 0;
    trained.policy.forward({0.5, 0.3, 0.5}, 99999.0, 0.45, &clamped);
    CHECK(clamped == 2);
}
