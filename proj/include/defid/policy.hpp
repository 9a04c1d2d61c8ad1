#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defid/tasks.hpp"

namespace defid {

// Which conditioning inputs the policy actually sees; masked features are
// zeroed after normalization so the architecture stays fixed across the
// ablation configurations.
enum class InputMask : std::uint8_t { both, e_only, nu_only, none };

std::string to_string(InputMask m);
InputMask mask_from_string(const std::string& s);

// Per-feature affine map to [-1, 1].
struct Normalizer {
    std::vector<std::pair<double, double>> in_ranges;
    std::vector<std::pair<double, double>> out_ranges;

    static double encode(double v, const std::pair<double, double>& r) {
        return 2.0 * (v - r.first) / (r.second - r.first) - 1.0;
    }
    static double decode(double u, const std::pair<double, double>& r) {
        return r.first + (u + 1.0) * 0.5 * (r.second - r.first);
    }
};

struct TrainConfig {
    int batch_size = 128;
    int epochs = 200;
    double learning_rate = 1e-3;
    double train_fraction = 0.9;
    std::uint64_t seed = 0;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
        if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
        if (!(train_fraction > 0.0 && train_fraction <= 1.0))
            throw ConfigError("train: train_fraction must lie in (0, 1]");
    }
};

// Dense ReLU network mapping normalized [Y..., E, nu] to the action label.
struct MlpPolicy {
    TaskId task = TaskId::rope_reaching;
    InputMask mask = InputMask::both;
    std::vector<int> layer_sizes;                 // e.g. {in, 64, 64, 64, out}
    std::vector<std::vector<double>> weights;     // per layer, row-major [out][in]
    std::vector<std::vector<double>> biases;
    Normalizer norm;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }

    // De-normalized prediction; inputs outside the normalizer ranges are
    // clamped (clamp_count, when given, tallies them).
    std::vector<double> forward(const std::vector<double>& y, double e, double nu,
                                long* clamp_count = nullptr) const;

    // Normalized-space pass on an already-encoded feature vector.
    std::vector<double> forward_normalized(const std::vector<double>& x) const;
};

struct TrainResult {
    MlpPolicy policy;
    std::vector<double> train_curve;
    std::vector<double> val_curve;
    double best_val_loss = 0.0;
    int best_epoch = -1;
};

TrainResult train_policy(const std::vector<Demonstration>& demos, TaskId task, InputMask mask,
                         const TrainConfig& cfg,
                         const std::vector<int>& hidden = {64, 64, 64});

// Mean squared error of the batch in normalized space, and its gradient with
// respect to every weight and bias (flattened in layer order, weights before
// biases per layer). The training loop uses the same pass; tests difference
// it against finite differences.
double batch_loss(const MlpPolicy& p, const std::vector<std::vector<double>>& x,
                  const std::vector<std::vector<double>>& t);
std::vector<double> batch_gradient(const MlpPolicy& p,
                                   const std::vector<std::vector<double>>& x,
                                   const std::vector<std::vector<double>>& t);

// Versioned binary format, little-endian float64 weight arrays in layer order.
void save_policy(const MlpPolicy& p, const std::string& path);
MlpPolicy load_policy(const std::string& path);

// Encodes a demonstration into the normalized feature/label pair.
std::vector<double> policy_features(const MlpPolicy& p, const std::vector<double>& y, double e,
                                    double nu, long* clamp_count = nullptr);

}  // namespace defid
