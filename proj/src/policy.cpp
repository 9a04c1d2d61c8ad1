#include "defid/policy.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "defid/rng.hpp"

namespace defid {

std::string to_string(InputMask m) {
    switch (m) {
        case InputMask::both: return "both";
        case InputMask::e_only: return "e";
        case InputMask::nu_only: return "nu";
        case InputMask::none: return "none";
    }
    return "unknown";
}

InputMask mask_from_string(const std::string& s) {
    if (s == "both") return InputMask::both;
    if (s == "e") return InputMask::e_only;
    if (s == "nu") return InputMask::nu_only;
    if (s == "none") return InputMask::none;
    throw ConfigError("unknown input mask '" + s + "'");
}

std::vector<double> policy_features(const MlpPolicy& p, const std::vector<double>& y, double e,
                                    double nu, long* clamp_count) {
    const std::size_t n_y = p.norm.in_ranges.size() - 2;
    if (y.size() != n_y)
        throw ConfigError("policy: expected " + std::to_string(n_y) + " goal values, got " +
                          std::to_string(y.size()));
    std::vector<double> raw(y);
    raw.push_back(e);
    raw.push_back(nu);

    std::vector<double> x(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double u = Normalizer::encode(raw[i], p.norm.in_ranges[i]);
        if (u < -1.0 || u > 1.0) {
            if (clamp_count) ++*clamp_count;
            u = std::clamp(u, -1.0, 1.0);
        }
        x[i] = u;
    }
    // Mask the parameter slots (the last two features).
    const bool keep_e = p.mask == InputMask::both || p.mask == InputMask::e_only;
    const bool keep_nu = p.mask == InputMask::both || p.mask == InputMask::nu_only;
    if (!keep_e) x[x.size() - 2] = 0.0;
    if (!keep_nu) x[x.size() - 1] = 0.0;
    return x;
}

std::vector<double> MlpPolicy::forward_normalized(const std::vector<double>& x) const {
    std::vector<double> a = x;
    for (std::size_t layer = 0; layer < weights.size(); ++layer) {
        const int n_in = layer_sizes[layer];
        const int n_out = layer_sizes[layer + 1];
        std::vector<double> z(n_out);
        const auto& w = weights[layer];
        const auto& b = biases[layer];
        for (int o = 0; o < n_out; ++o) {
            double s = b[o];
            const double* row = w.data() + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) s += row[i] * a[i];
            z[o] = layer + 1 < weights.size() ? std::max(0.0, s) : s;
        }
        a = std::move(z);
    }
    return a;
}

std::vector<double> MlpPolicy::forward(const std::vector<double>& y, double e, double nu,
                                       long* clamp_count) const {
    const auto x = policy_features(*this, y, e, nu, clamp_count);
    auto out = forward_normalized(x);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!std::isfinite(out[i]))
            throw NumericError("policy: non-finite output (corrupt model)");
        out[i] = Normalizer::decode(out[i], norm.out_ranges[i]);
    }
    return out;
}

namespace {

struct Activations {
    // Per layer: pre-activation z and post-activation a (a[0] is the input).
    std::vector<std::vector<double>> a;
    std::vector<std::vector<double>> z;
};

void forward_cached(const MlpPolicy& p, const std::vector<double>& x, Activations& act) {
    act.a.assign(1, x);
    act.z.clear();
    for (std::size_t layer = 0; layer < p.weights.size(); ++layer) {
        const int n_in = p.layer_sizes[layer];
        const int n_out = p.layer_sizes[layer + 1];
        std::vector<double> z(n_out);
        for (int o = 0; o < n_out; ++o) {
            double s = p.biases[layer][o];
            const double* row = p.weights[layer].data() + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) s += row[i] * act.a.back()[i];
            z[o] = s;
        }
        act.z.push_back(z);
        if (layer + 1 < p.weights.size())
            for (auto& v : z) v = std::max(0.0, v);
        act.a.push_back(std::move(z));
    }
}

std::size_t parameter_count(const MlpPolicy& p) {
    std::size_t n = 0;
    for (std::size_t l = 0; l < p.weights.size(); ++l)
        n += p.weights[l].size() + p.biases[l].size();
    return n;
}

// Accumulates the squared-error gradient of one sample into flat storage laid
// out as [w0, b0, w1, b1, ...].
void backprop_sample(const MlpPolicy& p, const Activations& act, const std::vector<double>& t,
                     std::vector<double>& grad) {
    const std::size_t n_layers = p.weights.size();
    std::vector<double> delta = act.a.back();
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] = 2.0 * (delta[i] - t[i]);

    std::vector<std::size_t> offset(n_layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
        offset[l] = off;
        off += p.weights[l].size() + p.biases[l].size();
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        const int n_in = p.layer_sizes[l];
        const int n_out = p.layer_sizes[l + 1];
        const auto& a_in = act.a[l];
        double* gw = grad.data() + offset[l];
        double* gb = gw + static_cast<std::size_t>(n_out) * n_in;
        for (int o = 0; o < n_out; ++o) {
            const double d = delta[o];
            double* row = gw + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) row[i] += d * a_in[i];
            gb[o] += d;
        }
        if (l == 0) break;
        std::vector<double> prev(n_in, 0.0);
        const auto& w = p.weights[l];
        for (int o = 0; o < n_out; ++o) {
            const double d = delta[o];
            const double* row = w.data() + static_cast<std::size_t>(o) * n_in;
            for (int i = 0; i < n_in; ++i) prev[i] += d * row[i];
        }
        // ReLU mask of the previous layer.
        for (int i = 0; i < n_in; ++i)
            if (act.z[l - 1][i] <= 0.0) prev[i] = 0.0;
        delta = std::move(prev);
    }
}

}  // namespace

double batch_loss(const MlpPolicy& p, const std::vector<std::vector<double>>& x,
                  const std::vector<std::vector<double>>& t) {
    double loss = 0.0;
    for (std::size_t s = 0; s < x.size(); ++s) {
        const auto out = p.forward_normalized(x[s]);
        for (std::size_t i = 0; i < out.size(); ++i)
            loss += (out[i] - t[s][i]) * (out[i] - t[s][i]);
    }
    return loss / static_cast<double>(x.size());
}

std::vector<double> batch_gradient(const MlpPolicy& p,
                                   const std::vector<std::vector<double>>& x,
                                   const std::vector<std::vector<double>>& t) {
    std::vector<double> grad(parameter_count(p), 0.0);
    Activations act;
    for (std::size_t s = 0; s < x.size(); ++s) {
        forward_cached(p, x[s], act);
        backprop_sample(p, act, t[s], grad);
    }
    for (auto& g : grad) g /= static_cast<double>(x.size());
    return grad;
}

TrainResult train_policy(const std::vector<Demonstration>& demos, TaskId task, InputMask mask,
                         const TrainConfig& cfg, const std::vector<int>& hidden) {
    cfg.validate();
    if (demos.empty()) throw ConfigError("train: empty dataset");

    const std::size_t n_y = demos.front().y.size();
    const std::size_t n_x = demos.front().x.size();
    for (const auto& d : demos) {
        if (d.task != task) throw ConfigError("train: dataset/task mismatch");
        if (d.y.size() != n_y || d.x.size() != n_x)
            throw ConfigError("train: inconsistent demonstration shapes");
    }

    MlpPolicy p;
    p.task = task;
    p.mask = mask;
    p.layer_sizes.push_back(static_cast<int>(n_y) + 2);
    for (int h : hidden) p.layer_sizes.push_back(h);
    p.layer_sizes.push_back(static_cast<int>(n_x));

    // Normalizer ranges from the dataset extents.
    auto ranged = [](double lo, double hi) {
        if (!(hi > lo)) hi = lo + 1.0;
        return std::make_pair(lo, hi);
    };
    for (std::size_t f = 0; f < n_y + 2; ++f) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& d : demos) {
            const double v = f < n_y ? d.y[f] : (f == n_y ? d.e : d.nu);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        p.norm.in_ranges.push_back(ranged(lo, hi));
    }
    for (std::size_t f = 0; f < n_x; ++f) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (const auto& d : demos) {
            lo = std::min(lo, d.x[f]);
            hi = std::max(hi, d.x[f]);
        }
        p.norm.out_ranges.push_back(ranged(lo, hi));
    }

    // He-uniform init, seeded.
    Rng rng(mix_seed(cfg.seed, 0x11117ull));
    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const int n_in = p.layer_sizes[l];
        const int n_out = p.layer_sizes[l + 1];
        const double limit = std::sqrt(6.0 / n_in);
        std::vector<double> w(static_cast<std::size_t>(n_in) * n_out);
        for (auto& v : w) v = rng.uniform(-limit, limit);
        p.weights.push_back(std::move(w));
        p.biases.emplace_back(n_out, 0.0);
    }

    // Encode all samples once.
    std::vector<std::vector<double>> xs(demos.size()), ts(demos.size());
    for (std::size_t i = 0; i < demos.size(); ++i) {
        xs[i] = policy_features(p, demos[i].y, demos[i].e, demos[i].nu);
        ts[i].resize(n_x);
        for (std::size_t f = 0; f < n_x; ++f)
            ts[i][f] = Normalizer::encode(demos[i].x[f], p.norm.out_ranges[f]);
    }

    std::vector<std::size_t> order(demos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    const std::size_t n_train =
        std::max<std::size_t>(1, static_cast<std::size_t>(cfg.train_fraction * order.size()));
    const std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    const std::vector<std::size_t> val_idx(order.begin() + n_train, order.end());

    auto subset_loss = [&](const std::vector<std::size_t>& idx) {
        if (idx.empty()) return 0.0;
        std::vector<std::vector<double>> bx, bt;
        bx.reserve(idx.size());
        bt.reserve(idx.size());
        for (std::size_t i : idx) {
            bx.push_back(xs[i]);
            bt.push_back(ts[i]);
        }
        return batch_loss(p, bx, bt);
    };

    TrainResult result;
    const std::size_t n_params = parameter_count(p);
    std::vector<double> m(n_params, 0.0), v(n_params, 0.0);
    long adam_steps = 0;
    std::vector<std::size_t> epoch_order = train_idx;
    double best_val = std::numeric_limits<double>::infinity();
    MlpPolicy best = p;
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(epoch_order);
        for (std::size_t begin = 0; begin < epoch_order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(epoch_order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            std::vector<std::vector<double>> bx, bt;
            bx.reserve(end - begin);
            bt.reserve(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                bx.push_back(xs[epoch_order[i]]);
                bt.push_back(ts[epoch_order[i]]);
            }
            const auto grad = batch_gradient(p, bx, bt);
            ++adam_steps;
            const double bc1 = 1.0 - std::pow(0.9, adam_steps);
            const double bc2 = 1.0 - std::pow(0.999, adam_steps);
            std::size_t k = 0;
            for (std::size_t l = 0; l < p.weights.size(); ++l) {
                auto step = [&](double& param, double g) {
                    m[k] = 0.9 * m[k] + 0.1 * g;
                    v[k] = 0.999 * v[k] + 0.001 * g * g;
                    param -= cfg.learning_rate * (m[k] / bc1) /
                             (std::sqrt(v[k] / bc2) + 1e-8);
                    ++k;
                };
                for (auto& w : p.weights[l]) step(w, grad[k]);
                for (auto& b : p.biases[l]) step(b, grad[k]);
            }
        }
        const double train_loss = subset_loss(train_idx);
        const double val_loss = val_idx.empty() ? train_loss : subset_loss(val_idx);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
            throw NumericError("train: loss became non-finite at epoch " +
                               std::to_string(epoch));
        result.train_curve.push_back(train_loss);
        result.val_curve.push_back(val_loss);
        if (val_loss < best_val) {
            best_val = val_loss;
            best = p;
            best_epoch = epoch;
        }
    }

    result.policy = std::move(best);
    result.best_val_loss = best_val;
    result.best_epoch = best_epoch;
    return result;
}

namespace {

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

constexpr char kMagic[9] = {'D', 'E', 'F', 'I', 'D', '-', 'M', 'L', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ParseError("model file truncated");
    return v;
}

}  // namespace

void save_policy(const MlpPolicy& p, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open model file for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    put(os, kFormatVersion);
    const std::string task = to_string(p.task);
    put(os, static_cast<std::uint32_t>(task.size()));
    os.write(task.data(), static_cast<std::streamsize>(task.size()));
    put(os, static_cast<std::uint8_t>(p.mask));
    put(os, static_cast<std::uint32_t>(p.layer_sizes.size()));
    for (int s : p.layer_sizes) put(os, static_cast<std::int32_t>(s));
    put(os, static_cast<std::uint32_t>(p.norm.in_ranges.size()));
    for (const auto& r : p.norm.in_ranges) {
        put(os, r.first);
        put(os, r.second);
    }
    put(os, static_cast<std::uint32_t>(p.norm.out_ranges.size()));
    for (const auto& r : p.norm.out_ranges) {
        put(os, r.first);
        put(os, r.second);
    }
    for (std::size_t l = 0; l < p.weights.size(); ++l) {
        os.write(reinterpret_cast<const char*>(p.weights[l].data()),
                 static_cast<std::streamsize>(p.weights[l].size() * sizeof(double)));
        os.write(reinterpret_cast<const char*>(p.biases[l].data()),
                 static_cast<std::streamsize>(p.biases[l].size() * sizeof(double)));
    }
    if (!os) throw IoError("failed writing model file: " + path);
}

MlpPolicy load_policy(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open model file: " + path);
    char magic[9];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw ParseError("not a model file (bad magic): " + path);
    const auto version = get<std::uint32_t>(is);
    if (version != kFormatVersion)
        throw ParseError("unsupported model format version " + std::to_string(version));

    MlpPolicy p;
    const auto task_len = get<std::uint32_t>(is);
    if (task_len > 64) throw ParseError("model task name too long");
    std::string task(task_len, '\0');
    is.read(task.data(), task_len);
    p.task = task_from_string(task);
    p.mask = static_cast<InputMask>(get<std::uint8_t>(is));

    const auto n_sizes = get<std::uint32_t>(is);
    if (n_sizes < 2 || n_sizes > 64) throw ParseError("model layer count out of range");
    for (std::uint32_t i = 0; i < n_sizes; ++i) {
        const auto s = get<std::int32_t>(is);
        if (s < 1 || s > 65536) throw ParseError("model layer size out of range");
        p.layer_sizes.push_back(s);
    }
    const auto n_in = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_in; ++i) {
        const double lo = get<double>(is), hi = get<double>(is);
        p.norm.in_ranges.emplace_back(lo, hi);
    }
    const auto n_out = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n_out; ++i) {
        const double lo = get<double>(is), hi = get<double>(is);
        p.norm.out_ranges.emplace_back(lo, hi);
    }
    if (static_cast<int>(n_in) != p.layer_sizes.front() ||
        static_cast<int>(n_out) != p.layer_sizes.back())
        throw ParseError("model normalizer shape mismatch");

    for (std::size_t l = 0; l + 1 < p.layer_sizes.size(); ++l) {
        const std::size_t nw =
            static_cast<std::size_t>(p.layer_sizes[l]) * p.layer_sizes[l + 1];
        std::vector<double> w(nw);
        is.read(reinterpret_cast<char*>(w.data()),
                static_cast<std::streamsize>(nw * sizeof(double)));
        std::vector<double> b(p.layer_sizes[l + 1]);
        is.read(reinterpret_cast<char*>(b.data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!is) throw ParseError("model file truncated in weights");
        for (double x : w)
            if (!std::isfinite(x)) throw NumericError("model has non-finite weights");
        for (double x : b)
            if (!std::isfinite(x)) throw NumericError("model has non-finite weights");
        p.weights.push_back(std::move(w));
        p.biases.push_back(std::move(b));
    }
    return p;
}

}  // namespace defid
