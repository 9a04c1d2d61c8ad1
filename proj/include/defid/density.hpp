#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "defid/errors.hpp"
#include "defid/sim.hpp"

namespace defid {

struct PointCloudFrame {
    double time = 0.0;
    std::vector<Vec3> points;
};

// Non-negative mass density over an axis-aligned box, cell-centered samples.
template <class S>
struct DensityGridT {
    int resolution = 64;
    Vec3 lo{0, 0, 0}, hi{1, 1, 1};
    std::vector<S> values;
    int clamped_points = 0;  // points outside the bounds, folded into edge cells

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * resolution + j) * resolution + k;
    }
};

using DensityGrid = DensityGridT<double>;

// Splats each point (mass 1/N) trilinearly onto the 8 surrounding cell
// centers with per-axis weights (1-|f|). Points outside the bounds fold into
// the boundary cell layer and are counted.
template <class S>
DensityGridT<S> rasterize(std::span<const Vec3T<S>> points, int resolution, const Vec3& lo,
                          const Vec3& hi) {
    if (points.empty()) throw ConfigError("rasterize: empty point cloud");
    if (resolution < 2) throw ConfigError("rasterize: resolution must be >= 2");
    if (!(hi.x > lo.x && hi.y > lo.y && hi.z > lo.z))
        throw ConfigError("rasterize: degenerate bounds");

    DensityGridT<S> grid;
    grid.resolution = resolution;
    grid.lo = lo;
    grid.hi = hi;
    grid.values.assign(static_cast<std::size_t>(resolution) * resolution * resolution, S(0));

    const Vec3 inv_h{resolution / (hi.x - lo.x), resolution / (hi.y - lo.y),
                     resolution / (hi.z - lo.z)};
    const S point_mass = S(1.0 / static_cast<double>(points.size()));

    for (const auto& p : points) {
        const Vec3 pv = primal(p);
        if (pv.x < lo.x || pv.x > hi.x || pv.y < lo.y || pv.y > hi.y || pv.z < lo.z ||
            pv.z > hi.z)
            ++grid.clamped_points;

        // Continuous cell-center coordinate; floor gives the lower cell and
        // the fraction the trilinear weight. Index clamping folds edge and
        // out-of-bounds weight into the boundary layer.
        S c[3] = {(p.x - S(lo.x)) * S(inv_h.x) - S(0.5),
                  (p.y - S(lo.y)) * S(inv_h.y) - S(0.5),
                  (p.z - S(lo.z)) * S(inv_h.z) - S(0.5)};
        int i0[3];
        S f[3];
        for (int a = 0; a < 3; ++a) {
            i0[a] = static_cast<int>(std::floor(value_of(c[a])));
            f[a] = c[a] - S(i0[a]);
        }
        auto cell = [resolution](int i) { return std::clamp(i, 0, resolution - 1); };
        const S wx[2] = {S(1) - f[0], f[0]};
        const S wy[2] = {S(1) - f[1], f[1]};
        const S wz[2] = {S(1) - f[2], f[2]};
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
                for (int d = 0; d < 2; ++d)
                    grid.values[grid.index(cell(i0[0] + a), cell(i0[1] + b), cell(i0[2] + d))] +=
                        point_mass * wx[a] * wy[b] * wz[d];
    }
    return grid;
}

inline DensityGrid rasterize(const PointCloudFrame& frame, int resolution, const Vec3& lo,
                             const Vec3& hi) {
    return rasterize<double>(std::span<const Vec3>(frame.points), resolution, lo, hi);
}

template <class S>
S grid_total(const DensityGridT<S>& g) {
    S sum = S(0);
    for (const auto& v : g.values) sum += v;
    return sum;
}

// Sum of absolute cell differences. The left grid may carry tangents.
template <class S>
S l1_loss(const DensityGridT<S>& a, const DensityGridT<double>& b) {
    if (a.resolution != b.resolution || !(a.lo.x == b.lo.x && a.lo.y == b.lo.y &&
                                          a.lo.z == b.lo.z && a.hi.x == b.hi.x &&
                                          a.hi.y == b.hi.y && a.hi.z == b.hi.z))
        throw ConfigError("l1_loss: grid shape or bounds mismatch");
    using std::abs;
    using defid::abs;
    S sum = S(0);
    for (std::size_t i = 0; i < a.values.size(); ++i) sum += abs(a.values[i] - S(b.values[i]));
    return sum;
}

enum class LossMode { all_steps, last_step };

// Nearest-time frame alignment, then the mean rasterized L1 over the aligned
// pairs (all of them, or just the final reference frame).
template <class S>
S trajectory_loss(const TrajectoryT<S>& sim, const std::vector<PointCloudFrame>& ref,
                  LossMode mode, int resolution, const Vec3& lo, const Vec3& hi) {
    if (ref.empty()) throw ConfigError("trajectory_loss: no reference frames");
    if (sim.frames.size() < ref.size())
        throw ConfigError("trajectory_loss: simulation has fewer frames than the reference");

    const double tol = sim.frames.size() > 1
                           ? 0.5 * (sim.frames[1].time - sim.frames[0].time)
                           : std::numeric_limits<double>::infinity();

    struct Pair {
        int sim_frame;
        int ref_frame;
    };
    std::vector<Pair> pairs;
    const std::size_t ref_begin = mode == LossMode::last_step ? ref.size() - 1 : 0;
    for (std::size_t r = ref_begin; r < ref.size(); ++r) {
        int best = -1;
        double best_dt = tol * (1.0 + 1e-9);
        for (std::size_t f = 0; f < sim.frames.size(); ++f) {
            const double dt = std::abs(sim.frames[f].time - ref[r].time);
            if (dt < best_dt) {
                best_dt = dt;
                best = static_cast<int>(f);
            }
        }
        if (best >= 0) pairs.push_back({best, static_cast<int>(r)});
    }
    if (pairs.empty()) throw ConfigError("trajectory_loss: no alignable frames");

    std::vector<S> partial(pairs.size(), S(0));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(pairs.size()); ++i) {
        const auto& fr = sim.frames[pairs[i].sim_frame];
        const auto sim_grid = rasterize<S>(
            std::span<const Vec3T<S>>(fr.positions), resolution, lo, hi);
        const auto ref_grid = rasterize(ref[pairs[i].ref_frame], resolution, lo, hi);
        partial[i] = l1_loss(sim_grid, ref_grid);
    }
    S sum = S(0);
    for (const auto& v : partial) sum += v;  // ordered reduction, deterministic
    return sum * S(1.0 / static_cast<double>(pairs.size()));
}

namespace detail {

// Uniform-grid nearest-neighbor accelerator with an exact ring-expansion
// search; used by chamfer so the O(n^2) scan stays a test-side oracle.
class PointGrid {
  public:
    explicit PointGrid(std::span<const Vec3> pts) : pts_(pts) {
        lo_ = hi_ = pts[0];
        for (const auto& p : pts) {
            lo_ = {std::min(lo_.x, p.x), std::min(lo_.y, p.y), std::min(lo_.z, p.z)};
            hi_ = {std::max(hi_.x, p.x), std::max(hi_.y, p.y), std::max(hi_.z, p.z)};
        }
        const double target = std::cbrt(static_cast<double>(pts.size()));
        const int res = std::max(1, std::min(64, static_cast<int>(target)));
        res_ = res;
        const double span = std::max({hi_.x - lo_.x, hi_.y - lo_.y, hi_.z - lo_.z, 1e-12});
        h_ = span / res * (1.0 + 1e-12);
        cells_.assign(static_cast<std::size_t>(res) * res * res, {});
        for (std::size_t i = 0; i < pts.size(); ++i)
            cells_[cell_index(coord(pts[i]))].push_back(static_cast<std::uint32_t>(i));
    }

    double nearest_squared(const Vec3& q) const {
        const auto c = coord(q);
        double best = std::numeric_limits<double>::infinity();
        const int rmax = res_;  // worst case scans the whole grid
        for (int ring = 0; ring <= rmax; ++ring) {
            if (ring > 0) {
                const double reach = (ring - 1) * h_;
                if (best <= reach * reach) break;
            }
            scan_ring(q, c, ring, best);
        }
        return best;
    }

  private:
    std::array<int, 3> coord(const Vec3& p) const {
        auto f = [this](double v, double lo) {
            return std::clamp(static_cast<int>((v - lo) / h_), 0, res_ - 1);
        };
        return {f(p.x, lo_.x), f(p.y, lo_.y), f(p.z, lo_.z)};
    }

    std::size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[0]) * res_ + c[1]) * res_ + c[2];
    }

    void scan_cell(const Vec3& q, int i, int j, int k, double& best) const {
        if (i < 0 || j < 0 || k < 0 || i >= res_ || j >= res_ || k >= res_) return;
        for (std::uint32_t idx : cells_[cell_index({i, j, k})]) {
            const Vec3 d = pts_[idx] - q;
            best = std::min(best, dot(d, d));
        }
    }

    void scan_ring(const Vec3& q, const std::array<int, 3>& c, int ring, double& best) const {
        if (ring == 0) {
            scan_cell(q, c[0], c[1], c[2], best);
            return;
        }
        for (int di = -ring; di <= ring; ++di)
            for (int dj = -ring; dj <= ring; ++dj)
                for (int dk = -ring; dk <= ring; ++dk) {
                    if (std::max({std::abs(di), std::abs(dj), std::abs(dk)}) != ring) continue;
                    scan_cell(q, c[0] + di, c[1] + dj, c[2] + dk, best);
                }
    }

    std::span<const Vec3> pts_;
    Vec3 lo_, hi_;
    double h_ = 1.0;
    int res_ = 1;
    std::vector<std::vector<std::uint32_t>> cells_;
};

}  // namespace detail

// Mean squared bidirectional nearest-neighbor distance. Per-point results are
// summed in index order so the value does not depend on thread scheduling.
inline double chamfer(std::span<const Vec3> a, std::span<const Vec3> b) {
    if (a.empty() || b.empty()) throw ConfigError("chamfer: empty point cloud");
    const detail::PointGrid ga(a);
    const detail::PointGrid gb(b);
    std::vector<double> d_ab(a.size()), d_ba(b.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(a.size()); ++i)
        d_ab[i] = gb.nearest_squared(a[i]);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(b.size()); ++i)
        d_ba[i] = ga.nearest_squared(b[i]);
    double sum_ab = 0.0, sum_ba = 0.0;
    for (double v : d_ab) sum_ab += v;
    for (double v : d_ba) sum_ba += v;
    return sum_ab / static_cast<double>(a.size()) + sum_ba / static_cast<double>(b.size());
}

inline double chamfer(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    return chamfer(std::span<const Vec3>(a), std::span<const Vec3>(b));
}

}  // namespace defid
