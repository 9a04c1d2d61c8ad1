#pragma once

#include <cmath>

#include "defid/errors.hpp"
#include "defid/linalg.hpp"

namespace defid {

namespace detail {

// Orthonormal completion for (near-)rank-deficient factors. Picks the unit
// axis least aligned with `a` and Gram-Schmidts it.
template <class S>
inline Vec3T<S> unit_orthogonal(const Vec3T<S>& a) {
    const double ax = std::abs(value_of(a.x));
    const double ay = std::abs(value_of(a.y));
    const double az = std::abs(value_of(a.z));
    Vec3T<S> e;
    if (ax <= ay && ax <= az)
        e = {S(1), S(0), S(0)};
    else if (ay <= az)
        e = {S(0), S(1), S(0)};
    else
        e = {S(0), S(0), S(1)};
    Vec3T<S> v = e - a * dot(a, e);
    const S n = norm(v);
    if (value_of(n) <= 0.0) return e;
    return v * (S(1) / n);
}

}  // namespace detail

// One-sided Jacobi SVD of a 3x3 matrix. a = u * diag(sigma) * v^T with
// u, v proper rotations (det = +1); any reflection is folded into the sign of
// the last singular value, so sigma is sorted descending and sigma[2] may be
// negative. Branch decisions use primal values only, which keeps the Dual2
// instantiation on the same code path as the double one.
template <class S>
inline void svd3(const Mat3T<S>& a, Mat3T<S>& u, Vec3T<S>& sigma, Mat3T<S>& v) {
    constexpr int kMaxSweeps = 30;
    constexpr double kTol = 1e-12;

    Mat3T<S> b = a;
    v = Mat3T<S>::identity();

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (int p = 0; p < 2; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                S alpha = S(0), beta = S(0), gamma = S(0);
                for (int k = 0; k < 3; ++k) {
                    alpha += b.m[k][p] * b.m[k][p];
                    beta += b.m[k][q] * b.m[k][q];
                    gamma += b.m[k][p] * b.m[k][q];
                }
                const double g = std::abs(value_of(gamma));
                if (g <= kTol * std::sqrt(value_of(alpha) * value_of(beta)) || g == 0.0)
                    continue;
                rotated = true;
                using std::sqrt;
                using defid::sqrt;
                const S zeta = (beta - alpha) / (S(2) * gamma);
                const S sign_z = value_of(zeta) >= 0.0 ? S(1) : S(-1);
                const S t = sign_z / (sign_z * zeta + sqrt(S(1) + zeta * zeta));
                const S c = S(1) / sqrt(S(1) + t * t);
                const S s = c * t;
                for (int k = 0; k < 3; ++k) {
                    const S bp = b.m[k][p], bq = b.m[k][q];
                    b.m[k][p] = c * bp - s * bq;
                    b.m[k][q] = s * bp + c * bq;
                    const S vp = v.m[k][p], vq = v.m[k][q];
                    v.m[k][p] = c * vp - s * vq;
                    v.m[k][q] = s * vp + c * vq;
                }
            }
        }
        if (!rotated) break;
    }

    S sig[3];
    Vec3T<S> cols[3];
    for (int j = 0; j < 3; ++j) {
        cols[j] = {b.m[0][j], b.m[1][j], b.m[2][j]};
        sig[j] = norm(cols[j]);
    }

    // Sort descending by singular value (3 elements, fixed network).
    int order[3] = {0, 1, 2};
    auto cmp_swap = [&](int i, int j) {
        if (value_of(sig[order[i]]) < value_of(sig[order[j]])) std::swap(order[i], order[j]);
    };
    cmp_swap(0, 1);
    cmp_swap(0, 2);
    cmp_swap(1, 2);

    Vec3T<S> ucols[3];
    const double smax = value_of(sig[order[0]]);
    const double degenerate_cut = smax > 0.0 ? 1e-14 * smax : 0.0;
    for (int j = 0; j < 3; ++j) {
        const int src = order[j];
        if (value_of(sig[src]) > degenerate_cut && value_of(sig[src]) > 0.0) {
            ucols[j] = cols[src] * (S(1) / sig[src]);
        } else if (j == 1) {
            ucols[j] = detail::unit_orthogonal(ucols[0]);
        } else if (j == 2) {
            ucols[j] = cross(ucols[0], ucols[1]);
        } else {
            ucols[j] = {S(1), S(0), S(0)};
        }
        sigma[j] = sig[src];
    }

    Mat3T<S> vs;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            u.m[i][j] = ucols[j][i];
            vs.m[i][j] = v.m[i][order[j]];
        }
    v = vs;

    // Fold reflections into the last singular value so det(u) = det(v) = +1.
    if (value_of(determinant(u)) < 0.0) {
        for (int i = 0; i < 3; ++i) u.m[i][2] = -u.m[i][2];
        sigma[2] = -sigma[2];
    }
    if (value_of(determinant(v)) < 0.0) {
        for (int i = 0; i < 3; ++i) v.m[i][2] = -v.m[i][2];
        sigma[2] = -sigma[2];
    }
}

// R = u * v^T from svd3(f). Requires det(f) > 0.
template <class S>
inline Mat3T<S> polar_rotation(const Mat3T<S>& f) {
    if (!(value_of(determinant(f)) > 0.0))
        throw InvertedElementError("polar_rotation: det(F) <= 0");
    Mat3T<S> u, v;
    Vec3T<S> sigma;
    svd3(f, u, sigma, v);
    return u * transposed(v);
}

// Newton polar iteration X <- (X + X^-T)/2; quadratic convergence for F near
// a rotation, which is the simulator's regime. Falls back to the SVD route on
// slow convergence. Convergence is judged on primal values only and one extra
// iteration is run after primal convergence so Dual2 tangents settle too.
template <class S>
inline Mat3T<S> rotation_of(const Mat3T<S>& f) {
    if (!(value_of(determinant(f)) > 0.0))
        throw InvertedElementError("rotation_of: det(F) <= 0");
    Mat3T<S> x = f;
    for (int it = 0; it < 24; ++it) {
        const double det = value_of(determinant(x));
        if (std::abs(det) < 1e-12 || !std::isfinite(det)) break;
        const Mat3T<S> next = (x + transposed(inverse(x))) * S(0.5);
        const double delta = max_abs(next - x);
        x = next;
        if (delta < 1e-13) {
            return (x + transposed(inverse(x))) * S(0.5);
        }
    }
    return polar_rotation(f);
}

}  // namespace defid
