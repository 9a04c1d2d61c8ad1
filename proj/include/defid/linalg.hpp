#pragma once

#include <cmath>

#include "defid/dual.hpp"

namespace defid {

template <class S>
struct Vec3T {
    S x{}, y{}, z{};

    constexpr Vec3T() = default;
    constexpr Vec3T(S xx, S yy, S zz) : x(xx), y(yy), z(zz) {}

    S& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
    const S& operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }

    Vec3T& operator+=(const Vec3T& b) {
        x += b.x;
        y += b.y;
        z += b.z;
        return *this;
    }
    Vec3T& operator-=(const Vec3T& b) {
        x -= b.x;
        y -= b.y;
        z -= b.z;
        return *this;
    }
    Vec3T& operator*=(const S& s) {
        x *= s;
        y *= s;
        z *= s;
        return *this;
    }
};

using Vec3 = Vec3T<double>;

template <class S>
inline Vec3T<S> operator+(Vec3T<S> a, const Vec3T<S>& b) { return a += b; }
template <class S>
inline Vec3T<S> operator-(Vec3T<S> a, const Vec3T<S>& b) { return a -= b; }
template <class S>
inline Vec3T<S> operator-(const Vec3T<S>& a) { return {-a.x, -a.y, -a.z}; }
template <class S>
inline Vec3T<S> operator*(Vec3T<S> a, const S& s) { return a *= s; }
template <class S>
inline Vec3T<S> operator*(const S& s, Vec3T<S> a) { return a *= s; }
inline Vec3T<Dual2> operator*(double s, Vec3T<Dual2> a) { return a *= Dual2(s); }
inline Vec3T<Dual2> operator*(Vec3T<Dual2> a, double s) { return a *= Dual2(s); }

template <class S>
inline S dot(const Vec3T<S>& a, const Vec3T<S>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <class S>
inline Vec3T<S> cross(const Vec3T<S>& a, const Vec3T<S>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <class S>
inline S squared_norm(const Vec3T<S>& a) { return dot(a, a); }

template <class S>
inline S norm(const Vec3T<S>& a) {
    using std::sqrt;
    using defid::sqrt;
    return sqrt(dot(a, a));
}

template <class S>
inline bool all_finite(const Vec3T<S>& a) {
    return all_finite(a.x) && all_finite(a.y) && all_finite(a.z);
}

inline Vec3 primal(const Vec3T<Dual2>& a) { return {a.x.val, a.y.val, a.z.val}; }
inline Vec3 primal(const Vec3& a) { return a; }

// Row-major 3x3 matrix.
template <class S>
struct Mat3T {
    S m[3][3] = {};

    constexpr Mat3T() = default;

    static Mat3T identity() {
        Mat3T r;
        r.m[0][0] = S(1);
        r.m[1][1] = S(1);
        r.m[2][2] = S(1);
        return r;
    }

    S& operator()(int i, int j) { return m[i][j]; }
    const S& operator()(int i, int j) const { return m[i][j]; }

    Mat3T& operator+=(const Mat3T& b) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] += b.m[i][j];
        return *this;
    }
    Mat3T& operator-=(const Mat3T& b) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] -= b.m[i][j];
        return *this;
    }
    Mat3T& operator*=(const S& s) {
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) m[i][j] *= s;
        return *this;
    }
};

using Mat3 = Mat3T<double>;

template <class S>
inline Mat3T<S> operator+(Mat3T<S> a, const Mat3T<S>& b) { return a += b; }
template <class S>
inline Mat3T<S> operator-(Mat3T<S> a, const Mat3T<S>& b) { return a -= b; }
template <class S>
inline Mat3T<S> operator*(Mat3T<S> a, const S& s) { return a *= s; }
template <class S>
inline Mat3T<S> operator*(const S& s, Mat3T<S> a) { return a *= s; }
inline Mat3T<Dual2> operator*(double s, Mat3T<Dual2> a) { return a *= Dual2(s); }
inline Mat3T<Dual2> operator*(Mat3T<Dual2> a, double s) { return a *= Dual2(s); }

template <class S>
inline Vec3T<S> operator*(const Mat3T<S>& a, const Vec3T<S>& v) {
    return {a.m[0][0] * v.x + a.m[0][1] * v.y + a.m[0][2] * v.z,
            a.m[1][0] * v.x + a.m[1][1] * v.y + a.m[1][2] * v.z,
            a.m[2][0] * v.x + a.m[2][1] * v.y + a.m[2][2] * v.z};
}

template <class S>
inline Mat3T<S> operator*(const Mat3T<S>& a, const Mat3T<S>& b) {
    Mat3T<S> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.m[i][j] = a.m[i][0] * b.m[0][j] + a.m[i][1] * b.m[1][j] + a.m[i][2] * b.m[2][j];
    return r;
}

template <class S>
inline Mat3T<S> transposed(const Mat3T<S>& a) {
    Mat3T<S> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = a.m[j][i];
    return r;
}

template <class S>
inline S determinant(const Mat3T<S>& a) {
    return a.m[0][0] * (a.m[1][1] * a.m[2][2] - a.m[1][2] * a.m[2][1]) -
           a.m[0][1] * (a.m[1][0] * a.m[2][2] - a.m[1][2] * a.m[2][0]) +
           a.m[0][2] * (a.m[1][0] * a.m[2][1] - a.m[1][1] * a.m[2][0]);
}

template <class S>
inline S trace(const Mat3T<S>& a) { return a.m[0][0] + a.m[1][1] + a.m[2][2]; }

// Adjugate-based inverse; callers guard against singular input.
template <class S>
inline Mat3T<S> inverse(const Mat3T<S>& a) {
    Mat3T<S> adj;
    adj.m[0][0] = a.m[1][1] * a.m[2][2] - a.m[1][2] * a.m[2][1];
    adj.m[0][1] = a.m[0][2] * a.m[2][1] - a.m[0][1] * a.m[2][2];
    adj.m[0][2] = a.m[0][1] * a.m[1][2] - a.m[0][2] * a.m[1][1];
    adj.m[1][0] = a.m[1][2] * a.m[2][0] - a.m[1][0] * a.m[2][2];
    adj.m[1][1] = a.m[0][0] * a.m[2][2] - a.m[0][2] * a.m[2][0];
    adj.m[1][2] = a.m[0][2] * a.m[1][0] - a.m[0][0] * a.m[1][2];
    adj.m[2][0] = a.m[1][0] * a.m[2][1] - a.m[1][1] * a.m[2][0];
    adj.m[2][1] = a.m[0][1] * a.m[2][0] - a.m[0][0] * a.m[2][1];
    adj.m[2][2] = a.m[0][0] * a.m[1][1] - a.m[0][1] * a.m[1][0];
    const S inv_det = S(1) / determinant(a);
    return adj * inv_det;
}

template <class S>
inline Mat3T<S> outer(const Vec3T<S>& a, const Vec3T<S>& b) {
    Mat3T<S> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[i][j] = a[i] * b[j];
    return r;
}

template <class S>
inline double max_abs(const Mat3T<S>& a) {
    double r = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r = std::max(r, std::abs(value_of(a.m[i][j])));
    return r;
}

template <class S>
inline bool all_finite(const Mat3T<S>& a) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            if (!all_finite(a.m[i][j])) return false;
    return true;
}

}  // namespace defid
