#pragma once

#include <cmath>

namespace defid {

// Forward-mode scalar carrying two tangents: d/dE and d/dnu.
// The primal component performs exactly the same floating-point operations as
// a plain double would, so a zero-tangent Dual2 computation is bit-identical
// to the double computation (build keeps -ffp-contract=off for this).
// min/max/clamp propagate the tangent of the selected branch.
struct Dual2 {
    double val = 0.0;
    double de = 0.0;   // tangent w.r.t. Young's modulus
    double dnu = 0.0;  // tangent w.r.t. Poisson's ratio

    constexpr Dual2() = default;
    constexpr Dual2(double v) : val(v) {}
    constexpr Dual2(double v, double e, double n) : val(v), de(e), dnu(n) {}

    Dual2& operator+=(const Dual2& b) {
        val += b.val;
        de += b.de;
        dnu += b.dnu;
        return *this;
    }
    Dual2& operator-=(const Dual2& b) {
        val -= b.val;
        de -= b.de;
        dnu -= b.dnu;
        return *this;
    }
    Dual2& operator*=(const Dual2& b) {
        de = de * b.val + val * b.de;
        dnu = dnu * b.val + val * b.dnu;
        val *= b.val;
        return *this;
    }
    Dual2& operator/=(const Dual2& b) {
        const double q = val / b.val;
        de = (de - q * b.de) / b.val;
        dnu = (dnu - q * b.dnu) / b.val;
        val = q;
        return *this;
    }
};

inline Dual2 operator+(Dual2 a, const Dual2& b) { return a += b; }
inline Dual2 operator-(Dual2 a, const Dual2& b) { return a -= b; }
inline Dual2 operator*(Dual2 a, const Dual2& b) { return a *= b; }
inline Dual2 operator/(Dual2 a, const Dual2& b) { return a /= b; }
inline Dual2 operator-(const Dual2& a) { return {-a.val, -a.de, -a.dnu}; }
inline Dual2 operator+(const Dual2& a) { return a; }

// Comparisons look at the primal only, so Dual2 code takes the same branches
// a plain-double run would.
inline bool operator<(const Dual2& a, const Dual2& b) { return a.val < b.val; }
inline bool operator>(const Dual2& a, const Dual2& b) { return a.val > b.val; }
inline bool operator<=(const Dual2& a, const Dual2& b) { return a.val <= b.val; }
inline bool operator>=(const Dual2& a, const Dual2& b) { return a.val >= b.val; }
inline bool operator==(const Dual2& a, const Dual2& b) { return a.val == b.val; }
inline bool operator!=(const Dual2& a, const Dual2& b) { return a.val != b.val; }

inline Dual2 sqrt(const Dual2& a) {
    const double s = std::sqrt(a.val);
    const double inv = 0.5 / s;
    return {s, a.de * inv, a.dnu * inv};
}

inline Dual2 abs(const Dual2& a) { return a.val < 0.0 ? -a : a; }

inline Dual2 min(const Dual2& a, const Dual2& b) { return b.val < a.val ? b : a; }
inline Dual2 max(const Dual2& a, const Dual2& b) { return a.val < b.val ? b : a; }

inline Dual2 clamp(const Dual2& x, const Dual2& lo, const Dual2& hi) {
    return min(max(x, lo), hi);
}

inline bool isfinite(const Dual2& a) {
    return std::isfinite(a.val) && std::isfinite(a.de) && std::isfinite(a.dnu);
}

// Primal accessors usable in code generic over double / Dual2.
inline double value_of(double x) { return x; }
inline double value_of(const Dual2& x) { return x.val; }

inline bool all_finite(double x) { return std::isfinite(x); }
inline bool all_finite(const Dual2& x) { return isfinite(x); }

}  // namespace defid
