#pragma once

#include "defid/dual.hpp"
#include "defid/errors.hpp"
#include "defid/linalg.hpp"
#include "defid/svd3.hpp"

namespace defid {

// Young's modulus / Poisson's ratio / density. E values follow the simulator
// scale used throughout (hundreds to ~10,500), not physical pascals.
template <class S>
struct MaterialParamsT {
    S youngs_modulus{};
    S poissons_ratio{};
    double density = 1.0;
};

using MaterialParams = MaterialParamsT<double>;

inline void validate(const MaterialParams& m) {
    if (!(m.youngs_modulus > 0.0))
        throw ConfigError("material: Young's modulus must be > 0");
    if (!(m.poissons_ratio > 0.0 && m.poissons_ratio < 0.5))
        throw ConfigError("material: Poisson's ratio must lie in (0, 0.5)");
    if (!(m.density > 0.0)) throw ConfigError("material: density must be > 0");
}

// Seeds the two forward-mode tangents: d/dE on E, d/dnu on nu.
inline MaterialParamsT<Dual2> seeded(const MaterialParams& m) {
    validate(m);
    return {Dual2(m.youngs_modulus, 1.0, 0.0), Dual2(m.poissons_ratio, 0.0, 1.0), m.density};
}

template <class S>
inline MaterialParamsT<S> to_scalar(const MaterialParams& m) {
    if constexpr (std::is_same_v<S, double>)
        return m;
    else
        return {S(m.youngs_modulus), S(m.poissons_ratio), m.density};
}

template <class S>
struct Lame {
    S mu{}, lambda{};
};

template <class S>
inline Lame<S> lame_parameters(const S& e, const S& nu) {
    if (!(value_of(nu) > 0.0 && value_of(nu) < 0.5))
        throw ConfigError("lame_parameters: Poisson's ratio outside (0, 0.5)");
    const S mu = e / (S(2) * (S(1) + nu));
    const S lambda = e * nu / ((S(1) + nu) * (S(1) - S(2) * nu));
    return {mu, lambda};
}

// First Piola-Kirchhoff stress of the fixed corotated model:
//   P(F) = 2 mu (F - R) + lambda (J - 1) J F^-T
template <class S>
inline Mat3T<S> corotated_stress(const Mat3T<S>& f, const S& mu, const S& lambda) {
    const S j = determinant(f);
    if (!(value_of(j) > 0.0))
        throw InvertedElementError("corotated_stress: det(F) <= 0");
    const Mat3T<S> r = rotation_of(f);
    const Mat3T<S> f_inv_t = transposed(inverse(f));
    return S(2) * mu * (f - r) + (lambda * (j - S(1)) * j) * f_inv_t;
}

}  // namespace defid
