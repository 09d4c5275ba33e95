#pragma once

// Three-species stiff kinetics benchmark. State x = (u, v, w); the scalar
// parameter s in [0.005, 1.2] controls stiffness (smaller is stiffer).

#include <Eigen/Dense>

#include "resmin/errors.hpp"
#include "resmin/model.hpp"

namespace resmin::kinetics {

inline constexpr double s_min = 0.005;
inline constexpr double s_max = 1.2;

inline Eigen::Vector3d initial_state() { return Eigen::Vector3d::Constant(0.5); }

inline void check_stiffness(double s) {
    if (!(s > 0.0)) throw InvalidArgument("kinetics stiffness parameter must be positive");
}

/// Forcing in any floating-point type (used for extended-precision sampling).
template <class T>
Eigen::Matrix<T, 3, 1> forcing_generic(const Eigen::Matrix<T, 3, 1>& x, T s) {
    const T u = x[0], v = x[1], w = x[2];
    const T inv = T(1) / s;
    Eigen::Matrix<T, 3, 1> out;
    out[0] = -5 * u * inv - u * v * inv + v * w + 5 * v * v * inv + w * inv - u;
    out[1] = 10 * u * inv - u * v * inv - v * w - 10 * v * v * inv + w * inv + u;
    out[2] = u * v * inv - v * w - w * inv + u;
    return out;
}

inline void forcing(const VectorRef& x, double s, VectorOut out) {
    check_stiffness(s);
    out = forcing_generic<double>(Eigen::Vector3d(x[0], x[1], x[2]), s);
}

inline Eigen::Vector3d forcing(const Eigen::Vector3d& x, double s) {
    Eigen::Vector3d out;
    Vector buf(3);
    forcing(x, s, buf);
    out = buf;
    return out;
}

/// Exact state Jacobian of the kinetics forcing.
inline Eigen::Matrix3d jacobian(const VectorRef& x, double s) {
    check_stiffness(s);
    const double u = x[0], v = x[1], w = x[2];
    const double inv = 1.0 / s;
    Eigen::Matrix3d J;
    J(0, 0) = -5.0 * inv - v * inv - 1.0;
    J(0, 1) = -u * inv + w + 10.0 * v * inv;
    J(0, 2) = v + inv;
    J(1, 0) = 10.0 * inv - v * inv + 1.0;
    J(1, 1) = -u * inv - w - 20.0 * v * inv;
    J(1, 2) = -v + inv;
    J(2, 0) = v * inv + 1.0;
    J(2, 1) = u * inv - w;
    J(2, 2) = -v - inv;
    return J;
}

inline ModelSystem model() {
    ModelSystem m;
    m.state_dim = 3;
    m.param_dim = 1;
    m.name = "kinetics";
    m.forcing = [](const VectorRef& x, double, const VectorRef& s, VectorOut out) { forcing(x, s[0], out); };
    m.jacobian = [](const VectorRef& x, double, const VectorRef& s) -> Matrix { return jacobian(x, s[0]); };
    return m;
}

} // namespace resmin::kinetics
