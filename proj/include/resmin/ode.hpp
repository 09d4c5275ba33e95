#pragma once

// Reference full-model solver: Dormand-Prince 5(4) with PI step-size control.
// Output states are sampled on a TimeGrid by cubic Hermite dense output.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>

#include "resmin/errors.hpp"
#include "resmin/model.hpp"

namespace resmin {

struct OdeTolerances {
    double rel = 1e-8;
    double abs = 1e-10;
};

struct OdeStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t f_evals = 0;
};

/// States of one full-model run sampled on a time grid; row i is x(t_i).
struct Trajectory {
    TimeGrid grid;
    Matrix states;
    Vector param;
    OdeStats stats;
};

namespace detail {

// Dormand-Prince coefficients.
struct DP45 {
    static constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // b - bhat
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
};

inline Vector hermite(double theta, double h, const Vector& y0, const Vector& f0, const Vector& y1,
                      const Vector& f1) {
    const double t2 = theta * theta, t3 = t2 * theta;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + theta;
    const double h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1;
}

} // namespace detail

/// Integrates x' = f(x, t, s) from t = 0, x(0) = x0, sampling at out_grid.
///
/// Throws IntegrationFailure on step-size underflow, step-count exhaustion or
/// a nonfinite state. Grid points at t = 0 return x0.
inline Trajectory integrate(const ModelSystem& model, const VectorRef& x0, const VectorRef& s,
                            const TimeGrid& out_grid, OdeTolerances tol = {},
                            std::size_t max_steps = 50'000'000) {
    check_dims(model, x0.size(), s.size());
    out_grid.validate();
    if (!(tol.rel > 0.0) || !(tol.abs > 0.0)) throw InvalidArgument("ODE tolerances must be positive");
    if (out_grid.points.front() < 0.0) throw InvalidArgument("output grid starts before t = 0");

    using C = detail::DP45;
    const auto p = x0.size();
    const std::size_t m = out_grid.size();
    const double t_end = out_grid.points.back();

    Trajectory traj;
    traj.grid = out_grid;
    traj.param = s;
    traj.states.resize(static_cast<Eigen::Index>(m), p);

    Vector y = x0, ynew(p), ytmp(p), err(p);
    Vector k1(p), k2(p), k3(p), k4(p), k5(p), k6(p), k7(p);
    auto f = [&](double t, const Vector& x, Vector& out) {
        model.forcing(x, t, s, out);
        ++traj.stats.f_evals;
    };

    std::size_t next = 0;
    while (next < m && out_grid.points[next] <= 0.0) traj.states.row(static_cast<Eigen::Index>(next++)) = y;
    if (next == m) return traj;

    double t = 0.0;
    f(t, y, k1);

    // Initial step guess (Hairer-Norsett-Wanner II.4).
    auto scale = [&](const Vector& a, const Vector& b, Eigen::Index i) {
        return tol.abs + tol.rel * std::max(std::abs(a[i]), std::abs(b[i]));
    };
    double h;
    {
        double d0 = 0, d1 = 0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double sc = scale(y, y, i);
            d0 += (y[i] / sc) * (y[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        d0 = std::sqrt(d0 / p);
        d1 = std::sqrt(d1 / p);
        double h0 = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h0 = std::min(h0, t_end);
        ytmp = y + h0 * k1;
        f(h0, ytmp, k2);
        double d2 = 0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double sc = scale(y, y, i);
            d2 += ((k2[i] - k1[i]) / sc) * ((k2[i] - k1[i]) / sc);
        }
        d2 = std::sqrt(d2 / p) / h0;
        const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                      : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
        h = std::min(100 * h0, h1);
    }

    constexpr double safety = 0.9, min_factor = 0.2, max_factor = 10.0;
    constexpr double alpha = 0.7 / 5.0, beta = 0.4 / 5.0;
    double err_prev = 1e-4;
    bool last_rejected = false;
    std::size_t steps = 0;

    while (next < m) {
        if (steps++ > max_steps) throw IntegrationFailure("ODE step budget exhausted", t);
        const double min_h = 16.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(t));
        if (h < min_h) throw IntegrationFailure("ODE step size underflow", t);
        if (t + h > t_end) h = t_end - t;

        ytmp = y + h * (C::a21 * k1);
        f(t + C::c2 * h, ytmp, k2);
        ytmp = y + h * (C::a31 * k1 + C::a32 * k2);
        f(t + C::c3 * h, ytmp, k3);
        ytmp = y + h * (C::a41 * k1 + C::a42 * k2 + C::a43 * k3);
        f(t + C::c4 * h, ytmp, k4);
        ytmp = y + h * (C::a51 * k1 + C::a52 * k2 + C::a53 * k3 + C::a54 * k4);
        f(t + C::c5 * h, ytmp, k5);
        ytmp = y + h * (C::a61 * k1 + C::a62 * k2 + C::a63 * k3 + C::a64 * k4 + C::a65 * k5);
        f(t + h, ytmp, k6);
        ynew = y + h * (C::b1 * k1 + C::b3 * k3 + C::b4 * k4 + C::b5 * k5 + C::b6 * k6);
        f(t + h, ynew, k7);
        err = h * (C::e1 * k1 + C::e3 * k3 + C::e4 * k4 + C::e5 * k5 + C::e6 * k6 + C::e7 * k7);

        double en = 0.0;
        for (Eigen::Index i = 0; i < p; ++i) {
            const double r = err[i] / scale(y, ynew, i);
            en += r * r;
        }
        en = std::sqrt(en / static_cast<double>(p));
        if (!std::isfinite(en)) {
            h *= min_factor;
            last_rejected = true;
            ++traj.stats.rejected;
            continue;
        }

        if (en <= 1.0) {
            const double t_new = (h == t_end - t) ? t_end : t + h;
            while (next < m && out_grid.points[next] <= t_new) {
                const double tp = out_grid.points[next];
                auto row = traj.states.row(static_cast<Eigen::Index>(next));
                if (tp == t_new) row = ynew.transpose();
                else row = detail::hermite((tp - t) / h, h, y, k1, ynew, k7).transpose();
                ++next;
            }
            double factor = (en == 0.0) ? max_factor
                                        : safety * std::pow(en, -alpha) * std::pow(err_prev, beta);
            factor = std::clamp(factor, min_factor, max_factor);
            if (last_rejected) factor = std::min(factor, 1.0);
            err_prev = std::max(en, 1e-4);
            t = t_new;
            y = ynew;
            k1 = k7;
            if (!y.allFinite()) throw IntegrationFailure("nonfinite ODE state", t);
            h *= factor;
            last_rejected = false;
            ++traj.stats.accepted;
        } else {
            h *= std::max(min_factor, safety * std::pow(en, -alpha));
            last_rejected = true;
            ++traj.stats.rejected;
        }
    }
    if (!traj.states.allFinite()) throw IntegrationFailure("nonfinite ODE state", t);
    return traj;
}

/// Classical RK4 with `substeps` equal steps per output interval, from t = 0.
/// The step sequence does not depend on the parameter, so the result is a smooth
/// function of it. `rhs(x, t)` returns dx/dt; row i of the result is x(t_i).
template <class Scalar, class Rhs>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> integrate_fixed(Rhs&& rhs,
                                                                      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x,
                                                                      const TimeGrid& out_grid,
                                                                      std::size_t substeps) {
    out_grid.validate();
    if (substeps == 0) throw InvalidArgument("fixed-step integration needs at least one substep");
    if (out_grid.points.front() < 0.0) throw InvalidArgument("output grid must start at t >= 0");
    using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> states(static_cast<Eigen::Index>(out_grid.size()), x.size());
    Scalar t = 0;
    for (std::size_t i = 0; i < out_grid.size(); ++i) {
        const Scalar target = static_cast<Scalar>(out_grid.points[i]);
        const Scalar h = (target - t) / static_cast<Scalar>(substeps);
        if (h > 0) {
            for (std::size_t k = 0; k < substeps; ++k) {
                const Scalar tk = t + static_cast<Scalar>(k) * h;
                const Vec k1 = rhs(x, tk);
                const Vec k2 = rhs(Vec(x + (h / 2) * k1), tk + h / 2);
                const Vec k3 = rhs(Vec(x + (h / 2) * k2), tk + h / 2);
                const Vec k4 = rhs(Vec(x + h * k3), tk + h);
                x += (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4);
            }
        }
        t = target;
        if (!x.allFinite()) throw IntegrationFailure("fixed-step integration produced a nonfinite state",
                                                     static_cast<double>(t));
        states.row(static_cast<Eigen::Index>(i)) = x.transpose();
    }
    return states;
}

} // namespace resmin
