#pragma once

// Parameterized dynamical systems x' = f(x, t, s), output time grids with
// quadrature weights, and forcing-evaluation accounting.

#include <Eigen/Dense>

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "resmin/errors.hpp"

namespace resmin {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using VectorRef = Eigen::Ref<const Eigen::VectorXd>;
using VectorOut = Eigen::Ref<Eigen::VectorXd>;

/// Thread-safe count of forcing evaluations.
class EvalCounter {
public:
    EvalCounter() = default;
    EvalCounter(const EvalCounter& other) : count_(other.count()) {}
    EvalCounter& operator=(const EvalCounter& other) {
        count_.store(other.count(), std::memory_order_relaxed);
        return *this;
    }

    void add(std::uint64_t k = 1) noexcept { count_.fetch_add(k, std::memory_order_relaxed); }
    std::uint64_t count() const noexcept { return count_.load(std::memory_order_relaxed); }
    void reset() noexcept { count_.store(0, std::memory_order_relaxed); }

private:
    std::atomic<std::uint64_t> count_{0};
};

/// x' = f(x, t, s) with state dimension p and parameter dimension d.
///
/// The forcing writes into a caller-provided buffer so the hot loops of the
/// interpolator do not allocate. The optional Jacobian is only used by tests
/// and diagnostics; the interpolator never requires it.
struct ModelSystem {
    using Forcing = std::function<void(const VectorRef& x, double t, const VectorRef& s, VectorOut out)>;
    using Jacobian = std::function<Matrix(const VectorRef& x, double t, const VectorRef& s)>;

    std::size_t state_dim = 0;
    std::size_t param_dim = 0;
    Forcing forcing;
    Jacobian jacobian; // may be empty
    std::string name;

    Vector operator()(const VectorRef& x, double t, const VectorRef& s) const {
        Vector out(static_cast<Eigen::Index>(state_dim));
        forcing(x, t, s, out);
        return out;
    }
};

inline void check_dims(const ModelSystem& model, Eigen::Index x_size, Eigen::Index s_size) {
    if (static_cast<std::size_t>(x_size) != model.state_dim)
        throw InvalidArgument("state has length " + std::to_string(x_size) + ", model expects " +
                              std::to_string(model.state_dim));
    if (static_cast<std::size_t>(s_size) != model.param_dim)
        throw InvalidArgument("parameter has length " + std::to_string(s_size) + ", model expects " +
                              std::to_string(model.param_dim));
}

/// Counted forcing evaluation into a buffer. Dimensions are checked.
inline void eval_counted(const ModelSystem& model, EvalCounter& counter, const VectorRef& x, double t,
                         const VectorRef& s, VectorOut out) {
    check_dims(model, x.size(), s.size());
    if (static_cast<std::size_t>(out.size()) != model.state_dim)
        throw InvalidArgument("output buffer has wrong length");
    model.forcing(x, t, s, out);
    counter.add();
}

inline Vector eval_counted(const ModelSystem& model, EvalCounter& counter, const VectorRef& x, double t,
                           const VectorRef& s) {
    Vector out(static_cast<Eigen::Index>(model.state_dim));
    eval_counted(model, counter, x, t, s, out);
    return out;
}

enum class GridScheme { uniform, trapezoid };

/// Output time points t_1 < ... < t_m with squared quadrature weights w_i^2.
struct TimeGrid {
    std::vector<double> points;
    std::vector<double> sq_weights;

    std::size_t size() const noexcept { return points.size(); }
    double weight(std::size_t i) const { return std::sqrt(sq_weights[i]); }

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

    /// Throws InvalidArgument unless the grid invariants hold.
    void validate() const {
        if (points.empty()) throw InvalidArgument("time grid is empty");
        if (points.size() != sq_weights.size())
            throw InvalidArgument("time grid points and weights differ in length");
        bool any_positive = false;
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (!std::isfinite(points[i]) || !std::isfinite(sq_weights[i]))
                throw InvalidArgument("time grid has a nonfinite entry");
            if (i > 0 && !(points[i] > points[i - 1]))
                throw InvalidArgument("time grid points must be strictly increasing");
            if (sq_weights[i] < 0.0) throw InvalidArgument("time grid weight is negative");
            any_positive = any_positive || sq_weights[i] > 0.0;
        }
        if (!any_positive) throw InvalidArgument("time grid has no positive weight");
    }
};

/// Uniform scheme: t_j = t_start + j*dt for j = 1..m, every w^2 = dt.
/// Trapezoid scheme: m points spanning both endpoints, trapezoid weights.
inline TimeGrid make_time_grid(double t_start, double t_end, std::size_t m, GridScheme scheme) {
    if (!std::isfinite(t_start) || !std::isfinite(t_end))
        throw InvalidArgument("time grid bounds must be finite");
    if (!(t_start < t_end)) throw InvalidArgument("time grid needs t_start < t_end");
    if (m == 0) throw InvalidArgument("time grid needs at least one point");

    TimeGrid grid;
    grid.points.resize(m);
    grid.sq_weights.resize(m);
    const double span = t_end - t_start;
    if (scheme == GridScheme::uniform) {
        const double dt = span / static_cast<double>(m);
        for (std::size_t j = 0; j < m; ++j) {
            grid.points[j] = t_start + static_cast<double>(j + 1) * dt;
            grid.sq_weights[j] = dt;
        }
        grid.points[m - 1] = t_end;
    } else {
        if (m < 2) throw InvalidArgument("trapezoid grid needs at least two points");
        const double dt = span / static_cast<double>(m - 1);
        for (std::size_t j = 0; j < m; ++j) {
            grid.points[j] = t_start + static_cast<double>(j) * dt;
            grid.sq_weights[j] = dt;
        }
        grid.points[m - 1] = t_end;
        grid.sq_weights.front() = 0.5 * dt;
        grid.sq_weights.back() = 0.5 * dt;
    }
    return grid;
}

} // namespace resmin
