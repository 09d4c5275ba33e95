#pragma once

// Transient nonlinear heat conduction on a rectangle,
//
//     rho_c dT/dt = div( kappa(T, s) grad T ),
//
// with prescribed temperature on the left and bottom edges and no flux on the
// others. The semidiscrete system uses a vertex-centred grid with
// harmonic-mean face conductivities and mirror ghost nodes on no-flux edges,
// and is exposed as a ModelSystem. solve_heat integrates it with adaptive
// variable-step BDF of order 1-2 and fixed-point iteration on kappa.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "resmin/conductivity.hpp"
#include "resmin/errors.hpp"
#include "resmin/model.hpp"
#include "resmin/ode.hpp"

namespace resmin::heat {

/// Environment temperature along the heated edges; `x` is the distance in metres
/// from the bottom-left corner measured along the edge, `t` in seconds.
inline double boundary_temp(double x, double t) {
    return std::min(1100.0, std::max(20.0, (98.0 / 3.0) * t - 6000.0 * x - 700.0));
}

struct HeatDomain {
    double Lx = 0.1;
    double Ly = 0.2;
    std::size_t nx = 21;
    std::size_t ny = 41;
    double rho_c = 3.6e6;
    double initial_temp = 20.0;
    bool dirichlet_left = true;
    bool dirichlet_bottom = true;
    /// Prescribed edge temperature T(x1, x2, t). Empty means boundary_temp on the
    /// edge arclength (x1 along the bottom, x2 along the left).
    std::function<double(double x1, double x2, double t)> boundary;

    void validate() const {
        if (!(Lx > 0.0) || !(Ly > 0.0)) throw InvalidArgument("domain lengths must be positive");
        if (nx < 1 || ny < 1) throw InvalidArgument("grid needs at least one cell in each direction");
        if (!(rho_c > 0.0)) throw InvalidArgument("rho_c must be positive");
        if (!std::isfinite(initial_temp)) throw InvalidArgument("initial temperature must be finite");
    }
};

struct QoIConfig {
    double threshold = 1000.0;
    double eval_time = 70.0;
};

/// kappa(T, s) in W/(m K).
using KappaFn = std::function<double(double T, const VectorRef& s)>;

/// Grid layout, conductivity and operator assembly for one HeatDomain.
class HeatProblem {
public:
    HeatProblem(HeatDomain domain, std::shared_ptr<const conductivity::KLBasis> kl)
        : HeatProblem(std::move(domain), kl->size(),
                      [kl](double T, const VectorRef& s) { return conductivity::kappa(T, s, *kl); }) {
        kl_ = std::move(kl);
    }

    HeatProblem(HeatDomain domain, std::size_t param_dim, KappaFn kappa)
        : dom_(std::move(domain)), param_dim_(param_dim), kappa_(std::move(kappa)) {
        dom_.validate();
        if (!kappa_) throw InvalidArgument("conductivity function is empty");
        hx_ = dom_.Lx / static_cast<double>(dom_.nx);
        hy_ = dom_.Ly / static_cast<double>(dom_.ny);
        i0_ = dom_.dirichlet_left ? 1 : 0;
        j0_ = dom_.dirichlet_bottom ? 1 : 0;
        nxu_ = dom_.nx + 1 - i0_;
        nyu_ = dom_.ny + 1 - j0_;
        areas_.resize(static_cast<Eigen::Index>(size()));
        for (std::size_t j = j0_; j <= dom_.ny; ++j)
            for (std::size_t i = i0_; i <= dom_.nx; ++i) {
                const double ax = (i == 0 || i == dom_.nx) ? 0.5 * hx_ : hx_;
                const double ay = (j == 0 || j == dom_.ny) ? 0.5 * hy_ : hy_;
                areas_[index(i, j)] = ax * ay;
            }
    }

    const HeatDomain& domain() const noexcept { return dom_; }
    std::size_t size() const noexcept { return nxu_ * nyu_; }
    std::size_t param_dim() const noexcept { return param_dim_; }
    double hx() const noexcept { return hx_; }
    double hy() const noexcept { return hy_; }
    /// Control-volume area of each unknown.
    const Vector& areas() const noexcept { return areas_; }
    const conductivity::KLBasis* kl() const noexcept { return kl_.get(); }

    bool is_unknown(std::size_t i, std::size_t j) const noexcept { return i >= i0_ && j >= j0_; }
    Eigen::Index index(std::size_t i, std::size_t j) const noexcept {
        return static_cast<Eigen::Index>((j - j0_) * nxu_ + (i - i0_));
    }
    double x1(std::size_t i) const noexcept { return static_cast<double>(i) * hx_; }
    double x2(std::size_t j) const noexcept { return static_cast<double>(j) * hy_; }

    double edge_temp(std::size_t i, std::size_t j, double t) const {
        if (dom_.boundary) return dom_.boundary(x1(i), x2(j), t);
        return boundary_temp(j == 0 ? x1(i) : x2(j), t);
    }

    Vector initial_field() const { return Vector::Constant(static_cast<Eigen::Index>(size()), dom_.initial_temp); }

    /// Node temperatures over the full (nx+1) x (ny+1) vertex grid, Dirichlet
    /// nodes filled from the edge data at time t. Row-major in j.
    Vector full_field(const VectorRef& T, double t) const {
        check_state(T);
        Vector full((dom_.nx + 1) * (dom_.ny + 1));
        for (std::size_t j = 0; j <= dom_.ny; ++j)
            for (std::size_t i = 0; i <= dom_.nx; ++i)
                full[static_cast<Eigen::Index>(j * (dom_.nx + 1) + i)] =
                    is_unknown(i, j) ? T[index(i, j)] : edge_temp(i, j, t);
        return full;
    }

    /// Linear operator with kappa frozen at `Tk`: rho_c * f(T) = A T + b for T = Tk.
    void assemble(const VectorRef& Tk, double t, const VectorRef& s, Eigen::SparseMatrix<double>& A,
                  Vector& b) const {
        check_state(Tk);
        check_param(s);
        const std::size_t NX = dom_.nx + 1;
        const Vector full = full_field(Tk, t);
        Vector kap(full.size());
        for (Eigen::Index k = 0; k < full.size(); ++k) kap[k] = kappa_(full[k], s);

        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(size() * 5);
        b.setZero(static_cast<Eigen::Index>(size()));
        const double cx = 1.0 / (hx_ * hx_), cy = 1.0 / (hy_ * hy_);
        auto node = [NX](std::size_t i, std::size_t j) { return static_cast<Eigen::Index>(j * NX + i); };
        auto harm = [](double a, double c) { return 2.0 * a * c / (a + c); };

        for (std::size_t j = j0_; j <= dom_.ny; ++j) {
            for (std::size_t i = i0_; i <= dom_.nx; ++i) {
                const Eigen::Index row = index(i, j);
                double diag = 0.0;
                // One neighbour direction: coefficient c, neighbour (ni, nj).
                auto couple = [&](double coef, std::size_t ni, std::size_t nj) {
                    diag -= coef;
                    if (is_unknown(ni, nj))
                        trip.emplace_back(row, index(ni, nj), coef);
                    else
                        b[row] += coef * full[node(ni, nj)];
                };
                const double kc = kap[node(i, j)];
                // x direction
                if (i == 0) {
                    couple(2.0 * cx * harm(kc, kap[node(1, j)]), 1, j);
                } else if (i == dom_.nx) {
                    couple(2.0 * cx * harm(kc, kap[node(i - 1, j)]), i - 1, j);
                } else {
                    couple(cx * harm(kc, kap[node(i - 1, j)]), i - 1, j);
                    couple(cx * harm(kc, kap[node(i + 1, j)]), i + 1, j);
                }
                // y direction
                if (j == 0) {
                    couple(2.0 * cy * harm(kc, kap[node(i, 1)]), i, 1);
                } else if (j == dom_.ny) {
                    couple(2.0 * cy * harm(kc, kap[node(i, j - 1)]), i, j - 1);
                } else {
                    couple(cy * harm(kc, kap[node(i, j - 1)]), i, j - 1);
                    couple(cy * harm(kc, kap[node(i, j + 1)]), i, j + 1);
                }
                trip.emplace_back(row, row, diag);
            }
        }
        A.resize(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(size()));
        A.setFromTriplets(trip.begin(), trip.end());
    }

    /// Semidiscrete right-hand side (1/rho_c) div(kappa grad T).
    void forcing(const VectorRef& T, double t, const VectorRef& s, VectorOut out) const {
        Eigen::SparseMatrix<double> A;
        Vector b;
        assemble(T, t, s, A, b);
        out = (A * T + b) / dom_.rho_c;
    }

    Vector forcing(const VectorRef& T, double t, const VectorRef& s) const {
        Vector out(static_cast<Eigen::Index>(size()));
        forcing(T, t, s, out);
        return out;
    }

    double kappa(double T, const VectorRef& s) const { return kappa_(T, s); }

private:
    void check_state(const VectorRef& T) const {
        if (static_cast<std::size_t>(T.size()) != size())
            throw InvalidArgument("temperature vector has length " + std::to_string(T.size()) + ", expected " +
                                  std::to_string(size()));
    }
    void check_param(const VectorRef& s) const {
        if (static_cast<std::size_t>(s.size()) != param_dim_)
            throw InvalidArgument("conductivity parameter has the wrong length");
    }

    HeatDomain dom_;
    std::size_t param_dim_;
    KappaFn kappa_;
    std::shared_ptr<const conductivity::KLBasis> kl_;
    double hx_ = 0.0, hy_ = 0.0;
    std::size_t i0_ = 1, j0_ = 1, nxu_ = 0, nyu_ = 0;
    Vector areas_;
};

inline ModelSystem heat_model(std::shared_ptr<const HeatProblem> problem) {
    ModelSystem m;
    m.state_dim = problem->size();
    m.param_dim = problem->param_dim();
    m.name = "heat";
    m.forcing = [problem](const VectorRef& x, double t, const VectorRef& s, VectorOut out) {
        problem->forcing(x, t, s, out);
    };
    return m;
}

/// Area-weighted fraction of the unknowns with T above the threshold.
inline double qoi_fraction(const VectorRef& T, const HeatProblem& problem, const QoIConfig& cfg = {}) {
    if (static_cast<std::size_t>(T.size()) != problem.size()) throw InvalidArgument("temperature vector length mismatch");
    const Vector& a = problem.areas();
    double hot = 0.0, total = 0.0;
    for (Eigen::Index k = 0; k < T.size(); ++k) {
        total += a[k];
        if (T[k] > cfg.threshold) hot += a[k];
    }
    return hot / total;
}

struct HeatSolverOptions {
    double rel = 1e-5;
    double abs = 1e-3; // degrees C
    int max_order = 2;
    double picard_tol = 1e-8;
    std::size_t max_picard = 60;
    double h_initial = 1e-2;
    double h_min = 1e-10;
    double h_max = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 200000;
};

struct HeatStats {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::size_t picard_iters = 0;
    std::size_t picard_failures = 0;
    std::size_t assemblies = 0;
};

struct HeatTrajectory {
    Trajectory traj;
    HeatStats stats;
};

namespace detail {

// Extrapolating polynomial through (ts[k], ys[k]) evaluated at t.
inline Vector lagrange_extrapolate(const std::vector<double>& ts, const std::vector<Vector>& ys, double t) {
    Vector out = Vector::Zero(ys.front().size());
    for (std::size_t k = 0; k < ts.size(); ++k) {
        double l = 1.0;
        for (std::size_t q = 0; q < ts.size(); ++q)
            if (q != k) l *= (t - ts[q]) / (ts[k] - ts[q]);
        out += l * ys[k];
    }
    return out;
}

} // namespace detail

/// Adaptive BDF integration from t = 0 with the initial field `T0` (domain
/// initial temperature when empty). States are recorded exactly at the grid times.
inline HeatTrajectory solve_heat(const HeatProblem& problem, const VectorRef& s, const TimeGrid& out_grid,
                                 const HeatSolverOptions& opt = {}, const Vector& T0 = {}) {
    out_grid.validate();
    if (!(opt.rel > 0.0) || !(opt.abs > 0.0)) throw InvalidArgument("tolerances must be positive");
    if (opt.max_order < 1 || opt.max_order > 2) throw InvalidArgument("BDF order must be 1 or 2");
    if (out_grid.points.front() < 0.0) throw InvalidArgument("output grid must start at t >= 0");
    if (static_cast<std::size_t>(s.size()) != problem.param_dim())
        throw InvalidArgument("conductivity parameter has the wrong length");

    const auto p = static_cast<Eigen::Index>(problem.size());
    const double rc = problem.domain().rho_c;
    Vector y = T0.size() == 0 ? problem.initial_field() : T0;
    if (y.size() != p) throw InvalidArgument("initial field has the wrong length");

    HeatTrajectory res;
    res.traj.grid = out_grid;
    res.traj.param = s;
    res.traj.states.resize(static_cast<Eigen::Index>(out_grid.size()), p);

    double t = 0.0;
    std::size_t next_out = 0;
    while (next_out < out_grid.size() && out_grid.points[next_out] <= 0.0) {
        res.traj.states.row(static_cast<Eigen::Index>(next_out)) = y.transpose();
        ++next_out;
    }

    std::vector<double> hist_t{t};
    std::vector<Vector> hist_y{y};
    Eigen::SparseMatrix<double> A;
    Vector b;
    Eigen::SparseMatrix<double> I(p, p);
    I.setIdentity();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;

    auto wnorm = [&](const Vector& e, const Vector& ya, const Vector& yb) {
        double m = 0.0;
        for (Eigen::Index k = 0; k < e.size(); ++k)
            m = std::max(m, std::abs(e[k]) / (opt.abs + opt.rel * std::max(std::abs(ya[k]), std::abs(yb[k]))));
        return m;
    };

    double h = std::min(opt.h_initial, opt.h_max);
    std::size_t steps = 0;
    bool last_rejected = false;
    while (next_out < out_grid.size()) {
        if (++steps > opt.max_steps) throw IntegrationFailure("heat solver exceeded the step budget", t);
        const double target = out_grid.points[next_out];
        bool hits_output = false;
        double hs = h;
        if (t + hs >= target - 1e-12 * std::max(1.0, target)) {
            hs = target - t;
            hits_output = true;
        }
        const double tn = t + hs;

        // Order from the available history.
        const int q = std::min<int>(opt.max_order, static_cast<int>(hist_t.size()));
        double c0 = 1.0;
        Vector rhs = hist_y.back();
        if (q == 2) {
            const double w = hs / (t - hist_t[hist_t.size() - 2]);
            c0 = (1.0 + 2.0 * w) / (1.0 + w);
            rhs = (1.0 + w) * hist_y.back() - (w * w / (1.0 + w)) * hist_y[hist_y.size() - 2];
        }

        // Predictor: extrapolation through the last q+1 points, or explicit Euler at the start.
        Vector pred;
        double lte_factor = 0.5;
        if (hist_t.size() == 1) {
            problem.assemble(y, t, s, A, b);
            ++res.stats.assemblies;
            pred = y + hs * (A * y + b) / rc;
        } else {
            const std::size_t use = std::min<std::size_t>(hist_t.size(), static_cast<std::size_t>(q) + 1);
            std::vector<double> ts(hist_t.end() - static_cast<std::ptrdiff_t>(use), hist_t.end());
            std::vector<Vector> ys(hist_y.end() - static_cast<std::ptrdiff_t>(use), hist_y.end());
            pred = detail::lagrange_extrapolate(ts, ys, tn);
            if (q == 1) {
                const double hp = t - ts[0];
                lte_factor = hs / (2.0 * hs + hp);
            } else if (use == 3) {
                const double h1 = t - ts[1], h2 = ts[1] - ts[0];
                const double E = (hs + h1) * (hs + h1 + h2) / (6.0 * hs * hs);
                lte_factor = (2.0 / 9.0) / (2.0 / 9.0 + E);
            } else {
                lte_factor = 2.0 / 11.0;
            }
        }

        // Fixed-point iteration on kappa: solve (c0 I - hs/rc A(Y_k)) Y = rhs + hs/rc b(Y_k).
        Vector Y = pred;
        bool ok = false;
        double damp = 1.0;
        problem.assemble(Y, tn, s, A, b);
        ++res.stats.assemblies;
        Vector G = c0 * Y - (hs / rc) * (A * Y + b) - rhs;
        double gnorm = G.lpNorm<Eigen::Infinity>();
        for (std::size_t it = 0; it < opt.max_picard; ++it) {
            const double scale = c0 * std::max(1.0, Y.lpNorm<Eigen::Infinity>());
            if (gnorm <= opt.picard_tol * scale) {
                ok = true;
                break;
            }
            const Eigen::SparseMatrix<double> M = c0 * I - (hs / rc) * A;
            lu.compute(M);
            if (lu.info() != Eigen::Success) break;
            const Vector Yt = lu.solve(rhs + (hs / rc) * b);
            if (!Yt.allFinite()) break;
            Vector Ynew = Y + damp * (Yt - Y);
            problem.assemble(Ynew, tn, s, A, b);
            ++res.stats.assemblies;
            ++res.stats.picard_iters;
            Vector Gnew = c0 * Ynew - (hs / rc) * (A * Ynew + b) - rhs;
            const double gn = Gnew.lpNorm<Eigen::Infinity>();
            if (gn > gnorm && damp > 1.0 / 16.0) damp *= 0.5;
            Y = std::move(Ynew);
            G = std::move(Gnew);
            gnorm = gn;
        }

        if (!ok) {
            ++res.stats.picard_failures;
            ++res.stats.rejected;
            h = 0.25 * hs;
            last_rejected = true;
            if (h < opt.h_min) throw IntegrationFailure("heat solver fixed-point iteration stagnated", t);
            continue;
        }

        const Vector lte = lte_factor * (Y - pred);
        const double err = wnorm(lte, y, Y);
        if (!std::isfinite(err)) {
            h = 0.25 * hs;
            ++res.stats.rejected;
            if (h < opt.h_min) throw IntegrationFailure("heat solver produced a nonfinite state", t);
            continue;
        }
        double factor = err > 0.0 ? 0.9 * std::pow(err, -1.0 / (q + 1)) : 2.0;
        factor = std::clamp(factor, 0.2, 2.0);
        if (err > 1.0) {
            ++res.stats.rejected;
            h = hs * std::min(factor, 0.9);
            last_rejected = true;
            if (h < opt.h_min) throw IntegrationFailure("heat solver step size underflow", t);
            continue;
        }

        ++res.stats.accepted;
        if (last_rejected) factor = std::min(factor, 1.0);
        last_rejected = false;
        t = hits_output ? target : tn;
        y = Y;
        hist_t.push_back(t);
        hist_y.push_back(y);
        if (hist_t.size() > 3) {
            hist_t.erase(hist_t.begin());
            hist_y.erase(hist_y.begin());
        }
        // Step ratio stays below 2 so variable-step BDF2 remains zero-stable.
        h = std::min({opt.h_max, hs * factor, 2.0 * hs});
        while (next_out < out_grid.size() && out_grid.points[next_out] <= t + 1e-12 * std::max(1.0, t)) {
            res.traj.states.row(static_cast<Eigen::Index>(next_out)) = y.transpose();
            ++next_out;
        }
    }
    res.traj.stats.accepted = res.stats.accepted;
    res.traj.stats.rejected = res.stats.rejected;
    res.traj.stats.f_evals = res.stats.assemblies;
    return res;
}

} // namespace resmin::heat
