#pragma once

// Residual-minimizing interpolation. Given a basis of stored runs, the state at
// a new parameter s is approximated by x~(t) = X(t) a with e^T a = 1, where a
// minimizes the weighted equation residual
//
//     rho(a) = sum_i w_i^2 || F_i a - f(X_i a, t_i, s) ||^2 = ||h(a)||^2.
//
// Each Newton iterate solves min ||R_k a|| s.t. e^T a = 1 with
// R_k = J_k + (h(a_k) - J_k a_k) e^T, J_k the forward-difference Jacobian of h.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "resmin/basis.hpp"
#include "resmin/constrained_ls.hpp"
#include "resmin/errors.hpp"
#include "resmin/model.hpp"

namespace resmin {

enum class Damping { off, halving };

struct NewtonOptions {
    std::size_t max_iters = 10;
    /// Stop when rho(a_k) <= resid_tol. Unset means 1e-12 * m * p.
    std::optional<double> resid_tol;
    /// Stop when ||a_{k+1} - a_k|| <= step_tol.
    double step_tol = 1e-10;
    double fd_eps = 1e-6;
    TruncationTolerance trunc_tau{};
    double rank_tol = cls::default_rank_tol;
    Damping damping = Damping::off;
    std::size_t max_halvings = 10;
    /// Record ||J_k||_2 per iteration (one n x n eigenproblem per step).
    bool record_jacobian_norm = true;

    double resolved_resid_tol(const BasisSet& basis) const {
        return resid_tol ? *resid_tol : 1e-12 * static_cast<double>(basis.rows());
    }
};

/// Residual h(a) and the forcing values that produced it.
struct ResidualEval {
    Vector a;
    Vector h;           // weighted, length m*p
    double rho = 0.0;   // ||h||^2
    Vector state;       // stacked X a, unweighted
    Vector base;        // stacked f(X_i a, t_i, s), unweighted
};

struct NewtonMatrix {
    Matrix R;
    Matrix J;
};

struct IterationRecord {
    double rho = 0.0;          // rho(a_k)
    double rho_next = 0.0;     // rho(a_{k+1}) of the accepted iterate
    double step_norm = 0.0;    // ||a_{k+1} - a_k|| of the constrained LS solution
    double accepted_step = 0.0;
    double damping_factor = 1.0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    double cond = 0.0;         // sigma_1 / sigma_n of R_k
    double cond_used = 0.0;    // of the retained block
    std::size_t trunc_rank = 0;
    double jac_norm = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t f_evals = 0; // cumulative at end of iteration
};

enum class StopReason { residual, step, max_iters, stagnation };

inline const char* to_string(StopReason r) {
    switch (r) {
    case StopReason::residual: return "residual";
    case StopReason::step: return "step";
    case StopReason::max_iters: return "max_iters";
    case StopReason::stagnation: return "stagnation";
    }
    return "?";
}

struct InterpolationResult {
    Vector a;
    double rho_star = 0.0;
    std::size_t iters = 0;
    bool converged = false;
    StopReason stop = StopReason::max_iters;
    std::vector<IterationRecord> per_iter;
    std::uint64_t f_evals = 0;
    ClsSolution initial; // the linearized solve that produced a_0
    double initial_rho = 0.0;

    double max_cond() const {
        double c = initial.cond_full;
        for (const auto& r : per_iter) c = std::max(c, r.cond);
        return c;
    }
};

namespace interp_detail {

inline void check_constraint(const VectorRef& a) {
    const double tol = 1e-10 * std::max(1.0, a.lpNorm<1>());
    if (std::abs(a.sum() - 1.0) > tol) throw InvalidArgument("coefficients must sum to one");
}

inline void check_query(const BasisSet& basis, const ModelSystem& model, const VectorRef& s) {
    if (basis.size() == 0) throw InvalidArgument("basis is empty");
    if (static_cast<std::size_t>(s.size()) != basis.param_dim || basis.param_dim != model.param_dim)
        throw InvalidArgument("parameter dimension mismatch");
    if (basis.state_dim != model.state_dim) throw InvalidArgument("state dimension mismatch");
}

} // namespace interp_detail

/// h(a) = F a - phi(a) and rho = ||h||^2. Costs m forcing evaluations.
inline ResidualEval residual(const BasisSet& basis, const VectorRef& a, const VectorRef& s, const ModelSystem& model,
                             EvalCounter& counter) {
    interp_detail::check_query(basis, model, s);
    if (static_cast<std::size_t>(a.size()) != basis.size()) throw InvalidArgument("coefficient length mismatch");
    interp_detail::check_constraint(a);

    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    const auto m = basis.time_points();
    ResidualEval ev;
    ev.a = a;
    ev.state = basis.X * a;
    ev.base.resize(ev.state.size());
    ev.h = basis.stacked_F * a;
    for (std::size_t i = 0; i < m; ++i) {
        const auto rows = static_cast<Eigen::Index>(i) * p;
        model.forcing(ev.state.segment(rows, p), basis.grid.points[i], s, ev.base.segment(rows, p));
        ev.h.segment(rows, p) -= basis.weights[static_cast<Eigen::Index>(i)] * ev.base.segment(rows, p);
    }
    counter.add(m);
    ev.rho = ev.h.squaredNorm();
    return ev;
}

inline ResidualEval residual(const BasisSet& basis, const VectorRef& a, const VectorRef& s, const ModelSystem& model) {
    EvalCounter c;
    return residual(basis, a, s, model, c);
}

/// Forward-difference Newton matrix around `at`, reusing its forcing values.
/// Costs exactly n*m forcing evaluations. The step for time block i is
/// fd_eps * (1 + ||X_i a||_inf).
inline NewtonMatrix build_newton_matrix(const BasisSet& basis, const ResidualEval& at, const VectorRef& s,
                                        const ModelSystem& model, double fd_eps, EvalCounter& counter) {
    interp_detail::check_query(basis, model, s);
    if (!(fd_eps > 0.0)) throw InvalidArgument("finite-difference step must be positive");
    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    const auto m = basis.time_points();
    const auto n = static_cast<Eigen::Index>(basis.size());

    NewtonMatrix out;
    out.J = basis.stacked_F;
    Vector xp(p), fp(p);
    for (std::size_t i = 0; i < m; ++i) {
        const auto rows = static_cast<Eigen::Index>(i) * p;
        const auto xa = at.state.segment(rows, p);
        const auto fa = at.base.segment(rows, p);
        const double eps = fd_eps * (1.0 + xa.lpNorm<Eigen::Infinity>());
        const double w = basis.weights[static_cast<Eigen::Index>(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            xp = xa + eps * basis.X.block(rows, j, p, 1);
            model.forcing(xp, basis.grid.points[i], s, fp);
            if (!fp.allFinite())
                throw EvaluationFailure("nonfinite forcing while building the Newton matrix", i,
                                        static_cast<std::size_t>(j));
            out.J.block(rows, j, p, 1) -= (w / eps) * (fp - fa);
        }
    }
    counter.add(static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n));
    out.R = out.J + (at.h - out.J * at.a) * Vector::Ones(n).transpose();
    return out;
}

/// Linearized start: R_{-1} = F - G with G_i = [f(x_j(t_i), t_i, s)]_j, solved
/// as a constrained least-squares problem. Costs n*m forcing evaluations.
inline ClsSolution initial_guess(const BasisSet& basis, const VectorRef& s, const ModelSystem& model,
                                 TruncationTolerance tau, EvalCounter& counter,
                                 double rank_tol = cls::default_rank_tol) {
    interp_detail::check_query(basis, model, s);
    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    const auto m = basis.time_points();
    const auto n = static_cast<Eigen::Index>(basis.size());
    Matrix R = basis.stacked_F;
    Vector out(p);
    for (std::size_t i = 0; i < m; ++i) {
        const auto rows = static_cast<Eigen::Index>(i) * p;
        const double w = basis.weights[static_cast<Eigen::Index>(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            model.forcing(basis.X.block(rows, j, p, 1), basis.grid.points[i], s, out);
            if (!out.allFinite())
                throw EvaluationFailure("nonfinite forcing while building the initial guess", i,
                                        static_cast<std::size_t>(j));
            R.block(rows, j, p, 1) -= w * out;
        }
    }
    counter.add(static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(n));
    return solve_truncated(R, tau, rank_tol);
}

inline double spectral_norm(const Matrix& J) {
    if (J.cols() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(J.transpose() * J, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

/// Gauss-Newton iteration on the constrained residual. Returns the iterate
/// with the smallest residual seen.
inline InterpolationResult newton_solve(const BasisSet& basis, const VectorRef& s, const ModelSystem& model,
                                        const NewtonOptions& opts = {}, EvalCounter* shared = nullptr) {
    interp_detail::check_query(basis, model, s);
    if (!(opts.step_tol >= 0.0) || !(opts.fd_eps > 0.0))
        throw InvalidArgument("Newton tolerances must be positive");
    EvalCounter counter;
    const double resid_tol = opts.resolved_resid_tol(basis);

    InterpolationResult res;
    res.initial = initial_guess(basis, s, model, opts.trunc_tau, counter, opts.rank_tol);
    ResidualEval cur = residual(basis, res.initial.a, s, model, counter);
    res.initial_rho = cur.rho;
    Vector best_a = cur.a;
    double best_rho = cur.rho;
    std::size_t stalls = 0;

    for (std::size_t k = 0;; ++k) {
        if (cur.rho <= resid_tol) {
            res.converged = true;
            res.stop = StopReason::residual;
            break;
        }
        if (k >= opts.max_iters) {
            res.stop = StopReason::max_iters;
            break;
        }

        NewtonMatrix nm;
        try {
            nm = build_newton_matrix(basis, cur, s, model, opts.fd_eps, counter);
        } catch (const EvaluationFailure& e) {
            throw EvaluationFailure(e.what(), e.time_index(), e.basis_index(), static_cast<int>(k));
        }
        const ClsSolution sol = solve_truncated(nm.R, opts.trunc_tau, opts.rank_tol);

        IterationRecord rec;
        rec.rho = cur.rho;
        rec.sigma_min = sol.sigma_min;
        rec.sigma_max = sol.sigma_max;
        rec.cond = sol.cond_full;
        rec.cond_used = sol.cond_used;
        rec.trunc_rank = static_cast<std::size_t>(sol.truncation_rank);
        if (opts.record_jacobian_norm) rec.jac_norm = spectral_norm(nm.J);

        const Vector delta = sol.a - cur.a;
        rec.step_norm = delta.norm();

        ResidualEval next = residual(basis, sol.a, s, model, counter);
        double alpha = 1.0;
        bool stalled = false;
        if (opts.damping == Damping::halving && next.rho > cur.rho) {
            ResidualEval best_trial = next;
            double best_alpha = 1.0;
            bool accepted = false;
            for (std::size_t h = 0; h < opts.max_halvings; ++h) {
                alpha *= 0.5;
                Vector trial_a = cur.a + alpha * delta;
                trial_a /= trial_a.sum();
                ResidualEval trial = residual(basis, trial_a, s, model, counter);
                if (trial.rho < best_trial.rho) {
                    best_trial = trial;
                    best_alpha = alpha;
                }
                if (trial.rho <= cur.rho) {
                    accepted = true;
                    break;
                }
            }
            next = std::move(best_trial);
            alpha = best_alpha;
            stalled = !accepted;
        }
        rec.damping_factor = alpha;
        rec.accepted_step = (next.a - cur.a).norm();
        rec.rho_next = next.rho;
        rec.f_evals = counter.count();
        res.per_iter.push_back(rec);
        res.iters = k + 1;

        cur = std::move(next);
        if (cur.rho < best_rho) {
            best_rho = cur.rho;
            best_a = cur.a;
        }

        if (opts.damping == Damping::halving) {
            stalls = stalled ? stalls + 1 : 0;
            if (stalls >= 3) {
                res.stop = StopReason::stagnation;
                break;
            }
        }
        if (rec.accepted_step <= opts.step_tol) {
            res.converged = true;
            res.stop = cur.rho <= resid_tol ? StopReason::residual : StopReason::step;
            break;
        }
    }

    res.a = best_a;
    res.rho_star = best_rho;
    res.f_evals = counter.count();
    if (shared) shared->add(res.f_evals);
    return res;
}

/// x~(t_i) = X_i a.
inline Vector evaluate_state(const BasisSet& basis, const VectorRef& a, std::size_t i) {
    if (i >= basis.time_points()) throw InvalidArgument("time index out of range");
    if (static_cast<std::size_t>(a.size()) != basis.size()) throw InvalidArgument("coefficient length mismatch");
    interp_detail::check_constraint(a);
    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    return basis.X.middleRows(static_cast<Eigen::Index>(i) * p, p) * a;
}

/// All reconstructed states, row i = x~(t_i).
inline Matrix evaluate_history(const BasisSet& basis, const VectorRef& a) {
    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    const auto m = static_cast<Eigen::Index>(basis.time_points());
    const Vector stacked = basis.X * a;
    Matrix out(m, p);
    for (Eigen::Index i = 0; i < m; ++i) out.row(i) = stacked.segment(i * p, p).transpose();
    return out;
}

/// Coefficients expressed over the parent basis of a windowed basis (zeros elsewhere).
inline Vector scatter_coefficients(const BasisSet& window, const VectorRef& a, std::size_t parent_size) {
    Vector full = Vector::Zero(static_cast<Eigen::Index>(parent_size));
    for (std::size_t k = 0; k < window.size(); ++k)
        full[static_cast<Eigen::Index>(window.source_index[k])] = a[static_cast<Eigen::Index>(k)];
    return full;
}

} // namespace resmin
