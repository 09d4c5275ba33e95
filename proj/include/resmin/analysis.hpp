#pragma once

// Study metrics and checks: averaged error and residual over a parameter sweep,
// the eigenvalue-tail lower bound on best n-term linear approximation, and the
// unconstrained projection error it bounds.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "resmin/basis.hpp"
#include "resmin/errors.hpp"
#include "resmin/interpolator.hpp"
#include "resmin/model.hpp"
#include "resmin/ode.hpp"
#include "resmin/parallel.hpp"

namespace resmin {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b] (Newton iteration on P_n).
inline QuadratureRule gauss_legendre(std::size_t n, double a, double b) {
    if (n == 0) throw InvalidArgument("quadrature needs at least one node");
    if (!(a < b)) throw InvalidArgument("quadrature interval needs a < b");
    QuadratureRule q;
    q.nodes.resize(n);
    q.weights.resize(n);
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    const auto N = static_cast<double>(n);
    for (std::size_t i = 0; i < (n + 1) / 2; ++i) {
        double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (N + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (std::size_t k = 2; k <= n; ++k) {
                const auto kk = static_cast<double>(k);
                const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
                p0 = p1;
                p1 = p2;
            }
            dp = N * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        // Recompute the derivative at the converged root.
        double p0 = 1.0, p1 = x;
        for (std::size_t k = 2; k <= n; ++k) {
            const auto kk = static_cast<double>(k);
            const double p2 = ((2.0 * kk - 1.0) * x * p1 - (kk - 1.0) * p0) / kk;
            p0 = p1;
            p1 = p2;
        }
        dp = N * (x * p1 - p0) / (x * x - 1.0);
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        q.nodes[i] = mid - half * x;
        q.nodes[n - 1 - i] = mid + half * x;
        q.weights[i] = q.weights[n - 1 - i] = half * w;
    }
    return q;
}

struct LowerBoundReport {
    /// Eigenvalues of C = sum_k w_k x(s_k) x(s_k)^T, nonincreasing, length p.
    Vector theta;
    /// tail[n] = sqrt(sum_{k > n} theta_k^2) for n = 0..p.
    Vector tail;

    double bound(std::size_t n) const {
        return n < static_cast<std::size_t>(tail.size()) ? tail[static_cast<Eigen::Index>(n)] : 0.0;
    }
};

/// Eigenvalue tail of C from the weighted sample matrix [sqrt(w_k) x(s_k)].
/// The nonzero eigenvalues of C are the squared singular values of that matrix.
/// The SVD runs in the scalar type of `samples`; long double resolves tails
/// below double-precision roundoff.
template <class Derived>
LowerBoundReport lower_bound_from_samples(const Eigen::MatrixBase<Derived>& samples,
                                          const std::vector<double>& weights) {
    using Scalar = typename Derived::Scalar;
    using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    if (samples.cols() == 0) throw InvalidArgument("lower bound needs at least one sample");
    if (static_cast<std::size_t>(samples.cols()) != weights.size())
        throw InvalidArgument("one quadrature weight per sample is required");
    Mat W = samples;
    for (Eigen::Index k = 0; k < W.cols(); ++k) {
        if (!(weights[static_cast<std::size_t>(k)] > 0.0)) throw InvalidArgument("quadrature weights must be positive");
        W.col(k) *= std::sqrt(static_cast<Scalar>(weights[static_cast<std::size_t>(k)]));
    }
    Eigen::BDCSVD<Mat> svd(W);
    const auto p = W.rows();
    LowerBoundReport rep;
    rep.theta = Vector::Zero(p);
    const auto& sv = svd.singularValues();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> theta = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(p);
    for (Eigen::Index i = 0; i < sv.size(); ++i) theta[i] = sv[i] * sv[i];
    rep.theta = theta.template cast<double>();
    rep.tail.resize(p + 1);
    Scalar acc = 0;
    rep.tail[p] = 0.0;
    for (Eigen::Index n = p - 1; n >= 0; --n) {
        acc += theta[n] * theta[n];
        rep.tail[n] = static_cast<double>(std::sqrt(acc));
    }
    return rep;
}

inline LowerBoundReport covariance_lower_bound(const std::function<Vector(const VectorRef&)>& snapshot_fn,
                                               const std::vector<std::pair<Vector, double>>& quad_points) {
    if (quad_points.empty()) throw InvalidArgument("lower bound needs at least one quadrature point");
    Matrix samples;
    std::vector<double> w;
    for (std::size_t k = 0; k < quad_points.size(); ++k) {
        const Vector x = snapshot_fn(quad_points[k].first);
        if (k == 0) samples.resize(x.size(), static_cast<Eigen::Index>(quad_points.size()));
        if (x.size() != samples.rows()) throw InvalidArgument("snapshot vectors have inconsistent lengths");
        samples.col(static_cast<Eigen::Index>(k)) = x;
        w.push_back(quad_points[k].second);
    }
    return lower_bound_from_samples(samples, w);
}

/// sum_k w_k min_a ||X a - x_k||^2 over the sample columns.
inline double best_linear_error(const Matrix& X, const Matrix& samples, const std::vector<double>& weights) {
    if (X.rows() != samples.rows()) throw InvalidArgument("basis and samples differ in length");
    if (static_cast<std::size_t>(samples.cols()) != weights.size())
        throw InvalidArgument("one weight per sample is required");
    Eigen::ColPivHouseholderQR<Matrix> qr(X);
    if (qr.rank() < X.cols()) throw InvalidArgument("basis matrix is rank deficient");
    const Matrix coef = qr.solve(samples);
    const Matrix resid = X * coef - samples;
    double total = 0.0;
    for (Eigen::Index k = 0; k < samples.cols(); ++k)
        total += weights[static_cast<std::size_t>(k)] * resid.col(k).squaredNorm();
    return total;
}

/// Average ranks (ties share the mean rank).
inline std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
        std::size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("correlation needs two equal-length series");
    const auto n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
    return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson(ranks(x), ranks(y));
}

struct PointMetrics {
    Vector s;
    /// sum_j w_j^2 ||x~(t_j) - x(t_j)||
    double error = 0.0;
    /// sum_j w_j^2 ||F_j a - f(x~(t_j), t_j, s)||
    double residual = 0.0;
    double rho_star = 0.0;
    double max_cond = 0.0;
    double max_cond_used = 0.0;
    std::size_t iters = 0;
    bool converged = false;
    bool failed = false;
    std::string failure;
    std::uint64_t f_evals = 0;
    Vector a;
    std::vector<IterationRecord> iterations;
};

struct StudyMetrics {
    double E = 0.0;
    double R = 0.0;
    double avg_iters = 0.0;
    std::size_t failures = 0;
    std::vector<PointMetrics> per_point;
};

struct MetricsOptions {
    NewtonOptions newton{};
    /// Parameter-space weight (Delta s) applied to every point.
    double s_weight = 1.0;
    std::size_t jobs = 1;
    bool keep_iterations = false;
    /// Interpolate on the M nearest snapshots only (0 = whole basis).
    std::size_t window = 0;
};

/// Interpolates at every evaluation point and accumulates
///   E = ds * sum_k sum_j w_j^2 ||x~ - x||,  R = ds * sum_k sum_j w_j^2 ||F_j a - f(x~)||.
/// `truth[k]` is the full-model trajectory at eval_points[k] on the basis grid.
/// A failing point is flagged and left out of the sums.
inline StudyMetrics study_metrics(const BasisSet& basis, const ModelSystem& model,
                                  const std::vector<Vector>& eval_points, const std::vector<Trajectory>& truth,
                                  const MetricsOptions& opts = {}) {
    if (eval_points.size() != truth.size()) throw InvalidArgument("one truth trajectory per evaluation point");
    for (const auto& tr : truth)
        if (!(tr.grid == basis.grid)) throw InvalidArgument("truth trajectory grid differs from the basis grid");

    StudyMetrics out;
    out.per_point.resize(eval_points.size());
    const auto p = static_cast<Eigen::Index>(basis.state_dim);
    const std::size_t m = basis.time_points();
    parallel_for(eval_points.size(), opts.jobs, [&](std::size_t k) {
        PointMetrics& pm = out.per_point[k];
        pm.s = eval_points[k];
        try {
            const bool windowed = opts.window > 0 && opts.window < basis.size();
            const BasisSet local = windowed ? select_window(basis, eval_points[k], opts.window) : BasisSet{};
            const BasisSet& use = windowed ? local : basis;
            const InterpolationResult r = newton_solve(use, eval_points[k], model, opts.newton);
            const ResidualEval ev = residual(use, r.a, eval_points[k], model);
            pm.a = windowed ? scatter_coefficients(local, r.a, basis.size()) : r.a;
            pm.rho_star = r.rho_star;
            pm.iters = r.iters;
            pm.converged = r.converged;
            pm.f_evals = r.f_evals;
            pm.max_cond = r.initial.cond_full;
            pm.max_cond_used = r.initial.cond_used;
            for (const auto& it : r.per_iter) {
                pm.max_cond = std::max(pm.max_cond, it.cond);
                pm.max_cond_used = std::max(pm.max_cond_used, it.cond_used);
            }
            if (opts.keep_iterations) pm.iterations = r.per_iter;
            const Vector FA = use.F * r.a;
            for (std::size_t i = 0; i < m; ++i) {
                const auto rows = static_cast<Eigen::Index>(i) * p;
                const double w2 = basis.grid.sq_weights[i];
                pm.error += w2 * (ev.state.segment(rows, p) - truth[k].states.row(static_cast<Eigen::Index>(i)).transpose()).norm();
                pm.residual += w2 * (FA.segment(rows, p) - ev.base.segment(rows, p)).norm();
            }
        } catch (const std::exception& e) {
            pm.failed = true;
            pm.failure = e.what();
            pm.rho_star = std::numeric_limits<double>::quiet_NaN();
        }
    });

    std::size_t ok = 0;
    for (const auto& pm : out.per_point) {
        if (pm.failed) {
            ++out.failures;
            continue;
        }
        out.E += opts.s_weight * pm.error;
        out.R += opts.s_weight * pm.residual;
        out.avg_iters += static_cast<double>(pm.iters);
        ++ok;
    }
    if (ok > 0) out.avg_iters /= static_cast<double>(ok);
    return out;
}

} // namespace resmin
