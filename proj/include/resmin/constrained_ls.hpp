#pragma once

// min ||R a||  subject to  e^T a = 1.
//
// Every solve goes through one SVD of R. With R = U S V^T and d = V^T e the
// constrained minimum keeping only the trailing j singular directions is
//
//     lambda_j = 1 / sum_{i > n-j} (d_i / sigma_i)^2,
//
// and the minimizer is a = V_2 (lambda_k S_2^{-2} d_2). lambda equals the
// squared residual ||R a||^2, so the ladder tells how much residual a
// truncation gives up before anything is solved.

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "resmin/errors.hpp"
#include "resmin/model.hpp"

namespace resmin {

/// How much squared residual the truncation may give up, |lambda_k - lambda_n| < tau.
/// Relative mode resolves tau = value * (1 + lambda_n).
struct TruncationTolerance {
    double value = 1e-10;
    bool relative = true;

    static TruncationTolerance absolute(double tau) { return {tau, false}; }
    static TruncationTolerance scaled(double tau) { return {tau, true}; }
    static TruncationTolerance none() { return {0.0, false}; }

    double resolve(double lambda_full) const { return relative ? value * (1.0 + lambda_full) : value; }
};

enum class ClsPath { single_column, full_rank, null_average, null_space };

struct ClsSolution {
    Vector a;
    /// Lagrange multiplier of the returned solution, the squared residual ||R a||^2.
    double lambda = 0.0;
    /// Number of trailing singular directions kept.
    Eigen::Index truncation_rank = 0;
    /// Untruncated constrained minimum lambda_n.
    double lambda_full = 0.0;
    /// sigma_{n-k+1} / sigma_n of the retained block.
    double cond_used = 1.0;
    /// sigma_1 / sigma_n of R (infinite when R is singular).
    double cond_full = 1.0;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
    Eigen::Index numerical_rank = 0;
    ClsPath path = ClsPath::full_rank;
};

namespace cls {

inline constexpr double default_rank_tol = 1e-12;

/// lambda_j for j = 1..n (index j-1), from singular values (descending) and d = V^T e.
inline Vector lagrange_ladder(const Vector& sigma, const Vector& d) {
    const auto n = sigma.size();
    Vector ladder(n);
    double acc = 0.0;
    for (Eigen::Index j = 1; j <= n; ++j) {
        const Eigen::Index i = n - j;
        const double y = d[i] / sigma[i];
        acc += y * y;
        ladder[j - 1] = acc > 0.0 ? 1.0 / acc : std::numeric_limits<double>::infinity();
    }
    return ladder;
}

/// Smallest k in 1..n with |lambda_k - lambda_n| < tau, or n if none.
inline Eigen::Index choose_truncation(const Vector& ladder, double tau) {
    const auto n = ladder.size();
    const double full = ladder[n - 1];
    for (Eigen::Index k = 1; k < n; ++k)
        if (std::abs(ladder[k - 1] - full) < tau) return k;
    return n;
}

struct Decomposition {
    Vector sigma; // length n, descending, zero padded
    Matrix V;     // n x n
};

inline Decomposition decompose(const Matrix& R) {
    const auto n = R.cols();
    // Tall matrices: R = Q T, and T has the same singular values and V.
    if (R.rows() > 2 * n) {
        Eigen::HouseholderQR<Matrix> qr(R);
        const Matrix T = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
        return decompose(T);
    }
    Eigen::JacobiSVD<Matrix> svd(R, Eigen::ComputeFullV);
    Decomposition out;
    out.sigma = Vector::Zero(n);
    out.sigma.head(svd.singularValues().size()) = svd.singularValues();
    out.V = svd.matrixV();
    return out;
}

inline void fill_spectrum(ClsSolution& sol, const Vector& sigma) {
    sol.sigma_max = sigma[0];
    sol.sigma_min = sigma[sigma.size() - 1];
    sol.cond_full = sol.sigma_min > 0.0 ? sol.sigma_max / sol.sigma_min : std::numeric_limits<double>::infinity();
}

inline ClsSolution rank_deficient_from(const Matrix& R, const Decomposition& dec, Eigen::Index rank,
                                       double rank_tol) {
    const auto n = R.cols();
    ClsSolution sol;
    fill_spectrum(sol, dec.sigma);
    sol.numerical_rank = rank;

    const Matrix V2 = dec.V.rightCols(n - rank);
    const Vector d = V2.transpose() * Vector::Ones(n);

    // Null vectors that meet the constraint: orient so e^T v > 0, average, rescale.
    Vector avg = Vector::Zero(n);
    Eigen::Index used = 0;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (std::abs(d[i]) > rank_tol) {
            avg += (d[i] > 0.0 ? 1.0 : -1.0) * V2.col(i);
            ++used;
        }
    }
    if (used > 0) {
        avg /= static_cast<double>(used);
        sol.a = avg / avg.sum();
        sol.lambda = 0.0;
        sol.lambda_full = 0.0;
        sol.truncation_rank = used;
        sol.cond_used = 1.0;
        sol.path = ClsPath::null_average;
        return sol;
    }

    // Every null vector is orthogonal to e: null-space method on the constraint,
    // minimum-norm pseudoinverse solution of the reduced problem.
    Vector u = Vector::Ones(n);
    u[0] += std::sqrt(static_cast<double>(n));
    const Matrix Q = Matrix::Identity(n, n) - (2.0 / u.squaredNorm()) * u * u.transpose();
    const Matrix Q2 = Q.rightCols(n - 1);
    const Vector base = Vector::Constant(n, 1.0 / static_cast<double>(n));
    const Matrix RQ2 = R * Q2;
    Eigen::JacobiSVD<Matrix> inner(RQ2, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const double smax = inner.singularValues().size() > 0 ? inner.singularValues()[0] : 0.0;
    inner.setThreshold(smax > 0.0 ? rank_tol : 1.0);
    const Vector v = -inner.solve(R * base);
    sol.a = base + Q2 * v;
    sol.lambda = (R * sol.a).squaredNorm();
    sol.lambda_full = sol.lambda;
    sol.truncation_rank = n;
    sol.cond_used = sol.cond_full;
    sol.path = ClsPath::null_space;
    return sol;
}

} // namespace cls

/// Rank-deficiency path: R has numerical rank below n (sigma_i <= rank_tol * sigma_1).
/// Null vectors with a nonzero constraint component are averaged into a zero-residual
/// solution; if every null vector is orthogonal to e, the constraint is eliminated and
/// the minimum-norm least-squares solution is returned.
inline ClsSolution solve_rank_deficient(const Matrix& R, double rank_tol = cls::default_rank_tol) {
    if (R.cols() == 0) throw InvalidArgument("constrained least squares needs at least one column");
    const auto dec = cls::decompose(R);
    const double smax = dec.sigma[0];
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < dec.sigma.size(); ++i)
        if (dec.sigma[i] > rank_tol * smax) ++rank;
    return cls::rank_deficient_from(R, dec, rank, rank_tol);
}

/// Truncated solve. tau = 0 keeps every singular direction.
inline ClsSolution solve_truncated(const Matrix& R, TruncationTolerance tol,
                                   double rank_tol = cls::default_rank_tol) {
    const auto n = R.cols();
    if (n == 0) throw InvalidArgument("constrained least squares needs at least one column");
    if (!(tol.value >= 0.0)) throw InvalidArgument("truncation tolerance must be nonnegative");
    if (!R.allFinite()) throw InvalidArgument("constrained least squares matrix has nonfinite entries");

    if (n == 1) {
        ClsSolution sol;
        sol.a = Vector::Ones(1);
        sol.lambda = R.col(0).squaredNorm();
        sol.lambda_full = sol.lambda;
        sol.truncation_rank = 1;
        sol.sigma_max = sol.sigma_min = std::sqrt(sol.lambda);
        sol.numerical_rank = sol.lambda > 0.0 ? 1 : 0;
        sol.path = ClsPath::single_column;
        return sol;
    }

    const auto dec = cls::decompose(R);
    const double smax = dec.sigma[0];
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        if (dec.sigma[i] > rank_tol * smax) ++rank;
    if (rank < n) return cls::rank_deficient_from(R, dec, rank, rank_tol);

    const Vector d = dec.V.transpose() * Vector::Ones(n);
    const Vector ladder = cls::lagrange_ladder(dec.sigma, d);
    const double lambda_n = ladder[n - 1];
    const Eigen::Index k = cls::choose_truncation(ladder, tol.resolve(lambda_n));

    const auto tail = dec.sigma.tail(k);
    const Vector y = d.tail(k).cwiseQuotient(tail.cwiseProduct(tail));
    const double lambda_k = ladder[k - 1];

    ClsSolution sol;
    cls::fill_spectrum(sol, dec.sigma);
    sol.numerical_rank = rank;
    sol.a = dec.V.rightCols(k) * (lambda_k * y);
    sol.lambda = lambda_k;
    sol.lambda_full = lambda_n;
    sol.truncation_rank = k;
    sol.cond_used = tail[0] / tail[k - 1];
    sol.path = ClsPath::full_rank;
    return sol;
}

/// Untruncated solve; identical to solve_truncated with tau = 0.
inline ClsSolution solve_full(const Matrix& R, double rank_tol = cls::default_rank_tol) {
    return solve_truncated(R, TruncationTolerance::none(), rank_tol);
}

} // namespace resmin
