#pragma once

// Random thermal conductivity of steel as a function of temperature:
//
//     kappa(T, s) = exp( Ybar(T) + sigma_Y(T) * sum_i phi_i(T) sqrt(lambda_i) s_i )
//
// with a piecewise-linear mean trend, a temperature-dependent spread and a
// truncated Karhunen-Loeve expansion of a squared-exponential field on [0, 1250] C.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>

#include "resmin/errors.hpp"
#include "resmin/model.hpp"

namespace resmin::conductivity {

inline constexpr double t_min = 0.0;
inline constexpr double t_max = 1250.0;
inline constexpr std::size_t default_nodes = 600;
inline constexpr double default_gamma_sq = 500.0;
inline constexpr std::size_t default_modes = 11;

/// Mean trend exp(Ybar(T)), W/(m K).
inline double mean_trend(double T) { return T < 800.0 ? -0.0333 * T + 54.0 : 27.30; }

/// Mean of log conductivity.
inline double mean_log(double T) { return std::log(mean_trend(T)); }

inline double sigma_log(double T) { return 0.08 + 0.004 * std::sqrt(std::max(T, 0.0)); }

inline Vector temperature_grid(std::size_t nodes = default_nodes, double lo = t_min, double hi = t_max) {
    if (nodes < 2) throw InvalidArgument("temperature grid needs at least two nodes");
    if (!(lo < hi)) throw InvalidArgument("temperature grid needs lo < hi");
    return Vector::LinSpaced(static_cast<Eigen::Index>(nodes), lo, hi);
}

/// C_ij = exp(-(T_i - T_j)^2 / gamma^2).
inline Matrix correlation_matrix(const Vector& temps, double gamma_sq = default_gamma_sq) {
    if (!(gamma_sq > 0.0) || !std::isfinite(gamma_sq)) throw InvalidArgument("correlation length must be positive");
    for (Eigen::Index i = 1; i < temps.size(); ++i)
        if (!(temps[i] > temps[i - 1])) throw InvalidArgument("temperature grid must be strictly increasing");
    const auto n = temps.size();
    Matrix C(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        C(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double dt = temps[i] - temps[j];
            C(i, j) = C(j, i) = std::exp(-dt * dt / gamma_sq);
        }
    }
    return C;
}

struct KLBasis {
    Vector temps;      // node temperatures
    Matrix modes;      // nodes x d, orthonormal columns
    Vector eigs;       // d leading eigenvalues, nonincreasing
    Vector all_eigs;   // full spectrum, nonincreasing
    double gamma_sq = default_gamma_sq;

    std::size_t size() const noexcept { return static_cast<std::size_t>(eigs.size()); }

    /// Share of the total variance kept by the d retained modes.
    double captured_fraction() const { return eigs.sum() / all_eigs.sum(); }
};

/// Leading d eigenpairs of a symmetric positive semidefinite correlation matrix.
/// Eigenvalues in [-1e-10, 0) are clipped to zero; each mode's first nonzero
/// component is made positive.
inline KLBasis kl_decompose(const Matrix& corr, const Vector& temps, std::size_t d, double gamma_sq = default_gamma_sq) {
    const auto n = corr.rows();
    if (corr.cols() != n) throw InvalidArgument("correlation matrix must be square");
    if (temps.size() != n) throw InvalidArgument("temperature grid does not match the correlation matrix");
    if (d < 1 || d > static_cast<std::size_t>(n)) throw InvalidArgument("truncation must lie in [1, nodes]");
    if ((corr - corr.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw InvalidArgument("correlation matrix is not symmetric");

    Eigen::SelfAdjointEigenSolver<Matrix> es(corr);
    if (es.info() != Eigen::Success) throw InvalidArgument("eigendecomposition failed");
    // Eigen returns ascending order.
    const Vector asc = es.eigenvalues();
    KLBasis kl;
    kl.temps = temps;
    kl.gamma_sq = gamma_sq;
    kl.all_eigs = asc.reverse();
    for (Eigen::Index i = 0; i < n; ++i) {
        if (kl.all_eigs[i] < -1e-10) throw InvalidArgument("correlation matrix is not positive semidefinite");
        kl.all_eigs[i] = std::max(kl.all_eigs[i], 0.0);
    }
    const auto k = static_cast<Eigen::Index>(d);
    kl.eigs = kl.all_eigs.head(k);
    kl.modes.resize(n, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        Vector v = es.eigenvectors().col(n - 1 - c);
        for (Eigen::Index r = 0; r < n; ++r) {
            if (std::abs(v[r]) > 1e-14) {
                if (v[r] < 0.0) v = -v;
                break;
            }
        }
        kl.modes.col(c) = v;
    }
    return kl;
}

inline KLBasis default_kl(std::size_t d = default_modes, std::size_t nodes = default_nodes,
                          double gamma_sq = default_gamma_sq) {
    const Vector temps = temperature_grid(nodes);
    return kl_decompose(correlation_matrix(temps, gamma_sq), temps, d, gamma_sq);
}

struct KappaEval {
    double value = 0.0;
    bool clamped = false;
};

/// Conductivity with the clamp flag. Modes are interpolated linearly between
/// nodes; temperatures outside the grid use the nearest endpoint.
inline KappaEval kappa_eval(double T, const VectorRef& s, const KLBasis& kl) {
    if (static_cast<std::size_t>(s.size()) != kl.size())
        throw InvalidArgument("conductivity parameter has length " + std::to_string(s.size()) + ", expected " +
                              std::to_string(kl.size()));
    if (!std::isfinite(T)) throw InvalidArgument("temperature is not finite");
    KappaEval out;
    const double lo = kl.temps[0];
    const double hi = kl.temps[kl.temps.size() - 1];
    double Tc = T;
    if (T < lo || T > hi) {
        Tc = std::clamp(T, lo, hi);
        out.clamped = true;
    }
    const auto n = kl.temps.size();
    const double pos = (Tc - lo) / (hi - lo) * static_cast<double>(n - 1);
    const auto i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(pos)), n - 2);
    const double frac = pos - static_cast<double>(i0);
    double field = 0.0;
    for (Eigen::Index c = 0; c < kl.modes.cols(); ++c) {
        const double phi = (1.0 - frac) * kl.modes(i0, c) + frac * kl.modes(i0 + 1, c);
        field += phi * std::sqrt(kl.eigs[c]) * s[c];
    }
    out.value = mean_trend(Tc) * std::exp(sigma_log(Tc) * field);
    return out;
}

inline double kappa(double T, const VectorRef& s, const KLBasis& kl) { return kappa_eval(T, s, kl).value; }

/// CSV of node temperatures and modes, plus a second file of eigenvalues.
inline void export_kl(const KLBasis& kl, const std::filesystem::path& modes_csv,
                      const std::filesystem::path& eigs_csv) {
    std::ofstream m(modes_csv);
    if (!m) throw IoFailure("cannot write " + modes_csv.string());
    m << std::setprecision(17) << "T[degC]";
    for (Eigen::Index c = 0; c < kl.modes.cols(); ++c) m << ",phi" << (c + 1) << "[1]";
    m << '\n';
    for (Eigen::Index r = 0; r < kl.modes.rows(); ++r) {
        m << kl.temps[r];
        for (Eigen::Index c = 0; c < kl.modes.cols(); ++c) m << ',' << kl.modes(r, c);
        m << '\n';
    }
    std::ofstream e(eigs_csv);
    if (!e) throw IoFailure("cannot write " + eigs_csv.string());
    e << std::setprecision(17) << "index[count],eigenvalue[1],cumulative_fraction[1]\n";
    const double total = kl.all_eigs.sum();
    double acc = 0.0;
    for (Eigen::Index i = 0; i < kl.all_eigs.size(); ++i) {
        acc += kl.all_eigs[i];
        e << (i + 1) << ',' << kl.all_eigs[i] << ',' << acc / total << '\n';
    }
}

} // namespace resmin::conductivity
