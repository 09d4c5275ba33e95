#pragma once

// Snapshot basis: stored state and forcing histories at sampled parameter
// points, stacked over the time grid with quadrature weights.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "resmin/errors.hpp"
#include "resmin/model.hpp"
#include "resmin/ode.hpp"
#include "resmin/parallel.hpp"

namespace resmin {

/// One full-model run: row i of `states` is x_j(t_i), row i of `forcing` is
/// f(x_j(t_i), t_i, s_j).
struct Snapshot {
    Vector param;
    TimeGrid grid;
    Matrix states;
    Matrix forcing;
};

/// Snapshots on a shared grid, plus their stacked matrices. Column j of the
/// stacked matrices holds snapshot j; block i (rows i*p .. i*p+p-1) holds time t_i.
/// `X`, `F` are unweighted; `stacked_X`, `stacked_F` scale block i by w_i.
struct BasisSet {
    TimeGrid grid;
    std::size_t state_dim = 0;
    std::size_t param_dim = 0;
    std::vector<Snapshot> snapshots;
    /// Position of each snapshot in the basis it was windowed from (identity otherwise).
    std::vector<std::size_t> source_index;

    Matrix X;
    Matrix F;
    Matrix stacked_X;
    Matrix stacked_F;
    Vector weights; // w_i

    std::size_t size() const noexcept { return snapshots.size(); }
    std::size_t time_points() const noexcept { return grid.size(); }
    Eigen::Index rows() const noexcept { return X.rows(); }

    auto block(const Matrix& M, std::size_t i) const {
        return M.middleRows(static_cast<Eigen::Index>(i * state_dim), static_cast<Eigen::Index>(state_dim));
    }
};

/// Forcing history of an existing trajectory: m forcing evaluations.
inline Snapshot snapshot_from_trajectory(const ModelSystem& model, const Trajectory& traj,
                                         EvalCounter* counter = nullptr) {
    Snapshot snap;
    snap.param = traj.param;
    snap.grid = traj.grid;
    snap.states = traj.states;
    snap.forcing.resize(traj.states.rows(), traj.states.cols());
    Vector x(traj.states.cols()), out(traj.states.cols());
    for (Eigen::Index i = 0; i < traj.states.rows(); ++i) {
        x = traj.states.row(i).transpose();
        model.forcing(x, traj.grid.points[static_cast<std::size_t>(i)], traj.param, out);
        snap.forcing.row(i) = out.transpose();
    }
    if (counter) counter->add(static_cast<std::uint64_t>(traj.states.rows()));
    return snap;
}

/// Runs the reference integrator at s_j and records state and forcing histories.
inline Snapshot build_snapshot(const ModelSystem& model, const VectorRef& s, const VectorRef& x0,
                               const TimeGrid& grid, OdeTolerances tol = {}, EvalCounter* counter = nullptr) {
    const Trajectory traj = integrate(model, x0, s, grid, tol);
    if (counter) counter->add(traj.stats.f_evals);
    return snapshot_from_trajectory(model, traj, counter);
}

inline BasisSet assemble_basis(std::vector<Snapshot> snapshots) {
    if (snapshots.empty()) throw InvalidArgument("basis needs at least one snapshot");
    const TimeGrid& grid = snapshots.front().grid;
    grid.validate();
    const auto p = snapshots.front().states.cols();
    const auto d = snapshots.front().param.size();
    const auto m = static_cast<Eigen::Index>(grid.size());
    for (std::size_t j = 0; j < snapshots.size(); ++j) {
        const auto& sn = snapshots[j];
        if (!(sn.grid == grid)) throw InvalidArgument("snapshot " + std::to_string(j) + " uses a different time grid");
        if (sn.states.cols() != p || sn.forcing.cols() != p)
            throw InvalidArgument("snapshot " + std::to_string(j) + " has a different state dimension");
        if (sn.states.rows() != m || sn.forcing.rows() != m)
            throw InvalidArgument("snapshot " + std::to_string(j) + " does not match the grid length");
        if (sn.param.size() != d)
            throw InvalidArgument("snapshot " + std::to_string(j) + " has a different parameter dimension");
    }

    BasisSet b;
    b.grid = grid;
    b.state_dim = static_cast<std::size_t>(p);
    b.param_dim = static_cast<std::size_t>(d);
    const auto n = static_cast<Eigen::Index>(snapshots.size());
    b.X.resize(m * p, n);
    b.F.resize(m * p, n);
    b.weights.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) b.weights[i] = grid.weight(static_cast<std::size_t>(i));
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& sn = snapshots[static_cast<std::size_t>(j)];
        for (Eigen::Index i = 0; i < m; ++i) {
            b.X.block(i * p, j, p, 1) = sn.states.row(i).transpose();
            b.F.block(i * p, j, p, 1) = sn.forcing.row(i).transpose();
        }
    }
    b.stacked_X = b.X;
    b.stacked_F = b.F;
    for (Eigen::Index i = 0; i < m; ++i) {
        b.stacked_X.middleRows(i * p, p) *= b.weights[i];
        b.stacked_F.middleRows(i * p, p) *= b.weights[i];
    }
    b.snapshots = std::move(snapshots);
    b.source_index.resize(b.snapshots.size());
    std::iota(b.source_index.begin(), b.source_index.end(), std::size_t{0});
    return b;
}

/// Indices of the M snapshots whose parameters are nearest to s (Euclidean),
/// in original order. Ties go to the lower index.
inline std::vector<std::size_t> nearest_indices(const BasisSet& basis, const VectorRef& s, std::size_t M) {
    if (M == 0) throw InvalidArgument("window size must be at least 1");
    if (M > basis.size()) throw InvalidArgument("window size exceeds basis size");
    if (static_cast<std::size_t>(s.size()) != basis.param_dim)
        throw InvalidArgument("query parameter has the wrong dimension");
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(basis.size());
    for (std::size_t j = 0; j < basis.size(); ++j)
        dist.emplace_back((basis.snapshots[j].param - s).squaredNorm(), j);
    std::stable_sort(dist.begin(), dist.end());
    std::vector<std::size_t> keep;
    keep.reserve(M);
    for (std::size_t k = 0; k < M; ++k) keep.push_back(dist[k].second);
    std::sort(keep.begin(), keep.end());
    return keep;
}

inline BasisSet subset(const BasisSet& basis, const std::vector<std::size_t>& keep) {
    std::vector<Snapshot> chosen;
    chosen.reserve(keep.size());
    for (auto j : keep) chosen.push_back(basis.snapshots.at(j));
    BasisSet out = assemble_basis(std::move(chosen));
    for (std::size_t k = 0; k < keep.size(); ++k) out.source_index[k] = basis.source_index[keep[k]];
    return out;
}

/// Windowed sub-basis of the M snapshots nearest to s.
inline BasisSet select_window(const BasisSet& basis, const VectorRef& s, std::size_t M) {
    if (M == basis.size() && M > 0) return basis;
    return subset(basis, nearest_indices(basis, s, M));
}

struct GreedyPick {
    std::size_t index = 0;
    Vector param;
    double score = 0.0;
};

/// Top-k candidates by score, highest first; ties and NaNs resolve to the lower index.
inline std::vector<GreedyPick> greedy_select(const std::vector<Vector>& candidates,
                                             const std::vector<double>& scores, std::size_t k = 1) {
    if (candidates.empty()) throw InvalidArgument("greedy selection needs at least one candidate");
    if (scores.size() != candidates.size()) throw InvalidArgument("one score per candidate is required");
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto key = [&](std::size_t i) {
        return std::isnan(scores[i]) ? -std::numeric_limits<double>::infinity() : scores[i];
    };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) > key(b); });
    k = std::min(std::max<std::size_t>(k, 1), order.size());
    std::vector<GreedyPick> picks;
    for (std::size_t r = 0; r < k; ++r)
        picks.push_back({order[r], candidates[order[r]], scores[order[r]]});
    return picks;
}

/// Scans `candidates` with residual_eval(s) -> rho*(s) and returns the maximizer.
template <class ResidualEval>
GreedyPick greedy_next(ResidualEval&& residual_eval, const std::vector<Vector>& candidates, std::size_t jobs = 1) {
    if (candidates.empty()) throw InvalidArgument("greedy selection needs at least one candidate");
    std::vector<double> scores(candidates.size());
    parallel_for(candidates.size(), jobs, [&](std::size_t i) { scores[i] = residual_eval(candidates[i]); });
    return greedy_select(candidates, scores, 1).front();
}

} // namespace resmin
