#pragma once

// End-to-end studies: the kinetics greedy sweep (error, residual, lower bound and
// Newton statistics against basis size) and the heat cross-validation (full
// versus windowed interpolation of the hot-area fraction).

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "resmin/analysis.hpp"
#include "resmin/basis.hpp"
#include "resmin/conductivity.hpp"
#include "resmin/csv.hpp"
#include "resmin/errors.hpp"
#include "resmin/heat.hpp"
#include "resmin/interpolator.hpp"
#include "resmin/kinetics.hpp"
#include "resmin/model.hpp"
#include "resmin/ode.hpp"
#include "resmin/parallel.hpp"
#include "resmin/rng.hpp"
#include "resmin/store.hpp"

namespace resmin {

inline constexpr const char* version_string = "0.1.0";

enum class StudyKind { kinetics, heat };
enum class BasisStrategy { greedy, random };

NLOHMANN_JSON_SERIALIZE_ENUM(StudyKind, {{StudyKind::kinetics, "kinetics"}, {StudyKind::heat, "heat"}})
NLOHMANN_JSON_SERIALIZE_ENUM(BasisStrategy, {{BasisStrategy::greedy, "greedy"}, {BasisStrategy::random, "random"}})

struct StudyConfig {
    StudyKind study = StudyKind::kinetics;
    BasisStrategy strategy = BasisStrategy::greedy;
    std::uint64_t seed = 2024;
    /// Kinetics: last basis size of the sweep. Heat: number of basis draws.
    std::size_t n_bases = 40;
    /// Interpolation window M (0 = whole basis).
    std::size_t window = 0;
    double trunc_tau = 1e-10;
    std::size_t max_newton = 10;
    double fd_eps = 1e-6;
    /// Kinetics: size of the uniform s-grid. Heat: cross-validation draws.
    std::size_t eval_points = 300;
    std::size_t jobs = 1;
    std::string out = "out";

    // kinetics
    std::size_t time_points = 300;
    double s_min = kinetics::s_min;
    double s_max = kinetics::s_max;
    std::size_t bound_nodes = 200;
    /// RK4 steps per output interval for the lower-bound samples.
    std::size_t bound_substeps = 32;
    double ode_rel = 1e-10;
    double ode_abs = 1e-12;
    std::vector<std::size_t> perpoint_n{5, 10, 20, 40};

    // heat
    std::size_t nx = 21;
    std::size_t ny = 41;
    std::size_t kl_modes = conductivity::default_modes;
    std::size_t kl_nodes = conductivity::default_nodes;
    double gamma_sq = conductivity::default_gamma_sq;
    double threshold = 1000.0;
    double eval_time = 70.0;
    double heat_rel = 1e-5;
    double heat_abs = 1e-3;

    static StudyConfig defaults(StudyKind kind) {
        StudyConfig c;
        c.study = kind;
        if (kind == StudyKind::heat) {
            c.strategy = BasisStrategy::random;
            c.n_bases = 20;
            c.window = 5;
            c.eval_points = 100;
        }
        return c;
    }

    void validate() const {
        if (n_bases < 2) throw InvalidArgument("n_bases must be at least 2");
        if (eval_points < 1) throw InvalidArgument("eval_points must be at least 1");
        if (!(trunc_tau >= 0.0)) throw InvalidArgument("trunc_tau must be nonnegative");
        if (!(fd_eps > 0.0)) throw InvalidArgument("fd_eps must be positive");
        if (window > n_bases) throw InvalidArgument("window exceeds the number of bases");
        if (study == StudyKind::kinetics) {
            if (time_points < 1) throw InvalidArgument("time_points must be at least 1");
            if (!(s_min > 0.0) || !(s_min < s_max)) throw InvalidArgument("s range must satisfy 0 < s_min < s_max");
            if (n_bases > eval_points + 1) throw InvalidArgument("n_bases exceeds the number of candidate points");
            if (bound_nodes < 1) throw InvalidArgument("bound_nodes must be at least 1");
            if (bound_substeps < 1) throw InvalidArgument("bound_substeps must be at least 1");
        } else {
            if (nx < 1 || ny < 1) throw InvalidArgument("heat grid needs nx, ny >= 1");
            if (kl_modes < 1 || kl_modes > kl_nodes) throw InvalidArgument("kl_modes must lie in [1, kl_nodes]");
            if (!(threshold >= 0.0 && threshold <= 1250.0)) throw InvalidArgument("threshold must lie in [0, 1250]");
            if (!(eval_time > 0.0)) throw InvalidArgument("eval_time must be positive");
        }
    }

    NewtonOptions newton() const {
        NewtonOptions o;
        o.max_iters = max_newton;
        o.fd_eps = fd_eps;
        o.trunc_tau = TruncationTolerance::scaled(trunc_tau);
        return o;
    }
};

namespace study_detail {

template <class Config, class Fn>
void visit_fields(Config& c, Fn&& f) {
    f("study", c.study);
    f("strategy", c.strategy);
    f("seed", c.seed);
    f("n_bases", c.n_bases);
    f("window", c.window);
    f("trunc_tau", c.trunc_tau);
    f("max_newton", c.max_newton);
    f("fd_eps", c.fd_eps);
    f("eval_points", c.eval_points);
    f("jobs", c.jobs);
    f("out", c.out);
    f("time_points", c.time_points);
    f("s_min", c.s_min);
    f("s_max", c.s_max);
    f("bound_nodes", c.bound_nodes);
    f("bound_substeps", c.bound_substeps);
    f("ode_rel", c.ode_rel);
    f("ode_abs", c.ode_abs);
    f("perpoint_n", c.perpoint_n);
    f("nx", c.nx);
    f("ny", c.ny);
    f("kl_modes", c.kl_modes);
    f("kl_nodes", c.kl_nodes);
    f("gamma_sq", c.gamma_sq);
    f("threshold", c.threshold);
    f("eval_time", c.eval_time);
    f("heat_rel", c.heat_rel);
    f("heat_abs", c.heat_abs);
}

} // namespace study_detail

inline void to_json(nlohmann::json& j, const StudyConfig& c) {
    j = nlohmann::json::object();
    study_detail::visit_fields(c, [&](const char* key, const auto& v) { j[key] = v; });
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, StudyConfig& c) {
    if (!j.is_object()) throw InvalidArgument("study config must be a JSON object");
    std::size_t known = 0;
    study_detail::visit_fields(c, [&](const char* key, auto& v) {
        if (j.contains(key)) {
            j.at(key).get_to(v);
            ++known;
        }
    });
    if (known != j.size()) {
        for (const auto& item : j.items()) {
            bool found = false;
            study_detail::visit_fields(c, [&](const char* key, auto&) { found = found || item.key() == key; });
            if (!found) throw InvalidArgument("unknown config key '" + item.key() + "'");
        }
    }
}

/// Reads a JSON config file; keys not present keep the defaults of `base`.
inline StudyConfig load_config(const std::filesystem::path& path, const StudyConfig& base = {}) {
    std::ifstream in(path);
    if (!in) throw LoadFailure(path.string(), "config", "missing or unreadable");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
        nlohmann::json merged = base;
        merged.merge_patch(j);
        return merged.get<StudyConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadFailure(path.string(), "config", e.what());
    }
}

/// 64-bit FNV-1a of the parameter's bit pattern, as 16 hex digits.
inline std::string param_hash(const VectorRef& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        std::uint64_t bits;
        const double v = s[i];
        std::memcpy(&bits, &v, sizeof bits);
        for (int b = 0; b < 8; ++b) {
            h ^= (bits >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ULL;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline Vector scalar_param(double v) {
    Vector s(1);
    s << v;
    return s;
}

// ---------------------------------------------------------------- models by name

/// Description of the model behind a snapshot store, enough to rebuild its forcing.
struct ModelSpec {
    std::string name = "kinetics";
    heat::HeatDomain domain{};
    std::size_t kl_modes = conductivity::default_modes;
    std::size_t kl_nodes = conductivity::default_nodes;
    double gamma_sq = conductivity::default_gamma_sq;

    nlohmann::json to_json() const {
        if (name == "kinetics") return {{"name", name}};
        return {{"name", name},
                {"Lx", domain.Lx},
                {"Ly", domain.Ly},
                {"nx", domain.nx},
                {"ny", domain.ny},
                {"rho_c", domain.rho_c},
                {"initial_temp", domain.initial_temp},
                {"kl_modes", kl_modes},
                {"kl_nodes", kl_nodes},
                {"gamma_sq", gamma_sq},
                {"layout", "row-major in x2, vertex unknowns with x1 > 0 and x2 > 0"}};
    }

    static ModelSpec from_json(const nlohmann::json& j) {
        ModelSpec m;
        if (!j.is_object() || !j.contains("name")) throw InvalidArgument("model description lacks a name");
        m.name = j.at("name").get<std::string>();
        if (m.name == "kinetics") return m;
        if (m.name != "heat") throw InvalidArgument("unknown model '" + m.name + "'");
        m.domain.Lx = j.value("Lx", m.domain.Lx);
        m.domain.Ly = j.value("Ly", m.domain.Ly);
        m.domain.nx = j.value("nx", m.domain.nx);
        m.domain.ny = j.value("ny", m.domain.ny);
        m.domain.rho_c = j.value("rho_c", m.domain.rho_c);
        m.domain.initial_temp = j.value("initial_temp", m.domain.initial_temp);
        m.kl_modes = j.value("kl_modes", m.kl_modes);
        m.kl_nodes = j.value("kl_nodes", m.kl_nodes);
        m.gamma_sq = j.value("gamma_sq", m.gamma_sq);
        return m;
    }

    static ModelSpec heat_from(const StudyConfig& cfg) {
        ModelSpec m;
        m.name = "heat";
        m.domain.nx = cfg.nx;
        m.domain.ny = cfg.ny;
        m.kl_modes = cfg.kl_modes;
        m.kl_nodes = cfg.kl_nodes;
        m.gamma_sq = cfg.gamma_sq;
        return m;
    }

    std::shared_ptr<const heat::HeatProblem> heat_problem() const {
        auto kl = std::make_shared<const conductivity::KLBasis>(conductivity::default_kl(kl_modes, kl_nodes, gamma_sq));
        return std::make_shared<const heat::HeatProblem>(domain, std::move(kl));
    }

    ModelSystem model() const {
        if (name == "kinetics") return kinetics::model();
        return heat::heat_model(heat_problem());
    }
};

// ---------------------------------------------------------------- kinetics study

struct KineticsRow {
    std::size_t n = 0;
    double E = 0.0;
    double R = 0.0;
    double bound = 0.0;
    /// Same bound from the doubled quadrature.
    double bound_check = 0.0;
    /// Unconstrained best approximation error of the basis on the quadrature samples.
    double best_error = 0.0;
    double avg_iters = 0.0;
    std::size_t failures = 0;
    /// Parameter added after this row (NaN on the last row).
    double added = std::numeric_limits<double>::quiet_NaN();
};

struct KineticsStudy {
    StudyConfig config;
    std::vector<double> s_grid;
    std::vector<KineticsRow> rows;
    /// Metrics of every sweep step, rows[k] <-> metrics[k].
    std::vector<StudyMetrics> metrics;
    std::vector<double> basis_params;
    LowerBoundReport bound;
    LowerBoundReport bound_check;
    double seconds = 0.0;
};

using Progress = std::function<void(const std::string&)>;

/// s_k = s_min + k (s_max - s_min) / N for k = 1..N.
inline std::vector<double> kinetics_s_grid(const StudyConfig& cfg) {
    std::vector<double> s(cfg.eval_points);
    const double ds = (cfg.s_max - cfg.s_min) / static_cast<double>(cfg.eval_points);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = cfg.s_min + static_cast<double>(k + 1) * ds;
    s.back() = cfg.s_max;
    return s;
}

/// Weighted stacked samples at the Gauss-Legendre nodes, from fixed-step RK4 in
/// long double; the step sequence is the same for every s so the samples vary
/// smoothly with s and the eigenvalue tail converges under node refinement.
inline LowerBoundReport kinetics_bound(const StudyConfig& cfg, const TimeGrid& grid, std::size_t nodes,
                                       Matrix* samples_out = nullptr, std::vector<double>* weights_out = nullptr) {
    using LD = long double;
    using VecL = Eigen::Matrix<LD, Eigen::Dynamic, 1>;
    const auto q = gauss_legendre(nodes, cfg.s_min, cfg.s_max);
    const Eigen::Index m = static_cast<Eigen::Index>(grid.size());
    Eigen::Matrix<LD, Eigen::Dynamic, Eigen::Dynamic> S(3 * m, static_cast<Eigen::Index>(nodes));
    parallel_for(nodes, cfg.jobs, [&](std::size_t k) {
        const LD s = static_cast<LD>(q.nodes[k]);
        auto rhs = [s](const VecL& x, LD) -> VecL {
            return kinetics::forcing_generic<LD>(Eigen::Matrix<LD, 3, 1>(x[0], x[1], x[2]), s);
        };
        const VecL x0 = kinetics::initial_state().cast<LD>();
        const auto states = integrate_fixed<LD>(rhs, x0, grid, cfg.bound_substeps);
        for (Eigen::Index i = 0; i < m; ++i)
            S.col(static_cast<Eigen::Index>(k)).segment(3 * i, 3) =
                std::sqrt(static_cast<LD>(grid.sq_weights[static_cast<std::size_t>(i)])) * states.row(i).transpose();
    });
    if (samples_out) *samples_out = S.cast<double>();
    if (weights_out) *weights_out = q.weights;
    return lower_bound_from_samples(S, q.weights);
}

inline KineticsStudy run_kinetics_study(const StudyConfig& cfg, const Progress& progress = {}) {
    cfg.validate();
    if (cfg.study != StudyKind::kinetics) throw InvalidArgument("config is not a kinetics study");
    const auto t0 = std::chrono::steady_clock::now();
    auto say = [&](const std::string& m) {
        if (progress) progress(m);
    };

    KineticsStudy st;
    st.config = cfg;
    const auto model = kinetics::model();
    const auto grid = make_time_grid(0.0, 1.0, cfg.time_points, GridScheme::uniform);
    const OdeTolerances tol{cfg.ode_rel, cfg.ode_abs};
    st.s_grid = kinetics_s_grid(cfg);
    const std::size_t N = st.s_grid.size();
    const double ds = (cfg.s_max - cfg.s_min) / static_cast<double>(N);

    say("integrating " + std::to_string(N) + " reference trajectories");
    std::vector<Trajectory> truth(N);
    parallel_for(N, cfg.jobs, [&](std::size_t k) {
        truth[k] = integrate(model, kinetics::initial_state(), scalar_param(st.s_grid[k]), grid, tol);
    });
    std::vector<Vector> points(N);
    for (std::size_t k = 0; k < N; ++k) points[k] = scalar_param(st.s_grid[k]);

    say("lower bound with " + std::to_string(cfg.bound_nodes) + " and " + std::to_string(2 * cfg.bound_nodes) +
        " quadrature nodes");
    Matrix quad_samples;
    std::vector<double> quad_weights;
    st.bound = kinetics_bound(cfg, grid, cfg.bound_nodes, &quad_samples, &quad_weights);
    st.bound_check = kinetics_bound(cfg, grid, 2 * cfg.bound_nodes);

    // Start from both ends of the range.
    std::vector<Snapshot> snaps;
    std::vector<bool> used(N, false);
    snaps.push_back(snapshot_from_trajectory(
        model, integrate(model, kinetics::initial_state(), scalar_param(cfg.s_min), grid, tol)));
    snaps.push_back(snapshot_from_trajectory(model, truth[N - 1]));
    used[N - 1] = true;
    st.basis_params = {cfg.s_min, cfg.s_max};

    // Random strategy: a fixed shuffle of the remaining grid points.
    std::vector<std::size_t> random_order;
    if (cfg.strategy == BasisStrategy::random) {
        const CounterRng rng(cfg.seed, 11);
        for (std::size_t k = 0; k + 1 < N; ++k) random_order.push_back(k);
        std::stable_sort(random_order.begin(), random_order.end(),
                         [&](std::size_t a, std::size_t b) { return rng.bits(a) < rng.bits(b); });
    }

    MetricsOptions mo;
    mo.newton = cfg.newton();
    mo.s_weight = ds;
    mo.jobs = cfg.jobs;
    mo.keep_iterations = true;
    mo.window = cfg.window;

    for (std::size_t n = 2;; ++n) {
        const BasisSet basis = assemble_basis(snaps);
        StudyMetrics met = study_metrics(basis, model, points, truth, mo);
        KineticsRow row;
        row.n = n;
        row.E = met.E;
        row.R = met.R;
        row.bound = st.bound.bound(n);
        row.bound_check = st.bound_check.bound(n);
        row.best_error = best_linear_error(basis.stacked_X, quad_samples, quad_weights);
        row.avg_iters = met.avg_iters;
        row.failures = met.failures;
        char msg[160];
        std::snprintf(msg, sizeof msg, "n=%zu E=%.3e R=%.3e bound=%.3e avg_iters=%.2f", n, row.E, row.R, row.bound,
                      row.avg_iters);
        say(msg);

        if (n < cfg.n_bases) {
            std::size_t pick = N;
            if (cfg.strategy == BasisStrategy::greedy) {
                std::vector<Vector> cands;
                std::vector<double> scores;
                std::vector<std::size_t> ids;
                for (std::size_t k = 0; k < N; ++k) {
                    if (used[k]) continue;
                    const auto& pm = met.per_point[k];
                    cands.push_back(points[k]);
                    scores.push_back(pm.failed ? std::numeric_limits<double>::infinity() : pm.residual);
                    ids.push_back(k);
                }
                pick = ids.at(greedy_select(cands, scores, 1).front().index);
            } else {
                for (std::size_t k : random_order)
                    if (!used[k]) {
                        pick = k;
                        break;
                    }
            }
            used[pick] = true;
            snaps.push_back(snapshot_from_trajectory(model, truth[pick]));
            st.basis_params.push_back(st.s_grid[pick]);
            row.added = st.s_grid[pick];
        }
        st.rows.push_back(row);
        st.metrics.push_back(std::move(met));
        if (n >= cfg.n_bases) break;
    }
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
}

inline nlohmann::json study_manifest(const StudyConfig& cfg, const nlohmann::json& summary) {
    nlohmann::json m;
    m["version"] = version_string;
    m["config"] = cfg;
    m["seeds"] = {{"seed", cfg.seed}};
    m["summary"] = summary;
    return m;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoFailure("failed writing " + path.string());
}

inline void write_kinetics_outputs(const KineticsStudy& st, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        CsvWriter w(dir / "convergence.csv", {"n[count]", "E[1]", "R[1]", "bound[1]", "avg_iters[count]",
                                              "bound_400[1]", "best_error[1]", "failures[count]", "added_s[1]"});
        for (const auto& r : st.rows) {
            w.cell(r.n).cell(r.E).cell(r.R).cell(r.bound).cell(r.avg_iters).cell(r.bound_check).cell(r.best_error)
                .cell(r.failures).cell(r.added);
            w.end_row();
        }
        w.close();
    }
    for (std::size_t k = 0; k < st.rows.size(); ++k) {
        const std::size_t n = st.rows[k].n;
        if (std::find(st.config.perpoint_n.begin(), st.config.perpoint_n.end(), n) == st.config.perpoint_n.end())
            continue;
        CsvWriter w(dir / ("perpoint_n" + std::to_string(n) + ".csv"),
                    {"s[1]", "rho_star[1]", "max_cond[1]", "iters[count]", "converged[bool]", "error[1]",
                     "residual[1]"});
        for (const auto& pm : st.metrics[k].per_point) {
            w.cell(pm.s[0]).cell(pm.rho_star).cell(pm.max_cond).cell(pm.iters).cell(pm.converged).cell(pm.error)
                .cell(pm.residual);
            w.end_row();
        }
        w.close();
    }
    nlohmann::json summary;
    summary["basis_params"] = st.basis_params;
    summary["rows"] = st.rows.size();
    summary["seconds"] = st.seconds;
    write_json(dir / "manifest.json", study_manifest(st.config, summary));
}

// ---------------------------------------------------------------- heat study

struct HeatRow {
    Vector s;
    std::string hash;
    double Q_true = 0.0;
    double Q_full = std::numeric_limits<double>::quiet_NaN();
    double Q_win = std::numeric_limits<double>::quiet_NaN();
    double err_full = std::numeric_limits<double>::quiet_NaN();
    double err_win = std::numeric_limits<double>::quiet_NaN();
    std::uint64_t fevals_full = 0;
    std::uint64_t fevals_win = 0;
    std::size_t iters_full = 0;
    std::size_t iters_win = 0;
    double seconds_full = 0.0;
    double seconds_win = 0.0;
    bool failed = false;
    std::string failure;
};

struct HeatStudy {
    StudyConfig config;
    std::vector<Vector> basis_params;
    std::vector<HeatRow> rows;
    double captured_fraction = 0.0;
    double seconds = 0.0;
    std::uint64_t snapshot_evals = 0;

    double mean(double HeatRow::*field) const {
        double acc = 0.0;
        std::size_t k = 0;
        for (const auto& r : rows)
            if (!r.failed) {
                acc += r.*field;
                ++k;
            }
        return k ? acc / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
    }
    double mean_fevals(std::uint64_t HeatRow::*field) const {
        double acc = 0.0;
        std::size_t k = 0;
        for (const auto& r : rows)
            if (!r.failed) {
                acc += static_cast<double>(r.*field);
                ++k;
            }
        return k ? acc / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
    }
};

/// Standard-normal draws, count x d, from stream `stream` of the seed.
inline std::vector<Vector> normal_draws(std::uint64_t seed, std::uint64_t stream, std::size_t count, std::size_t d) {
    const CounterRng rng(seed, stream);
    std::vector<Vector> out(count, Vector(static_cast<Eigen::Index>(d)));
    for (std::size_t k = 0; k < count; ++k)
        for (std::size_t i = 0; i < d; ++i) out[k][static_cast<Eigen::Index>(i)] = rng.normal(k * d + i);
    return out;
}

inline HeatStudy run_heat_study(const StudyConfig& cfg, const Progress& progress = {}) {
    cfg.validate();
    if (cfg.study != StudyKind::heat) throw InvalidArgument("config is not a heat study");
    const auto t0 = std::chrono::steady_clock::now();
    auto say = [&](const std::string& m) {
        if (progress) progress(m);
    };
    HeatStudy st;
    st.config = cfg;
    const ModelSpec spec = ModelSpec::heat_from(cfg);
    const auto problem = spec.heat_problem();
    st.captured_fraction = problem->kl()->captured_fraction();
    const ModelSystem model = heat::heat_model(problem);
    const TimeGrid grid{{cfg.eval_time}, {cfg.eval_time}};
    heat::HeatSolverOptions hopt;
    hopt.rel = cfg.heat_rel;
    hopt.abs = cfg.heat_abs;
    const heat::QoIConfig qcfg{cfg.threshold, cfg.eval_time};
    const std::size_t d = cfg.kl_modes;
    EvalCounter snap_counter;

    auto snapshot_at = [&](const Vector& s) {
        const auto r = heat::solve_heat(*problem, s, grid, hopt);
        snap_counter.add(r.stats.assemblies);
        return snapshot_from_trajectory(model, r.traj, &snap_counter);
    };

    std::vector<Snapshot> snaps;
    if (cfg.strategy == BasisStrategy::random) {
        st.basis_params = normal_draws(cfg.seed, 1, cfg.n_bases, d);
        say("solving " + std::to_string(cfg.n_bases) + " basis realizations");
        snaps.resize(cfg.n_bases);
        parallel_for(cfg.n_bases, cfg.jobs, [&](std::size_t j) { snaps[j] = snapshot_at(st.basis_params[j]); });
    } else {
        // Greedy over a candidate pool: add the draw with the largest minimum residual.
        auto first = normal_draws(cfg.seed, 1, 2, d);
        std::vector<Vector> pool = normal_draws(cfg.seed, 3, 5 * cfg.n_bases, d);
        for (const auto& s : first) {
            st.basis_params.push_back(s);
            snaps.push_back(snapshot_at(s));
        }
        const NewtonOptions nopt = cfg.newton();
        while (snaps.size() < cfg.n_bases) {
            const BasisSet basis = assemble_basis(snaps);
            const auto pick = greedy_next(
                [&](const Vector& s) { return newton_solve(basis, s, model, nopt).rho_star; }, pool, cfg.jobs);
            st.basis_params.push_back(pick.param);
            snaps.push_back(snapshot_at(pick.param));
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick.index));
            say("greedy basis " + std::to_string(snaps.size()) + " rho=" + format_number(pick.score));
        }
    }
    st.snapshot_evals = snap_counter.count();
    const BasisSet basis = assemble_basis(std::move(snaps));

    const auto cv = normal_draws(cfg.seed, 2, cfg.eval_points, d);
    st.rows.resize(cv.size());
    const NewtonOptions nopt = cfg.newton();
    const bool windowed = cfg.window > 0 && cfg.window < basis.size();
    say("cross-validating at " + std::to_string(cv.size()) + " points");
    parallel_for(cv.size(), cfg.jobs, [&](std::size_t k) {
        HeatRow& row = st.rows[k];
        row.s = cv[k];
        row.hash = param_hash(cv[k]);
        try {
            const auto truth = heat::solve_heat(*problem, cv[k], grid, hopt);
            row.Q_true = heat::qoi_fraction(truth.traj.states.row(0).transpose(), *problem, qcfg);

            auto c0 = std::chrono::steady_clock::now();
            const auto full = newton_solve(basis, cv[k], model, nopt);
            row.seconds_full = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
            row.Q_full = heat::qoi_fraction(evaluate_state(basis, full.a, 0), *problem, qcfg);
            row.fevals_full = full.f_evals;
            row.iters_full = full.iters;
            if (windowed) {
                c0 = std::chrono::steady_clock::now();
                const BasisSet local = select_window(basis, cv[k], cfg.window);
                const auto win = newton_solve(local, cv[k], model, nopt);
                row.seconds_win = std::chrono::duration<double>(std::chrono::steady_clock::now() - c0).count();
                row.Q_win = heat::qoi_fraction(evaluate_state(local, win.a, 0), *problem, qcfg);
                row.fevals_win = win.f_evals;
                row.iters_win = win.iters;
            } else {
                row.Q_win = row.Q_full;
                row.fevals_win = row.fevals_full;
                row.iters_win = row.iters_full;
                row.seconds_win = row.seconds_full;
            }
            row.err_full = std::abs(row.Q_full - row.Q_true);
            row.err_win = std::abs(row.Q_win - row.Q_true);
        } catch (const std::exception& e) {
            row.failed = true;
            row.failure = e.what();
        }
    });
    st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return st;
}

inline void write_heat_outputs(const HeatStudy& st, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    CsvWriter w(dir / "crossval.csv", {"s_hash[hex]", "Q_true[fraction]", "Q_full[fraction]", "Q_windowed[fraction]",
                                       "err_full[fraction]", "err_win[fraction]", "fevals_full[count]",
                                       "fevals_win[count]"});
    for (const auto& r : st.rows) {
        w.cell(r.hash).cell(r.Q_true).cell(r.Q_full).cell(r.Q_win).cell(r.err_full).cell(r.err_win)
            .cell(r.fevals_full).cell(r.fevals_win);
        w.end_row();
    }
    w.close();

    nlohmann::json summary;
    std::size_t failures = 0;
    double t_full = 0.0, t_win = 0.0;
    for (const auto& r : st.rows) {
        failures += r.failed ? 1 : 0;
        t_full += r.seconds_full;
        t_win += r.seconds_win;
    }
    summary["failures"] = failures;
    summary["mean_err_full"] = st.mean(&HeatRow::err_full);
    summary["mean_err_win"] = st.mean(&HeatRow::err_win);
    summary["mean_fevals_full"] = st.mean_fevals(&HeatRow::fevals_full);
    summary["mean_fevals_win"] = st.mean_fevals(&HeatRow::fevals_win);
    summary["seconds_interp_full"] = t_full;
    summary["seconds_interp_win"] = t_win;
    summary["snapshot_assemblies"] = st.snapshot_evals;
    summary["kl_captured_fraction"] = st.captured_fraction;
    summary["seconds"] = st.seconds;
    auto m = study_manifest(st.config, summary);
    m["kl"] = {{"gamma_sq", st.config.gamma_sq}, {"modes", st.config.kl_modes}, {"nodes", st.config.kl_nodes}};
    m["seeds"]["basis_stream"] = 1;
    m["seeds"]["crossval_stream"] = 2;
    write_json(dir / "manifest.json", m);
}

} // namespace resmin
