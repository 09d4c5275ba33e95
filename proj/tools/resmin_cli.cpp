// resmin-cli: snapshot stores, interpolation queries and the two benchmark studies.
//
// Exit codes: 0 success, 1 numerical failure, 2 usage or I/O error.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "resmin/basis.hpp"
#include "resmin/conductivity.hpp"
#include "resmin/csv.hpp"
#include "resmin/heat.hpp"
#include "resmin/interpolator.hpp"
#include "resmin/kinetics.hpp"
#include "resmin/store.hpp"
#include "resmin/studies.hpp"

namespace fs = std::filesystem;
using namespace resmin;

namespace {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

Vector parse_param(const std::string& text) {
    std::vector<double> vals;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw UsageError("cannot parse parameter '" + text + "'");
        vals.push_back(v);
    }
    if (vals.empty()) throw UsageError("empty parameter");
    return Eigen::Map<const Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::string join(const VectorRef& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_number(v[i]);
    return out;
}

// Flags shared by every command that builds a StudyConfig.
struct ConfigFlags {
    std::string config;
    std::optional<std::string> strategy;
    std::optional<std::size_t> n_bases, window, max_newton, jobs, eval_points;
    std::optional<double> trunc_tau, fd_eps;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;

    void add_to(CLI::App* app, bool study) {
        app->add_option("--config", config, "JSON config file; flags override its values")->check(CLI::ExistingFile);
        app->add_option("--seed", seed, "random seed");
        app->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
        if (!study) return;
        app->add_option("--strategy", strategy, "basis selection")->check(CLI::IsMember({"greedy", "random"}));
        app->add_option("--n-bases", n_bases, "number of basis snapshots");
        app->add_option("--window", window, "nearest snapshots per query (0 = all)");
        app->add_option("--trunc-tau", trunc_tau, "truncation tolerance on the Lagrange ladder");
        app->add_option("--max-newton", max_newton, "Newton iteration limit");
        app->add_option("--fd-eps", fd_eps, "finite-difference step");
        app->add_option("--eval-points", eval_points, "evaluation or cross-validation points");
        app->add_option("--out", out, "output directory");
    }

    StudyConfig resolve(StudyKind kind) const {
        StudyConfig c = StudyConfig::defaults(kind);
        if (!config.empty()) c = load_config(config, c);
        if (c.study != kind) throw UsageError("config file describes a different study");
        if (strategy) c.strategy = *strategy == "greedy" ? BasisStrategy::greedy : BasisStrategy::random;
        if (n_bases) c.n_bases = *n_bases;
        if (window) c.window = *window;
        if (max_newton) c.max_newton = *max_newton;
        if (jobs) c.jobs = *jobs;
        if (eval_points) c.eval_points = *eval_points;
        if (trunc_tau) c.trunc_tau = *trunc_tau;
        if (fd_eps) c.fd_eps = *fd_eps;
        if (seed) c.seed = *seed;
        if (out) c.out = *out;
        c.validate();
        return c;
    }
};

void progress(const std::string& msg) { std::cerr << msg << '\n'; }

// ---------------------------------------------------------------- snapshot

struct SnapshotArgs {
    std::string model = "kinetics";
    std::vector<std::string> params;
    std::size_t draws = 0;
    std::string store;
    ConfigFlags flags;
};

int cmd_snapshot(const SnapshotArgs& args) {
    const StudyKind kind = args.model == "heat" ? StudyKind::heat : StudyKind::kinetics;
    const StudyConfig cfg = args.flags.resolve(kind);
    std::vector<Vector> points;
    for (const auto& p : args.params) points.push_back(parse_param(p));
    if (args.draws > 0) {
        if (kind != StudyKind::heat) throw UsageError("--draws applies to the heat model only");
        const auto d = normal_draws(cfg.seed, 1, args.draws, cfg.kl_modes);
        points.insert(points.end(), d.begin(), d.end());
    }
    if (points.empty()) throw UsageError("no parameter points: give --param or --draws");

    std::vector<Snapshot> snaps;
    std::uint64_t total = 0;
    if (kind == StudyKind::kinetics) {
        const auto model = kinetics::model();
        const auto grid = make_time_grid(0.0, 1.0, cfg.time_points, GridScheme::uniform);
        for (const auto& s : points) {
            if (s.size() != 1) throw UsageError("kinetics parameters are scalars, got '" + join(s) + "'");
            EvalCounter counter;
            snaps.push_back(build_snapshot(model, s, kinetics::initial_state(), grid,
                                           OdeTolerances{cfg.ode_rel, cfg.ode_abs}, &counter));
            total += counter.count();
            std::cout << "snapshot " << snaps.size() - 1 << " s=" << join(s) << " f_evals=" << counter.count() << '\n';
        }
        save_store(assemble_basis(std::move(snaps)), args.store, ModelSpec{}.to_json());
    } else {
        const ModelSpec spec = ModelSpec::heat_from(cfg);
        const auto problem = spec.heat_problem();
        const auto model = heat::heat_model(problem);
        const TimeGrid grid{{cfg.eval_time}, {cfg.eval_time}};
        heat::HeatSolverOptions opt;
        opt.rel = cfg.heat_rel;
        opt.abs = cfg.heat_abs;
        for (const auto& s : points) {
            if (static_cast<std::size_t>(s.size()) != cfg.kl_modes)
                throw UsageError("heat parameters need " + std::to_string(cfg.kl_modes) + " components");
            const auto r = heat::solve_heat(*problem, s, grid, opt);
            EvalCounter counter;
            counter.add(r.stats.assemblies);
            snaps.push_back(snapshot_from_trajectory(model, r.traj, &counter));
            total += counter.count();
            std::cout << "snapshot " << snaps.size() - 1 << " hash=" << param_hash(s) << " f_evals=" << counter.count()
                      << " steps=" << r.stats.accepted << '\n';
        }
        save_store(assemble_basis(std::move(snaps)), args.store, spec.to_json());
    }
    std::cout << "stored " << points.size() << " snapshots in " << args.store << ", total f_evals=" << total << '\n';
    return 0;
}

// ---------------------------------------------------------------- interp

struct InterpArgs {
    std::string store;
    std::string param;
    std::size_t window = 0;
    double trunc_tau = 1e-10;
    std::size_t max_newton = 10;
    double fd_eps = 1e-6;
    bool damping = false;
    std::vector<std::size_t> indices;
    std::string out;
};

int cmd_interp(const InterpArgs& args) {
    const auto manifest = read_manifest(args.store);
    const std::string mfile = (fs::path(args.store) / "manifest.json").string();
    if (!manifest.contains("model")) throw LoadFailure(mfile, "model", "missing");
    const ModelSpec spec = ModelSpec::from_json(manifest.at("model"));
    const BasisSet basis = load_store(args.store);
    const ModelSystem model = spec.model();
    const Vector s = parse_param(args.param);
    if (static_cast<std::size_t>(s.size()) != basis.param_dim)
        throw UsageError("parameter has " + std::to_string(s.size()) + " components, the store expects " +
                         std::to_string(basis.param_dim));
    for (auto i : args.indices)
        if (i >= basis.time_points()) throw UsageError("grid index " + std::to_string(i) + " out of range");

    NewtonOptions opt;
    opt.max_iters = args.max_newton;
    opt.fd_eps = args.fd_eps;
    opt.trunc_tau = TruncationTolerance::scaled(args.trunc_tau);
    opt.damping = args.damping ? Damping::halving : Damping::off;

    const bool windowed = args.window > 0 && args.window < basis.size();
    const BasisSet local = windowed ? select_window(basis, s, args.window) : BasisSet{};
    const BasisSet& use = windowed ? local : basis;
    const InterpolationResult r = newton_solve(use, s, model, opt);
    const Vector a = windowed ? scatter_coefficients(local, r.a, basis.size()) : r.a;

    std::cout << "store: " << args.store << " (" << basis.size() << " snapshots, " << basis.time_points()
              << " time points, state dimension " << basis.state_dim << ")\n";
    std::cout << "model: " << spec.name << "\n";
    std::cout << "s: " << join(s) << "\n";
    if (windowed) {
        std::cout << "window:";
        for (auto j : local.source_index) std::cout << ' ' << j;
        std::cout << '\n';
    }
    std::cout << "coefficients: " << join(a) << "\n";
    std::cout << "nonzero_slots: " << (a.array() != 0.0).count() << "\n";
    std::printf("rho_star: %.17g\n", r.rho_star);
    std::printf("initial_rho: %.17g\n", r.initial_rho);
    std::cout << "converged: " << (r.converged ? "yes" : "no") << " (" << to_string(r.stop) << ")\n";
    std::cout << "iterations: " << r.iters << "\n";
    std::cout << "f_evals: " << r.f_evals << "\n";
    std::printf("max_cond: %.6g\n", r.max_cond());
    std::cout << "truncation_rank: " << r.initial.truncation_rank << "\n";
    for (std::size_t k = 0; k < r.per_iter.size(); ++k) {
        const auto& it = r.per_iter[k];
        std::printf("iter %zu rho=%.6e step=%.3e cond=%.3e rank=%zu\n", k, it.rho, it.step_norm, it.cond,
                    it.trunc_rank);
    }

    std::vector<std::size_t> idx = args.indices;
    if (idx.empty()) idx.push_back(basis.time_points() - 1);
    const bool small = basis.state_dim <= 8;
    for (auto i : idx) {
        const Vector x = evaluate_state(use, r.a, i);
        std::cout << "state[" << i << "] t=" << format_number(basis.grid.points[i]);
        if (small)
            std::cout << ": " << join(x);
        else
            std::cout << ": min " << format_number(x.minCoeff()) << " max " << format_number(x.maxCoeff());
        if (spec.name == "heat") std::cout << " Q " << format_number(heat::qoi_fraction(x, *spec.heat_problem()));
        std::cout << '\n';
    }
    if (!args.out.empty()) {
        std::vector<std::string> header{"index[count]", "t[s]"};
        for (std::size_t c = 1; c <= basis.state_dim; ++c) header.push_back("x" + std::to_string(c));
        CsvWriter csv(args.out, header);
        for (auto i : idx) {
            csv.cell(i).cell(basis.grid.points[i]);
            const Vector x = evaluate_state(use, r.a, i);
            for (Eigen::Index c = 0; c < x.size(); ++c) csv.cell(x[c]);
            csv.end_row();
        }
        csv.close();
        std::cout << "wrote " << args.out << '\n';
    }
    return 0;
}

// ---------------------------------------------------------------- studies

int cmd_study_kinetics(const ConfigFlags& flags) {
    const StudyConfig cfg = flags.resolve(StudyKind::kinetics);
    const KineticsStudy st = run_kinetics_study(cfg, progress);
    write_kinetics_outputs(st, cfg.out);
    const auto& last = st.rows.back();
    std::printf("kinetics study: n=2..%zu, R %.3e -> %.3e, bound(n=%zu) %.3e, %.1f s\n", last.n, st.rows.front().R,
                last.R, last.n, last.bound, st.seconds);
    std::cout << "outputs in " << cfg.out << '\n';
    return 0;
}

int cmd_study_heat(const ConfigFlags& flags) {
    const StudyConfig cfg = flags.resolve(StudyKind::heat);
    const HeatStudy st = run_heat_study(cfg, progress);
    write_heat_outputs(st, cfg.out);
    std::size_t failed = 0;
    for (const auto& r : st.rows) failed += r.failed ? 1 : 0;
    std::printf("heat study: %zu points (%zu failed), fevals full %.1f windowed %.1f, mean |dQ| full %.3e windowed "
                "%.3e, %.1f s\n",
                st.rows.size(), failed, st.mean_fevals(&HeatRow::fevals_full), st.mean_fevals(&HeatRow::fevals_win),
                st.mean(&HeatRow::err_full), st.mean(&HeatRow::err_win), st.seconds);
    std::cout << "outputs in " << cfg.out << '\n';
    return failed == st.rows.size() ? 1 : 0;
}

// ---------------------------------------------------------------- kl-export

struct KlArgs {
    std::string out = "out";
    std::size_t modes = conductivity::default_modes;
    std::size_t nodes = conductivity::default_nodes;
    double gamma_sq = conductivity::default_gamma_sq;
};

int cmd_kl_export(const KlArgs& args) {
    const auto kl = conductivity::default_kl(args.modes, args.nodes, args.gamma_sq);
    fs::create_directories(args.out);
    const fs::path dir = args.out;
    conductivity::export_kl(kl, dir / "kl_modes.csv", dir / "kl_eigenvalues.csv");
    CsvWriter mean(dir / "kappa_mean.csv", {"T[degC]", "kappa_mean[W/(m K)]", "sigma_log[1]"});
    for (Eigen::Index i = 0; i < kl.temps.size(); ++i)
        mean.cell(kl.temps[i])
            .cell(conductivity::kappa(kl.temps[i], Vector::Zero(static_cast<Eigen::Index>(kl.size())), kl))
            .cell(conductivity::sigma_log(kl.temps[i]))
            .end_row();
    mean.close();
    std::printf("KL: %zu of %zu modes, captured variance %.6f, trace %.10g\n", kl.size(), args.nodes,
                kl.captured_fraction(), kl.all_eigs.sum());
    std::cout << "wrote kl_modes.csv, kl_eigenvalues.csv, kappa_mean.csv in " << args.out << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Residual-minimizing interpolation of parameterized dynamical systems"};
    app.set_version_flag("--version", std::string(version_string));
    app.require_subcommand(1);

    SnapshotArgs snap;
    auto* c_snap = app.add_subcommand("snapshot", "integrate the full model and write a snapshot store");
    c_snap->add_option("--model", snap.model, "kinetics or heat")->check(CLI::IsMember({"kinetics", "heat"}));
    c_snap->add_option("--param", snap.params, "parameter point, comma separated components (repeatable)");
    c_snap->add_option("--draws", snap.draws, "standard-normal heat parameters drawn from --seed");
    c_snap->add_option("--store", snap.store, "store directory")->required();
    snap.flags.add_to(c_snap, false);

    InterpArgs ia;
    auto* c_interp = app.add_subcommand("interp", "interpolate a store at a new parameter point");
    c_interp->add_option("--store", ia.store, "store directory")->required();
    c_interp->add_option("--param", ia.param, "query point, comma separated components")->required();
    c_interp->add_option("--window", ia.window, "nearest snapshots to use (0 = all)");
    c_interp->add_option("--trunc-tau", ia.trunc_tau, "truncation tolerance on the Lagrange ladder")
        ->check(CLI::NonNegativeNumber);
    c_interp->add_option("--max-newton", ia.max_newton, "Newton iteration limit");
    c_interp->add_option("--fd-eps", ia.fd_eps, "finite-difference step")->check(CLI::PositiveNumber);
    c_interp->add_flag("--damping", ia.damping, "halve rejected Newton steps");
    c_interp->add_option("--index", ia.indices, "time-grid index to reconstruct (repeatable, default last)");
    c_interp->add_option("--out", ia.out, "CSV file for the reconstructed states");

    ConfigFlags kin, hea;
    auto* c_kin = app.add_subcommand("study-kinetics", "greedy basis sweep on the kinetics model");
    kin.add_to(c_kin, true);
    auto* c_heat = app.add_subcommand("study-heat", "cross-validated heat-transfer study");
    hea.add_to(c_heat, true);

    KlArgs kla;
    auto* c_kl = app.add_subcommand("kl-export", "write the conductivity KL modes and eigenvalues");
    c_kl->add_option("--out", kla.out, "output directory");
    c_kl->add_option("--modes", kla.modes, "retained modes")->check(CLI::PositiveNumber);
    c_kl->add_option("--nodes", kla.nodes, "temperature nodes")->check(CLI::PositiveNumber);
    c_kl->add_option("--gamma-sq", kla.gamma_sq, "correlation length squared")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (*c_snap) return cmd_snapshot(snap);
        if (*c_interp) return cmd_interp(ia);
        if (*c_kin) return cmd_study_kinetics(kin);
        if (*c_heat) return cmd_study_heat(hea);
        if (*c_kl) return cmd_kl_export(kla);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const LoadFailure& e) {
        std::cerr << "error: cannot load store: " << e.what() << '\n';
        return 2;
    } catch (const IoFailure& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
