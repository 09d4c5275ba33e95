#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <memory>

#include "resmin/heat.hpp"
#include "resmin/rng.hpp"

using namespace resmin;
using namespace resmin::heat;

namespace {

std::shared_ptr<const conductivity::KLBasis> kl() {
    static const auto k = std::make_shared<const conductivity::KLBasis>(conductivity::default_kl());
    return k;
}

double constant_kappa(double, const VectorRef&) { return 40.0; }

TimeGrid times(std::vector<double> pts) {
    std::vector<double> w(pts.size(), 1.0);
    return TimeGrid{std::move(pts), std::move(w)};
}

} // namespace

TEST(BoundaryTemp, ClampedRamp) {
    EXPECT_EQ(boundary_temp(0.0, 0.0), 20.0);
    EXPECT_EQ(boundary_temp(0.15, 0.0), 20.0);
    EXPECT_EQ(boundary_temp(0.0, 70.0), 1100.0);
    EXPECT_NEAR(boundary_temp(0.0, 30.0), 280.0, 1e-12);
    EXPECT_NEAR(boundary_temp(0.05, 50.0), 98.0 / 3.0 * 50.0 - 300.0 - 700.0, 1e-12);
}

TEST(HeatProblem, LayoutAndAreas) {
    HeatDomain d;
    HeatProblem p(d, kl());
    EXPECT_EQ(p.size(), 21u * 41u);
    EXPECT_EQ(p.param_dim(), 11u);
    EXPECT_NEAR(p.areas().sum(), (d.Lx - 0.5 * p.hx()) * (d.Ly - 0.5 * p.hy()), 1e-15);
    HeatDomain open = d;
    open.dirichlet_left = open.dirichlet_bottom = false;
    HeatProblem q(open, kl());
    EXPECT_EQ(q.size(), 22u * 42u);
    EXPECT_NEAR(q.areas().sum(), d.Lx * d.Ly, 1e-15);
    HeatDomain bad = d;
    bad.rho_c = 0;
    EXPECT_THROW(HeatProblem(bad, kl()), InvalidArgument);
}

TEST(HeatForcing, UniformFieldIsStationary) {
    HeatDomain d;
    d.boundary = [](double, double, double) { return 350.0; };
    HeatProblem p(d, kl());
    Vector s(11);
    s << 0.3, -1, 2, 0.1, 0, 0, -0.5, 1, 1, -2, 0.7;
    const Vector f = p.forcing(Vector::Constant(static_cast<Eigen::Index>(p.size()), 350.0), 5.0, s);
    EXPECT_LT(f.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(HeatForcing, LinearProfileWithMatchingDataIsStationaryInside) {
    HeatDomain d;
    d.dirichlet_left = true;
    d.dirichlet_bottom = false;
    // T = 100 + 500 x1 with constant kappa; only the right no-flux edge disagrees with the profile.
    d.boundary = [](double x1, double, double) { return 100.0 + 500.0 * x1; };
    HeatProblem p(d, 1, constant_kappa);
    Vector T(static_cast<Eigen::Index>(p.size()));
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i <= d.nx; ++i) T[p.index(i, j)] = 100.0 + 500.0 * p.x1(i);
    const Vector f = p.forcing(T, 0.0, Vector::Zero(1));
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i < d.nx; ++i) EXPECT_NEAR(f[p.index(i, j)], 0.0, 1e-12);
}

TEST(HeatForcing, QuadraticProfileWithConstantKappa) {
    HeatDomain d;
    d.dirichlet_bottom = false;
    d.boundary = [](double x1, double, double) { return x1 * x1; };
    HeatProblem p(d, 1, constant_kappa);
    Vector T(static_cast<Eigen::Index>(p.size()));
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i <= d.nx; ++i) T[p.index(i, j)] = p.x1(i) * p.x1(i);
    const Vector f = p.forcing(T, 0.0, Vector::Zero(1));
    const double expect = 2.0 * 40.0 / d.rho_c;
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i < d.nx; ++i) EXPECT_NEAR(f[p.index(i, j)], expect, 1e-10 * expect);
}

namespace {

// T = T0 + A (x1 - Lx)^2 satisfies the no-flux condition at x1 = Lx; kappa varies with T.
double manufactured_error(std::size_t nx) {
    constexpr double T0 = 200.0, A = 1e5, Lx = 0.1;
    auto kap = [](double T, const VectorRef&) { return 30.0 + 0.02 * T; };
    HeatDomain d;
    d.nx = nx;
    d.ny = 4;
    d.dirichlet_bottom = false;
    auto exact = [=](double x1) { return T0 + A * (x1 - Lx) * (x1 - Lx); };
    d.boundary = [=](double x1, double, double) { return exact(x1); };
    HeatProblem p(d, 1, kap);
    Vector T(static_cast<Eigen::Index>(p.size()));
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i <= nx; ++i) T[p.index(i, j)] = exact(p.x1(i));
    const Vector f = p.forcing(T, 0.0, Vector::Zero(1));
    double err = 0.0;
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 1; i <= nx; ++i) {
            const double x = p.x1(i);
            const double Tx = 2.0 * A * (x - Lx), Txx = 2.0 * A;
            const double ref = (0.02 * Tx * Tx + (30.0 + 0.02 * exact(x)) * Txx) / d.rho_c;
            err = std::max(err, std::abs(f[p.index(i, j)] - ref));
        }
    return err;
}

} // namespace

TEST(HeatForcing, ManufacturedSolutionConvergesSecondOrder) {
    const double e1 = manufactured_error(10), e2 = manufactured_error(20), e3 = manufactured_error(40);
    EXPECT_GT(e1, 0.0);
    EXPECT_GE(e1 / e2, 3.5);
    EXPECT_GE(e2 / e3, 3.5);
}

TEST(HeatForcing, RejectsWrongLengths) {
    HeatProblem p(HeatDomain{}, kl());
    EXPECT_THROW(p.forcing(Vector::Zero(5), 0.0, Vector::Zero(11)), InvalidArgument);
    EXPECT_THROW(p.forcing(p.initial_field(), 0.0, Vector::Zero(3)), InvalidArgument);
}

TEST(HeatModel, ExposesModelSystem) {
    auto p = std::make_shared<const HeatProblem>(HeatDomain{}, kl());
    const ModelSystem m = heat_model(p);
    EXPECT_EQ(m.state_dim, 861u);
    EXPECT_EQ(m.param_dim, 11u);
    Vector out(861);
    m.forcing(p->initial_field(), 40.0, Vector::Zero(11), out);
    EXPECT_GT(out.maxCoeff(), 0.0);
    EXPECT_GE(out.minCoeff(), 0.0);
}

TEST(Qoi, Fractions) {
    HeatProblem p(HeatDomain{}, kl());
    const auto n = static_cast<Eigen::Index>(p.size());
    EXPECT_EQ(qoi_fraction(Vector::Constant(n, 1100.0), p), 1.0);
    EXPECT_EQ(qoi_fraction(Vector::Constant(n, 20.0), p), 0.0);
    EXPECT_EQ(qoi_fraction(Vector::Constant(n, 1000.0), p), 0.0);

    HeatDomain d;
    d.nx = 3;
    d.ny = 2;
    d.dirichlet_left = d.dirichlet_bottom = false;
    HeatProblem q(d, 1, constant_kappa);
    Vector T(static_cast<Eigen::Index>(q.size()));
    for (std::size_t j = 0; j <= 2; ++j)
        for (std::size_t i = 0; i <= 3; ++i) T[q.index(i, j)] = i <= 1 ? 1050.0 : 500.0;
    EXPECT_DOUBLE_EQ(qoi_fraction(T, q), 0.5);
    EXPECT_THROW(qoi_fraction(Vector::Zero(3), q), InvalidArgument);
}

TEST(SolveHeat, ShortTimeInteriorStaysCold) {
    HeatProblem p(HeatDomain{}, kl());
    const auto r = solve_heat(p, Vector::Zero(11), times({1.0}));
    for (std::size_t j = 10; j <= 41; ++j)
        for (std::size_t i = 5; i <= 21; ++i) EXPECT_LT(std::abs(r.traj.states(0, p.index(i, j)) - 20.0), 0.1);
}

TEST(SolveHeat, ConservesEnergyWithInsulatedEdges) {
    HeatDomain d;
    d.nx = 10;
    d.ny = 20;
    d.dirichlet_left = d.dirichlet_bottom = false;
    HeatProblem p(d, kl());
    Vector T0(static_cast<Eigen::Index>(p.size()));
    for (std::size_t j = 0; j <= d.ny; ++j)
        for (std::size_t i = 0; i <= d.nx; ++i) T0[p.index(i, j)] = 20.0 + 1000.0 * std::exp(-400.0 * (p.x1(i) * p.x1(i) + p.x2(j) * p.x2(j)));
    HeatSolverOptions o;
    const auto r = solve_heat(p, Vector::Zero(11), times({10.0, 40.0, 70.0}), o, T0);
    const double e0 = p.areas().dot(T0);
    for (Eigen::Index k = 0; k < 3; ++k) {
        const double ek = p.areas().dot(r.traj.states.row(k).transpose());
        EXPECT_LT(std::abs(ek - e0), 10.0 * o.rel * e0);
    }
    EXPECT_LT(r.traj.states.row(2).maxCoeff(), T0.maxCoeff());
}

TEST(SolveHeat, MaximumPrincipleAndMonotoneResponse) {
    HeatProblem p(HeatDomain{}, kl());
    const auto grid = make_time_grid(0.0, 70.0, 70, GridScheme::uniform);
    const auto r = solve_heat(p, Vector::Zero(11), grid);
    EXPECT_GE(r.traj.states.minCoeff(), 20.0 - 1e-6);
    EXPECT_LE(r.traj.states.maxCoeff(), 1100.0 + 1e-6);
    for (Eigen::Index k = 1; k < r.traj.states.rows(); ++k)
        EXPECT_GE((r.traj.states.row(k) - r.traj.states.row(k - 1)).minCoeff(), -1e-6) << "k=" << k;
    EXPECT_EQ(r.stats.picard_failures, 0u);
}

TEST(SolveHeat, RandomConductivityRespectsBounds) {
    HeatProblem p(HeatDomain{}, kl());
    CounterRng rng(11);
    Vector s(11);
    for (Eigen::Index i = 0; i < 11; ++i) s[i] = rng.normal(static_cast<std::uint64_t>(i));
    const auto r = solve_heat(p, s, make_time_grid(0.0, 70.0, 14, GridScheme::uniform));
    EXPECT_GE(r.traj.states.minCoeff(), 20.0 - 1e-6);
    EXPECT_LE(r.traj.states.maxCoeff(), 1100.0 + 1e-6);
}

TEST(SolveHeat, HitsOutputTimesAndRejectsBadOptions) {
    HeatProblem p(HeatDomain{}, kl());
    const auto r = solve_heat(p, Vector::Zero(11), times({0.0, 0.37, 12.5}));
    EXPECT_EQ(r.traj.states.rows(), 3);
    EXPECT_EQ(r.traj.states.row(0).minCoeff(), 20.0);
    HeatSolverOptions bad;
    bad.max_order = 3;
    EXPECT_THROW(solve_heat(p, Vector::Zero(11), times({1.0}), bad), InvalidArgument);
    EXPECT_THROW(solve_heat(p, Vector::Zero(2), times({1.0})), InvalidArgument);
}

TEST(SolveHeat, StepBudgetExhaustionThrows) {
    HeatProblem p(HeatDomain{}, kl());
    HeatSolverOptions o;
    o.max_steps = 5;
    EXPECT_THROW(solve_heat(p, Vector::Zero(11), times({70.0}), o), IntegrationFailure);
}

TEST(SolveHeat, TemperatureAgreesAcrossTolerances) {
    HeatProblem p(HeatDomain{}, kl());
    HeatSolverOptions loose, tight;
    tight.rel = 1e-7;
    tight.abs = 1e-5;
    const auto a = solve_heat(p, Vector::Zero(11), times({70.0}), loose);
    const auto b = solve_heat(p, Vector::Zero(11), times({70.0}), tight);
    EXPECT_LT((a.traj.states - b.traj.states).cwiseAbs().maxCoeff(), 2.0);
}

TEST(SolveHeat, GridRefinementRecord) {
    // Q and the area-mean temperature at t = 70 on three nested grids. The hot layer is
    // thinner than these cells, so Q is only recorded; the mean must self-converge.
    std::vector<double> q, mean;
    for (std::size_t f : {1u, 2u, 4u}) {
        HeatDomain g;
        g.nx = 5 * f;
        g.ny = 10 * f;
        HeatProblem p(g, kl());
        const auto r = solve_heat(p, Vector::Zero(11), times({70.0}));
        const Vector T = r.traj.states.row(0).transpose();
        q.push_back(qoi_fraction(T, p));
        mean.push_back(p.areas().dot(T) / p.areas().sum());
        RecordProperty("Q_nx" + std::to_string(g.nx), std::to_string(q.back()));
        RecordProperty("mean_nx" + std::to_string(g.nx), std::to_string(mean.back()));
        EXPECT_GE(q.back(), 0.0);
        EXPECT_LE(q.back(), 1.0);
    }
    EXPECT_LT(std::abs(mean[2] - mean[1]), std::abs(mean[1] - mean[0]));
    EXPECT_LE(q[0], q[1]);
    EXPECT_LE(q[1], q[2]);
}
