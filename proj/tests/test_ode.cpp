#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "resmin/kinetics.hpp"
#include "resmin/ode.hpp"

using namespace resmin;

namespace {

ModelSystem linear_decay() {
    ModelSystem m;
    m.state_dim = 1;
    m.param_dim = 1;
    m.forcing = [](const VectorRef& x, double, const VectorRef& s, VectorOut out) { out[0] = -s[0] * x[0]; };
    return m;
}

Vector one(double v) {
    Vector x(1);
    x << v;
    return x;
}

} // namespace

TEST(Integrate, ExponentialDecay) {
    const auto grid = make_time_grid(0.0, 1.0, 10, GridScheme::uniform);
    const auto tr = integrate(linear_decay(), one(1.0), one(1.0), grid, {1e-8, 1e-10});
    EXPECT_NEAR(tr.states(9, 0), 0.3678794, 1e-6);
    for (std::size_t i = 0; i < grid.size(); ++i)
        EXPECT_NEAR(tr.states(static_cast<Eigen::Index>(i), 0), std::exp(-grid.points[i]), 1e-7);
}

TEST(Integrate, ConstantSolution) {
    ModelSystem m;
    m.state_dim = 2;
    m.param_dim = 1;
    m.forcing = [](const VectorRef&, double, const VectorRef&, VectorOut out) { out.setZero(); };
    Vector x0(2);
    x0 << 1.5, -2.0;
    const auto grid = make_time_grid(0.0, 3.0, 7, GridScheme::trapezoid);
    const auto tr = integrate(m, x0, one(0.0), grid);
    for (Eigen::Index i = 0; i < tr.states.rows(); ++i) EXPECT_EQ((tr.states.row(i).transpose() - x0).norm(), 0.0);
}

TEST(Integrate, GridPointAtZeroReturnsInitialState) {
    const auto grid = make_time_grid(0.0, 1.0, 5, GridScheme::trapezoid);
    const auto tr = integrate(linear_decay(), one(2.0), one(1.0), grid);
    EXPECT_EQ(tr.states(0, 0), 2.0);
}

TEST(Integrate, KineticsNonstiffEndIsFiniteAndSelfConsistent) {
    const auto grid = make_time_grid(0.0, 1.0, 300, GridScheme::uniform);
    const auto model = kinetics::model();
    const Vector x0 = kinetics::initial_state();
    const double rel = 1e-8;
    const auto a = integrate(model, x0, one(1.2), grid, {rel, 1e-10});
    const auto b = integrate(model, x0, one(1.2), grid, {rel / 2, 1e-10 / 2});
    EXPECT_TRUE(a.states.allFinite());
    EXPECT_LT(a.states.cwiseAbs().maxCoeff(), 10.0);
    const double diff = (a.states - b.states).cwiseAbs().maxCoeff();
    EXPECT_LT(diff, 10 * rel * std::max(1.0, a.states.cwiseAbs().maxCoeff()));
}

TEST(Integrate, KineticsStiffEndIntegrates) {
    const auto grid = make_time_grid(0.0, 1.0, 300, GridScheme::uniform);
    const auto tr = integrate(kinetics::model(), kinetics::initial_state(), one(0.005), grid);
    EXPECT_TRUE(tr.states.allFinite());
    EXPECT_GT(tr.stats.accepted, 100u);
}

TEST(Integrate, ObservedOrderNearFive) {
    // Global error against step count, e ~ N^-5, fitted over four decades of tolerance.
    const auto grid = make_time_grid(0.0, 10.0, 1, GridScheme::uniform);
    std::vector<double> le, ln;
    for (double tol : {1e-6, 1e-7, 1e-8, 1e-9, 1e-10}) {
        const auto tr = integrate(linear_decay(), one(1.0), one(1.0), grid, {tol, tol * 1e-3});
        le.push_back(std::log(std::abs(tr.states(0, 0) - std::exp(-10.0))));
        ln.push_back(std::log(static_cast<double>(tr.stats.accepted + tr.stats.rejected)));
    }
    const double mx = std::accumulate(ln.begin(), ln.end(), 0.0) / 5.0;
    const double my = std::accumulate(le.begin(), le.end(), 0.0) / 5.0;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < 5; ++i) {
        sxy += (ln[i] - mx) * (le[i] - my);
        sxx += (ln[i] - mx) * (ln[i] - mx);
    }
    EXPECT_NEAR(-sxy / sxx, 5.0, 0.5);
}

TEST(Integrate, TighterToleranceNeverWorse) {
    const auto grid = make_time_grid(0.0, 1.0, 20, GridScheme::uniform);
    double prev = INFINITY;
    for (double tol : {1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10}) {
        const auto tr = integrate(linear_decay(), one(1.0), one(2.0), grid, {tol, tol * 1e-2});
        double err = 0;
        for (std::size_t i = 0; i < grid.size(); ++i)
            err = std::max(err, std::abs(tr.states(static_cast<Eigen::Index>(i), 0) - std::exp(-2.0 * grid.points[i])));
        EXPECT_LE(err, prev + 1e-12);
        prev = err;
    }
}

TEST(Integrate, BlowUpReportsFailureWithTime) {
    ModelSystem m;
    m.state_dim = 1;
    m.param_dim = 1;
    m.forcing = [](const VectorRef& x, double, const VectorRef&, VectorOut out) { out[0] = x[0] * x[0]; };
    // x' = x^2, x(0)=1 blows up at t = 1.
    const auto grid = make_time_grid(0.0, 2.0, 4, GridScheme::uniform);
    try {
        integrate(m, one(1.0), one(0.0), grid);
        FAIL() << "expected IntegrationFailure";
    } catch (const IntegrationFailure& e) {
        EXPECT_GT(e.last_time(), 0.9);
        EXPECT_LE(e.last_time(), 1.0 + 1e-9);
    }
}

TEST(Integrate, RejectsBadTolerances) {
    const auto grid = make_time_grid(0.0, 1.0, 4, GridScheme::uniform);
    EXPECT_THROW(integrate(linear_decay(), one(1.0), one(1.0), grid, {0.0, 1e-10}), InvalidArgument);
    EXPECT_THROW(integrate(linear_decay(), one(1.0), one(1.0), grid, {1e-8, -1.0}), InvalidArgument);
}
