#include <gtest/gtest.h>

#include <random>

#include "resmin/kinetics.hpp"

using namespace resmin;

TEST(Kinetics, HandEvaluatedPoint) {
    const Eigen::Vector3d f = kinetics::forcing(Eigen::Vector3d(0.5, 0.5, 0.5), 1.0);
    // u/s = v/s = w/s = 0.5, uv = vw = v^2 = 0.25
    // f1 = -2.5 - 0.25 + 0.25 + 1.25 + 0.5 - 0.5
    // f2 = 5 - 0.25 - 0.25 - 2.5 + 0.5 + 0.5
    // f3 = 0.25 - 0.25 - 0.5 + 0.5
    EXPECT_NEAR(f[0], -1.25, 1e-15);
    EXPECT_NEAR(f[1], 3.0, 1e-15);
    EXPECT_NEAR(f[2], 0.0, 1e-15);
}

TEST(Kinetics, ZeroStateGivesZero) {
    for (double s : {0.005, 0.3, 1.2}) EXPECT_EQ(kinetics::forcing(Eigen::Vector3d::Zero(), s).norm(), 0.0);
}

TEST(Kinetics, OnlyQuadraticVTermsSurvive) {
    // x = (0, 1, 0): f1 = 5 v^2/s = 1000, f2 = -10 v^2/s = -2000, f3 = 0.
    const Eigen::Vector3d f = kinetics::forcing(Eigen::Vector3d(0, 1, 0), 0.005);
    EXPECT_NEAR(f[0], 1000.0, 1e-9);
    EXPECT_NEAR(f[1], -2000.0, 1e-9);
    EXPECT_EQ(f[2], 0.0);
}

TEST(Kinetics, RejectsNonpositiveStiffness) {
    Vector out(3);
    EXPECT_THROW(kinetics::forcing(Eigen::Vector3d::Ones(), 0.0, out), InvalidArgument);
    EXPECT_THROW(kinetics::forcing(Eigen::Vector3d::Ones(), -1.0, out), InvalidArgument);
    EXPECT_THROW(kinetics::jacobian(Eigen::Vector3d::Ones(), 0.0), InvalidArgument);
}

TEST(Kinetics, JacobianAtOriginHasLinearCoefficients) {
    const auto J = kinetics::jacobian(Eigen::Vector3d::Zero(), 1.0);
    EXPECT_DOUBLE_EQ(J(0, 0), -6.0);
    const double s = 0.25;
    const auto Js = kinetics::jacobian(Eigen::Vector3d::Zero(), s);
    EXPECT_NEAR(Js.col(0).sum(), 5.0 / s + 1.0, 1e-12);
    EXPECT_NEAR(Js(0, 2), 1.0 / s, 1e-12);
    EXPECT_NEAR(Js(1, 2), 1.0 / s, 1e-12);
    EXPECT_NEAR(Js(2, 2), -1.0 / s, 1e-12);
}

TEST(Kinetics, JacobianMatchesCentralDifferences) {
    // The forcing is quadratic in x, so central differences are exact up to rounding.
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> U(-1.0, 1.0), S(kinetics::s_min, kinetics::s_max);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Vector3d x(U(gen), U(gen), U(gen));
        const Eigen::Vector3d v(U(gen), U(gen), U(gen));
        const double s = S(gen);
        const double eps = 1e-4;
        const Eigen::Vector3d fd = (kinetics::forcing(x + eps * v, s) - kinetics::forcing(x - eps * v, s)) / (2 * eps);
        const Eigen::Vector3d an = kinetics::jacobian(x, s) * v;
        EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, 1.0 / s)) << "s=" << s;
    }
}

TEST(Kinetics, SmoothInStiffness) {
    const Eigen::Vector3d x(0.3, 0.6, 0.2);
    const double s = 0.4;
    auto fs = [&](double ss) { return kinetics::forcing(x, ss); };
    // Exact derivative in s: every 1/s term scales by -1/s^2.
    const Eigen::Vector3d g = fs(s) - fs(1e300);
    const Eigen::Vector3d exact = -g / s;
    double prev = 0;
    for (int k = 0; k < 4; ++k) {
        const double h = 1e-2 / std::pow(2.0, k);
        const Eigen::Vector3d cd = (fs(s + h) - fs(s - h)) / (2 * h);
        const double err = (cd - exact).norm();
        if (k > 0) EXPECT_GT(prev / err, 3.5);
        prev = err;
    }
}

TEST(Kinetics, ModelWrapperMatches) {
    const auto m = kinetics::model();
    EXPECT_EQ(m.state_dim, 3u);
    EXPECT_EQ(m.param_dim, 1u);
    Vector s(1);
    s << 0.7;
    const Vector x = Eigen::Vector3d(0.1, 0.2, 0.3);
    const Vector f = m(x, 0.0, s);
    EXPECT_EQ((f - Vector(kinetics::forcing(Eigen::Vector3d(x), 0.7))).norm(), 0.0);
    EXPECT_EQ((m.jacobian(x, 0.0, s) - Matrix(kinetics::jacobian(x, 0.7))).norm(), 0.0);
}
