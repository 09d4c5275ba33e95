#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <thread>
#include <vector>

#include "resmin/model.hpp"

using namespace resmin;

namespace {

ModelSystem decay_model() {
    ModelSystem m;
    m.state_dim = 1;
    m.param_dim = 1;
    m.forcing = [](const VectorRef& x, double, const VectorRef& s, VectorOut out) { out[0] = -s[0] * x[0]; };
    return m;
}

} // namespace

TEST(TimeGrid, UniformGridExcludesStartIncludesEnd) {
    const auto g = make_time_grid(0.0, 1.0, 300, GridScheme::uniform);
    ASSERT_EQ(g.size(), 300u);
    for (std::size_t j = 0; j < 300; ++j) {
        EXPECT_NEAR(g.points[j], static_cast<double>(j + 1) / 300.0, 1e-15);
        EXPECT_DOUBLE_EQ(g.sq_weights[j], 1.0 / 300.0);
    }
    EXPECT_EQ(g.points.back(), 1.0);
}

TEST(TimeGrid, TrapezoidTwoPoints) {
    const auto g = make_time_grid(0.0, 1.0, 2, GridScheme::trapezoid);
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g.points[0], 0.0);
    EXPECT_EQ(g.points[1], 1.0);
    EXPECT_DOUBLE_EQ(g.sq_weights[0], 0.5);
    EXPECT_DOUBLE_EQ(g.sq_weights[1], 0.5);
}

TEST(TimeGrid, SinglePointUniform) {
    const auto g = make_time_grid(0.0, 1.0, 1, GridScheme::uniform);
    ASSERT_EQ(g.size(), 1u);
    EXPECT_EQ(g.points[0], 1.0);
    EXPECT_EQ(g.sq_weights[0], 1.0);
}

TEST(TimeGrid, TrapezoidInteriorAndEndpointWeights) {
    const auto g = make_time_grid(2.0, 5.0, 7, GridScheme::trapezoid);
    const double dt = 0.5;
    EXPECT_DOUBLE_EQ(g.sq_weights.front(), dt / 2);
    EXPECT_DOUBLE_EQ(g.sq_weights.back(), dt / 2);
    for (std::size_t i = 1; i + 1 < g.size(); ++i) EXPECT_DOUBLE_EQ(g.sq_weights[i], dt);
}

TEST(TimeGrid, WeightsSumToSpan) {
    for (auto scheme : {GridScheme::uniform, GridScheme::trapezoid}) {
        for (std::size_t m : {2u, 3u, 17u, 300u, 1001u}) {
            const auto g = make_time_grid(-0.3, 7.1, m, scheme);
            const double sum = std::accumulate(g.sq_weights.begin(), g.sq_weights.end(), 0.0);
            EXPECT_NEAR(sum, 7.4, 1e-12 * 7.4);
        }
    }
}

TEST(TimeGrid, SpanIsExact) {
    const auto g = make_time_grid(0.0, 1.0, 300, GridScheme::trapezoid);
    EXPECT_NEAR(g.points.back() - g.points.front(), 1.0, std::numeric_limits<double>::epsilon());
    const auto u = make_time_grid(0.0, 70.0, 1, GridScheme::uniform);
    EXPECT_EQ(u.points[0], 70.0);
    EXPECT_EQ(u.sq_weights[0], 70.0);
}

TEST(TimeGrid, RejectsBadInput) {
    EXPECT_THROW(make_time_grid(0, 1, 0, GridScheme::uniform), InvalidArgument);
    EXPECT_THROW(make_time_grid(0, 1, 1, GridScheme::trapezoid), InvalidArgument);
    EXPECT_THROW(make_time_grid(1, 1, 3, GridScheme::uniform), InvalidArgument);
    EXPECT_THROW(make_time_grid(2, 1, 3, GridScheme::uniform), InvalidArgument);
    EXPECT_THROW(make_time_grid(0, INFINITY, 3, GridScheme::uniform), InvalidArgument);
    EXPECT_THROW(make_time_grid(NAN, 1, 3, GridScheme::uniform), InvalidArgument);
}

TEST(TimeGrid, ValidateCatchesBrokenGrids) {
    TimeGrid g{{0.1, 0.1}, {1, 1}};
    EXPECT_THROW(g.validate(), InvalidArgument);
    TimeGrid z{{0.1, 0.2}, {0, 0}};
    EXPECT_THROW(z.validate(), InvalidArgument);
    TimeGrid neg{{0.1, 0.2}, {1, -1}};
    EXPECT_THROW(neg.validate(), InvalidArgument);
    TimeGrid ok{{0.1, 0.2}, {0, 1}};
    EXPECT_NO_THROW(ok.validate());
}

TEST(EvalCounter, CountsAndResets) {
    EvalCounter c;
    const auto m = decay_model();
    Vector x(1), s(1);
    x << 2.0;
    s << 3.0;
    const Vector y = eval_counted(m, c, x, 0.0, s);
    EXPECT_EQ(c.count(), 1u);
    EXPECT_DOUBLE_EQ(y[0], -6.0);
    c.reset();
    EXPECT_EQ(c.count(), 0u);
}

TEST(EvalCounter, DeterministicForcing) {
    EvalCounter c;
    const auto m = decay_model();
    Vector x(1), s(1);
    x << 0.7;
    s << 1.3;
    EXPECT_EQ(eval_counted(m, c, x, 0.0, s)[0], eval_counted(m, c, x, 0.0, s)[0]);
    EXPECT_EQ(c.count(), 2u);
}

TEST(EvalCounter, RejectsDimensionMismatch) {
    EvalCounter c;
    const auto m = decay_model();
    Vector x(2), s(1);
    EXPECT_THROW(eval_counted(m, c, x, 0.0, s), InvalidArgument);
    Vector x1(1), s2(2);
    EXPECT_THROW(eval_counted(m, c, x1, 0.0, s2), InvalidArgument);
    EXPECT_EQ(c.count(), 0u);
}

TEST(EvalCounter, ConcurrentIncrementsAreNotLost) {
    EvalCounter c;
    std::vector<std::thread> pool;
    for (int t = 0; t < 8; ++t)
        pool.emplace_back([&] {
            for (int i = 0; i < 10000; ++i) c.add();
        });
    for (auto& t : pool) t.join();
    EXPECT_EQ(c.count(), 80000u);
}
