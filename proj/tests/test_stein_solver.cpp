#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "steinind/measures.hpp"
#include "steinind/stein_solver.hpp"

using namespace steinind;

namespace {

std::vector<TargetMeasure> four() { return {gaussian_std(), centered_gamma(), uniform01(), lognormal01()}; }

}  // namespace

// For h(x, y) = x every measure has f_h = -1: ½ a·0 - (x - m)(-1) = x - m.
TEST(SteinSolver, IdentityHasConstantSolution) {
    for (const auto& mu : four()) {
        const SteinSolver s(mu, identity_test_function());
        const std::vector<double> y(s.test_function().dim_y, 0.7);
        for (double q : {0.01, 0.2, 0.5, 0.77, 0.99}) {
            const double x = mu.quantile(q);
            EXPECT_NEAR(s.solve(x, y), -1.0, 1e-8) << mu.name() << " q=" << q;
            EXPECT_NEAR(s.solve_alt(x, y), -1.0, 1e-8) << mu.name();
            EXPECT_NEAR(s.dx_solution(x, y), 0.0, 1e-7) << mu.name();
        }
    }
}

TEST(SteinSolver, ResidualAndRepresentations) {
    GaussianDraw draw(chunk_stream(3, 0));
    for (const auto& mu : four())
        for (const auto& h : test_function_family(mu)) {
            const SteinSolver s(mu, h);
            for (int k = 0; k < 25; ++k) {
                const double x = mu.quantile(0.01 + 0.98 * draw.uniform());
                std::vector<double> y(h.dim_y);
                for (auto& v : y) v = h.y_box * (2.0 * draw.uniform() - 1.0);
                const auto c = s.cross_check(x, y);
                EXPECT_LE(std::abs(c.residual), 1e-6) << mu.name() << " " << h.name << " x=" << x;
                EXPECT_LE(std::abs(c.expsol - c.exp2sol), 1e-7) << mu.name() << " " << h.name << " x=" << x;
                EXPECT_NEAR(c.dx, c.dx_fd, 1e-4 * std::max(1.0, std::abs(c.dx))) << mu.name() << " " << h.name;
            }
        }
}

TEST(SteinSolver, DySolutionSolvesForDyH) {
    const auto mu = gaussian_std();
    const SteinSolver s(mu, sine_test_function());
    const double y[1] = {0.4};
    for (double x : {-1.0, 0.3, 1.5}) {
        // Finite difference of f_h in y against the solution for ∂y h.
        const double yp[1] = {0.4 + 1e-5}, ym[1] = {0.4 - 1e-5};
        const double fd = (s.solve(x, yp) - s.solve(x, ym)) / 2e-5;
        EXPECT_NEAR(s.dy_solution(x, y, 0), fd, 1e-6);
    }
}

TEST(SteinSolver, Errors) {
    const auto mu = uniform01();
    const SteinSolver s(mu, sine_test_function());
    const double y[1] = {0.0};
    EXPECT_THROW(s.solve(1e-6, y), DomainError);
    EXPECT_THROW(s.solve(0.5, std::vector<double>{}), ConfigError);
    EXPECT_THROW(s.dy_solution(0.5, y, 3), ConfigError);
    TestFunction bad = sine_test_function();
    bad.sup_dy.clear();
    EXPECT_THROW(SteinSolver(mu, bad), ConfigError);
}

TEST(TestFunctions, DerivativesMatchDifferences) {
    for (const auto& mu : four())
        for (const auto& h : test_function_family(mu)) EXPECT_LT(derivative_check(h, mu, 50, 5), 1e-6) << h.name;
}

TEST(TestFunctions, DeclaredNormsAreUpperBounds) {
    const auto mu = gaussian_std();
    for (const auto& h : test_function_family(mu)) {
        double sdx = 0.0, sdy = 0.0;
        for (double x = -6.0; x <= 6.0; x += 0.01)
            for (double yy = -h.y_box; yy <= h.y_box; yy += 0.05) {
                const double y[1] = {yy};
                sdx = std::max(sdx, std::abs(h.dx(x, {y, h.dim_y})));
                if (h.dim_y) sdy = std::max(sdy, std::abs(h.dy(x, y, 0)));
            }
        EXPECT_LE(sdx, h.sup_dx + 1e-12) << h.name;
        if (h.dim_y) EXPECT_LE(sdy, h.sup_dy[0] + 1e-12) << h.name;
    }
}

TEST(Bounds, HoldOnAllPairs) {
    VerifyOptions vo;
    vo.grid = {1000, kEdgeQuantile};
    vo.workers = 1;
    for (const auto& mu : four()) {
        const auto fg = field_grid(mu, vo.grid, 1);
        for (const auto& h : test_function_family(mu))
            for (const auto& b : verify_bounds(mu, h, fg, vo)) {
                EXPECT_TRUE(b.pass) << mu.name() << " " << h.name << " " << b.name << " lhs " << b.lhs << " rhs "
                                    << b.rhs;
                EXPECT_EQ(b.grid_nodes, 1000u);
                if (b.vacuous)
                    EXPECT_TRUE(std::isinf(b.margin));
                else
                    EXPECT_NEAR(b.margin, b.rhs + b.slack - b.lhs, 1e-12);
            }
    }
}

TEST(Bounds, ProductOnUnboundedSupportIsVacuous) {
    const auto mu = gaussian_std();
    VerifyOptions vo;
    vo.grid = {500, kEdgeQuantile};
    vo.workers = 1;
    const auto reps = verify_bounds(mu, product_test_function(mu), vo);
    bool saw = false;
    for (const auto& b : reps)
        if (b.vacuous) {
            saw = true;
            EXPECT_TRUE(b.pass);
        }
    EXPECT_TRUE(saw);
}

TEST(Bounds, UniformDerivativeFactor) {
    const auto mu = uniform01();
    const auto fg = field_grid(mu, {4000, kEdgeQuantile}, 1);
    EXPECT_NEAR(fg.sup_S, 2.0, 1e-6);
    EXPECT_NEAR(mu.median_stein_factor(), 8.0, 1e-12);
}

TEST(Bounds, Deterministic) {
    const auto mu = centered_gamma();
    VerifyOptions v1;
    v1.grid = {800, kEdgeQuantile};
    v1.workers = 1;
    auto v4 = v1;
    v4.workers = 4;
    const auto a = verify_bounds(mu, bump_test_function(mu), v1);
    const auto b = verify_bounds(mu, bump_test_function(mu), v4);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].lhs, b[i].lhs);
        EXPECT_EQ(a[i].lhs_at, b[i].lhs_at);
    }
}

TEST(Characterization, ZeroMeanForSmoothF) {
    MonteCarloPlan plan;
    plan.samples = 40000;
    plan.workers = 1;
    for (const auto& mu : {gaussian_std(), centered_gamma(), uniform01()}) {
        const auto e = characterization_test(
            mu, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); }, plan);
        EXPECT_TRUE(e.within(4.0)) << mu.name() << " " << e.mean << " se " << e.std_error;
    }
    // A wrong operator is caught: drop the factor ½.
    const auto mu = gaussian_std();
    const auto e = characterization_test(
        mu, [](double x) { return x; }, [](double) { return 2.0; }, plan);
    EXPECT_FALSE(e.within(4.0));
}

TEST(Characterization, Multidimensional) {
    MonteCarloPlan plan;
    plan.samples = 40000;
    plan.workers = 1;
    const auto mu = uniform01();
    const auto e = multidim_characterization_test(
        mu, sine_test_function(), [](GaussianDraw& d, std::span<double> y) { y[0] = d(); }, plan);
    EXPECT_TRUE(e.within(4.0)) << e.mean << " se " << e.std_error;
}
