#include <gtest/gtest.h>

#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/lognormal.hpp>
#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

#include "steinind/measures.hpp"

using namespace steinind;

TEST(SupportInterval, RejectsEmpty) {
    EXPECT_THROW(SupportInterval(1.0, 0.0), ConfigError);
    EXPECT_THROW(SupportInterval(0.0, 0.0), ConfigError);
    SupportInterval s(-kInf, 2.0);
    EXPECT_TRUE(s.interior(1.9));
    EXPECT_FALSE(s.interior(2.0));
}

TEST(NormalizeCheck, Examples) {
    const auto u = uniform01();
    EXPECT_NEAR(normalize_check(u.density(), u.support()), 1.0, 1e-12);
    const auto g = gaussian_std();
    EXPECT_NEAR(normalize_check(g.density(), g.support()), 1.0, 1e-9);
    DensitySpec doubled = g.density();
    const auto p = doubled.pdf;
    doubled.pdf = [p](double x) { return 2.0 * p(x); };
    EXPECT_NEAR(normalize_check(doubled, g.support()), 2.0, 1e-9);
    DensitySpec none;
    EXPECT_THROW(normalize_check(none, g.support()), ConfigError);
}

TEST(TargetMeasure, Means) {
    EXPECT_DOUBLE_EQ(uniform01().mean(), 0.5);
    EXPECT_NEAR(centered_gamma().mean(), 0.0, 1e-12);
    EXPECT_NEAR(lognormal01().mean(), std::exp(0.5), 1e-10);
    EXPECT_NEAR(beta(2.0, 3.0).mean(), 0.4, 1e-10);
}

TEST(TargetMeasure, CdfAgainstBoost) {
    const boost::math::normal_distribution<> n01;
    const boost::math::gamma_distribution<> chi1(0.5, 2.0);
    const boost::math::lognormal_distribution<> ln;
    const auto g = gaussian_std();
    const auto c = centered_gamma();
    const auto l = lognormal01();
    for (double q : {0.001, 0.1, 0.37, 0.5, 0.8, 0.999}) {
        const double xg = boost::math::quantile(n01, q);
        EXPECT_NEAR(g.cdf(xg), q, 1e-12);
        EXPECT_NEAR(g.quantile(q), xg, 1e-10);
        const double xc = boost::math::quantile(chi1, q) - 1.0;
        EXPECT_NEAR(c.cdf(xc), q, 1e-12);
        EXPECT_NEAR(c.quantile(q), xc, 1e-9);
        const double xl = boost::math::quantile(ln, q);
        EXPECT_NEAR(l.cdf(xl), q, 1e-12);
        EXPECT_NEAR(l.pdf(xl), boost::math::pdf(ln, xl), 1e-12);
    }
}

TEST(TargetMeasure, QuadratureCdfAgreesWithClosedForm) {
    for (const auto& mu : {gaussian_std(), centered_gamma(), lognormal01(), beta(2.0, 3.0)})
        for (double q : {0.01, 0.3, 0.5, 0.9})
            EXPECT_NEAR(mu.cdf_quadrature(mu.quantile(q)), q, 1e-9) << mu.name();
}

TEST(TargetMeasure, CdfMonotoneWithLimits) {
    const auto mu = centered_gamma();
    double prev = 0.0;
    for (double x = -0.999; x < 30.0; x += 0.25) {
        const double f = mu.cdf(x);
        EXPECT_GE(f, prev);
        prev = f;
    }
    EXPECT_NEAR(mu.cdf(-1.0 + 1e-14), 0.0, 1e-6);
    EXPECT_NEAR(mu.cdf(60.0), 1.0, 1e-12);
}

TEST(TargetMeasure, Medians) {
    for (const auto& mu : {gaussian_std(), centered_gamma(), uniform01(), lognormal01(), beta(2.0, 3.0)})
        EXPECT_NEAR(mu.cdf(mu.median()), 0.5, 1e-9) << mu.name();
    EXPECT_NEAR(lognormal01().median(), 1.0, 1e-10);
    EXPECT_NEAR(uniform01().median(), 0.5, 1e-14);
}

TEST(Diffusion, ClosedForms) {
    // a(x) = x(1-x), 2 and 4(x+1) on 201-node quantile grids.
    for (const auto& mu : {uniform01(), gaussian_std(), centered_gamma()}) {
        double worst = 0.0;
        for (double x : mu.quantile_grid({201, 1e-3}))
            worst = std::max(worst, std::abs(mu.diffusion_quadrature(x) - mu.diffusion_coefficient(x)));
        EXPECT_LT(worst, 1e-8) << mu.name();
    }
    EXPECT_DOUBLE_EQ(uniform01().diffusion_coefficient(0.5), 0.25);
}

TEST(Diffusion, TwoFormsAgree) {
    for (const auto& mu : {gaussian_std(), centered_gamma(), lognormal01(), beta(2.0, 3.0), beta(0.5, 0.5)})
        for (double x : mu.quantile_grid({41, 1e-3})) {
            const auto f = mu.diffusion_forms(x);
            EXPECT_NEAR(f.left, f.right, 1e-8 * std::abs(f.right)) << mu.name() << " x=" << x;
        }
}

TEST(Diffusion, PositiveInside) {
    for (const auto& mu : {lognormal01(), beta(0.5, 2.0)})
        for (double x : mu.quantile_grid({101, 1e-4})) EXPECT_GT(mu.diffusion_coefficient(x), 0.0);
}

TEST(Diffusion, OutsideSupportThrows) {
    EXPECT_THROW(uniform01().diffusion_coefficient(1.5), DomainError);
    EXPECT_THROW(centered_gamma().diffusion_coefficient(-2.0), DomainError);
}

TEST(Fubini, Identity) {
    for (const auto& mu : {gaussian_std(), centered_gamma(), beta(2.0, 3.0)})
        for (double x : mu.quantile_grid({21, 1e-3})) EXPECT_NEAR(mu.fubini_residual(x), 0.0, 1e-10);
}

TEST(SteinFactor, MedianConstants) {
    EXPECT_NEAR(uniform01().median_stein_factor(), 8.0, 1e-12);
    EXPECT_NEAR(gaussian_std().median_stein_factor(), std::sqrt(2.0 * std::numbers::pi), 1e-10);
    // 2/(a(μ_m) p(μ_m)) with a(x) = 4(x+1) for the centered Gamma law.
    const auto c = centered_gamma();
    EXPECT_NEAR(c.median_stein_factor(), 2.0 / (4.0 * (c.median() + 1.0) * c.pdf(c.median())), 1e-12);
}

TEST(SteinFactor, SupStableUnderRefinement) {
    for (const auto& mu : {gaussian_std(), centered_gamma(), uniform01(), lognormal01()}) {
        const auto s = sup_S_stability(mu, {2000, kEdgeQuantile}, 1);
        EXPECT_TRUE(s.stable) << mu.name() << " " << s.relative_change;
        EXPECT_TRUE(std::isfinite(s.fine.value));
        EXPECT_GE(s.fine.value, s.coarse.value - 1e-12);
    }
}

TEST(SteinFactor, UniformSupIsTwo) {
    EXPECT_NEAR(sup_S(uniform01(), {2001, 1e-4}, 1).value, 2.0, 1e-6);
}

TEST(SteinFactor, GridIsQuantileSpaced) {
    const auto mu = gaussian_std();
    const auto xs = mu.quantile_grid({201, 1e-3});
    ASSERT_EQ(xs.size(), 201u);
    EXPECT_NEAR(xs[100], 0.0, 1e-12);
    EXPECT_TRUE(std::is_sorted(xs.begin(), xs.end()));
}

TEST(EdgeConditions, Gaussian) {
    const auto r = edge_condition_report(gaussian_std());
    EXPECT_TRUE(r.lower.infinite);
    EXPECT_TRUE(r.upper.infinite);
    EXPECT_EQ(r.lower.nonvanishing, Verdict::pass);
    EXPECT_EQ(r.upper.nonvanishing, Verdict::pass);
    EXPECT_NEAR(r.upper.a_min, 2.0, 1e-6);
}

TEST(EdgeConditions, UniformFiniteEnds) {
    const auto r = edge_condition_report(uniform01());
    EXPECT_FALSE(r.lower.infinite);
    EXPECT_EQ(r.lower.slope_sign, Verdict::pass);
    EXPECT_EQ(r.upper.slope_sign, Verdict::pass);
    EXPECT_EQ(r.lower.nonvanishing, Verdict::vacuous);
    EXPECT_FALSE(r.note.empty());
}

TEST(EdgeConditions, Deterministic) {
    const auto a = edge_condition_report(lognormal01());
    const auto b = edge_condition_report(lognormal01());
    EXPECT_EQ(a.upper.a_values, b.upper.a_values);
    EXPECT_EQ(a.upper.limits, b.upper.limits);
}

TEST(Registry, NamesAndErrors) {
    EXPECT_EQ(measure_by_name("beta:2,3").name(), beta(2.0, 3.0).name());
    EXPECT_THROW(measure_by_name("cauchy"), ConfigError);
    EXPECT_THROW(measure_by_name("beta:-1,2"), ConfigError);
}

TEST(Registry, UserDensityFile) {
    // Exponential(1): m = 1 and a(x) = 2x.
    const auto kv = KeyValueFile::from_string("name = expo\nlower = 0\nupper = inf\npdf = exp(-x)\n");
    const auto mu = measure_from_config(kv);
    EXPECT_NEAR(mu.mean(), 1.0, 1e-9);
    EXPECT_NEAR(mu.median(), std::log(2.0), 1e-8);
    for (double x : {0.1, 0.7, 2.0, 5.0}) EXPECT_NEAR(mu.diffusion_coefficient(x), 2.0 * x, 1e-8 * x);
}

TEST(Registry, UserDensityBadMass) {
    const auto kv = KeyValueFile::from_string("lower = 0\nupper = 1\npdf = 2\n");
    EXPECT_THROW(measure_from_config(kv), ConfigError);
    const auto typo = KeyValueFile::from_string("lower = 0\nupper = 1\npdf = 1\nmena = 0.5\n");
    EXPECT_THROW(measure_from_config(typo), ConfigError);
}

TEST(Sampling, MatchesMean) {
    for (const auto& mu : {centered_gamma(), uniform01(), lognormal01()}) {
        MonteCarloPlan plan;
        plan.samples = 50000;
        plan.workers = 1;
        const auto s = run_monte_carlo(plan, 1, [&](GaussianDraw& d, std::vector<RunningStats>& st) {
            st[0].add(mu.sample(d));
        });
        EXPECT_LT(std::abs(s[0].mean - mu.mean()), 4.0 * s[0].std_error()) << mu.name();
    }
}
