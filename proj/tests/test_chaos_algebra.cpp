#include <gtest/gtest.h>

#include <cmath>

#include "steinind/chaos.hpp"

using namespace steinind;

namespace {

Vector gauss(GaussianDraw& d, Eigen::Index n) {
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = d();
    return v;
}

Matrix gauss(GaussianDraw& d, Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d();
    return m;
}

// Dense pair kernels built the slow way, as an independent oracle.
std::pair<Matrix, Matrix> dense_pair(long N, long m) {
    const Eigen::Index M = 2 * N - m;
    std::vector<Eigen::Index> g(N);
    for (long i = 0; i < N; ++i) g[i] = i < m ? i : N + (i - m);
    Matrix A = Matrix::Zero(M, M), B = Matrix::Zero(M, M);
    for (long i = 0; i < N; ++i)
        for (long j = 0; j < N; ++j)
            if (i != j) {
                A(i, j) = 1.0 / static_cast<double>(N - 1);
                B(g[i], g[j]) = 1.0 / static_cast<double>(N - 1);
            }
    return {A, B};
}

}  // namespace

TEST(Kernel, SymmetrizesAndValidates) {
    Matrix k(2, 2);
    k << 1, 2, 0, 3;
    const SecondChaosKernel s(k);
    EXPECT_DOUBLE_EQ(s.matrix()(0, 1), 1.0);
    EXPECT_DOUBLE_EQ(s.matrix()(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(s.trace(), 4.0);
    Matrix bad(2, 3);
    bad.setZero();
    EXPECT_THROW(SecondChaosKernel{bad}, ConfigError);
    Matrix nanm = Matrix::Zero(2, 2);
    nanm(0, 0) = std::nan("");
    EXPECT_THROW(SecondChaosKernel{nanm}, ConfigError);
}

TEST(Chaos, EvalDerivativeInverse) {
    GaussianDraw d(chunk_stream(1, 0));
    const Eigen::Index M = 5;
    const Vector c = gauss(d, M);
    const SecondChaosKernel K(gauss(d, M, M));
    const ChaosVariable x(0.3, FirstChaosVector(c), K);
    const Vector xi = gauss(d, M);
    EXPECT_NEAR(x.eval(xi), 0.3 + c.dot(xi) + xi.dot(K.matrix() * xi) - K.trace(), 1e-12);
    EXPECT_LT((x.malliavin_D(xi) - (c + 2.0 * K.matrix() * xi)).norm(), 1e-12);
    const auto inv = x.inverse_L();
    EXPECT_EQ(inv.constant(), 0.0);
    EXPECT_LT((inv.first() - c).norm(), 1e-15);
    EXPECT_LT((inv.kernel() - 0.5 * K.matrix()).norm(), 1e-15);
    EXPECT_DOUBLE_EQ(x.variance(), c.squaredNorm() + 2.0 * K.squared_norm());
    EXPECT_THROW(x.eval(Vector::Zero(3)), ConfigError);
}

TEST(Chaos, UnitFirstChaos) {
    const auto v = FirstChaosVector::unit(4, 2);
    EXPECT_EQ(v.c(2), 1.0);
    EXPECT_EQ(v.c.sum(), 1.0);
    EXPECT_THROW(FirstChaosVector::unit(4, 4), ConfigError);
}

// δ(Bξ) = ξᵀBξ - tr B for any square B, the linear-field duality.
TEST(Identities, DivergenceOfLinearField) {
    GaussianDraw d(chunk_stream(2, 0));
    for (int t = 0; t < 1000; ++t) {
        const Eigen::Index M = 1 + t % 7;
        const Matrix B = gauss(d, M, M);
        const Vector xi = gauss(d, M);
        EXPECT_NEAR(divergence_linear(B, xi), xi.dot(B * xi) - B.trace(), 1e-12 * (1.0 + std::abs(xi.dot(B * xi))));
    }
}

// E[F δ(u)] = E[<DF, u>] on a second-chaos F and a linear field u = Bξ.
TEST(Identities, DualityByMonteCarlo) {
    GaussianDraw d(chunk_stream(3, 0));
    const Eigen::Index M = 3;
    const Matrix B = gauss(d, M, M);
    const ChaosVariable F = ChaosVariable::second_chaos(gauss(d, M, M));
    const GaussianSampler s(M, 11);
    const Matrix xi = s.sample(100000, 1);
    RunningStats diff;
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
        const Vector z = xi.row(i).transpose();
        diff.add(F.eval(z) * divergence_linear(B, z) - F.malliavin_D(z).dot(B * z));
    }
    EXPECT_LT(std::abs(diff.mean), 4.0 * diff.std_error());
}

TEST(Identities, Isometry) {
    GaussianDraw d(chunk_stream(4, 0));
    const SecondChaosKernel a(gauss(d, 4, 4)), b(gauss(d, 4, 4));
    EXPECT_NEAR(isometry_inner(a, b), 2.0 * (a.matrix().cwiseProduct(b.matrix())).sum(), 1e-12);
    const auto U = ChaosVariable::second_chaos(a.matrix()), V = ChaosVariable::second_chaos(b.matrix());
    const GaussianSampler s(4, 12);
    const Matrix xi = s.sample(200000, 1);
    RunningStats uv;
    for (Eigen::Index i = 0; i < xi.rows(); ++i) uv.add(U.eval(xi.row(i).transpose()) * V.eval(xi.row(i).transpose()));
    EXPECT_LT(std::abs(uv.mean - isometry_inner(a, b)), 4.0 * uv.std_error());
}

TEST(Identities, ProductFormulaPointwise) {
    GaussianDraw d(chunk_stream(5, 0));
    for (int t = 0; t < 1000; ++t) {
        const Eigen::Index M = 1 + t % 6;
        const SecondChaosKernel a(gauss(d, M, M)), b(gauss(d, M, M));
        const auto s = dudv_identity(a, b, gauss(d, M));
        EXPECT_NEAR(s.lhs, s.rhs, 1e-12 * (1.0 + std::abs(s.lhs)));
    }
}

TEST(Contraction, SymmetrizedKernel) {
    const auto k = build_gamma_kernels(6, 3);
    const auto c = contract1(k.a, k.b);
    EXPECT_LT((c.raw - k.a.matrix() * k.b.matrix()).norm(), 1e-15);
    EXPECT_LT((c.kernel - c.kernel.transpose()).norm(), 1e-15);
    const auto u = contract1(k.a, k.b, ContractionMode::unsymmetrized);
    EXPECT_GT((u.kernel - u.kernel.transpose()).norm(), 0.1);
}

TEST(GammaPair, KernelsMatchDenseOracle) {
    for (long N : {2L, 5L, 9L})
        for (long m = 1; m <= N; ++m) {
            const auto k = build_gamma_kernels(N, m);
            const auto [A, B] = dense_pair(N, m);
            EXPECT_EQ(k.M, 2 * N - m);
            EXPECT_LT((k.a.matrix() - A).norm(), 1e-15);
            EXPECT_LT((k.b.matrix() - B).norm(), 1e-15);
        }
    EXPECT_THROW(build_gamma_kernels(1, 1), ConfigError);
    EXPECT_THROW(build_gamma_kernels(5, 0), ConfigError);
    EXPECT_THROW(build_gamma_kernels(5, 6), ConfigError);
}

TEST(GammaPair, CrossMomentClosedForm) {
    for (long N = 2; N <= 40; ++N)
        for (long m = 1; m <= N; ++m) {
            const auto k = build_gamma_kernels(N, m);
            EXPECT_NEAR(exact_cross_moment(N, m), 2.0 * (k.a.matrix() * k.b.matrix()).trace(), 1e-12);
        }
    EXPECT_NEAR(exact_cross_moment(10, 5), 40.0 / 81.0, 1e-15);
    EXPECT_NEAR(exact_cross_moment(3, 3), 3.0, 1e-15);
    EXPECT_EQ(exact_cross_moment(7, 1), 0.0);
}

TEST(GammaPair, StructuredMomentsMatchDense) {
    for (long N : {3L, 10L, 20L, 37L})
        for (long m : {1L, 2L, 3L, N}) {
            if (m > N) continue;
            const auto k = build_gamma_kernels(N, m);
            const Matrix AB = k.a.matrix() * k.b.matrix();
            const Matrix S = 0.5 * (AB + AB.transpose());
            const auto g = gamma_pair_moments(N, m);
            const double tol = 1e-12 * (1.0 + AB.squaredNorm());
            EXPECT_NEAR(g.trace_ab, AB.trace(), 1e-12);
            EXPECT_NEAR(g.raw_norm, AB.squaredNorm(), tol);
            EXPECT_NEAR(g.trace_abab, (AB * AB).trace(), tol);
            EXPECT_NEAR(g.sym_norm, S.squaredNorm(), tol);
            EXPECT_NEAR(g.dudv_second, quadratic_form_second_moment(S), 1e-10 * g.dudv_second);
            EXPECT_NEAR(brute_contraction_norm(N, m), AB.squaredNorm(), tol);
        }
}

TEST(GammaPair, NEqualsMEquals3) {
    const auto g = gamma_pair_moments(3, 3);
    EXPECT_NEAR(g.cross_moment, 3.0, 1e-12);
    EXPECT_NEAR(brute_contraction_norm(3, 3), 9.0 / 8.0, 1e-12);
    EXPECT_NEAR(exact_contraction_norm_closed_form(3, 3), 4.5, 1e-12);
    EXPECT_NEAR(exact_contraction_norm_closed_form(3, 3) / brute_contraction_norm(3, 3), 4.0, 1e-12);
    EXPECT_NEAR(g.dudu_second, 72.0, 1e-10);
}

TEST(GammaPair, SingleSharedDirection) {
    // One shared direction still leaves a nonzero contraction: |AB|² = 1/(N-1)².
    for (long N : {4L, 9L})
        EXPECT_NEAR(brute_contraction_norm(N, 1), 1.0 / std::pow(static_cast<double>(N - 1), 2), 1e-14);
}

TEST(GammaPair, SecondMomentOfDudvByMonteCarlo) {
    for (auto [N, m] : {std::pair{6L, 4L}, std::pair{3L, 3L}, std::pair{10L, 3L}}) {
        const GammaPairSampler sampler(N, m);
        MonteCarloPlan plan;
        plan.samples = 100000;
        plan.workers = 1;
        plan.seed = 21;
        const auto st = run_monte_carlo(plan, 3, [&](GaussianDraw& d, std::vector<RunningStats>& s) {
            const auto p = sampler(d);
            s[0].add(p.dudv * p.dudv);
            s[1].add(p.dudu * p.dudu);
            s[2].add(p.U * p.V);
        });
        const auto g = gamma_pair_moments(N, m);
        EXPECT_LT(std::abs(st[0].mean - g.dudv_second), 3.5 * st[0].std_error()) << N << "," << m;
        EXPECT_LT(std::abs(st[1].mean - g.dudu_second), 3.5 * st[1].std_error()) << N << "," << m;
        EXPECT_LT(std::abs(st[2].mean - g.cross_moment), 3.5 * st[2].std_error()) << N << "," << m;
        // The unsymmetrized kernel predicts a different value.
        if (m < N) EXPECT_GT(std::abs(second_moment_dudv(N, m, ContractionMode::unsymmetrized) - g.dudv_second), 1e-6);
    }
}

TEST(GammaPair, BlockSamplerMatchesCoordinates) {
    const GammaPairSampler sampler(7, 3);
    const auto k = build_gamma_kernels(7, 3);
    GaussianDraw d(chunk_stream(9, 0));
    for (int t = 0; t < 50; ++t) {
        const Vector xi = gauss(d, k.M);
        const auto p = sampler.from_coordinates(xi);
        const auto U = ChaosVariable::second_chaos(k.a.matrix()), V = ChaosVariable::second_chaos(k.b.matrix());
        EXPECT_NEAR(p.U, U.eval(xi), 1e-12);
        EXPECT_NEAR(p.V, V.eval(xi), 1e-12);
        EXPECT_NEAR(p.dudv, U.malliavin_D(xi).dot(V.malliavin_D(xi)), 1e-12);
        EXPECT_NEAR(p.dudu, U.malliavin_D(xi).squaredNorm(), 1e-12);
    }
}

TEST(Sampler, DeterministicAcrossWorkers) {
    const GaussianSampler s(5, 77, 128);
    const Matrix a = s.sample(1000, 1), b = s.sample(1000, 8);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(a.rows(), 1000);
    EXPECT_EQ(a.cols(), 5);
    const GaussianSampler t(5, 78, 128);
    EXPECT_FALSE(a == t.sample(1000, 1));
}

TEST(Export, KernelCsv) {
    Matrix k(2, 2);
    k << 1, 0.5, 0.5, 2;
    const auto text = kernel_csv(k);
    EXPECT_NE(text.find("0.5"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}
