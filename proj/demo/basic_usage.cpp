// Small tour of the library: a target measure, its Stein solution, a
// Gaussian functional and the Malliavin terms of the bound, then an
// empirical W1.

#include <cstdio>

#include "steinind/malliavin.hpp"
#include "steinind/measures.hpp"
#include "steinind/stein_solver.hpp"
#include "steinind/transport.hpp"

using namespace steinind;

int main() {
    const TargetMeasure mu = centered_gamma();
    std::printf("%s: mean %.6f median %.6f\n", mu.name().c_str(), mu.mean(), mu.median());
    for (double x : {-0.5, 0.0, 2.0})
        std::printf("  a(%.1f) = %.10f  (closed form %.10f)\n", x, mu.diffusion_quadrature(x),
                    mu.diffusion_coefficient(x));

    const auto sup = sup_S(mu, {2000, kEdgeQuantile});
    std::printf("  sup S = %.6f at x = %.4f, median constant %.6f\n", sup.value, sup.argmax, mu.median_stein_factor());

    const SteinSolver solver(mu, sine_test_function());
    const double y[1] = {0.3};
    const auto c = solver.cross_check(0.7, y);
    std::printf("  f_h(0.7, 0.3) = %.8f, residual %.2e\n", c.expsol, c.residual);

    // X = Z1^2 - 1 has exactly the centered Gamma law; Y = Z2 is independent.
    Matrix K = Matrix::Zero(2, 2);
    K(0, 0) = 1.0;
    const auto X = SmoothFunctional::from_chaos("X", ChaosVariable::second_chaos(K));
    MonteCarloPlan plan;
    plan.samples = 20000;
    const auto b = theorem_bound(mu, sup.value, X, {SmoothFunctional::coordinate(2, 1)}, plan);
    std::printf("  bound for (Z1^2 - 1, Z2): %.3e\n", b.rhs);

    // A correlated Gamma pair from the second chaos.
    const auto t = gamma_terms(200, 14, plan, OutsidePolicy::extend);
    std::printf("gamma pair N=200 m=14: discrepancy %.4f +/- %.4f, cross %.4f +/- %.4f\n", t.discrepancy.estimate,
                t.discrepancy.std_error, t.cross.estimate, t.cross.std_error);

    Eigen::MatrixXd a(3, 2), bb(3, 2);
    a << 0, 0, 1, 0, 0, 1;
    bb << 0.1, 0, 1, 0.2, 0, 1.3;
    std::printf("W1 of two 3-point clouds: %.6f\n", w1_exact(SampleCloud(a), SampleCloud(bb)));
    return 0;
}
