#pragma once

// Solution of the Stein equation
//     ½ a(x) ∂x f(x, y) - (x - m) f(x, y) = h(x, y) - E[h(Z, y)],   Z ~ μ,
//
//     f_h(x, y) = (2 / (a p)) ∫_l^x (h(t, y) - E h(Z, y)) p(t) dt
//               = -(2 / (a p)) [ (1 - F(x)) ∫_l^x ∂x h F  +  F(x) ∫_x^u ∂x h (1 - F) ],
//     ∂x f_h    = (4 / (a² p)) [ R(x) ∫_l^x ∂x h F  -  L(x) ∫_x^u ∂x h (1 - F) ],
// with L = ∫_l^x F and R = ∫_x^u (1 - F). The last form avoids dividing a
// difference of small quadratures by a² p near the edges.

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "steinind/error.hpp"
#include "steinind/parallel.hpp"
#include "steinind/target_measure.hpp"

namespace steinind {

using Point = std::span<const double>;

/// h(x, y) with its partial derivatives and declared sup-norms. A declared
/// norm may be +inf (e.g. ∂y (x y) on an unbounded support); the matching
/// bound is then vacuous.
struct TestFunction {
    std::string name;
    std::size_t dim_y = 0;
    std::function<double(double, Point)> h;
    std::function<double(double, Point)> dx;
    std::function<double(double, Point, std::size_t)> dy;
    double sup_dx = 0.0;
    std::vector<double> sup_dy;
    // Box that y is drawn from in checks: y_j in [-y_box, y_box].
    double y_box = 2.0;

    void validate() const {
        if (!h || !dx) throw ConfigError("test function '" + name + "' lacks h or dx");
        if (dim_y > 0 && !dy) throw ConfigError("test function '" + name + "' lacks dy");
        if (sup_dy.size() != dim_y) throw ConfigError("test function '" + name + "' needs one dy norm per coordinate");
        auto ok = [](double v) { return v >= 0.0 && !std::isnan(v); };
        if (!ok(sup_dx)) throw ConfigError("test function '" + name + "' has an invalid dx norm");
        for (double v : sup_dy)
            if (!ok(v)) throw ConfigError("test function '" + name + "' has an invalid dy norm");
    }
};

/// Largest |analytic - central difference| over `points` random (x, y) in the
/// evaluation band, step 1e-5.
inline double derivative_check(const TestFunction& h, const TargetMeasure& mu, std::size_t points,
                               std::uint64_t seed) {
    GaussianDraw draw(chunk_stream(seed, 0));
    const auto [lo, hi] = mu.evaluation_band();
    double worst = 0.0;
    std::vector<double> y(h.dim_y), yp(h.dim_y), ym(h.dim_y);
    for (std::size_t k = 0; k < points; ++k) {
        const double x = lo + (hi - lo) * draw.uniform();
        for (auto& v : y) v = h.y_box * (2.0 * draw.uniform() - 1.0);
        const double step = 1e-5 * std::max(1.0, std::abs(x));
        const double fd = (h.h(x + step, y) - h.h(x - step, y)) / (2 * step);
        worst = std::max(worst, std::abs(fd - h.dx(x, y)));
        for (std::size_t j = 0; j < h.dim_y; ++j) {
            yp = y;
            ym = y;
            yp[j] += 1e-5;
            ym[j] -= 1e-5;
            const double fdy = (h.h(x, yp) - h.h(x, ym)) / 2e-5;
            worst = std::max(worst, std::abs(fdy - h.dy(x, y, j)));
        }
    }
    return worst;
}

/// Measure-only quantities at one point, shared by every test function.
struct PointFields {
    double x;
    double a;
    double p;
    double F;
    double L;  // ∫_l^x F
    double R;  // ∫_x^u (1 - F)

    double stein_factor() const { return 8.0 * L * R / (a * a * p); }
};

struct SolutionCheck {
    double expsol;
    double exp2sol;
    double dx;
    double dx_fd;
    double residual;
};

class SteinSolver {
public:
    SteinSolver(const TargetMeasure& measure, TestFunction h) : mu_(measure), h_(std::move(h)) {
        h_.validate();
    }

    const TargetMeasure& measure() const noexcept { return mu_; }
    const TestFunction& test_function() const noexcept { return h_; }

    /// Throws DomainError outside [F^{-1}(1e-4), F^{-1}(1 - 1e-4)].
    void require_in_band(double x) const {
        const auto [lo, hi] = mu_.evaluation_band();
        if (!(x >= lo && x <= hi)) throw DomainError("too close to the support edge for the Stein solution", x);
    }

    PointFields fields(double x) const {
        require_in_band(x);
        PointFields f{x, mu_.diffusion_coefficient(x), mu_.checked_pdf(x), mu_.cdf(x), 0.0, 0.0};
        f.L = mu_.cdf_integral_left(x);
        f.R = mu_.survival_integral_right(x);
        return f;
    }

    /// E[h(Z, y)].
    double expectation(Point y) const {
        check_dim(y);
        return mu_.integrate_density([&](double t) { return h_.h(t, y); }, mu_.support().lower,
                                     mu_.support().upper);
    }

    /// E[∂y_j h(Z, y)].
    double expectation_dy(Point y, std::size_t j) const {
        check_dim(y);
        return mu_.integrate_density([&](double t) { return h_.dy(t, y, j); }, mu_.support().lower,
                                     mu_.support().upper);
    }

    double solve(double x, Point y) const { return solve(x, y, expectation(y)); }

    double solve(double x, Point y, double eh) const {
        require_in_band(x);
        return solve(x, mu_.diffusion_coefficient(x), mu_.checked_pdf(x), [&](double t) { return h_.h(t, y) - eh; });
    }

    double solve(const PointFields& f, Point y, double eh) const {
        return solve(f.x, f.a, f.p, [&](double t) { return h_.h(t, y) - eh; });
    }

    /// Second representation, through ∂x h and F.
    double solve_alt(double x, Point y) const {
        require_in_band(x);
        const double a = mu_.diffusion_coefficient(x);
        const double p = mu_.checked_pdf(x);
        const double F = mu_.cdf(x);
        const auto [A, B] = derivative_integrals(x, y);
        return -2.0 / (a * p) * ((1.0 - F) * A + F * B);
    }

    double dx_solution(double x, Point y) const { return dx_solution(fields(x), y); }

    double dx_solution(const PointFields& f, Point y) const {
        const auto [A, B] = derivative_integrals(f.x, y);
        return 4.0 * (f.R * A - f.L * B) / (f.a * f.a * f.p);
    }

    /// ∂y_j f_h: the solution for ∂y_j h.
    double dy_solution(double x, Point y, std::size_t j) const {
        return dy_solution(x, y, j, expectation_dy(y, j));
    }

    double dy_solution(double x, Point y, std::size_t j, double edyh) const {
        require_in_band(x);
        return dy_solution(PointFields{x, mu_.diffusion_coefficient(x), mu_.checked_pdf(x), 0.0, 0.0, 0.0}, y, j, edyh);
    }

    double dy_solution(const PointFields& f, Point y, std::size_t j, double edyh) const {
        if (j >= h_.dim_y) throw ConfigError("y coordinate out of range");
        return solve(f.x, f.a, f.p, [&](double t) { return h_.dy(t, y, j) - edyh; });
    }

    /// ½ a ∂x f - (x - m) f - h + E h.
    double residual(double x, Point y) const {
        const double eh = expectation(y);
        const PointFields f = fields(x);
        return 0.5 * f.a * dx_solution(f, y) - (x - mu_.mean()) * solve(f, y, eh) - h_.h(x, y) + eh;
    }

    /// Both representations, the derivative identity against a central
    /// difference of the first (step 1e-5, shrunk near the band edges), and
    /// the residual.
    SolutionCheck cross_check(double x, Point y) const {
        const double eh = expectation(y);
        const PointFields f = fields(x);
        SolutionCheck c{};
        c.expsol = solve(f, y, eh);
        c.exp2sol = solve_alt(x, y);
        c.dx = dx_solution(f, y);
        const auto [lo, hi] = mu_.evaluation_band();
        const double step = std::min({1e-5, 0.5 * (x - lo), 0.5 * (hi - x)});
        if (step > 0.0)
            c.dx_fd = (solve(x + step, y, eh) - solve(x - step, y, eh)) / (2 * step);
        else
            c.dx_fd = std::numeric_limits<double>::quiet_NaN();
        c.residual = 0.5 * f.a * c.dx - (x - mu_.mean()) * c.expsol - h_.h(x, y) + eh;
        return c;
    }

private:
    // (2 / (a p)) ∫_l^x g p for a centered g. Past the median the integral over
    // (l, x) is replaced by minus the one over (x, u): equal because g p
    // integrates to zero, and not a small difference of large quantities there.
    template <class G>
    double solve(double x, double a, double p, const G& centered) const {
        const double integral = x <= mu_.median()
                                    ? mu_.integrate_density(centered, mu_.support().lower, x)
                                    : -mu_.integrate_density(centered, x, mu_.support().upper);
        return 2.0 / (a * p) * integral;
    }

    void check_dim(Point y) const {
        if (y.size() != h_.dim_y) throw ConfigError("y has the wrong dimension for '" + h_.name + "'");
    }

    // (∫_l^x ∂x h F, ∫_x^u ∂x h (1 - F)).
    std::pair<double, double> derivative_integrals(double x, Point y) const {
        check_dim(y);
        auto hx = [&](double t) { return h_.dx(t, y); };
        const double A = mu_.integrate_cdf_weighted(hx, mu_.support().lower, x, false);
        const double B = mu_.integrate_cdf_weighted(hx, x, mu_.support().upper, true);
        return {A, B};
    }

    const TargetMeasure& mu_;
    TestFunction h_;
};

// ---------------------------------------------------------------------------
// The test-function family used by the checks.

inline TestFunction identity_test_function() {
    TestFunction t;
    t.name = "x";
    t.dim_y = 1;
    t.h = [](double x, Point) { return x; };
    t.dx = [](double, Point) { return 1.0; };
    t.dy = [](double, Point, std::size_t) { return 0.0; };
    t.sup_dx = 1.0;
    t.sup_dy = {0.0};
    return t;
}

inline TestFunction sine_test_function() {
    TestFunction t;
    t.name = "sin(x)cos(y1)";
    t.dim_y = 1;
    t.h = [](double x, Point y) { return std::sin(x) * std::cos(y[0]); };
    t.dx = [](double x, Point y) { return std::cos(x) * std::cos(y[0]); };
    t.dy = [](double x, Point y, std::size_t) { return -std::sin(x) * std::sin(y[0]); };
    t.sup_dx = 1.0;
    t.sup_dy = {1.0};
    return t;
}

/// x·y1 with y in [-2, 2]: ‖∂x h‖ = 2, ‖∂y h‖ = sup |x| over the support.
inline TestFunction product_test_function(const TargetMeasure& mu) {
    TestFunction t;
    t.name = "x*y1";
    t.dim_y = 1;
    t.h = [](double x, Point y) { return x * y[0]; };
    t.dx = [](double, Point y) { return y[0]; };
    t.dy = [](double x, Point, std::size_t) { return x; };
    t.sup_dx = 2.0;
    t.sup_dy = {std::max(std::abs(mu.support().lower), std::abs(mu.support().upper))};
    return t;
}

/// exp(-((x - c)/w)²) exp(-y1²/2), centered at the median with w the
/// half inter-quartile range.
inline TestFunction bump_test_function(const TargetMeasure& mu) {
    const double c = mu.median();
    const double w = 0.5 * (mu.quantile(0.75) - mu.quantile(0.25));
    TestFunction t;
    t.name = "bump";
    t.dim_y = 1;
    t.h = [=](double x, Point y) {
        const double u = (x - c) / w;
        return std::exp(-u * u - 0.5 * y[0] * y[0]);
    };
    t.dx = [=](double x, Point y) {
        const double u = (x - c) / w;
        return -2.0 * u / w * std::exp(-u * u - 0.5 * y[0] * y[0]);
    };
    t.dy = [=](double x, Point y, std::size_t) {
        const double u = (x - c) / w;
        return -y[0] * std::exp(-u * u - 0.5 * y[0] * y[0]);
    };
    t.sup_dx = std::sqrt(2.0) * std::exp(-0.5) / w;
    t.sup_dy = {std::exp(-0.5)};
    return t;
}

inline std::vector<TestFunction> test_function_family(const TargetMeasure& mu) {
    return {identity_test_function(), sine_test_function(), product_test_function(mu), bump_test_function(mu)};
}

// ---------------------------------------------------------------------------
// Bound verification.

struct BoundReport {
    std::string name;
    std::string measure;
    std::string test_function;
    double lhs = 0.0;       // max over the grid
    double lhs_at = 0.0;    // where the max is attained
    double constant = 0.0;  // ‖S‖∞ or 2/(a(μ_m)p(μ_m)) or 1
    double norm = 0.0;      // declared sup-norm of the relevant partial of h
    double rhs = 0.0;       // constant * norm
    double slack = 1e-6;
    double margin = 0.0;    // rhs + slack - lhs
    std::size_t grid_nodes = 0;
    double q_min = kEdgeQuantile;
    bool vacuous = false;   // rhs is infinite
    bool pass = false;
};

struct VerifyOptions {
    GridSpec grid{10000, kEdgeQuantile};
    std::size_t y_probes = 5;
    double slack = 1e-6;
    std::size_t workers = 0;
};

/// Measure fields on a quantile grid, computed once and reused for all test
/// functions.
struct FieldGrid {
    std::vector<PointFields> nodes;
    double sup_S = 0.0;
    double sup_S_at = 0.0;
};

inline FieldGrid field_grid(const TargetMeasure& mu, const GridSpec& grid, std::size_t workers = 0) {
    const auto xs = mu.quantile_grid(grid);
    SteinSolver probe(mu, identity_test_function());
    FieldGrid g;
    g.nodes = parallel_map<PointFields>(xs.size(), [&](std::size_t k) { return probe.fields(xs[k]); }, workers);
    for (const auto& f : g.nodes) {
        const double s = f.stein_factor();
        if (!std::isfinite(s)) throw DomainError("S is not finite on the grid", f.x);
        if (s > g.sup_S) {
            g.sup_S = s;
            g.sup_S_at = f.x;
        }
    }
    return g;
}

/// Checks |f_h| <= ‖∂x h‖, |∂y_j f_h| <= 2/(a(μ_m)p(μ_m)) ‖∂y_j h‖ and
/// |∂x f_h| <= ‖S‖ ‖∂x h‖ at every grid node. y cycles through `y_probes`
/// points spread over the y box.
inline std::vector<BoundReport> verify_bounds(const TargetMeasure& mu, const TestFunction& h,
                                              const FieldGrid& grid, const VerifyOptions& opt = {}) {
    const SteinSolver solver(mu, h);
    const std::size_t P = std::max<std::size_t>(1, opt.y_probes);
    std::vector<std::vector<double>> ys(P, std::vector<double>(h.dim_y));
    for (std::size_t k = 0; k < P; ++k)
        for (std::size_t j = 0; j < h.dim_y; ++j) {
            // Spread probes over the box; coordinates are staggered so that
            // different j do not move in lockstep.
            const double u = P == 1 ? 0.5 : static_cast<double>((k + j) % P) / static_cast<double>(P - 1);
            ys[k][j] = h.y_box * (2.0 * u - 1.0);
        }
    std::vector<double> eh(P);
    std::vector<std::vector<double>> edy(P, std::vector<double>(h.dim_y));
    for (std::size_t k = 0; k < P; ++k) {
        eh[k] = solver.expectation(ys[k]);
        for (std::size_t j = 0; j < h.dim_y; ++j) edy[k][j] = solver.expectation_dy(ys[k], j);
    }

    struct NodeValues {
        double f, dx;
        std::vector<double> dy;
    };
    const auto values = parallel_map<NodeValues>(
        grid.nodes.size(),
        [&](std::size_t i) {
            const auto& fld = grid.nodes[i];
            const std::size_t k = i % P;
            NodeValues v{solver.solve(fld, ys[k], eh[k]), solver.dx_solution(fld, ys[k]), {}};
            for (std::size_t j = 0; j < h.dim_y; ++j) v.dy.push_back(solver.dy_solution(fld, ys[k], j, edy[k][j]));
            return v;
        },
        opt.workers);

    auto make = [&](const std::string& name, double constant, double norm) {
        BoundReport r;
        r.name = name;
        r.measure = mu.name();
        r.test_function = h.name;
        r.constant = constant;
        r.norm = norm;
        r.rhs = norm == 0.0 ? 0.0 : constant * norm;
        r.slack = opt.slack;
        r.grid_nodes = grid.nodes.size();
        r.q_min = kEdgeQuantile;
        r.vacuous = std::isinf(r.rhs);
        return r;
    };
    auto finish = [](BoundReport& r) {
        r.margin = r.rhs + r.slack - r.lhs;
        r.pass = std::isfinite(r.lhs) && r.lhs <= r.rhs + r.slack;
    };

    std::vector<BoundReport> out;
    BoundReport sol = make("|f_h| <= |dx h|", 1.0, h.sup_dx);
    BoundReport dxr = make("|dx f_h| <= sup S |dx h|", grid.sup_S, h.sup_dx);
    std::vector<BoundReport> dyr;
    for (std::size_t j = 0; j < h.dim_y; ++j)
        dyr.push_back(make("|dy" + std::to_string(j + 1) + " f_h| <= 2/(a(med)p(med)) |dy" +
                               std::to_string(j + 1) + " h|",
                           mu.median_stein_factor(), h.sup_dy[j]));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = grid.nodes[i].x;
        auto upd = [&](BoundReport& r, double v) {
            if (!(std::abs(v) <= r.lhs)) {
                r.lhs = std::abs(v);
                r.lhs_at = x;
            }
        };
        upd(sol, values[i].f);
        upd(dxr, values[i].dx);
        for (std::size_t j = 0; j < h.dim_y; ++j) upd(dyr[j], values[i].dy[j]);
    }
    finish(sol);
    finish(dxr);
    out.push_back(sol);
    for (auto& r : dyr) {
        finish(r);
        out.push_back(r);
    }
    out.push_back(dxr);
    return out;
}

inline std::vector<BoundReport> verify_bounds(const TargetMeasure& mu, const TestFunction& h,
                                              const VerifyOptions& opt = {}) {
    return verify_bounds(mu, h, field_grid(mu, opt.grid, opt.workers), opt);
}

// ---------------------------------------------------------------------------
// Monte Carlo characterization: E[½ a(Z) f'(Z) - (Z - m) f(Z)] = 0.

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;

    /// |mean| <= k SE (with a floor for exactly-zero summands).
    bool within(double k) const { return std::abs(mean) <= k * std_error + 1e-12; }
};

inline McEstimate characterization_test(const TargetMeasure& mu, const std::function<double(double)>& f,
                                        const std::function<double(double)>& fprime, const MonteCarloPlan& plan) {
    const double m = mu.mean();
    const auto stats = run_monte_carlo(plan, 1, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        const double z = mu.sample(draw);
        s[0].add(0.5 * mu.diffusion_coefficient(z) * fprime(z) - (z - m) * f(z));
    });
    return {stats[0].mean, stats[0].std_error(), plan.samples};
}

/// E[½ a(X) ∂x h(X, Y) - (X - m) h(X, Y)] for X ~ μ independent of Y.
inline McEstimate multidim_characterization_test(
    const TargetMeasure& mu, const TestFunction& h,
    const std::function<void(GaussianDraw&, std::span<double>)>& y_sampler, const MonteCarloPlan& plan) {
    h.validate();
    const double m = mu.mean();
    const auto stats = run_monte_carlo(plan, 1, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        std::vector<double> y(h.dim_y);
        const double x = mu.sample(draw);
        y_sampler(draw, y);
        s[0].add(0.5 * mu.diffusion_coefficient(x) * h.dx(x, y) - (x - m) * h.h(x, y));
    });
    return {stats[0].mean, stats[0].std_error(), plan.samples};
}

}  // namespace steinind
