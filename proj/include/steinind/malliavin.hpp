#pragma once

// Monte Carlo estimates of the two terms bounding the distance between the
// law of (X, Y) and μ ⊗ P_Y:
//     ‖S‖∞ E|½a(X) - ⟨D(-L)⁻¹X, DX⟩|  +  2/(a(m)p(m)) Σ_j E|⟨D(-L)⁻¹X, DY_j⟩|
// and the L² variant with root mean squares in place of absolute means.
//
// Generic functionals go through the Mehler representation
//     D(-L)⁻¹X = ∫₀¹ E'[∇g(αξ + √(1-α²)ξ')] dα
// (α = e^{-t}). Chaos variables use their exact coefficients instead.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "steinind/chaos.hpp"
#include "steinind/config.hpp"
#include "steinind/error.hpp"
#include "steinind/parallel.hpp"
#include "steinind/quadrature.hpp"
#include "steinind/random.hpp"
#include "steinind/target_measure.hpp"

namespace steinind {

namespace detail {

inline std::string vector_text(const Vector& v) {
    std::ostringstream os;
    os.precision(17);
    os << '(';
    for (Eigen::Index i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v(i);
    os << ')';
    return os.str();
}

}  // namespace detail

/// g: R^M -> R with its gradient, which in coordinates is the Malliavin
/// derivative.
class SmoothFunctional {
public:
    using Value = std::function<double(const Vector&)>;
    using Gradient = std::function<Vector(const Vector&)>;

    SmoothFunctional(std::string name, Eigen::Index dim, Value value, Gradient gradient)
        : name_(std::move(name)), dim_(dim), value_(std::move(value)), gradient_(std::move(gradient)) {
        if (dim_ < 1) throw ConfigError("functional '" + name_ + "' needs a positive dimension");
        if (!value_ || !gradient_) throw ConfigError("functional '" + name_ + "' is missing a callable");
    }

    static SmoothFunctional from_chaos(std::string name, ChaosVariable x) {
        auto shared = std::make_shared<const ChaosVariable>(std::move(x));
        SmoothFunctional f(
            std::move(name), shared->dim(), [shared](const Vector& xi) { return shared->eval(xi); },
            [shared](const Vector& xi) { return shared->malliavin_D(xi); });
        f.chaos_ = shared;
        return f;
    }

    /// W(e_n) in dimension M.
    static SmoothFunctional coordinate(Eigen::Index M, Eigen::Index n) {
        if (n < 0 || n >= M) throw ConfigError("coordinate index out of range");
        return from_chaos("W(e" + std::to_string(n + 1) + ")",
                          ChaosVariable::first_chaos(FirstChaosVector::unit(M, n).c));
    }

    const std::string& name() const noexcept { return name_; }
    Eigen::Index dim() const noexcept { return dim_; }
    const ChaosVariable* chaos() const noexcept { return chaos_.get(); }

    double operator()(const Vector& xi) const {
        detail::require_dim(xi.size(), dim_, "functional argument");
        const double v = value_(xi);
        if (!std::isfinite(v))
            throw DomainError("functional '" + name_ + "' is not finite at " + detail::vector_text(xi), xi(0));
        return v;
    }

    Vector grad(const Vector& xi) const {
        detail::require_dim(xi.size(), dim_, "functional argument");
        Vector g = gradient_(xi);
        detail::require_dim(g.size(), dim_, "functional gradient");
        if (!g.allFinite())
            throw DomainError("gradient of '" + name_ + "' is not finite at " + detail::vector_text(xi), xi(0));
        return g;
    }

private:
    std::string name_;
    Eigen::Index dim_;
    Value value_;
    Gradient gradient_;
    std::shared_ptr<const ChaosVariable> chaos_;
};

/// Central differences against the declared gradient at Gaussian points;
/// throws InvariantError on a mismatch and returns the worst error.
inline double gradient_check(const SmoothFunctional& f, std::uint64_t seed = 7, int points = 50,
                             double tol = 1e-5) {
    GaussianDraw draw(chunk_stream(seed, 0));
    double worst = 0.0;
    for (int k = 0; k < points; ++k) {
        Vector xi(f.dim());
        for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = draw();
        const Vector g = f.grad(xi);
        for (Eigen::Index i = 0; i < xi.size(); ++i) {
            const double h = 1e-5 * std::max(1.0, std::abs(xi(i)));
            Vector up = xi, dn = xi;
            up(i) += h;
            dn(i) -= h;
            const double fd = (f(up) - f(dn)) / (2.0 * h);
            const double err = std::abs(fd - g(i)) / std::max(1.0, std::abs(g(i)));
            worst = std::max(worst, err);
            if (err > tol)
                throw InvariantError("gradient of '" + f.name() + "' disagrees with finite differences in slot " +
                                     std::to_string(i) + " at " + detail::vector_text(xi));
        }
    }
    return worst;
}

/// Outer Gauss–Legendre rule in α over (0, 1) and R inner Gaussian copies.
/// Each copy ξ' is used together with -ξ', which leaves E' unchanged and
/// makes the inner average exact for gradients affine in ξ'.
class MehlerQuadrature {
public:
    explicit MehlerQuadrature(std::size_t nodes = 32, std::size_t inner = 64) : nodes_(nodes), inner_(inner) {
        if (nodes < 4) throw ConfigError("Mehler quadrature needs at least 4 outer nodes");
        if (inner < 1) throw ConfigError("Mehler quadrature needs at least one inner copy");
        GaussLegendreRule(nodes).mapped(0.0, 1.0, alpha_, weight_);
    }

    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t inner() const noexcept { return inner_; }
    const std::vector<double>& alphas() const noexcept { return alpha_; }
    const std::vector<double>& weights() const noexcept { return weight_; }

    std::string describe() const {
        return "mehler(nodes=" + std::to_string(nodes_) + ",inner=" + std::to_string(inner_) + ")";
    }

private:
    std::size_t nodes_;
    std::size_t inner_;
    std::vector<double> alpha_;
    std::vector<double> weight_;
};

/// E'[∇g(αξ + √(1-α²)ξ')] over `inner` antithetic pairs drawn from `draw`.
inline Vector ou_grad(const SmoothFunctional& f, const Vector& xi, double alpha, GaussianDraw& draw,
                      std::size_t inner) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("Mehler parameter must lie in [0, 1]");
    detail::require_dim(xi.size(), f.dim(), "ou_grad");
    if (alpha == 1.0) return f.grad(xi);
    const double beta = std::sqrt((1.0 - alpha) * (1.0 + alpha));
    Vector acc = Vector::Zero(f.dim());
    Vector prime(f.dim());
    for (std::size_t r = 0; r < inner; ++r) {
        for (Eigen::Index i = 0; i < prime.size(); ++i) prime(i) = draw();
        acc += f.grad(alpha * xi + beta * prime);
        acc += f.grad(alpha * xi - beta * prime);
    }
    return acc / (2.0 * static_cast<double>(inner));
}

enum class InversePath { exact_if_chaos, mehler };

/// D(-L)⁻¹X at ξ.
inline Vector d_inverse_L(const SmoothFunctional& f, const Vector& xi, const MehlerQuadrature& q,
                          GaussianDraw& draw, InversePath path = InversePath::exact_if_chaos) {
    if (path == InversePath::exact_if_chaos && f.chaos()) {
        detail::require_dim(xi.size(), f.dim(), "d_inverse_L");
        return f.chaos()->inverse_L().malliavin_D(xi);
    }
    Vector acc = Vector::Zero(f.dim());
    for (std::size_t k = 0; k < q.nodes(); ++k) acc += q.weights()[k] * ou_grad(f, xi, q.alphas()[k], draw, q.inner());
    return acc;
}

/// Mean absolute value and root mean square of a Monte Carlo term.
struct EstimatorResult {
    double estimate = 0.0;   // E|T|
    double std_error = 0.0;
    double rms = 0.0;        // E[T²]^{1/2}
    double rms_std_error = 0.0;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    std::size_t outside = 0;  // samples of X outside (l, u)
    std::string config;

    bool exact() const noexcept { return n == 0; }

    static EstimatorResult exact_value(double v, std::string config) {
        EstimatorResult r;
        r.estimate = std::abs(v);
        r.rms = std::abs(v);
        r.config = std::move(config);
        return r;
    }
};

namespace detail {

/// Fill from |T| and T² statistics; the rms error is first-order propagated.
inline EstimatorResult finish(const RunningStats& abs_stats, const RunningStats& sq_stats, const MonteCarloPlan& plan,
                              std::string config) {
    EstimatorResult r;
    r.estimate = abs_stats.mean;
    r.std_error = abs_stats.std_error();
    r.rms = std::sqrt(std::max(0.0, sq_stats.mean));
    r.rms_std_error = r.rms > 0.0 ? sq_stats.std_error() / (2.0 * r.rms) : 0.0;
    r.n = static_cast<std::size_t>(abs_stats.count);
    r.seed = plan.seed;
    r.config = std::move(config);
    return r;
}

inline std::string plan_text(const MonteCarloPlan& plan) {
    return "n=" + std::to_string(plan.samples) + ",seed=" + std::to_string(plan.seed) +
           ",chunk=" + std::to_string(plan.chunk_size);
}

}  // namespace detail

/// What to do with samples of X that fall outside (l, u).
enum class OutsidePolicy {
    abort,   // skip them; throw if more than 0.1% of samples
    extend,  // evaluate a(x) by its closed form anyway; requires one
};

inline constexpr double kOutsideLimit = 1e-3;

inline void check_outside(std::size_t outside, std::size_t n, const std::string& what) {
    if (static_cast<double>(outside) > kOutsideLimit * static_cast<double>(n))
        throw DomainError(what + ": " + std::to_string(outside) + " of " + std::to_string(n) +
                              " samples fall outside the support",
                          static_cast<double>(outside) / static_cast<double>(n));
}

/// E|½a(X) - ⟨D(-L)⁻¹X, DX⟩| with ξ ~ N(0, I_M).
inline EstimatorResult discrepancy_term(const TargetMeasure& mu, const SmoothFunctional& x, const MonteCarloPlan& plan,
                                        const MehlerQuadrature& q = MehlerQuadrature(),
                                        OutsidePolicy policy = OutsidePolicy::abort,
                                        InversePath path = InversePath::exact_if_chaos) {
    if (policy == OutsidePolicy::extend && !mu.has_closed_form_diffusion())
        throw ConfigError("extending a(x) outside the support needs a closed-form diffusion coefficient");
    const auto M = x.dim();
    auto stats = run_monte_carlo(plan, 3, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        Vector xi(M);
        for (Eigen::Index i = 0; i < M; ++i) xi(i) = draw();
        const double v = x(xi);
        const bool inside = mu.support().interior(v);
        s[2].add(inside ? 0.0 : 1.0);
        if (!inside && policy == OutsidePolicy::abort) return;
        const double a = inside ? mu.diffusion_coefficient(v) : mu.density().diffusion(v);
        const double t = 0.5 * a - d_inverse_L(x, xi, q, draw, path).dot(x.grad(xi));
        s[0].add(std::abs(t));
        s[1].add(t * t);
    });
    const auto outside = static_cast<std::size_t>(std::llround(stats[2].mean * stats[2].count));
    if (policy == OutsidePolicy::abort) check_outside(outside, plan.samples, "discrepancy term for " + x.name());
    auto r = detail::finish(stats[0], stats[1], plan,
                            "discrepancy(" + mu.name() + "," + x.name() + "," + q.describe() + "," +
                                detail::plan_text(plan) + ")");
    r.outside = outside;
    return r;
}

/// E|⟨D(-L)⁻¹X, DY⟩| and its L² companion.
inline EstimatorResult cross_term(const SmoothFunctional& x, const SmoothFunctional& y, const MonteCarloPlan& plan,
                                  const MehlerQuadrature& q = MehlerQuadrature(),
                                  InversePath path = InversePath::exact_if_chaos) {
    detail::require_dim(y.dim(), x.dim(), "cross_term");
    const auto M = x.dim();
    auto stats = run_monte_carlo(plan, 2, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        Vector xi(M);
        for (Eigen::Index i = 0; i < M; ++i) xi(i) = draw();
        const double t = d_inverse_L(x, xi, q, draw, path).dot(y.grad(xi));
        s[0].add(std::abs(t));
        s[1].add(t * t);
    });
    return detail::finish(stats[0], stats[1], plan,
                          "cross(" + x.name() + "," + y.name() + "," + q.describe() + "," +
                              detail::plan_text(plan) + ")");
}

/// Right-hand side of the bound with its constants and terms.
struct TheoremBound {
    std::string measure;
    double sup_S = 0.0;
    double median_constant = 0.0;  // 2/(a(m)p(m))
    EstimatorResult discrepancy;
    std::vector<EstimatorResult> cross;
    double rhs = 0.0;  // L¹ flavor
    double rhs_se = 0.0;
    double rhs_l2 = 0.0;  // L² flavor
    double rhs_l2_se = 0.0;
};

/// Combine terms; standard errors add in quadrature (terms are estimated
/// from separate samples or treated as such, which is conservative when they
/// are positively correlated only to first order).
inline TheoremBound assemble_bound(std::string measure, double sup_s, double median_constant,
                                   EstimatorResult discrepancy, std::vector<EstimatorResult> cross) {
    TheoremBound b;
    b.measure = std::move(measure);
    b.sup_S = sup_s;
    b.median_constant = median_constant;
    b.rhs = sup_s * discrepancy.estimate;
    b.rhs_l2 = sup_s * discrepancy.rms;
    double var = std::pow(sup_s * discrepancy.std_error, 2), var2 = std::pow(sup_s * discrepancy.rms_std_error, 2);
    for (const auto& c : cross) {
        b.rhs += median_constant * c.estimate;
        b.rhs_l2 += median_constant * c.rms;
        var += std::pow(median_constant * c.std_error, 2);
        var2 += std::pow(median_constant * c.rms_std_error, 2);
    }
    b.rhs_se = std::sqrt(var);
    b.rhs_l2_se = std::sqrt(var2);
    b.discrepancy = std::move(discrepancy);
    b.cross = std::move(cross);
    return b;
}

/// Both flavors of the bound for X and Y_1..Y_d sharing the coordinates ξ.
inline TheoremBound theorem_bound(const TargetMeasure& mu, double sup_s, const SmoothFunctional& x,
                                  const std::vector<SmoothFunctional>& ys, const MonteCarloPlan& plan,
                                  const MehlerQuadrature& q = MehlerQuadrature(),
                                  OutsidePolicy policy = OutsidePolicy::abort) {
    if (!(sup_s > 0.0) || !std::isfinite(sup_s)) throw ConfigError("sup S must be positive and finite");
    auto disc = discrepancy_term(mu, x, plan, q, policy);
    std::vector<EstimatorResult> cross;
    for (std::size_t j = 0; j < ys.size(); ++j) {
        MonteCarloPlan pj = plan;
        pj.seed = derive_seed(plan.seed, j + 1);
        cross.push_back(cross_term(x, ys[j], pj, q));
    }
    return assemble_bound(mu.name(), sup_s, mu.median_stein_factor(), std::move(disc), std::move(cross));
}

// ---------------------------------------------------------------------------
// Centered Gamma pair. Both terms are exact per sample:
//   ½a(U) - ⟨D(-L)⁻¹U, DU⟩ = 2(U + 1) - ½⟨DU, DU⟩,   ⟨D(-L)⁻¹U, DV⟩ = ½⟨DU, DV⟩.

struct GammaTerms {
    EstimatorResult discrepancy;
    EstimatorResult cross;
    double outside_fraction = 0.0;
};

inline GammaTerms gamma_terms(long N, long m, const MonteCarloPlan& plan, OutsidePolicy policy) {
    const GammaPairSampler sampler(N, m);
    auto stats = run_monte_carlo(plan, 5, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        const GammaPairSample p = sampler(draw);
        const bool inside = p.U > -1.0;
        s[4].add(inside ? 0.0 : 1.0);
        const double c = 0.5 * p.dudv;
        s[2].add(std::abs(c));
        s[3].add(c * c);
        if (!inside && policy == OutsidePolicy::abort) return;
        const double d = 2.0 * (p.U + 1.0) - 0.5 * p.dudu;
        s[0].add(std::abs(d));
        s[1].add(d * d);
    });
    const auto outside = static_cast<std::size_t>(std::llround(stats[4].mean * stats[4].count));
    if (policy == OutsidePolicy::abort)
        check_outside(outside, plan.samples, "U_N for N=" + std::to_string(N));
    const std::string tag = "N=" + std::to_string(N) + ",m=" + std::to_string(m) + "," + detail::plan_text(plan);
    GammaTerms t;
    t.discrepancy = detail::finish(stats[0], stats[1], plan, "gamma_discrepancy(" + tag + ")");
    t.discrepancy.outside = outside;
    t.cross = detail::finish(stats[2], stats[3], plan, "gamma_cross(" + tag + ")");
    t.outside_fraction = stats[4].mean;
    return t;
}

// ---------------------------------------------------------------------------
// Uniform example. Coordinates ξ = (z1, z2, z3, z4) with
//   U = z1, V = z2, U_N = ρ z1 + √(1-ρ²) z3, ξ4 = z4,
//   X = exp(-½(U² + V²)), Y_N = exp(-½(U_N² + ξ4²)),
// both uniform on (0, 1) and correlated through ⟨h1, h3⟩ = ρ.

struct UniformPair {
    SmoothFunctional x;
    SmoothFunctional y;
};

inline UniformPair uniform_pair(double rho) {
    if (!(std::abs(rho) <= 1.0)) throw ConfigError("rho must lie in [-1, 1]");
    const double beta = std::sqrt((1.0 - rho) * (1.0 + rho));
    SmoothFunctional x(
        "uniform_X", 4, [](const Vector& z) { return std::exp(-0.5 * (z(0) * z(0) + z(1) * z(1))); },
        [](const Vector& z) {
            const double v = std::exp(-0.5 * (z(0) * z(0) + z(1) * z(1)));
            Vector g = Vector::Zero(4);
            g(0) = -v * z(0);
            g(1) = -v * z(1);
            return g;
        });
    SmoothFunctional y(
        "uniform_Y", 4,
        [rho, beta](const Vector& z) {
            const double un = rho * z(0) + beta * z(2);
            return std::exp(-0.5 * (un * un + z(3) * z(3)));
        },
        [rho, beta](const Vector& z) {
            const double un = rho * z(0) + beta * z(2);
            const double v = std::exp(-0.5 * (un * un + z(3) * z(3)));
            Vector g = Vector::Zero(4);
            g(0) = -v * un * rho;
            g(2) = -v * un * beta;
            g(3) = -v * z(3);
            return g;
        });
    return {std::move(x), std::move(y)};
}

/// G(U, V) = ∫₀^∞ e^{-t} E'[exp(-½(U_t² + V_t²)) U_t] dt = U (1 - e^{-R/2}) / (2R), R = U² + V².
/// The inner expectation is Gaussian: αU/(2-α²)² exp(-α²R/(2(2-α²))), and
/// s = α²/(2-α²) turns the α-integral into ¼∫₀¹ e^{-Rs/2} ds.
inline double uniform_G(double u, double v) {
    const double r = u * u + v * v;
    if (r < 1e-8) return u * (0.25 - r / 16.0);
    return -u * std::expm1(-0.5 * r) / (2.0 * r);
}

/// The same G by quadrature of the closed-form inner expectation over α.
inline double uniform_G_quadrature(double u, double v, std::size_t nodes = 64) {
    const double r = u * u + v * v;
    const GaussLegendreRule rule(nodes);
    return rule.integrate(
        [&](double a) {
            const double c = 2.0 - a * a;
            return a * u / (c * c) * std::exp(-a * a * r / (2.0 * c));
        },
        0.0, 1.0);
}

struct UniformCross {
    EstimatorResult specialized;
    EstimatorResult generic;
    double z_score = 0.0;  // |specialized - generic| / combined SE
};

/// E|ρ Y_N U_N G(U, V)|, cross-checked against the generic Mehler path run
/// on `generic_plan` (skipped when its sample count is 0).
inline UniformCross uniform_cross_specialized(double rho, const MonteCarloPlan& plan,
                                              const MonteCarloPlan& generic_plan,
                                              const MehlerQuadrature& q = MehlerQuadrature()) {
    const auto pair = uniform_pair(rho);
    const double beta = std::sqrt((1.0 - rho) * (1.0 + rho));
    auto stats = run_monte_carlo(plan, 2, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        const double u = draw(), v = draw(), z3 = draw(), z4 = draw();
        const double un = rho * u + beta * z3;
        const double y = std::exp(-0.5 * (un * un + z4 * z4));
        const double t = rho * y * un * uniform_G(u, v);
        s[0].add(std::abs(t));
        s[1].add(t * t);
    });
    UniformCross out;
    out.specialized = detail::finish(stats[0], stats[1], plan,
                                     "uniform_cross(rho=" + detail::shortest(rho) + "," + detail::plan_text(plan) + ")");
    if (generic_plan.samples == 0) return out;
    out.generic = cross_term(pair.x, pair.y, generic_plan, q, InversePath::mehler);
    const double se = std::hypot(out.specialized.std_error, out.generic.std_error);
    const double diff = std::abs(out.specialized.estimate - out.generic.estimate);
    out.z_score = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : kInf);
    if (out.z_score > 5.0)
        throw InvariantError("uniform cross term: specialized and generic estimates differ by " +
                             std::to_string(out.z_score) + " standard errors");
    return out;
}

// ---------------------------------------------------------------------------
// Lognormal example. With K = 1/√(2N), S = Σ W(h_k)² and
// Y_N = exp(-K(S - N)), the Mehler integral is Gaussian in closed form:
//   ⟨D(-L)⁻¹Y_N, h_n⟩ = -K W(h_n) J(S),
//   J(S) = ∫₀¹ exp(NK - (N/2+1) log(1 + 2(1-b)K) - bSK/(1 + 2(1-b)K)) db,
// and ⟨DY_N, h_n⟩ = -2K Y_N W(h_n). The exponent stays O(1) for typical S,
// so it is formed in full before exponentiating.

namespace detail {

inline const GaussLegendreRule& lognormal_rule() {
    static const GaussLegendreRule rule(64);
    return rule;
}

}  // namespace detail

inline double lognormal_J(long N, double S) {
    if (N < 1) throw ConfigError("N must be positive");
    const double n = static_cast<double>(N), K = 1.0 / std::sqrt(2.0 * n);
    const double J = detail::lognormal_rule().integrate(
        [&](double b) {
            const double c = 1.0 + 2.0 * (1.0 - b) * K;
            return std::exp(n * K - (0.5 * n + 1.0) * std::log1p(2.0 * (1.0 - b) * K) - b * S * K / c);
        },
        0.0, 1.0);
    if (!std::isfinite(J)) throw InvariantError("lognormal b-integral overflowed at N=" + std::to_string(N));
    return J;
}

/// C₀ = E|Z| ∫₀¹ E[e^{-bZ}] e^{b(1-b) + ½(1-b)²} db with E[e^{-bZ}] = e^{b²/2}.
/// The exponent b²/2 + b(1-b) + ½(1-b)² is identically ½.
inline double lognormal_limit_constant(std::size_t nodes = 64) {
    const GaussLegendreRule rule(nodes);
    const double integral = rule.integrate(
        [](double b) { return std::exp(0.5 * b * b) * std::exp(b * (1.0 - b) + 0.5 * (1.0 - b) * (1.0 - b)); }, 0.0,
        1.0);
    return std::sqrt(2.0 / std::numbers::pi) * integral;
}

inline double lognormal_limit_closed_form() { return std::sqrt(2.0 / std::numbers::pi) * std::exp(0.5); }

struct LognormalCross {
    EstimatorResult per_term;  // E|⟨D(-L)⁻¹Y_N, h_n⟩|, averaged over n in I
    EstimatorResult total;     // E Σ_{n∈I} |⟨D(-L)⁻¹Y_N, h_n⟩|
    std::size_t I_size = 0;
};

inline void validate_lognormal(long N, std::size_t I_size) {
    if (N < 2) throw ConfigError("N must be at least 2");
    if (I_size > static_cast<std::size_t>(N)) throw ConfigError("I_size must not exceed N");
}

/// Samples W(h_n), n ∈ I, and S_rest ~ χ²_{N - #I}; the terms for n ∈ I
/// share S and are summed per sample.
inline LognormalCross lognormal_cross(long N, std::size_t I_size, const MonteCarloPlan& plan) {
    validate_lognormal(N, I_size);
    const double K = 1.0 / std::sqrt(2.0 * static_cast<double>(N));
    const double I = static_cast<double>(I_size);
    auto stats = run_monte_carlo(plan, 4, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        double S = 0.0, sum_abs = 0.0;
        std::vector<double> w(I_size);
        for (auto& v : w) {
            v = draw();
            S += v * v;
            sum_abs += std::abs(v);
        }
        S += draw.chi_squared(static_cast<double>(N) - I);
        if (I_size == 0) {
            s[0].add(0.0);
            s[1].add(0.0);
            s[2].add(0.0);
            s[3].add(0.0);
            return;
        }
        const double J = lognormal_J(N, S);
        const double t = K * J * sum_abs;
        s[2].add(t);
        s[3].add(t * t);
        // Per-term: the first coordinate alone, which is distributed like any other.
        const double t1 = K * J * std::abs(w[0]);
        s[0].add(t1);
        s[1].add(t1 * t1);
    });
    const std::string tag = "N=" + std::to_string(N) + ",I=" + std::to_string(I_size) + "," + detail::plan_text(plan);
    LognormalCross r;
    r.per_term = detail::finish(stats[0], stats[1], plan, "lognormal_cross_term(" + tag + ")");
    r.total = detail::finish(stats[2], stats[3], plan, "lognormal_cross_total(" + tag + ")");
    r.I_size = I_size;
    return r;
}

/// E|½a(Y_N) - ⟨D(-L)⁻¹Y_N, DY_N⟩| with ⟨D(-L)⁻¹Y_N, DY_N⟩ = 2K² S Y_N J(S),
/// S ~ χ²_N; a from the measure (numeric for the lognormal law).
inline EstimatorResult lognormal_discrepancy(const TargetMeasure& mu, long N, const MonteCarloPlan& plan) {
    validate_lognormal(N, 0);
    const double n = static_cast<double>(N), K = 1.0 / std::sqrt(2.0 * n);
    auto stats = run_monte_carlo(plan, 2, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        const double S = draw.chi_squared(n);
        const double y = std::exp(-K * (S - n));
        const double t = 0.5 * mu.diffusion_coefficient(y) - 2.0 * K * K * S * y * lognormal_J(N, S);
        s[0].add(std::abs(t));
        s[1].add(t * t);
    });
    return detail::finish(stats[0], stats[1], plan,
                          "lognormal_discrepancy(" + mu.name() + ",N=" + std::to_string(N) + "," +
                              detail::plan_text(plan) + ")");
}

/// Y_N = exp(-K Σ(ξ_k² - 1)) as a generic functional in N coordinates.
inline SmoothFunctional lognormal_functional(long N) {
    validate_lognormal(N, 0);
    const double n = static_cast<double>(N), K = 1.0 / std::sqrt(2.0 * n);
    return SmoothFunctional(
        "lognormal_Y" + std::to_string(N), N, [=](const Vector& z) { return std::exp(-K * (z.squaredNorm() - n)); },
        [=](const Vector& z) { return Vector(-2.0 * K * std::exp(-K * (z.squaredNorm() - n)) * z); });
}

struct LognormalSwapped {
    EstimatorResult per_term;  // E[|W(h_n)| Y_N]
    EstimatorResult total;     // Σ_{n∈I} E|⟨h_n, DY_N⟩| = 2K Σ E[|W(h_n)| Y_N]
    double per_term_exact = 0.0;
};

/// E[|W(h_n)| Y_N] = √(2/π) e^{NK} (1 + 2K)^{-(N+1)/2}, used as a check.
inline double lognormal_swapped_exact(long N) {
    validate_lognormal(N, 0);
    const double n = static_cast<double>(N), K = 1.0 / std::sqrt(2.0 * n);
    return std::sqrt(2.0 / std::numbers::pi) * std::exp(n * K - 0.5 * (n + 1.0) * std::log1p(2.0 * K));
}

inline LognormalSwapped lognormal_swapped_bound(long N, std::size_t I_size, const MonteCarloPlan& plan) {
    validate_lognormal(N, I_size);
    const double n = static_cast<double>(N), K = 1.0 / std::sqrt(2.0 * n);
    auto stats = run_monte_carlo(plan, 4, [&](GaussianDraw& draw, std::vector<RunningStats>& s) {
        double S = 0.0, sum_abs = 0.0, first = 0.0;
        for (std::size_t k = 0; k < I_size; ++k) {
            const double v = draw();
            if (k == 0) first = std::abs(v);
            S += v * v;
            sum_abs += std::abs(v);
        }
        S += draw.chi_squared(n - static_cast<double>(I_size));
        const double y = std::exp(-K * (S - n));
        const double t1 = first * y, t = 2.0 * K * sum_abs * y;
        s[0].add(t1);
        s[1].add(t1 * t1);
        s[2].add(t);
        s[3].add(t * t);
    });
    const std::string tag = "N=" + std::to_string(N) + ",I=" + std::to_string(I_size) + "," + detail::plan_text(plan);
    LognormalSwapped r;
    r.per_term = detail::finish(stats[0], stats[1], plan, "lognormal_swapped_term(" + tag + ")");
    r.total = detail::finish(stats[2], stats[3], plan, "lognormal_swapped_total(" + tag + ")");
    r.per_term_exact = lognormal_swapped_exact(N);
    return r;
}

}  // namespace steinind
