#pragma once

// A target probability law on an interval (l, u), given by its density, and
// the scalar fields the Stein operator
//     A f(x) = ½ a(x) f'(x) - (x - m) f(x)
// is built from: mean m, CDF F, median, diffusion coefficient
//     a(x) = (2/p(x)) ∫_l^x (m - t) p(t) dt = (2/p(x)) ∫_x^u (t - m) p(t) dt,
// and the Stein factor
//     S(x) = 8 (∫_l^x F) (∫_x^u (1 - F)) / (a(x)² p(x)).
//
// A TargetMeasure is immutable after construction and safe to share between
// threads.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "steinind/error.hpp"
#include "steinind/parallel.hpp"
#include "steinind/quadrature.hpp"

namespace steinind {

using RealFunction = std::function<double(double)>;

/// Densities smaller than this cannot be divided by.
inline constexpr double kDensityFloor = 1e-300;

/// Quantile level of the edge band: grids and Stein solutions stay inside
/// [F^{-1}(q), F^{-1}(1 - q)].
inline constexpr double kEdgeQuantile = 1e-4;

struct SupportInterval {
    double lower;
    double upper;

    SupportInterval(double l, double u) : lower(l), upper(u) {
        if (std::isnan(l) || std::isnan(u) || !(l < u))
            throw ConfigError("support interval needs lower < upper");
    }

    bool lower_finite() const noexcept { return std::isfinite(lower); }
    bool upper_finite() const noexcept { return std::isfinite(upper); }
    bool interior(double x) const noexcept { return x > lower && x < upper; }
};

/// A density plus optional closed forms. `pdf_from_lower(s)` is p(l + s) and
/// `pdf_from_upper(s)` is p(u - s); supplying them lets quadrature resolve an
/// integrable singularity at a finite endpoint to full precision. The
/// `*_from_*` CDF forms do the same for integrals weighted by F or 1 - F.
struct DensitySpec {
    std::string name;
    RealFunction pdf;
    RealFunction pdf_from_lower;
    RealFunction pdf_from_upper;
    RealFunction cdf;
    RealFunction survival;
    RealFunction cdf_from_lower;       // F(l + s)
    RealFunction survival_from_upper;  // 1 - F(u - s)
    RealFunction quantile;
    std::optional<double> mean;
    RealFunction diffusion;
};

/// ∫ p over the support. The caller decides whether the mass is acceptable.
inline double normalize_check(const DensitySpec& density, const SupportInterval& support,
                              const QuadratureConfig& config = {}) {
    if (!density.pdf) throw ConfigError("density '" + density.name + "' has no pdf");
    Integrator quad(config);
    auto p = [&](const Abscissa& a) {
        if (density.pdf_from_lower && a.from_a < a.from_b && a.x - a.from_a == support.lower)
            return density.pdf_from_lower(a.from_a);
        if (density.pdf_from_upper && a.from_b < a.from_a && a.x + a.from_b == support.upper)
            return density.pdf_from_upper(a.from_b);
        return density.pdf(a.x);
    };
    double center = 0.0;
    if (support.lower_finite() && support.upper_finite())
        center = 0.5 * (support.lower + support.upper);
    else if (support.lower_finite())
        center = support.lower + 1.0;
    else if (support.upper_finite())
        center = support.upper - 1.0;
    return quad(p, support.lower, center) + quad(p, center, support.upper);
}

/// Quantile-spaced evaluation grid: x_k = F^{-1}(k/(K+1)), k = 1..K, with the
/// levels clipped to [q_min, 1 - q_min].
struct GridSpec {
    std::size_t nodes = 4095;
    double q_min = 1e-4;
};

struct DiffusionForms {
    double left;
    double right;
};

class TargetMeasure {
public:
    TargetMeasure(SupportInterval support, DensitySpec density, QuadratureConfig config = {})
        : support_(support), density_(std::move(density)), quad_(config) {
        if (!density_.pdf) throw ConfigError("density '" + density_.name + "' has no pdf");
        if (support_.lower_finite() && support_.upper_finite())
            pivot_ = 0.5 * (support_.lower + support_.upper);
        else if (support_.lower_finite())
            pivot_ = support_.lower + 1.0;
        else if (support_.upper_finite())
            pivot_ = support_.upper - 1.0;
        else
            pivot_ = 0.0;
        if (density_.mean) {
            mean_ = *density_.mean;
        } else {
            mean_ = integrate_density([](double t) { return t; }, support_.lower, support_.upper);
            if (!std::isfinite(mean_)) throw Error("mean of '" + density_.name + "' is not finite");
        }
        median_ = quantile(0.5);
        band_ = {quantile(kEdgeQuantile), quantile(1.0 - kEdgeQuantile)};
        pivot_ = median_;
        median_factor_ = 2.0 / (diffusion_coefficient(median_) * checked_pdf(median_));
    }

    const std::string& name() const noexcept { return density_.name; }
    const SupportInterval& support() const noexcept { return support_; }
    const DensitySpec& density() const noexcept { return density_; }
    const Integrator& integrator() const noexcept { return quad_; }

    double mean() const noexcept { return mean_; }
    double median() const noexcept { return median_; }

    /// [F^{-1}(1e-4), F^{-1}(1 - 1e-4)].
    std::pair<double, double> evaluation_band() const noexcept { return band_; }

    /// Inverse-CDF draw.
    double sample(GaussianDraw& draw) const {
        double u = draw.uniform();
        while (u <= 0.0) u = draw.uniform();
        return quantile(u);
    }

    double pdf(double x) const {
        if (!support_.interior(x)) return 0.0;
        return density_.pdf(x);
    }

    /// p(x), throwing when it is too small to divide by.
    double checked_pdf(double x) const {
        const double p = pdf(x);
        if (!(p >= kDensityFloor) || !std::isfinite(p))
            throw DomainError("density below " + std::to_string(kDensityFloor) + " for '" +
                                  density_.name + "'",
                              x);
        return p;
    }

    /// ∫_lo^hi g(t) p(t) dt over [lo, hi] ∩ support. g may take an Abscissa
    /// whose offsets are measured from lo and hi.
    template <class G>
    double integrate_density(const G& g, double lo, double hi) const {
        lo = std::max(lo, support_.lower);
        hi = std::min(hi, support_.upper);
        if (!(lo < hi)) return 0.0;
        auto integrand = [&](const Abscissa& in_support, const Abscissa& in_limits) {
            const double p = density_at(in_support);
            return p == 0.0 ? 0.0 : detail::call_integrand(g, in_limits) * p;
        };
        return integrate_split(integrand, lo, hi);
    }

    /// ∫_lo^hi g(t) dt, split at the measure's center so that each finite
    /// support endpoint sits in a bounded piece.
    template <class G>
    double integrate_plain(const G& g, double lo, double hi) const {
        if (!(lo < hi)) return 0.0;
        return integrate_split(
            [&](const Abscissa&, const Abscissa& in_limits) { return detail::call_integrand(g, in_limits); },
            lo, hi);
    }

    double cdf(double x) const {
        if (x <= support_.lower) return 0.0;
        if (x >= support_.upper) return 1.0;
        if (density_.cdf) return density_.cdf(x);
        return cdf_quadrature(x);
    }

    double cdf_quadrature(double x) const {
        if (x <= support_.lower) return 0.0;
        if (x >= support_.upper) return 1.0;
        return integrate_density([](double) { return 1.0; }, support_.lower, x);
    }

    /// 1 - F(x), evaluated without cancellation when a closed form exists.
    double survival(double x) const {
        if (x <= support_.lower) return 1.0;
        if (x >= support_.upper) return 0.0;
        if (density_.survival) return density_.survival(x);
        if (density_.cdf) return 1.0 - density_.cdf(x);
        return integrate_density([](double) { return 1.0; }, x, support_.upper);
    }

    /// F^{-1}(q): the closed form when given, else bracketing bisection with
    /// |F(x) - q| <= 1e-10 on return.
    double quantile(double q) const {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("quantile level must lie in (0, 1)");
        if (density_.quantile) return density_.quantile(q);
        double lo, hi;
        if (support_.lower_finite()) {
            lo = support_.lower;
        } else {
            double step = 1.0;
            lo = pivot_ - step;
            while (cdf(lo) > q) {
                step *= 2.0;
                lo = pivot_ - step;
                if (step > 1e18) throw DomainError("quantile bracket not found", lo);
            }
        }
        if (support_.upper_finite()) {
            hi = support_.upper;
        } else {
            double step = 1.0;
            hi = std::max(pivot_, lo) + step;
            while (cdf(hi) < q) {
                step *= 2.0;
                hi = std::max(pivot_, lo) + step;
                if (step > 1e18) throw DomainError("quantile bracket not found", hi);
            }
        }
        for (int it = 0; it < 400; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (cdf(mid) < q)
                lo = mid;
            else
                hi = mid;
        }
        const double x = std::abs(cdf(lo) - q) <= std::abs(cdf(hi) - q) ? lo : hi;
        // A steep CDF may jump by more than the tolerance between neighbouring doubles.
        const bool resolved = hi - lo <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(x));
        if (std::abs(cdf(x) - q) > 1e-10 && !resolved)
            throw DomainError("quantile bisection missed its tolerance", x);
        return x;
    }

    /// Both integral expressions of the diffusion coefficient, by quadrature.
    DiffusionForms diffusion_forms(double x) const {
        require_interior(x);
        const double p = checked_pdf(x);
        const double m = mean_;
        const double left =
            2.0 / p * integrate_density([m](double t) { return m - t; }, support_.lower, x);
        const double right =
            2.0 / p * integrate_density([m](double t) { return t - m; }, x, support_.upper);
        return {left, right};
    }

    /// a(x) from quadrature. The left-integral form is used up to the median and
    /// the right-integral form beyond it, where the left form would be a small
    /// difference of O(1) quantities.
    double diffusion_quadrature(double x) const {
        require_interior(x);
        const double p = checked_pdf(x);
        const double m = mean_;
        if (x <= median_)
            return 2.0 / p * integrate_density([m](double t) { return m - t; }, support_.lower, x);
        return 2.0 / p * integrate_density([m](double t) { return t - m; }, x, support_.upper);
    }

    double diffusion_coefficient(double x) const {
        require_interior(x);
        if (density_.diffusion) return density_.diffusion(x);
        return diffusion_quadrature(x);
    }

    bool has_closed_form_diffusion() const noexcept { return static_cast<bool>(density_.diffusion); }

    /// ∫_lo^hi g(t) F(t) dt, or with 1 - F(t) when `survival_weight`.
    template <class G>
    double integrate_cdf_weighted(const G& g, double lo, double hi, bool survival_weight) const {
        lo = std::max(lo, support_.lower);
        hi = std::min(hi, support_.upper);
        if (!(lo < hi)) return 0.0;
        return integrate_split(
            [&](const Abscissa& s, const Abscissa&) {
                const double w = survival_weight ? survival_at(s) : cdf_at(s);
                return w == 0.0 ? 0.0 : g(s.x) * w;
            },
            lo, hi);
    }

    /// ∫_l^x F(w) dw, as ∫_l^x (x - t) p(t) dt so that x - t is exact.
    double cdf_integral_left(double x) const {
        require_interior(x);
        return integrate_density([](const Abscissa& t) { return t.from_b; }, support_.lower, x);
    }

    /// ∫_x^u (1 - F(w)) dw = ∫_x^u (t - x) p(t) dt.
    double survival_integral_right(double x) const {
        require_interior(x);
        return integrate_density([](const Abscissa& t) { return t.from_a; }, x, support_.upper);
    }

    /// ∫_l^x F - (x - m) F(x) - ½ a(x) p(x); zero up to quadrature error.
    double fubini_residual(double x) const {
        require_interior(x);
        const double lhs = integrate_plain([this](double w) { return cdf(w); }, support_.lower, x);
        return lhs - (x - mean_) * cdf(x) - 0.5 * diffusion_coefficient(x) * pdf(x);
    }

    double stein_factor_S(double x) const {
        require_interior(x);
        const double p = checked_pdf(x);
        const double a = diffusion_coefficient(x);
        if (!(a > 0.0)) throw DomainError("diffusion coefficient is not positive", x);
        return 8.0 * cdf_integral_left(x) * survival_integral_right(x) / (a * a * p);
    }

    /// 2 / (a(μ_m) p(μ_m)): the constant bounding ∂_y f_h.
    double median_stein_factor() const noexcept { return median_factor_; }

    std::vector<double> quantile_grid(const GridSpec& grid) const {
        if (grid.nodes == 0) throw ConfigError("grid needs at least one node");
        if (!(grid.q_min > 0.0 && grid.q_min < 0.5)) throw ConfigError("grid q_min must lie in (0, 0.5)");
        std::vector<double> xs(grid.nodes);
        for (std::size_t k = 0; k < grid.nodes; ++k) {
            double q = static_cast<double>(k + 1) / static_cast<double>(grid.nodes + 1);
            q = std::clamp(q, grid.q_min, 1.0 - grid.q_min);
            xs[k] = quantile(q);
        }
        return xs;
    }

    void require_interior(double x) const {
        if (!support_.interior(x)) throw DomainError("point outside the open support of '" + density_.name + "'", x);
    }

private:
    // The abscissa carries distances to the support endpoints (see integrate_split).
    double density_at(const Abscissa& a) const {
        if (a.from_a <= a.from_b) {
            if (density_.pdf_from_lower) return density_.pdf_from_lower(a.from_a);
        } else if (density_.pdf_from_upper) {
            return density_.pdf_from_upper(a.from_b);
        }
        if (!support_.interior(a.x)) return 0.0;
        return density_.pdf(a.x);
    }

    double cdf_at(const Abscissa& a) const {
        if (density_.cdf_from_lower && a.from_a <= a.from_b) return density_.cdf_from_lower(a.from_a);
        if (density_.survival_from_upper && a.from_b < a.from_a) return 1.0 - density_.survival_from_upper(a.from_b);
        return cdf(a.x);
    }

    double survival_at(const Abscissa& a) const {
        if (density_.survival_from_upper && a.from_b <= a.from_a) return density_.survival_from_upper(a.from_b);
        if (density_.cdf_from_lower && a.from_a < a.from_b) return 1.0 - density_.cdf_from_lower(a.from_a);
        return survival(a.x);
    }

    // Splits at the pivot. f receives the point twice: with distances to the
    // support endpoints and with distances to lo/hi. Offsets are accumulated
    // as (a - l) + (t - a), which stays accurate when t is close to l even if
    // the piece itself stops short of l.
    template <class F>
    double integrate_split(const F& f, double lo, double hi) const {
        auto piece = [&](double a, double b) {
            return quad_.integrate(
                [&](const Abscissa& p) {
                    Abscissa s{p.x, p.x - support_.lower, support_.upper - p.x};
                    if (std::isfinite(a)) s.from_a = (a - support_.lower) + p.from_a;
                    if (std::isfinite(b)) s.from_b = (support_.upper - b) + p.from_b;
                    Abscissa l{p.x, (a - lo) + p.from_a, (hi - b) + p.from_b};
                    return f(s, l);
                },
                a, b).value;
        };
        if (lo < pivot_ && pivot_ < hi) return piece(lo, pivot_) + piece(pivot_, hi);
        return piece(lo, hi);
    }

    SupportInterval support_;
    DensitySpec density_;
    Integrator quad_;
    double pivot_ = 0.0;
    double mean_ = 0.0;
    double median_ = 0.0;
    double median_factor_ = 0.0;
    std::pair<double, double> band_{0.0, 0.0};
};

struct SupEstimate {
    double value;
    double argmax;
    std::size_t nodes;
};

/// max of S over the quantile grid; throws DomainError naming the first
/// node where S is not finite.
inline SupEstimate sup_S(const TargetMeasure& measure, const GridSpec& grid, std::size_t workers = 0) {
    const auto xs = measure.quantile_grid(grid);
    const auto values = parallel_map<double>(
        xs.size(), [&](std::size_t k) { return measure.stein_factor_S(xs[k]); }, workers);
    SupEstimate best{-kInf, 0.0, xs.size()};
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (!std::isfinite(values[k])) throw DomainError("S is not finite on the grid", xs[k]);
        if (values[k] > best.value) best = {values[k], xs[k], xs.size()};
    }
    return best;
}

struct SupStability {
    SupEstimate coarse;
    SupEstimate fine;
    double relative_change;
    bool stable;  // relative change below 5%
};

/// sup_S at K nodes and at 2K+1 nodes (every coarse node is also a fine node).
inline SupStability sup_S_stability(const TargetMeasure& measure, const GridSpec& grid,
                                    std::size_t workers = 0) {
    GridSpec fine = grid;
    fine.nodes = 2 * grid.nodes + 1;
    SupStability s{sup_S(measure, grid, workers), sup_S(measure, fine, workers), 0.0, false};
    s.relative_change = std::abs(s.fine.value - s.coarse.value) / s.fine.value;
    s.stable = s.relative_change < 0.05;
    return s;
}

// ---------------------------------------------------------------------------
// Heuristic checks of the edge conditions on a (with ã = a).

enum class Verdict { pass, fail, inconclusive, vacuous };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        case Verdict::inconclusive: return "inconclusive";
        case Verdict::vacuous: return "vacuous";
    }
    return "?";
}

/// Threshold under which a is declared to vanish numerically.
inline constexpr double kVanishingThreshold = 1e-6;

struct EndpointDiagnostics {
    bool infinite = false;
    std::vector<double> points;        // where a was probed, marching to the endpoint
    std::vector<double> a_values;
    std::vector<double> slopes;        // finite-difference a'(x) at the same points
    double a_min = kInf;               // liminf surrogate
    double ratio_min = 1.0;            // a/ã extremes; ã = a
    double ratio_max = 1.0;
    Verdict nonvanishing = Verdict::vacuous;  // lower bound on a at an infinite end
    Verdict limits = Verdict::inconclusive;   // limits of ã (and ã' at infinite ends) exist
    Verdict slope_sign = Verdict::vacuous;    // sign of liminf ã' at a finite end
    Verdict ratio = Verdict::pass;            // a/ã bounded above and away from zero
};

struct ConditionDiagnostics {
    std::string measure;
    EndpointDiagnostics lower;
    EndpointDiagnostics upper;
    double vanishing_threshold = kVanishingThreshold;
    std::string note =
        "heuristic numerical diagnostics from finitely many evaluations; not a proof of the conditions";
};

namespace detail {

// Differences of successive values shrink or keep one sign: numerical
// evidence that a limit exists in the extended reals.
inline bool looks_convergent(const std::vector<double>& v) {
    if (v.size() < 3) return false;
    bool monotone_up = true, monotone_down = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[i - 1] - 1e-12 * std::max(1.0, std::abs(v[i - 1]))) monotone_up = false;
        if (v[i] > v[i - 1] + 1e-12 * std::max(1.0, std::abs(v[i - 1]))) monotone_down = false;
    }
    if (monotone_up || monotone_down) return true;
    const double d1 = std::abs(v[v.size() - 1] - v[v.size() - 2]);
    const double d0 = std::abs(v[1] - v[0]);
    return d1 < d0;
}

inline EndpointDiagnostics probe_endpoint(const TargetMeasure& mu, bool at_upper) {
    EndpointDiagnostics d;
    const auto& s = mu.support();
    d.infinite = at_upper ? !s.upper_finite() : !s.lower_finite();
    auto try_a = [&](double x, double& out) {
        try {
            if (!s.interior(x) || mu.pdf(x) < kDensityFloor) return false;
            out = mu.diffusion_coefficient(x);
            return std::isfinite(out);
        } catch (const Error&) {
            return false;
        }
    };
    if (d.infinite) {
        for (int k = 0; k <= 20; ++k) {
            const double x = at_upper ? std::ldexp(1.0, k) : -std::ldexp(1.0, k);
            double a = 0.0;
            if (!try_a(x, a)) continue;
            d.points.push_back(x);
            d.a_values.push_back(a);
        }
    } else {
        for (int k = 2; k <= 7; ++k) {
            const double q = std::pow(10.0, -k);
            double x = 0.0, a = 0.0;
            try {
                x = mu.quantile(at_upper ? 1.0 - q : q);
            } catch (const Error&) {
                continue;
            }
            if (!try_a(x, a)) continue;
            d.points.push_back(x);
            d.a_values.push_back(a);
        }
    }
    for (std::size_t i = 0; i < d.points.size(); ++i) {
        const double x = d.points[i];
        double h = 1e-5 * std::max(1.0, std::abs(x));
        if (!d.infinite) {
            const double edge = at_upper ? s.upper : s.lower;
            h = std::min(h, 0.25 * std::abs(x - edge));
        }
        double ap = 0.0, am = 0.0;
        if (try_a(x + h, ap) && try_a(x - h, am))
            d.slopes.push_back((ap - am) / (2 * h));
        else
            d.slopes.push_back(std::numeric_limits<double>::quiet_NaN());
    }
    for (double a : d.a_values) d.a_min = std::min(d.a_min, a);

    if (d.infinite) {
        if (d.a_values.size() < 3)
            d.nonvanishing = Verdict::inconclusive;
        else
            d.nonvanishing = d.a_min > kVanishingThreshold ? Verdict::pass : Verdict::fail;
        std::vector<double> finite_slopes;
        for (double v : d.slopes)
            if (std::isfinite(v)) finite_slopes.push_back(v);
        d.limits = (looks_convergent(d.a_values) && looks_convergent(finite_slopes))
                       ? Verdict::pass
                       : Verdict::inconclusive;
        d.slope_sign = Verdict::vacuous;
    } else {
        d.nonvanishing = Verdict::vacuous;
        d.limits = looks_convergent(d.a_values) ? Verdict::pass : Verdict::inconclusive;
        std::size_t usable = 0;
        bool ok = true;
        for (double v : d.slopes) {
            if (!std::isfinite(v)) continue;
            ++usable;
            if (at_upper ? v > 1e-8 : v < -1e-8) ok = false;
        }
        d.slope_sign = usable < 2 ? Verdict::inconclusive : (ok ? Verdict::pass : Verdict::fail);
    }
    d.ratio = Verdict::pass;
    return d;
}

}  // namespace detail

inline ConditionDiagnostics edge_condition_report(const TargetMeasure& measure) {
    ConditionDiagnostics report;
    report.measure = measure.name();
    report.lower = detail::probe_endpoint(measure, false);
    report.upper = detail::probe_endpoint(measure, true);
    return report;
}

}  // namespace steinind
