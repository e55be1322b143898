#pragma once

// One-dimensional quadrature used by every module that integrates against a
// density. Finite pieces use tanh-sinh, half-infinite pieces use exp-sinh (an
// exponential substitution of the tail onto a bounded parameter range).
// Integrands may take an Abscissa instead of a double; it carries the distance
// to both limits computed without cancellation, which lets densities with an
// integrable singularity at a support endpoint be evaluated accurately.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "steinind/error.hpp"

namespace steinind {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class QuadratureScheme { adaptive, fixed_node };
enum class TailTransform { none, exponential };

struct QuadratureConfig {
    QuadratureScheme scheme = QuadratureScheme::adaptive;
    double relative_tolerance = 1e-10;
    int max_subdivisions = 15;
    TailTransform lower_tail = TailTransform::exponential;
    TailTransform upper_tail = TailTransform::exponential;
    // Node count of the fixed-node scheme (per finite piece).
    int fixed_nodes = 128;

    void validate() const {
        if (!(relative_tolerance > 0.0) || !std::isfinite(relative_tolerance))
            throw ConfigError("quadrature tolerance must be positive");
        if (max_subdivisions < 8) throw ConfigError("quadrature max subdivisions must be >= 8");
        if (fixed_nodes < 2) throw ConfigError("fixed-node quadrature needs at least 2 nodes");
    }
};

/// Evaluation point handed to integrands. `from_a`/`from_b` are the distances
/// to the lower/upper integration limits (infinite for an infinite limit).
struct Abscissa {
    double x;
    double from_a;
    double from_b;
};

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;
};

/// Gauss–Legendre nodes and weights on [-1, 1].
class GaussLegendreRule {
public:
    explicit GaussLegendreRule(std::size_t n) {
        if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
        const auto zeros = boost::math::legendre_p_zeros<double>(static_cast<int>(n));
        for (double z : zeros) {
            const double dp = boost::math::legendre_p_prime(static_cast<int>(n), z);
            const double w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes_.push_back(z);
            weights_.push_back(w);
            if (z != 0.0) {
                nodes_.push_back(-z);
                weights_.push_back(w);
            }
        }
        std::vector<std::size_t> order(nodes_.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return nodes_[a] < nodes_[b]; });
        std::vector<double> n2, w2;
        for (auto i : order) {
            n2.push_back(nodes_[i]);
            w2.push_back(weights_[i]);
        }
        nodes_ = std::move(n2);
        weights_ = std::move(w2);
    }

    std::size_t size() const noexcept { return nodes_.size(); }
    std::span<const double> nodes() const noexcept { return nodes_; }
    std::span<const double> weights() const noexcept { return weights_; }

    /// Nodes mapped to [a, b] with weights scaled accordingly.
    void mapped(double a, double b, std::vector<double>& x, std::vector<double>& w) const {
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        x.resize(size());
        w.resize(size());
        for (std::size_t i = 0; i < size(); ++i) {
            x[i] = mid + half * nodes_[i];
            w[i] = half * weights_[i];
        }
    }

    template <class F>
    double integrate(F&& f, double a, double b) const {
        const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
        double s = 0.0;
        for (std::size_t i = 0; i < size(); ++i) s += weights_[i] * f(mid + half * nodes_[i]);
        return half * s;
    }

private:
    std::vector<double> nodes_;
    std::vector<double> weights_;
};

namespace detail {

template <class F>
double call_integrand(const F& f, const Abscissa& p) {
    if constexpr (std::invocable<const F&, const Abscissa&>)
        return f(p);
    else
        return f(p.x);
}

}  // namespace detail

class Integrator {
public:
    explicit Integrator(QuadratureConfig cfg = {}) : cfg_(cfg) {
        cfg_.validate();
        finite_ = std::make_shared<boost::math::quadrature::tanh_sinh<double>>(
            static_cast<std::size_t>(cfg_.max_subdivisions));
        tail_ = std::make_shared<boost::math::quadrature::exp_sinh<double>>(
            static_cast<std::size_t>(cfg_.max_subdivisions));
        rule_ = std::make_shared<const GaussLegendreRule>(static_cast<std::size_t>(cfg_.fixed_nodes));
    }

    const QuadratureConfig& config() const noexcept { return cfg_; }

    /// ∫_a^b f. Infinite limits are allowed when the matching tail transform is
    /// enabled. Throws QuadratureError when the estimate is far from tolerance.
    template <class F>
    QuadratureResult integrate(const F& f, double a, double b) const {
        if (std::isnan(a) || std::isnan(b)) throw ConfigError("NaN integration limit");
        if (a == b) return {};
        if (b < a) {
            auto r = integrate(f, b, a);
            r.value = -r.value;
            return r;
        }
        if (std::isinf(a) && cfg_.lower_tail == TailTransform::none)
            throw ConfigError("infinite lower limit needs an exponential tail transform");
        if (std::isinf(b) && cfg_.upper_tail == TailTransform::none)
            throw ConfigError("infinite upper limit needs an exponential tail transform");
        if (std::isinf(a) && std::isinf(b)) {
            auto lo = integrate(f, a, 0.0);
            auto hi = integrate(f, 0.0, b);
            return {lo.value + hi.value, lo.error + hi.error, lo.l1 + hi.l1};
        }
        QuadratureResult r = cfg_.scheme == QuadratureScheme::adaptive ? adaptive(f, a, b)
                                                                       : fixed(f, a, b);
        check(r);
        return r;
    }

    template <class F>
    double operator()(const F& f, double a, double b) const {
        return integrate(f, a, b).value;
    }

private:
    void check(const QuadratureResult& r) const {
        if (!std::isfinite(r.value))
            throw QuadratureError("quadrature produced a non-finite value", r.value, r.error);
        // The estimate is the difference of the last two levels; the true error is
        // typically far smaller, so only gross failures are reported.
        const double allowed = 1e4 * cfg_.relative_tolerance * std::max(r.l1, 1e-300);
        if (r.error > allowed && r.error > 1e-14)
            throw QuadratureError("quadrature did not converge", r.value, r.error);
    }

    template <class F>
    QuadratureResult adaptive(const F& f, double a, double b) const {
        QuadratureResult r;
        std::size_t levels = 0;
        const double tol = cfg_.relative_tolerance;
        try {
            if (std::isfinite(a) && std::isfinite(b)) {
                const double width = b - a;
                r.value = finite_->integrate(
                    [&](double t, double tc) {
                        // tc is the exact offset from the nearer limit; the far offset
                        // is taken from the width so narrow pieces keep full precision.
                        Abscissa p{t, t - a, b - t};
                        if (tc < 0) {
                            p.from_a = -tc;
                            p.from_b = width + tc;
                        } else if (tc > 0) {
                            p.from_b = tc;
                            p.from_a = width - tc;
                        }
                        return detail::call_integrand(f, p);
                    },
                    a, b, tol, &r.error, &r.l1, &levels);
            } else if (std::isfinite(a)) {
                r.value = tail_->integrate(
                    [&](double t) { return detail::call_integrand(f, Abscissa{t, t - a, kInf}); },
                    a, b, tol, &r.error, &r.l1, &levels);
            } else {
                r.value = tail_->integrate(
                    [&](double t) { return detail::call_integrand(f, Abscissa{t, kInf, b - t}); },
                    a, b, tol, &r.error, &r.l1, &levels);
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw QuadratureError(std::string("quadrature failed: ") + e.what(), r.value, r.error);
        }
        return r;
    }

    // Gauss–Legendre on finite pieces; x = a - log(1-u) on tails.
    template <class F>
    QuadratureResult fixed(const F& f, double a, double b) const {
        const auto& rule = *rule_;
        QuadratureResult r;
        auto acc = [&](double x, double w, double fa, double fb) {
            const double v = w * detail::call_integrand(f, Abscissa{x, fa, fb});
            r.value += v;
            r.l1 += std::abs(v);
        };
        const auto nodes = rule.nodes();
        const auto weights = rule.weights();
        if (std::isfinite(a) && std::isfinite(b)) {
            const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
            for (std::size_t i = 0; i < rule.size(); ++i) {
                const double x = mid + half * nodes[i];
                acc(x, half * weights[i], half * (1.0 + nodes[i]), half * (1.0 - nodes[i]));
            }
        } else {
            for (std::size_t i = 0; i < rule.size(); ++i) {
                const double u = 0.5 * (1.0 + nodes[i]);
                const double s = -std::log1p(-u);
                const double jac = 0.5 * weights[i] / (1.0 - u);
                if (std::isfinite(a))
                    acc(a + s, jac, s, kInf);
                else
                    acc(b - s, jac, kInf, s);
            }
        }
        return r;
    }

    QuadratureConfig cfg_;
    // Boost declares integrate() non-const; the rules grow their tables under an internal lock.
    std::shared_ptr<boost::math::quadrature::tanh_sinh<double>> finite_;
    std::shared_ptr<boost::math::quadrature::exp_sinh<double>> tail_;
    std::shared_ptr<const GaussLegendreRule> rule_;
};

}  // namespace steinind
