#pragma once

// Built-in target measures, a name registry, and user densities read from a
// key-value file:
//
//   name  = shifted_exponential      # optional
//   lower = 0                        # number, -inf or inf
//   upper = inf
//   pdf   = exp(-x)                  # expression in x
//   cdf   = 1 - exp(-x)              # optional
//   mean  = 1                        # optional
//   diffusion = 2*x                  # optional closed form of a(x)
//   quadrature.tolerance = 1e-10     # optional
//   quadrature.max_subdivisions = 15 # optional
//   quadrature.scheme = adaptive     # adaptive | fixed_node
//   mass_tolerance = 1e-6            # optional; accepted |mass - 1|

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "steinind/config.hpp"
#include "steinind/expression.hpp"
#include "steinind/target_measure.hpp"

namespace steinind {

namespace detail {

inline double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double std_normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }
inline double std_normal_quantile(double q) { return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * q); }

}  // namespace detail

inline TargetMeasure gaussian_std(QuadratureConfig cfg = {}) {
    DensitySpec d;
    d.name = "gaussian";
    d.pdf = detail::std_normal_pdf;
    d.cdf = detail::std_normal_cdf;
    d.survival = detail::std_normal_sf;
    d.quantile = detail::std_normal_quantile;
    d.mean = 0.0;
    d.diffusion = [](double) { return 2.0; };
    return TargetMeasure({-kInf, kInf}, std::move(d), cfg);
}

/// Law of Z² - 1 on (-1, ∞).
inline TargetMeasure centered_gamma(QuadratureConfig cfg = {}) {
    DensitySpec d;
    d.name = "centered_gamma";
    auto from_lower = [](double s) {
        if (!(s > 0.0)) return 0.0;
        return std::exp(-0.5 * s) / std::sqrt(2.0 * std::numbers::pi * s);
    };
    d.pdf = [from_lower](double x) { return from_lower(x + 1.0); };
    d.pdf_from_lower = from_lower;
    d.cdf = [](double x) { return x <= -1.0 ? 0.0 : std::erf(std::sqrt(0.5 * (x + 1.0))); };
    d.survival = [](double x) { return x <= -1.0 ? 1.0 : std::erfc(std::sqrt(0.5 * (x + 1.0))); };
    d.cdf_from_lower = [](double s) { return s <= 0.0 ? 0.0 : std::erf(std::sqrt(0.5 * s)); };
    d.quantile = [](double q) {
        const double r = boost::math::erf_inv(q);
        return 2.0 * r * r - 1.0;
    };
    d.mean = 0.0;
    d.diffusion = [](double x) { return 4.0 * (x + 1.0); };
    return TargetMeasure({-1.0, kInf}, std::move(d), cfg);
}

inline TargetMeasure uniform01(QuadratureConfig cfg = {}) {
    DensitySpec d;
    d.name = "uniform01";
    d.pdf = [](double) { return 1.0; };
    d.cdf = [](double x) { return std::clamp(x, 0.0, 1.0); };
    d.survival = [](double x) { return std::clamp(1.0 - x, 0.0, 1.0); };
    d.quantile = [](double q) { return q; };
    d.mean = 0.5;
    d.diffusion = [](double x) { return x * (1.0 - x); };
    return TargetMeasure({0.0, 1.0}, std::move(d), cfg);
}

/// Beta(α, β) on (0, 1); a(x) by quadrature.
inline TargetMeasure beta(double alpha, double b, QuadratureConfig cfg = {}) {
    if (!(alpha > 0.0) || !(b > 0.0) || !std::isfinite(alpha) || !std::isfinite(b))
        throw ConfigError("beta parameters must be positive");
    DensitySpec d;
    d.name = "beta:" + detail::shortest(alpha) + "," + detail::shortest(b);
    const double log_norm = -(std::lgamma(alpha) + std::lgamma(b) - std::lgamma(alpha + b));
    d.pdf_from_lower = [=](double s) {
        if (!(s > 0.0) || s >= 1.0) return 0.0;
        return std::exp(log_norm + (alpha - 1.0) * std::log(s) + (b - 1.0) * std::log1p(-s));
    };
    d.pdf_from_upper = [=](double s) {
        if (!(s > 0.0) || s >= 1.0) return 0.0;
        return std::exp(log_norm + (alpha - 1.0) * std::log1p(-s) + (b - 1.0) * std::log(s));
    };
    d.pdf = [f = d.pdf_from_lower](double x) { return f(x); };
    d.cdf = [=](double x) { return x <= 0.0 ? 0.0 : x >= 1.0 ? 1.0 : boost::math::ibeta(alpha, b, x); };
    d.survival = [=](double x) { return x <= 0.0 ? 1.0 : x >= 1.0 ? 0.0 : boost::math::ibetac(alpha, b, x); };
    d.quantile = [=](double q) { return boost::math::ibeta_inv(alpha, b, q); };
    d.cdf_from_lower = [=](double s) { return s <= 0.0 ? 0.0 : s >= 1.0 ? 1.0 : boost::math::ibeta(alpha, b, s); };
    d.survival_from_upper = [=](double s) { return s <= 0.0 ? 0.0 : s >= 1.0 ? 1.0 : boost::math::ibeta(b, alpha, s); };
    d.mean = alpha / (alpha + b);
    return TargetMeasure({0.0, 1.0}, std::move(d), cfg);
}

/// Law of e^Z; a(x) by quadrature.
inline TargetMeasure lognormal01(QuadratureConfig cfg = {}) {
    DensitySpec d;
    d.name = "lognormal01";
    d.pdf = [](double x) { return x > 0.0 ? detail::std_normal_pdf(std::log(x)) / x : 0.0; };
    d.pdf_from_lower = d.pdf;
    d.cdf = [](double x) { return x > 0.0 ? detail::std_normal_cdf(std::log(x)) : 0.0; };
    d.survival = [](double x) { return x > 0.0 ? detail::std_normal_sf(std::log(x)) : 1.0; };
    d.quantile = [](double q) { return std::exp(detail::std_normal_quantile(q)); };
    d.mean = std::exp(0.5);
    return TargetMeasure({0.0, kInf}, std::move(d), cfg);
}

inline std::vector<std::string> builtin_measure_names() {
    return {"gaussian", "centered_gamma", "uniform01", "beta:a,b", "lognormal01"};
}

/// Resolve "gaussian", "centered_gamma", "uniform01", "beta:2,3", "lognormal01".
inline TargetMeasure measure_by_name(const std::string& name, QuadratureConfig cfg = {}) {
    if (name == "gaussian") return gaussian_std(cfg);
    if (name == "centered_gamma") return centered_gamma(cfg);
    if (name == "uniform01") return uniform01(cfg);
    if (name == "lognormal01") return lognormal01(cfg);
    if (name.rfind("beta:", 0) == 0) {
        const auto body = name.substr(5);
        const auto comma = body.find(',');
        if (comma == std::string::npos) throw ConfigError("beta needs two parameters, e.g. beta:2,3");
        return beta(detail::parse_real("beta", body.substr(0, comma)),
                    detail::parse_real("beta", body.substr(comma + 1)), cfg);
    }
    throw ConfigError("unknown measure '" + name + "'");
}

inline QuadratureConfig quadrature_from(const KeyValueFile& kv, QuadratureConfig cfg = {}) {
    cfg.relative_tolerance = kv.get_real("quadrature.tolerance", cfg.relative_tolerance);
    cfg.max_subdivisions = static_cast<int>(kv.get_unsigned("quadrature.max_subdivisions",
                                                            static_cast<std::uint64_t>(cfg.max_subdivisions)));
    const auto scheme = kv.get_string("quadrature.scheme", "adaptive");
    if (scheme == "adaptive")
        cfg.scheme = QuadratureScheme::adaptive;
    else if (scheme == "fixed_node")
        cfg.scheme = QuadratureScheme::fixed_node;
    else
        throw ConfigError("quadrature.scheme must be adaptive or fixed_node");
    cfg.fixed_nodes = static_cast<int>(kv.get_unsigned("quadrature.fixed_nodes",
                                                       static_cast<std::uint64_t>(cfg.fixed_nodes)));
    cfg.validate();
    return cfg;
}

/// Measure from a density file (format at the top of this header).
inline TargetMeasure measure_from_config(const KeyValueFile& kv) {
    const SupportInterval support(kv.get_real("lower"), kv.get_real("upper"));
    DensitySpec d;
    d.name = kv.get_string("name", "user");
    const Expression pdf(kv.get_string("pdf"));
    d.pdf = [pdf](double x) { return pdf(x); };
    if (kv.has("cdf")) {
        const Expression cdf(kv.get_string("cdf"));
        d.cdf = [cdf](double x) { return cdf(x); };
    }
    if (kv.has("mean")) d.mean = kv.get_real("mean");
    if (kv.has("diffusion")) {
        const Expression a(kv.get_string("diffusion"));
        d.diffusion = [a](double x) { return a(x); };
    }
    const double mass_tol = kv.get_real("mass_tolerance", 1e-6);
    const QuadratureConfig cfg = quadrature_from(kv);
    kv.require_all_used();
    const double mass = normalize_check(d, support, cfg);
    if (!(std::abs(mass - 1.0) <= mass_tol))
        throw ConfigError("density '" + d.name + "' has total mass " + std::to_string(mass));
    return TargetMeasure(support, std::move(d), cfg);
}

/// Name of a built-in, or "@path" / a path ending in ".cfg" for a density file.
inline TargetMeasure resolve_measure(const std::string& spec, QuadratureConfig cfg = {}) {
    if (!spec.empty() && spec[0] == '@') return measure_from_config(KeyValueFile::load(spec.substr(1)));
    if (spec.size() > 4 && spec.substr(spec.size() - 4) == ".cfg")
        return measure_from_config(KeyValueFile::load(spec));
    return measure_by_name(spec, cfg);
}

}  // namespace steinind
