#pragma once

// Empirical Wasserstein-1 between equal-size, equal-weight point clouds, and
// log-log rate fits.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "steinind/error.hpp"
#include "steinind/parallel.hpp"

namespace steinind {

/// n points in R^d, one per row.
class SampleCloud {
public:
    SampleCloud(Eigen::MatrixXd data, std::string label = {}) : data_(std::move(data)), label_(std::move(label)) {
        if (data_.rows() < 1 || data_.cols() < 1) throw ConfigError("sample cloud '" + label_ + "' is empty");
        if (!data_.allFinite()) throw ConfigError("sample cloud '" + label_ + "' has non-finite entries");
    }

    static SampleCloud from_values(const std::vector<double>& v, std::string label = {}) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
        for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = v[i];
        return SampleCloud(std::move(m), std::move(label));
    }

    Eigen::Index size() const noexcept { return data_.rows(); }
    Eigen::Index dim() const noexcept { return data_.cols(); }
    const Eigen::MatrixXd& data() const noexcept { return data_; }
    const std::string& label() const noexcept { return label_; }

private:
    Eigen::MatrixXd data_;
    std::string label_;
};

namespace detail {

inline void require_same_size(const SampleCloud& a, const SampleCloud& b) {
    if (a.size() != b.size())
        throw ConfigError("clouds have different sizes (" + std::to_string(a.size()) + " and " +
                          std::to_string(b.size()) + ")");
    if (a.dim() != b.dim()) throw ConfigError("clouds have different dimensions");
}

}  // namespace detail

/// 1D: the sorted coupling is optimal.
inline double w1_1d(const SampleCloud& a, const SampleCloud& b) {
    detail::require_same_size(a, b);
    if (a.dim() != 1) throw ConfigError("w1_1d needs one-dimensional clouds");
    std::vector<double> x(a.data().col(0).begin(), a.data().col(0).end());
    std::vector<double> y(b.data().col(0).begin(), b.data().col(0).end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += std::abs(x[i] - y[i]);
    return s / static_cast<double>(x.size());
}

/// Minimum-cost perfect matching on a dense n×n cost matrix (row-major),
/// shortest augmenting paths with potentials, O(n³). Returns the column
/// assigned to each row.
inline std::vector<int> min_cost_assignment(const std::vector<double>& cost, int n) {
    if (n < 0 || cost.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
        throw ConfigError("assignment cost matrix must be n x n");
    const double inf = std::numeric_limits<double>::infinity();
    // 1-based with a virtual column 0, as in the classical formulation.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * static_cast<std::size_t>(n);
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = row[j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<int> row_to_col(n);
    for (int j = 1; j <= n; ++j) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

inline constexpr Eigen::Index kAssignmentCap = 4096;

/// Exact empirical W1 under Euclidean cost.
inline double w1_exact(const SampleCloud& a, const SampleCloud& b, Eigen::Index cap = kAssignmentCap,
                       std::size_t workers = 0) {
    detail::require_same_size(a, b);
    const Eigen::Index n = a.size();
    if (n > cap)
        throw ConfigError("exact W1 is capped at " + std::to_string(cap) + " points; subsample the clouds (got " +
                          std::to_string(n) + ")");
    const auto un = static_cast<std::size_t>(n);
    std::vector<double> cost(un * un);
    const auto& A = a.data();
    const auto& B = b.data();
    parallel_map<int>(
        un,
        [&](std::size_t i) {
            for (std::size_t j = 0; j < un; ++j)
                cost[i * un + j] =
                    (A.row(static_cast<Eigen::Index>(i)) - B.row(static_cast<Eigen::Index>(j))).norm();
            return 0;
        },
        workers);
    const auto match = min_cost_assignment(cost, static_cast<int>(n));
    double s = 0.0;
    for (std::size_t i = 0; i < un; ++i) s += cost[i * un + static_cast<std::size_t>(match[i])];
    return s / static_cast<double>(n);
}

/// Least squares of log(value) on log(scale).
struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double residual_rms = 0.0;
    std::size_t points = 0;
};

inline RateFit rate_fit(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw ConfigError("a rate fit needs at least 3 points");
    double sx = 0.0, sy = 0.0;
    std::vector<double> lx, ly;
    for (const auto& [s, v] : points) {
        if (!(s > 0.0) || !(v > 0.0) || !std::isfinite(s) || !std::isfinite(v))
            throw ConfigError("rate fit needs positive finite scales and values");
        lx.push_back(std::log(s));
        ly.push_back(std::log(v));
        sx += lx.back();
        sy += ly.back();
    }
    const double n = static_cast<double>(points.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
    }
    if (!(sxx > 0.0)) throw ConfigError("rate fit needs at least two distinct scales");
    RateFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < lx.size(); ++i) {
        const double r = ly[i] - (f.intercept + f.slope * lx[i]);
        rss += r * r;
    }
    f.residual_rms = std::sqrt(rss / n);
    f.points = points.size();
    return f;
}

}  // namespace steinind
