#pragma once

// Wiener chaos of order <= 2 over an orthonormal basis e_1..e_M, written in
// the coordinates ξ_i = W(e_i):
//     X = c0 + c·ξ + (ξᵀKξ - tr K),   K symmetric,
// so I_1(c) = c·ξ, I_2(e_i ⊗ e_i) = ξ_i² - 1 and I_2(e_i ⊗~ e_j) = ξ_i ξ_j.
// Then DX = c + 2Kξ, (-L)⁻¹X = (0, c, K/2) and E[I_2(f) I_2(g)] = 2⟨f, g⟩.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "steinind/error.hpp"
#include "steinind/parallel.hpp"
#include "steinind/random.hpp"

namespace steinind {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

namespace detail {

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
    if (got != want)
        throw ConfigError(std::string(what) + ": dimension " + std::to_string(got) + " where " +
                          std::to_string(want) + " was expected");
}

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw ConfigError(std::string(what) + " has non-finite entries");
}

}  // namespace detail

struct FirstChaosVector {
    Vector c;

    explicit FirstChaosVector(Vector coeffs) : c(std::move(coeffs)) { detail::require_finite(c, "first-chaos vector"); }

    /// W(e_n).
    static FirstChaosVector unit(Eigen::Index M, Eigen::Index n) {
        if (n < 0 || n >= M) throw ConfigError("unit direction " + std::to_string(n) + " outside 0.." + std::to_string(M - 1));
        Vector c = Vector::Zero(M);
        c(n) = 1.0;
        return FirstChaosVector(c);
    }

    Eigen::Index dim() const noexcept { return c.size(); }
};

/// Symmetric coefficient matrix of an order-2 multiple integral. The input is
/// symmetrized on construction.
class SecondChaosKernel {
public:
    explicit SecondChaosKernel(const Matrix& k) {
        detail::require_dim(k.rows(), k.cols(), "second-chaos kernel must be square");
        detail::require_finite(k, "second-chaos kernel");
        k_ = 0.5 * (k + k.transpose());
    }

    static SecondChaosKernel zero(Eigen::Index M) { return SecondChaosKernel(Matrix::Zero(M, M)); }

    const Matrix& matrix() const noexcept { return k_; }
    Eigen::Index dim() const noexcept { return k_.rows(); }
    double trace() const { return k_.trace(); }
    double squared_norm() const { return k_.squaredNorm(); }

private:
    Matrix k_;
};

class ChaosVariable {
public:
    ChaosVariable(double c0, FirstChaosVector first, SecondChaosKernel second)
        : c0_(c0), first_(std::move(first)), second_(std::move(second)) {
        detail::require_dim(first_.dim(), second_.dim(), "chaos components");
        if (!std::isfinite(c0_)) throw ConfigError("chaos constant is not finite");
    }

    static ChaosVariable first_chaos(Vector c) {
        const auto M = c.size();
        return {0.0, FirstChaosVector(std::move(c)), SecondChaosKernel::zero(M)};
    }

    static ChaosVariable second_chaos(const Matrix& k) {
        return {0.0, FirstChaosVector(Vector::Zero(k.rows())), SecondChaosKernel(k)};
    }

    Eigen::Index dim() const noexcept { return first_.dim(); }
    double constant() const noexcept { return c0_; }
    const Vector& first() const noexcept { return first_.c; }
    const Matrix& kernel() const noexcept { return second_.matrix(); }

    /// c0 + c·ξ + ξᵀKξ - tr K.
    double eval(const Vector& xi) const {
        detail::require_dim(xi.size(), dim(), "eval");
        return c0_ + first_.c.dot(xi) + xi.dot(second_.matrix() * xi) - second_.trace();
    }

    /// c + 2Kξ.
    Vector malliavin_D(const Vector& xi) const {
        detail::require_dim(xi.size(), dim(), "malliavin_D");
        return first_.c + 2.0 * (second_.matrix() * xi);
    }

    /// (0, c, K/2); the constant is dropped.
    ChaosVariable inverse_L() const {
        return {0.0, first_, SecondChaosKernel(0.5 * second_.matrix())};
    }

    double mean() const noexcept { return c0_; }

    /// ‖c‖² + 2‖K‖²_F.
    double variance() const { return first_.c.squaredNorm() + 2.0 * second_.squared_norm(); }

private:
    double c0_;
    FirstChaosVector first_;
    SecondChaosKernel second_;
};

/// δ(u) for the linear field u(ξ) = Bξ: ξᵀBξ - tr B.
inline double divergence_linear(const Matrix& B, const Vector& xi) {
    detail::require_dim(B.rows(), B.cols(), "divergence field must be square");
    detail::require_dim(xi.size(), B.rows(), "divergence_linear");
    return xi.dot(B * xi) - B.trace();
}

/// E[I_2(K1) I_2(K2)] = 2 tr(K1 K2).
inline double isometry_inner(const SecondChaosKernel& k1, const SecondChaosKernel& k2) {
    detail::require_dim(k1.dim(), k2.dim(), "isometry_inner");
    return 2.0 * k1.matrix().cwiseProduct(k2.matrix()).sum();
}

/// How the 1-contraction is turned into an order-2 kernel. `unsymmetrized`
/// exists only so the self-test can check that it catches the mistake.
enum class ContractionMode { symmetrized, unsymmetrized };

struct Contraction {
    Matrix raw;     // K1 K2
    Matrix kernel;  // sym(K1 K2), or K1 K2 under ContractionMode::unsymmetrized
};

inline Contraction contract1(const SecondChaosKernel& k1, const SecondChaosKernel& k2,
                             ContractionMode mode = ContractionMode::symmetrized) {
    detail::require_dim(k1.dim(), k2.dim(), "contract1");
    Contraction c;
    c.raw = k1.matrix() * k2.matrix();
    c.kernel = mode == ContractionMode::symmetrized ? Matrix(0.5 * (c.raw + c.raw.transpose())) : c.raw;
    return c;
}

struct DudvSides {
    double lhs;
    double rhs;
};

/// ⟨DU, DV⟩ for U = I_2(K1), V = I_2(K2), against its chaos decomposition
///     4 tr(K1 K2) + 4 I_2(K1 ⊗~_1 K2) = 2 E[UV] + 4 I_2(K1 ⊗~_1 K2).
inline DudvSides dudv_identity(const SecondChaosKernel& k1, const SecondChaosKernel& k2, const Vector& xi,
                               ContractionMode mode = ContractionMode::symmetrized) {
    detail::require_dim(xi.size(), k1.dim(), "dudv_identity");
    const Vector du = 2.0 * (k1.matrix() * xi);
    const Vector dv = 2.0 * (k2.matrix() * xi);
    const Contraction c = contract1(k1, k2, mode);
    const double tr = c.raw.trace();
    return {du.dot(dv), 4.0 * tr + 4.0 * (xi.dot(c.kernel * xi) - c.kernel.trace())};
}

/// E[(4 ξᵀQξ)²] = 16 [(tr Q)² + 2 ‖Q‖²_F] for the kernel Q of a contraction.
/// Valid only for symmetric Q, which is why the kernel must be symmetrized.
inline double quadratic_form_second_moment(const Matrix& q) {
    const double t = q.trace();
    return 16.0 * (t * t + 2.0 * q.squaredNorm());
}

// ---------------------------------------------------------------------------
// The pair U_N = I_2(a_N), V_N = I_2(b_N):
//   a_N = (2/(N-1)) Σ_{i<j<=N} h_i ⊗~ h_j,   b_N the same over g_1..g_N,
// with g_i = h_i for i <= m and g_i = e_i (new directions) for i > m.
// Coordinates: h_i -> slot i-1; e_{m+1}..e_N -> slots N..2N-m-1.

struct GammaPair {
    SecondChaosKernel a;
    SecondChaosKernel b;
    Eigen::Index M;
};

inline void validate_gamma_pair(long N, long m) {
    if (N < 2) throw ConfigError("N must be at least 2");
    if (m < 1 || m > N) throw ConfigError("m must satisfy 1 <= m <= N");
}

inline GammaPair build_gamma_kernels(long N, long m) {
    validate_gamma_pair(N, m);
    const Eigen::Index M = 2 * N - m;
    const double v = 1.0 / static_cast<double>(N - 1);
    Matrix A = Matrix::Zero(M, M), B = Matrix::Zero(M, M);
    std::vector<Eigen::Index> g(static_cast<std::size_t>(N));
    for (long i = 0; i < N; ++i) g[static_cast<std::size_t>(i)] = i < m ? i : N + (i - m);
    for (long i = 0; i < N; ++i)
        for (long j = 0; j < N; ++j)
            if (i != j) {
                A(i, j) = v;
                B(g[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(j)]) = v;
            }
    return {SecondChaosKernel(A), SecondChaosKernel(B), M};
}

/// E[U_N V_N] = 2 m (m - 1) / (N - 1)².
inline double exact_cross_moment(long N, long m) {
    validate_gamma_pair(N, m);
    const double n1 = static_cast<double>(N - 1);
    return 2.0 * static_cast<double>(m) * static_cast<double>(m - 1) / (n1 * n1);
}

/// Closed form (4 m (m-1) / (N-1)⁴) [(N-1) + (m-2)(N-2)]; a different
/// normalization, 4x the brute-force norm at N = m = 3.
inline double exact_contraction_norm_closed_form(long N, long m) {
    validate_gamma_pair(N, m);
    const double n1 = static_cast<double>(N - 1), md = static_cast<double>(m);
    return 4.0 * md * (md - 1.0) / std::pow(n1, 4) * (n1 + (md - 2.0) * static_cast<double>(N - 2));
}

/// ‖A B‖²_F from explicit matrices.
inline double brute_contraction_norm(long N, long m) {
    const GammaPair k = build_gamma_kernels(N, m);
    return contract1(k.a, k.b).raw.squaredNorm();
}

/// Exact moments of the pair, by counting shared indices. With O the m shared
/// slots, P the other N - m slots of a_N and E those of b_N, the entry
/// (AB)_{ik} is (N-1)^{-2} times the number of j in O with j != i, j != k.
struct GammaPairMoments {
    double trace_ab;         // tr(AB)
    double raw_norm;         // ‖AB‖²_F
    double trace_abab;       // tr(ABAB)
    double sym_norm;         // ‖sym(AB)‖²_F
    double cross_moment;     // E[UV] = 2 tr(AB)
    double dudv_second;      // E[⟨DU, DV⟩²]
    double dudu_second;      // E[⟨DU, DU⟩²]
};

inline GammaPairMoments gamma_pair_moments(long N, long m) {
    validate_gamma_pair(N, m);
    const double n = static_cast<double>(N), md = static_cast<double>(m);
    const double d2 = (n - 1.0) * (n - 1.0), d4 = d2 * d2;
    GammaPairMoments r{};
    r.trace_ab = md * (md - 1.0) / d2;
    const double oo = md * (md - 1.0) * (md - 1.0) + md * (md - 1.0) * (md - 2.0) * (md - 2.0);
    r.raw_norm = (oo + 2.0 * md * (n - md) * (md - 1.0) * (md - 1.0) + (n - md) * (n - md) * md * md) / d4;
    r.trace_abab = oo / d4;
    r.sym_norm = 0.5 * (r.raw_norm + r.trace_abab);
    r.cross_moment = 2.0 * r.trace_ab;
    r.dudv_second = 16.0 * (r.trace_ab * r.trace_ab + 2.0 * r.sym_norm);
    // A² has n(n-1)... entries: (A²)_ii = 1/(N-1), (A²)_ij = (N-2)/(N-1)².
    const double tr_a2 = n / (n - 1.0);
    const double a2_norm = n / d2 + n * (n - 1.0) * (n - 2.0) * (n - 2.0) / d4;
    r.dudu_second = 16.0 * (tr_a2 * tr_a2 + 2.0 * a2_norm);
    return r;
}

/// E[⟨DU, DV⟩²] from explicit matrices.
inline double second_moment_dudv(long N, long m, ContractionMode mode = ContractionMode::symmetrized) {
    const GammaPair k = build_gamma_kernels(N, m);
    return quadratic_form_second_moment(contract1(k.a, k.b, mode).kernel);
}

/// One draw of the statistics of (U_N, V_N) needed downstream, in O(1) time
/// for any N: only block sums and sums of squares of ξ enter.
struct GammaPairSample {
    double U;
    double V;
    double dudu;  // ⟨DU, DU⟩
    double dudv;  // ⟨DU, DV⟩
    double dvdv;  // ⟨DV, DV⟩
};

class GammaPairSampler {
public:
    GammaPairSampler(long N, long m) : N_(N), m_(m) { validate_gamma_pair(N, m); }

    GammaPairSample operator()(GaussianDraw& draw) const {
        const auto block = [&](long n, double& s, double& q) {
            if (n <= 0) {
                s = q = 0.0;
                return;
            }
            // Sum and sum of squares of n iid N(0,1): s = √n z, q = z² + χ²_{n-1}.
            const double z = draw();
            s = std::sqrt(static_cast<double>(n)) * z;
            q = z * z + draw.chi_squared(static_cast<double>(n - 1));
        };
        double sO, qO, sP, qP, sE, qE;
        block(m_, sO, qO);
        block(N_ - m_, sP, qP);
        block(N_ - m_, sE, qE);
        return from_blocks(sO, qO, sP, qP, sE, qE);
    }

    /// Same statistics from a full coordinate vector (slot layout of
    /// build_gamma_kernels); used to validate the block sampler.
    GammaPairSample from_coordinates(const Vector& xi) const {
        detail::require_dim(xi.size(), 2 * N_ - m_, "gamma pair coordinates");
        const auto sum = [&](Eigen::Index from, Eigen::Index n, double& s, double& q) {
            s = xi.segment(from, n).sum();
            q = xi.segment(from, n).squaredNorm();
        };
        double sO, qO, sP, qP, sE, qE;
        sum(0, m_, sO, qO);
        sum(m_, N_ - m_, sP, qP);
        sum(N_, N_ - m_, sE, qE);
        return from_blocks(sO, qO, sP, qP, sE, qE);
    }

    long N() const noexcept { return N_; }
    long m() const noexcept { return m_; }

private:
    GammaPairSample from_blocks(double sO, double qO, double sP, double qP, double sE, double qE) const {
        const double n1 = static_cast<double>(N_ - 1), n = static_cast<double>(N_);
        const double sH = sO + sP, qH = qO + qP, sG = sO + sE, qG = qO + qE;
        GammaPairSample r{};
        r.U = (sH * sH - qH) / n1;
        r.V = (sG * sG - qG) / n1;
        r.dudu = 4.0 * ((n - 2.0) * sH * sH + qH) / (n1 * n1);
        r.dvdv = 4.0 * ((n - 2.0) * sG * sG + qG) / (n1 * n1);
        r.dudv = 4.0 * (static_cast<double>(m_) * sH * sG - sO * (sH + sG) + qO) / (n1 * n1);
        return r;
    }

    long N_;
    long m_;
};

// ---------------------------------------------------------------------------
// Sampling.

/// n × M standard Gaussian draws, chunked by rows; identical for any worker
/// count.
class GaussianSampler {
public:
    GaussianSampler(Eigen::Index M, std::uint64_t seed, std::size_t chunk_rows = 1024)
        : M_(M), seed_(seed), chunk_(chunk_rows) {
        if (M < 1) throw ConfigError("sampler dimension must be positive");
        if (chunk_rows == 0) throw ConfigError("chunk size must be positive");
    }

    Matrix sample(std::size_t n, std::size_t workers = 0) const {
        Matrix out(static_cast<Eigen::Index>(n), M_);
        const std::size_t chunks = (n + chunk_ - 1) / chunk_;
        parallel_map<int>(
            chunks,
            [&](std::size_t c) {
                GaussianDraw draw(chunk_stream(seed_, c));
                const std::size_t end = std::min(n, (c + 1) * chunk_);
                for (std::size_t r = c * chunk_; r < end; ++r)
                    for (Eigen::Index j = 0; j < M_; ++j) out(static_cast<Eigen::Index>(r), j) = draw();
                return 0;
            },
            workers);
        return out;
    }

    Eigen::Index dim() const noexcept { return M_; }
    std::uint64_t seed() const noexcept { return seed_; }

private:
    Eigen::Index M_;
    std::uint64_t seed_;
    std::size_t chunk_;
};

/// Kernel as CSV rows, for debugging.
inline std::string kernel_csv(const Matrix& k) {
    std::string out;
    char buf[32];
    for (Eigen::Index i = 0; i < k.rows(); ++i) {
        for (Eigen::Index j = 0; j < k.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", k(i, j));
            out += buf;
            out += j + 1 < k.cols() ? ',' : '\n';
        }
    }
    return out;
}

}  // namespace steinind
