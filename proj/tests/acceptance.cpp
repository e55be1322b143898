// Acceptance run: one PASS/FAIL line per criterion, with wall time.
//
//   acceptance [--strict] [--only K]
//
// Exit status is 0 when every criterion ran to completion. With --strict a
// FAIL also gives exit status 1. A criterion that throws always fails the run.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "steinind/experiments.hpp"

using namespace steinind;
namespace ex = steinind::experiments;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string title;
    double budget_s;
    std::function<Outcome()> run;
};

std::string failed_checks(const ex::ExperimentReport& rep) {
    std::string s;
    for (const auto& c : rep.checks)
        if (!c.pass) s += "\n      failed: " + c.name + " (" + c.detail + ")";
    return s;
}

std::vector<TargetMeasure> four() { return {gaussian_std(), centered_gamma(), uniform01(), lognormal01()}; }

Outcome closed_forms() {
    double worst = 0.0;
    for (const auto& mu : {uniform01(), gaussian_std(), centered_gamma()})
        for (double x : mu.quantile_grid({201, kEdgeQuantile}))
            worst = std::max(worst, std::abs(mu.diffusion_quadrature(x) - mu.diffusion_coefficient(x)));
    return {worst < 1e-8, "max |a_quad - a_closed| = " + ex::fmt(worst)};
}

Outcome stein_equation() {
    GaussianDraw draw(chunk_stream(2024, 0));
    double res = 0.0, rep = 0.0;
    std::size_t points = 0;
    for (const auto& mu : four())
        for (const auto& h : test_function_family(mu)) {
            const SteinSolver s(mu, h);
            std::vector<double> y(h.dim_y);
            for (int k = 0; k < 500; ++k) {
                const double x = mu.quantile(kEdgeQuantile + (1.0 - 2.0 * kEdgeQuantile) * draw.uniform());
                for (auto& v : y) v = h.y_box * (2.0 * draw.uniform() - 1.0);
                const auto c = s.cross_check(x, y);
                res = std::max(res, std::abs(c.residual));
                rep = std::max(rep, std::abs(c.expsol - c.exp2sol));
                ++points;
            }
        }
    return {res <= 1e-6 && rep <= 1e-7, std::to_string(points) + " points: max residual " + ex::fmt(res) +
                                            ", max |expsol - exp2sol| " + ex::fmt(rep)};
}

Outcome bound_suite() {
    const auto r = ex::cmd_verify({"gaussian", "centered_gamma", "uniform01", "lognormal01"}, {}, 10000);
    return {r.passed(), std::to_string(r.table.rows().size()) + " bound rows, " + std::to_string(r.checks.size()) +
                            " checks" + failed_checks(r)};
}

Outcome chaos_identities() {
    GaussianDraw draw(chunk_stream(4, 0));
    auto gv = [&](Eigen::Index n) {
        Vector v(n);
        for (auto& x : v) x = draw();
        return v;
    };
    double key = 0.0, dudv = 0.0, cross = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const Eigen::Index M = 1 + t % 8;
        Matrix B(M, M);
        for (Eigen::Index i = 0; i < M * M; ++i) B.data()[i] = draw();
        const SecondChaosKernel k(B);
        const Vector xi = gv(M);
        const double b = ChaosVariable::second_chaos(k.matrix()).eval(xi);
        key = std::max(key, std::abs(divergence_linear(k.matrix(), xi) - b) / std::max(1.0, std::abs(b)));
    }
    for (int t = 0; t < 1000; ++t) {
        const long N = 2 + t % 9, m = 1 + (t / 9) % N;
        const auto k = build_gamma_kernels(N, m);
        const auto s = dudv_identity(k.a, k.b, gv(k.M));
        dudv = std::max(dudv, std::abs(s.lhs - s.rhs));
    }
    for (long N = 2; N <= 40; ++N)
        for (long m = 2; m <= N; ++m) {
            const auto k = build_gamma_kernels(N, m);
            cross = std::max(cross, std::abs(exact_cross_moment(N, m) - 2.0 * (k.a.matrix() * k.b.matrix()).trace()));
        }
    return {key <= 1e-12 && dudv <= 1e-12 && cross <= 1e-12,
            "key " + ex::fmt(key) + ", dudv " + ex::fmt(dudv) + ", E[UV] vs 2tr(AB) " + ex::fmt(cross)};
}

Outcome gamma_numbers() {
    const auto g = gamma_pair_moments(3, 3);
    const double brute = brute_contraction_norm(3, 3), closed = exact_contraction_norm_closed_form(3, 3);
    const GammaPairSampler sampler(3, 3);
    const GaussianSampler gs(build_gamma_kernels(3, 3).M, 5, 4096);
    const Matrix xi = gs.sample(100000, 0);
    RunningStats s;
    for (Eigen::Index i = 0; i < xi.rows(); ++i) {
        const double d = sampler.from_coordinates(xi.row(i).transpose()).dudu;
        s.add(d * d);
    }
    const double z = std::abs(s.mean - 72.0) / s.std_error();
    const bool ok = std::abs(g.cross_moment - 3.0) < 1e-12 && std::abs(brute - 1.125) < 1e-12 &&
                    std::abs(closed - 4.5) < 1e-12 && std::abs(g.dudu_second - 72.0) < 1e-12 && z <= 3.0;
    return {ok, "E[UV] " + ex::fmt(g.cross_moment) + ", brute norm " + ex::fmt(brute) + ", closed form " +
                    ex::fmt(closed) + " (ratio " + ex::fmt(closed / brute) + "), E[<DU,DU>^2] " +
                    ex::fmt(g.dudu_second) + ", MC " + ex::fmt(s.mean) + " +/- " + ex::fmt(s.std_error()) +
                    " (z " + ex::fmt(z) + ")"};
}

Outcome experiment(const ex::ExperimentReport& r) {
    std::string d;
    for (const auto& f : r.fits) d += f.name + " slope " + ex::fmt(f.fit.slope) + "; ";
    return {r.passed(), d + std::to_string(r.checks.size()) + " checks" + failed_checks(r)};
}

Outcome gamma_rates() {
    return experiment(ex::cmd_gamma2d(ex::GammaConfig::from(KeyValueFile(), {}), {}));
}

Outcome uniform_example() {
    return experiment(ex::cmd_uniform(ex::UniformConfig::from(KeyValueFile(), {}), {}));
}

Outcome lognormal_example() {
    return experiment(ex::cmd_lognormal(ex::LognormalConfig::from(KeyValueFile(), {}), {}));
}

// Quick sizes: the full-size runs above already exercise the same code.
Outcome determinism() {
    auto serialize = [](const ex::ExperimentReport& r) { return r.table.csv() + ex::json_text(r); };
    auto all = [&](std::size_t workers) {
        ex::RunOptions o;
        o.quick = true;
        o.seed = 17;
        o.workers = workers;
        ex::SelftestOptions so;
        so.quick = true;
        so.seed = 17;
        so.workers = workers;
        std::vector<std::string> out;
        out.push_back(serialize(ex::cmd_selftest(so)));
        out.push_back(serialize(ex::cmd_measure("centered_gamma", o)));
        out.push_back(serialize(ex::cmd_verify({"uniform01", "centered_gamma"}, o, 2000)));
        out.push_back(serialize(ex::cmd_gamma2d(ex::GammaConfig::from(KeyValueFile(), o), o)));
        out.push_back(serialize(ex::cmd_uniform(ex::UniformConfig::from(KeyValueFile(), o), o)));
        out.push_back(serialize(ex::cmd_lognormal(ex::LognormalConfig::from(KeyValueFile(), o), o)));
        return out;
    };
    const auto a1 = all(1), b1 = all(1), a8 = all(8), b8 = all(8);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < a1.size(); ++i) bad += (a1[i] != b1[i]) + (a1[i] != a8[i]) + (a8[i] != b8[i]);
    return {bad == 0, std::to_string(a1.size()) + " outputs x 4 runs (1 and 8 workers), " + std::to_string(bad) +
                          " mismatches"};
}

}  // namespace

int main(int argc, char** argv) {
    bool strict = false;
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--strict")
            strict = true;
        else if (a == "--only" && i + 1 < argc)
            only = std::atoi(argv[++i]);
        else {
            std::cerr << "usage: acceptance [--strict] [--only K]\n";
            return 2;
        }
    }
    const std::vector<Criterion> all = {
        {1, "closed-form diffusion coefficients", 5, closed_forms},
        {2, "Stein equation residual and representations", 60, stein_equation},
        {3, "bound suite on 10^4-node grids", 120, bound_suite},
        {4, "exact chaos identities", 10, chaos_identities},
        {5, "N = m = 3 values", 10, gamma_numbers},
        {6, "Gamma rates", 600, gamma_rates},
        {7, "uniform example", 300, uniform_example},
        {8, "lognormal example", 600, lognormal_example},
        {9, "determinism at 1 and 8 workers", kInf, determinism},
    };
    int failures = 0, errors = 0;
    for (const auto& c : all) {
        if (only && c.id != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        bool errored = false;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
            errored = true;
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string timing = ex::fmt(std::round(secs * 10.0) / 10.0) + " s";
        if (std::isfinite(c.budget_s)) {
            timing += " of " + ex::fmt(c.budget_s) + " s";
            if (secs > c.budget_s) {
                o.pass = false;
                o.detail += "; over the time budget";
            }
        }
        std::printf("%s  criterion %d: %s [%s]\n      %s\n", o.pass ? "PASS" : "FAIL", c.id, c.title.c_str(),
                    timing.c_str(), o.detail.c_str());
        std::fflush(stdout);
        failures += !o.pass;
        errors += errored;
    }
    std::printf("%d criteria failed\n", failures);
    if (errors) return 1;
    return strict && failures ? 1 : 0;
}
