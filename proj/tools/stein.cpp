// stein: command-line driver for the experiments.
//
//   stein measure NAME          tabulate a, S and the edge diagnostics
//   stein verify [NAME...]      check the Stein-factor bounds
//   stein gamma2d | uniform | lognormal
//   stein selftest [--fault unsymmetrized-contraction]
//
// Exit codes: 0 success, 1 invariant failure, 2 configuration error.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "steinind/experiments.hpp"

namespace ex = steinind::experiments;

namespace {

struct Shared {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::string out = "out";
    std::string config;
    bool quick = false;
    bool svg = false;
};

void add_shared(CLI::App* app, Shared& s) {
    app->add_option("--seed", s.seed, "master seed (default 1)");
    app->add_option("--samples", s.samples, "Monte Carlo sample count for the main estimators");
    app->add_option("--out", s.out, "output directory")->capture_default_str();
    app->add_option("--config", s.config, "flat key = value file; flags override it");
    app->add_flag("--quick", s.quick, "reduced sizes");
    app->add_flag("--svg", s.svg, "also write a log-log SVG of the rate fits");
}

steinind::KeyValueFile load(const Shared& s) {
    auto kv = s.config.empty() ? steinind::KeyValueFile() : steinind::KeyValueFile::load(s.config);
    if (s.seed) kv.set("seed", std::to_string(*s.seed));
    if (s.samples) kv.set("samples", std::to_string(*s.samples));
    return kv;
}

ex::RunOptions options(const Shared& s) {
    ex::RunOptions o;
    o.seed = s.seed.value_or(1);
    o.quick = s.quick;
    return o;
}

int finish(const ex::ExperimentReport& rep, const Shared& s) {
    const auto paths = ex::write_report(rep, s.out, s.svg);
    std::cout << ex::check_table(rep);
    for (const auto& p : paths) std::cout << "wrote " << p << '\n';
    return rep.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stein-method bounds for asymptotic independence"};
    app.require_subcommand(1);

    Shared s;
    std::string measure_name;
    std::size_t measure_nodes = 201;
    auto* measure = app.add_subcommand("measure", "tabulate a target measure");
    measure->add_option("name", measure_name, "gaussian, centered_gamma, uniform01, lognormal01, beta:A,B or @file")
        ->required();
    measure->add_option("--nodes", measure_nodes, "quantile grid size")->capture_default_str();
    add_shared(measure, s);

    std::vector<std::string> verify_names;
    std::size_t verify_nodes = 10000;
    auto* verify = app.add_subcommand("verify", "check the Stein-factor bounds on a grid");
    verify->add_option("names", verify_names, "measures (default: the four built-ins)");
    verify->add_option("--nodes", verify_nodes, "quantile grid size")->capture_default_str();
    add_shared(verify, s);

    auto* gamma = app.add_subcommand("gamma2d", "Gamma pair from the second chaos");
    add_shared(gamma, s);
    auto* uniform = app.add_subcommand("uniform", "uniform pair with correlation rho");
    add_shared(uniform, s);
    auto* lognormal = app.add_subcommand("lognormal", "lognormal functional against coordinates");
    add_shared(lognormal, s);

    std::string fault;
    auto* selftest = app.add_subcommand("selftest", "run the invariant suite");
    selftest->add_option("--fault", fault, "inject a fault: unsymmetrized-contraction")
        ->check(CLI::IsMember({"unsymmetrized-contraction"}));
    add_shared(selftest, s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto opt = options(s);
        if (*measure) {
            if (!s.config.empty()) load(s).require_all_used();
            return finish(ex::cmd_measure(measure_name, opt, measure_nodes), s);
        }
        if (*verify) {
            if (verify_names.empty()) verify_names = {"gaussian", "centered_gamma", "uniform01", "lognormal01"};
            return finish(ex::cmd_verify(verify_names, opt, s.quick ? 2000 : verify_nodes), s);
        }
        if (*gamma) return finish(ex::cmd_gamma2d(ex::GammaConfig::from(load(s), opt), opt), s);
        if (*uniform) return finish(ex::cmd_uniform(ex::UniformConfig::from(load(s), opt), opt), s);
        if (*lognormal) return finish(ex::cmd_lognormal(ex::LognormalConfig::from(load(s), opt), opt), s);
        if (*selftest) {
            ex::SelftestOptions so;
            so.seed = opt.seed;
            so.quick = s.quick;
            if (fault == "unsymmetrized-contraction") so.contraction = steinind::ContractionMode::unsymmetrized;
            return finish(ex::cmd_selftest(so), s);
        }
    } catch (const steinind::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "output error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
