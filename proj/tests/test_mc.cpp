#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include "cirbubble/closed_form.hpp"
#include "cirbubble/mc.hpp"
#include "cirbubble/model.hpp"

using namespace cirbubble;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

const model_params set_high_theta1{0.2, 0.1, 0.04, 0.02, 0.02, 0.02, 0.02};
const model_params set_low_theta1{0.2, 0.1, 0.015, 0.02, 0.02, 0.02, 0.02};
const model_params set_wide_band{0.2, 0.1, 0.04, 0.02, 0.02, 0.02, 0.05};
const model_params set_one_group{0.2, 0.2, 0.04, 0.04, 0.02, 0.02, 0.02};

sim_config base_config() {
    sim_config cfg;
    cfg.group = 1;
    cfg.d0 = 0.05;
    cfg.horizon = 1.0;
    cfg.dt = 0.1;
    cfg.paths = 10;
    cfg.seed = 1;
    return cfg;
}

}  // namespace

TEST_CASE("sim_config validation") {
    auto cfg = base_config();
    cfg.group = 3;
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);
    cfg = base_config();
    cfg.d0 = -0.01;
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);
    cfg = base_config();
    cfg.dt = 0.0;
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);
    cfg = base_config();
    cfg.horizon = 0.05;  // < dt
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);
    cfg = base_config();
    cfg.paths = 0;
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);

    model_params bad = set_high_theta1;
    bad.sigma1 = 1.0;  // Feller ratio far below one
    REQUIRE_THROWS_AS(simulate_paths(bad, base_config()), std::invalid_argument);

    cfg = base_config();
    cfg.paths = 1000000;
    cfg.horizon = 1000.0;
    cfg.dt = 0.01;
    REQUIRE_THROWS_AS(simulate_paths(set_high_theta1, cfg), std::invalid_argument);
}

TEST_CASE("estimator argument validation") {
    auto cfg = base_config();
    cfg.horizon = 100.0;  // < 12/lambda = 600
    REQUIRE_THROWS_AS(mc_intrinsic(set_high_theta1, 1, 0.05, cfg), std::invalid_argument);

    const auto ident = [](double d) { return d; };
    model_params eq = set_high_theta1;
    eq.kappa2 = eq.kappa1;
    eq.theta2 = eq.theta1;
    REQUIRE_THROWS_AS(mc_stopping_value(eq, 1, 0.05, 0.06, ident, base_config()),
                      std::domain_error);
    const double nan = std::nan("");
    REQUIRE_THROWS_AS(mc_stopping_value(set_high_theta1, 1, 0.05, nan, ident, base_config()),
                      std::invalid_argument);

    REQUIRE_THROWS_AS(conditional_mean_check(set_one_group, 1, 0.1, -1.0, base_config()),
                      std::invalid_argument);
}

TEST_CASE("path ensembles are deterministic and schedule-independent") {
    auto cfg = base_config();
    cfg.paths = 10;
    cfg.seed = 42;
    const auto a = simulate_paths(set_high_theta1, cfg);
    const auto b = simulate_paths(set_high_theta1, cfg);
    REQUIRE(a.data == b.data);

    cfg.paths = 5;  // prefix of the same ensemble: per-path substreams
    const auto c = simulate_paths(set_high_theta1, cfg);
    for (long long k = 0; k < c.paths; ++k)
        for (std::size_t j = 0; j < c.times.size(); ++j)
            REQUIRE(c.at(k, j) == a.at(k, j));

    cfg.paths = 10;
    cfg.seed = 43;
    const auto d = simulate_paths(set_high_theta1, cfg);
    REQUIRE(d.data != a.data);
}

TEST_CASE("ensemble layout") {
    auto cfg = base_config();
    cfg.horizon = 0.95;  // not a multiple of dt: grid extends past the horizon
    cfg.dt = 0.1;
    cfg.paths = 3;
    const auto e = simulate_paths(set_high_theta1, cfg);
    REQUIRE(e.times.size() == 11);
    REQUIRE(e.times.front() == 0.0);
    REQUIRE_THAT(e.times.back(), WithinAbs(1.0, 1e-15));
    REQUIRE(e.paths == 3);
    REQUIRE(e.data.size() == 33);
    for (long long k = 0; k < e.paths; ++k) REQUIRE(e.at(k, 0) == cfg.d0);
}

TEST_CASE("exact transitions stay strictly positive") {
    auto cfg = base_config();
    cfg.d0 = 0.0;  // first step must leave zero immediately
    cfg.horizon = 5.0;
    cfg.dt = 0.05;
    cfg.paths = 500;
    cfg.seed = 7;
    const auto e = simulate_paths(set_high_theta1, cfg);
    for (long long k = 0; k < e.paths; ++k)
        for (std::size_t j = 1; j < e.times.size(); ++j) REQUIRE(e.at(k, j) > 0.0);

    // Feller ratio exactly one: the gamma shape drops to 1/2
    const double sig = std::sqrt(2.0 * 0.2 * 0.04);
    const model_params edge{0.2, 0.2, 0.04, 0.04, sig, sig, 0.02};
    cfg.d0 = 1e-4;
    cfg.horizon = 10.0;
    cfg.dt = 0.1;
    cfg.paths = 2000;
    cfg.seed = 44;
    const auto f = simulate_paths(edge, cfg);
    for (double v : f.data) REQUIRE(v > 0.0);
}

TEST_CASE("conditional mean check") {
    sim_config cfg;
    cfg.paths = 100000;
    cfg.seed = 12345;

    SECTION("t = 0 returns the start point with zero error") {
        cfg.paths = 50;
        const auto est = conditional_mean_check(set_one_group, 1, 0.1, 0.0, cfg);
        REQUIRE(est.mean == 0.1);
        REQUIRE(est.std_error == 0.0);
        REQUIRE(est.paths == 50);
    }

    SECTION("started at theta the mean stays at theta") {
        cfg.paths = 40000;
        cfg.seed = 9;
        const auto est = conditional_mean_check(set_one_group, 1, 0.04, 3.0, cfg);
        REQUIRE_THAT(est.mean, WithinAbs(0.04, 3.0 * est.std_error));
    }

    SECTION("transient mean matches the exponential-decay formula") {
        const auto est = conditional_mean_check(set_one_group, 1, 0.1, 5.0, cfg);
        const double target = conditional_mean(set_one_group, 1, 0.1, 5.0);
        REQUIRE_THAT(target, WithinRel(0.0620727664702865392957, 1e-12));
        REQUIRE_THAT(est.mean, WithinAbs(target, 3.0 * est.std_error));
        REQUIRE(est.std_error < 1e-4);
    }
}

TEST_CASE("ensemble variance matches the conditional variance") {
    sim_config cfg;
    cfg.group = 1;
    cfg.d0 = 0.1;
    cfg.horizon = 5.0;
    cfg.dt = 1.0;
    cfg.paths = 100000;
    cfg.seed = 777;
    const auto ens = simulate_paths(set_one_group, cfg);
    const std::size_t last = ens.times.size() - 1;
    double s = 0.0;
    for (long long k = 0; k < ens.paths; ++k) s += ens.at(k, last);
    const double mean = s / static_cast<double>(ens.paths);
    double s2 = 0.0, s4 = 0.0;
    for (long long k = 0; k < ens.paths; ++k) {
        const double c = ens.at(k, last) - mean;
        s2 += c * c;
        s4 += c * c * c * c;
    }
    const double var = s2 / static_cast<double>(ens.paths - 1);
    const double mu4 = s4 / static_cast<double>(ens.paths);
    const double se_var = std::sqrt((mu4 - var * var) / static_cast<double>(ens.paths));
    const double target = conditional_variance(set_one_group, 1, 0.1, 5.0);
    REQUIRE_THAT(target, WithinRel(6.24918876227150478884e-5, 1e-12));
    REQUIRE_THAT(var, WithinAbs(target, 5.0 * se_var));
}

TEST_CASE("discounted dividend value: flat one-group set") {
    // kappa1 = kappa2, theta1 = theta2 started at theta: value is theta/lambda
    const model_params flat{0.1, 0.1, 0.02, 0.02, 0.02, 0.02, 0.02};
    sim_config cfg;
    cfg.horizon = 600.0;
    cfg.dt = 1.0;
    cfg.paths = 20000;
    cfg.seed = 31;
    const auto est = mc_intrinsic(flat, 1, 0.02, cfg);
    REQUIRE_THAT(est.mean, WithinAbs(1.0, 3.0 * est.std_error));
    REQUIRE(est.std_error < 2e-3);
}

TEST_CASE("discounted dividend value separates the two beliefs") {
    sim_config cfg;
    cfg.horizon = 600.0;
    cfg.dt = 1.0;
    cfg.paths = 20000;
    cfg.seed = 32;
    const double d0 = 0.02;
    const auto e2 = mc_intrinsic(set_low_theta1, 2, d0, cfg);
    const auto e1 = mc_intrinsic(set_low_theta1, 1, d0, cfg);
    const double a2 = group_value(set_low_theta1, 2, d0);
    const double a1 = group_value(set_low_theta1, 1, d0);
    REQUIRE(a2 == intrinsic_value(set_low_theta1, d0));
    REQUIRE_THAT(e2.mean, WithinAbs(a2, 3.0 * e2.std_error));
    REQUIRE_THAT(e1.mean, WithinAbs(a1, 3.0 * e1.std_error));
    // the lower-value belief sits far below the intrinsic envelope
    REQUIRE(e1.mean + 3.0 * e1.std_error < a2);
}

TEST_CASE("stopping value: immediate stop returns the continuation exactly") {
    sim_config cfg;
    cfg.horizon = 1.0;
    cfg.dt = 0.02;
    cfg.paths = 100;
    cfg.seed = 5;
    const double d0 = 0.10;
    const auto est = mc_stopping_value(
        set_high_theta1, 2, d0, d0, [](double d) { return intrinsic_value(set_high_theta1, d); },
        cfg);
    REQUIRE(est.mean == intrinsic_value(set_high_theta1, d0));
    REQUIRE(est.std_error == 0.0);
}

TEST_CASE("stopping value: holding one period at the kink beats stopping now") {
    // unreachable barrier caps the rule at the horizon, so tau = 1 on every path
    sim_config cfg;
    cfg.horizon = 1.0;
    cfg.dt = 0.02;
    cfg.paths = 50000;
    cfg.seed = 6;
    const double d0 = 0.26;  // kink of the intrinsic envelope
    const auto est = mc_stopping_value(
        set_high_theta1, 2, d0, 1e300,
        [](double d) { return intrinsic_value(set_high_theta1, d); }, cfg);
    const double iv = intrinsic_value(set_high_theta1, d0);
    REQUIRE(est.mean - iv > 3.0 * est.std_error);
}

TEST_CASE("stopping value with the closed-form continuation recovers the price") {
    struct probe {
        const model_params* p;
        double d0;
        std::uint64_t seed;
    };
    const probe probes[] = {{&set_high_theta1, 0.08, 1800}, {&set_high_theta1, 0.10, 2000},
                            {&set_low_theta1, 0.002, 1020}, {&set_low_theta1, 0.005, 1050},
                            {&set_wide_band, 0.03, 1300},   {&set_wide_band, 0.05, 1500}};
    for (const auto& pr : probes) {
        const auto& p = *pr.p;
        const auto pc = compute_paste_constants(p);
        const double d_tilde = *thresholds(p).d_tilde;
        const int holder = owner(p, pr.d0);
        sim_config cfg;
        cfg.horizon = 20.0;
        cfg.dt = 0.02;
        cfg.paths = 20000;
        cfg.seed = pr.seed;
        const auto est = mc_stopping_value(
            p, holder, pr.d0, d_tilde, [&](double d) { return phi(p, pc, d); }, cfg);
        const double target = phi(p, pc, pr.d0);
        INFO("d0 = " << pr.d0);
        REQUIRE_THAT(est.mean, WithinAbs(target, 3.0 * est.std_error));
        REQUIRE(est.std_error < 5e-3);
    }
}

TEST_CASE("full-truncation Euler cross-check") {
    sim_config cfg;
    cfg.group = 1;
    cfg.d0 = 0.1;
    cfg.horizon = 1.0;
    cfg.dt = 0.005;
    cfg.paths = 20000;
    cfg.seed = 88;
    cfg.scheme = mc_scheme::euler;
    const auto ens = simulate_paths(set_one_group, cfg);
    const std::size_t last = ens.times.size() - 1;
    double s = 0.0;
    for (long long k = 0; k < ens.paths; ++k) s += ens.at(k, last);
    const double mean = s / static_cast<double>(ens.paths);
    double s2 = 0.0;
    for (long long k = 0; k < ens.paths; ++k) {
        const double c = ens.at(k, last) - mean;
        s2 += c * c;
    }
    const double se =
        std::sqrt(s2 / static_cast<double>(ens.paths - 1) / static_cast<double>(ens.paths));
    const double target = conditional_mean(set_one_group, 1, 0.1, 1.0);
    REQUIRE_THAT(mean, WithinAbs(target, 3.0 * se));
}
