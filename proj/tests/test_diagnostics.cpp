#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "torusflow/diagnostics.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/parabolic.hpp"

using namespace torusflow;

namespace {

Density profile(const Grid& g, double a, double phase = 0.0) {
    return normalize(g, sample(g, [a, phase](double x, double) { return 1 + a * std::cos(2 * M_PI * x + phase); }).values);
}

Problem heat_problem(int n, double h, double T = 0.05) {
    const Grid g = make_grid(1, n);
    return Problem{g, {InternalEnergy::entropy()}, DriftModel::none(g, 1), {profile(g, 0.5)}, T, h};
}

// Exact heat solution sampled at the JKO output times.
Trajectory oracle_trajectory(const Problem& p) {
    Trajectory t{p.grid, "oracle", p.step, {}, {}, {}, {}, {}, {}, {}, 0.0};
    for (int k = 0; k <= p.step_count(); ++k) {
        const double time = k * p.step;
        const double a = 0.5 * std::exp(-4 * M_PI * M_PI * time);
        t.times.push_back(time);
        t.states.push_back({Density(p.grid, sample(p.grid, [a](double x, double) { return 1 + a * std::cos(2 * M_PI * x); }).values)});
    }
    return t;
}

Trajectory constant_trajectory(const Grid& g, int steps, double h) {
    Trajectory t{g, "jko", h, {}, {}, {}, {}, {}, {}, {}, 0.0};
    for (int k = 0; k <= steps; ++k) {
        t.times.push_back(k * h);
        t.states.push_back({Density::uniform(g)});
        if (k < steps) t.steps.push_back({{0.0}, {0.0}, {0}});
    }
    return t;
}

}  // namespace

TEST_CASE("ledger of a constant trajectory") {
    const Grid g = make_grid(1, 32);
    const Problem p{g, {InternalEnergy::power(2)}, DriftModel::none(g, 1), {Density::uniform(g)}, 0.01, 1e-3};
    const auto led = energy_ledger(constant_trajectory(g, 10, 1e-3), p);
    REQUIRE(led.rows.size() == 10);
    for (const auto& r : led.rows) {
        CHECK(r.energy - r.energy_next == 0.0);
        CHECK(r.lhs == 0.0);
        CHECK_FALSE(r.flagged);
    }
    CHECK(led.flags() == 0);
}

TEST_CASE("ledger of the heat run and of a corrupted copy") {
    const Problem p = heat_problem(128, 1e-3);
    auto traj = run_jko(p, 5e-4, 1e-10);
    const auto led = energy_ledger(traj, p);
    CHECK(led.rows.size() == std::size_t(p.step_count()));
    CHECK(led.debiased);
    CHECK(led.flags() == 0);
    for (const auto& r : led.rows) {
        CHECK(std::isfinite(r.entropy));
        CHECK(r.sobolev > 0);
    }
    std::swap(traj.states[10], traj.states[11]);
    CHECK(energy_ledger(traj, p).flags() >= 1);

    traj.steps.clear();
    CHECK_THROWS(energy_ledger(traj, p));
}

TEST_CASE("parabolic ledger of the heat run") {
    const Problem p = heat_problem(128, 1e-3);
    const auto traj = run_parabolic(p, 1e-3, 0.9, p.horizon);
    const auto led = parabolic_ledger(traj, p, 1e-3);
    CHECK(led.rows.size() == traj.states.size() - 1);
    CHECK(led.flags() == 0);
    for (const auto& r : led.rows) CHECK(r.clipped_mass <= 1e-8);
}

TEST_CASE("Hölder check: constant trajectory and symmetry") {
    const Grid g = make_grid(1, 32);
    CHECK(holder_check(constant_trajectory(g, 10, 1e-3), 10) == 0.0);
    const DensityTuple a{profile(g, 0.5)}, b{profile(g, 0.2, 1.0)};
    TransportDiagnosticOptions o;
    CHECK(std::abs(tuple_w2_sq(a, b, o) - tuple_w2_sq(b, a, o)) <= 1e-9);
    CHECK(tuple_w2_sq(a, a, o) == 0.0);
}

TEST_CASE("Sobolev integrand and estimate") {
    const Grid g = make_grid(1, 256);
    CHECK(sobolev_integrand(Density::uniform(g), 2.0) == 0.0);
    CHECK(sobolev_integrand(Density::uniform(g), 1.0) == 0.0);
    const Density rho = profile(g, 0.5);
    // ∫(π sin 2πx)² = π²/2.
    CHECK(std::abs(sobolev_integrand(rho, 2.0) - M_PI * M_PI / 2) <= 0.02 * M_PI * M_PI / 2);
    CHECK(sobolev_estimate(constant_trajectory(g, 5, 1e-3), 1.0) == 0.0);
    CHECK_THROWS(sobolev_integrand(rho, 0.5));
}

TEST_CASE("test functions") {
    const Grid g = make_grid(1, 16);
    const auto phi = TestFunction::cosine_decay(g, 0.05, 2);
    CHECK(phi.g(0.0) == doctest::Approx(1.0));
    CHECK(std::abs(phi.g(0.05)) <= 1e-12);
    CHECK(phi.dg(0.0) == doctest::Approx(-2 / 0.05));
    CHECK(phi.G(0.05) == doctest::Approx(0.05 / 3));
    CHECK(phi.space()[0] == doctest::Approx(1 + std::cos(2 * M_PI / 32)));
    CHECK_THROWS(TestFunction(g, 0.05, {1.0}, ScalarField(g, 1.0)));
}

TEST_CASE("weak residual") {
    const Problem p = heat_problem(128, 1e-3);
    const Trajectory oracle = oracle_trajectory(p);
    CHECK(weak_residual(oracle, p, TestFunction::zero(p.grid, p.horizon), ResidualMode::Potential) == 0.0);
    const auto phi = TestFunction::cosine_decay(p.grid, p.horizon, 1);
    const double base = weak_residual(oracle, p, phi, ResidualMode::Potential);
    CHECK(base <= 5e-3);
    // Same value in velocity mode for a zero drift.
    CHECK(weak_residual(oracle, p, phi, ResidualMode::Velocity) == doctest::Approx(base).epsilon(1e-12));

    Trajectory bad = oracle;
    for (std::size_t k = 5; k < bad.states.size(); ++k) {
        std::vector<double> v = bad.states[k][0].values();
        for (double& x : v) x *= 1.1;
        bad.states[k][0] = Density(p.grid, v);
    }
    CHECK(weak_residual(bad, p, phi, ResidualMode::Potential) >= 10 * base);

    const Problem fine = heat_problem(256, 5e-4);
    const double refined = weak_residual(oracle_trajectory(fine), fine, TestFunction::cosine_decay(fine.grid, fine.horizon, 1),
                                         ResidualMode::Potential);
    CHECK(std::log2(base / refined) >= 0.9);
}

TEST_CASE("weak residual with a drift vanishes for the stationary state") {
    // Uniform density under any convolution drift is stationary.
    const Grid g = make_grid(1, 64);
    ScalarField w(g);
    for (std::size_t q = 0; q < g.size(); ++q) w[q] = std::cos(2 * M_PI * q * g.dx());
    const Problem p{g, {InternalEnergy::power(2)}, DriftModel::potential(g, 1, {w}), {Density::uniform(g)}, 0.01, 1e-3};
    const auto phi = TestFunction::cosine_decay(g, 0.01, 1);
    Trajectory t = constant_trajectory(g, 11, 1e-3);
    CHECK(weak_residual(t, p, phi, ResidualMode::Potential) <= 1e-14);
}

TEST_CASE("stability comparison basics") {
    const Grid g = make_grid(1, 32);
    const Problem a{g, {InternalEnergy::power(2)}, DriftModel::none(g, 1), {profile(g, 0.5)}, 0.02, 2e-3};
    Problem b = a;
    b.rho0 = {profile(g, 0.5, 0.3)};
    const auto ta = run_parabolic(a, 1e-3, 0.9, a.horizon);
    const auto tb = run_parabolic(b, 1e-3, 0.9, b.horizon);

    const auto same = stability_compare(ta, ta, 1.0);
    for (const auto& pt : same) {
        CHECK(pt.w2_sum == 0.0);
        CHECK_FALSE(pt.flagged);
    }
    const auto pts = stability_compare(ta, tb, 0.0);
    TransportDiagnosticOptions o;
    CHECK(pts[0].w2_sum == tuple_w2_sq(a.rho0, b.rho0, o));
    CHECK(pts[0].bound == doctest::Approx(pts[0].w2_sum * (1 + kStabilityMargin)));
    // Zero drift, displacement-convex energy: nonincreasing up to Sinkhorn tolerance.
    for (std::size_t k = 1; k < pts.size(); ++k) {
        CHECK(pts[k].w2_sum <= pts[k - 1].w2_sum * (1 + 1e-6) + 1e-10);
        CHECK_FALSE(pts[k].flagged);
    }
    Trajectory shorter = tb;
    shorter.times.pop_back();
    shorter.states.pop_back();
    CHECK_THROWS(stability_compare(ta, shorter, 0.0));
}

TEST_CASE("L1 distance") {
    const Grid g = make_grid(1, 4);
    const DensityTuple a{Density(g, {2, 2, 0, 0})}, b{Density(g, {0, 0, 2, 2})};
    CHECK(l1_distance(a, b) == doctest::Approx(2.0));
    CHECK(l1_distance(a, a) == 0.0);
}
