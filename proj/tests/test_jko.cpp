#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "torusflow/interaction.hpp"
#include "torusflow/jko.hpp"
#include "torusflow/transport.hpp"

using namespace torusflow;

namespace {

double cos_amplitude(const Density& rho) {
    const Grid& g = rho.grid();
    double s = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) s += rho[k] * std::cos(2 * M_PI * g.center(k)[0]);
    return 2 * s * g.dx();
}

Density profile(const Grid& g, double a, double phase = 0.0) {
    return normalize(g, sample(g, [a, phase](double x, double) { return 1 + a * std::cos(2 * M_PI * x + phase); }).values);
}

ScalarField lattice_kernel(const Grid& g, double amp, double phase = 0.0) {
    ScalarField k(g);
    for (std::size_t q = 0; q < g.size(); ++q) k[q] = amp * std::cos(2 * M_PI * g.coords(q)[0] * g.dx() + phase);
    return k;
}

Problem single(const Grid& g, InternalEnergy e, Density rho0, double T, double h, DriftModel drift) {
    return Problem{g, {e}, std::move(drift), {std::move(rho0)}, T, h};
}

// Σ ℰ_i + ½ Σ_ij ⟨W_ij ⋆ ρ_j, ρ_i⟩ for symmetric kernel matrices.
double total_energy(const Problem& p, const DensityTuple& rho) {
    double e = 0.0;
    for (int i = 0; i < p.species(); ++i) e += internal_energy(p.energies[i], rho[i]);
    const auto U = potential_from_kernel(p.drift, rho);
    for (int i = 0; i < p.species(); ++i)
        e += 0.5 * (inner(p.grid, U[i].values, rho[i].values()) - p.drift.nonneg_shift());
    return e;
}

}  // namespace

TEST_CASE("step count follows floor(T/h) + 1") {
    const Grid g = make_grid(1, 8);
    auto p = single(g, InternalEnergy::entropy(), Density::uniform(g), 0.05, 1e-3, DriftModel::none(g, 1));
    CHECK(p.step_count() == 51);
    p.horizon = 0.0105;
    CHECK(p.step_count() == 11);
}

TEST_CASE("problems are validated") {
    const Grid g = make_grid(1, 8);
    auto p = single(g, InternalEnergy::entropy(), Density::uniform(g), 0.01, 1e-3, DriftModel::none(g, 1));
    p.step = 0.0;
    CHECK_THROWS(run_jko(p, 1e-3, 1e-10));
    p.step = 1e-3;
    p.rho0[0] = Density(g, std::vector<double>(8, 2.0));
    CHECK_THROWS_WITH(run_jko(p, 1e-3, 1e-10), doctest::Contains("normalized"));
    auto v = single(g, InternalEnergy::entropy(), Density::uniform(g), 0.01, 1e-3, DriftModel::velocity(g, 1, {VectorField(g)}));
    CHECK_THROWS_WITH(run_jko(v, 1e-3, 1e-10), doctest::Contains("potential"));
    CHECK_THROWS(run_jko_system(p, 1e-3, 1e-10));
}

TEST_CASE("heat flow matches the spectral oracle") {
    const Grid g = make_grid(1, 128);
    const auto p = single(g, InternalEnergy::entropy(), profile(g, 0.5), 0.05, 1e-3, DriftModel::none(g, 1));
    const auto traj = run_jko(p, 5e-4, 1e-10);
    REQUIRE(traj.states.size() == 52);
    CHECK(traj.states[0][0].values() == p.rho0[0].values());
    const double t = 0.05;
    const std::size_t k = 50;  // states[50] covers (0.049, 0.05]
    CHECK(traj.times[k] == doctest::Approx(t));
    const double ratio = cos_amplitude(traj.states[k][0]) / 0.5 / std::exp(-4 * M_PI * M_PI * t);
    CHECK(std::abs(ratio - 1) <= 0.05);
    for (const auto& s : traj.states) {
        CHECK(std::abs(s[0].mass() - 1) <= 1e-12);
        CHECK(*std::min_element(s[0].values().begin(), s[0].values().end()) >= 0.0);
    }
    REQUIRE(traj.steps.size() == 51);
    for (const auto& r : traj.steps) {
        CHECK(r.w2_sq.size() == 1);
        CHECK(r.w2_debiased.size() == 1);
    }
}

TEST_CASE("uniform initial data stays uniform") {
    const Grid g = make_grid(1, 64);
    const auto p = single(g, InternalEnergy::power(2), Density::uniform(g), 0.01, 1e-3, DriftModel::none(g, 1));
    const auto traj = run_jko(p, 5e-4, 1e-10);
    for (const auto& s : traj.states)
        for (double v : s[0].values()) CHECK(std::abs(v - 1) <= 1e-10);
}

TEST_CASE("porous medium energy is nonincreasing") {
    const Grid g = make_grid(1, 64);
    const auto p = single(g, InternalEnergy::power(2), profile(g, 0.8), 0.02, 1e-3, DriftModel::none(g, 1));
    const auto traj = run_jko(p, 1e-3, 1e-10);
    for (std::size_t k = 1; k < traj.states.size(); ++k)
        CHECK(internal_energy(p.energies[0], traj.states[k][0]) <= internal_energy(p.energies[0], traj.states[k - 1][0]));
}

TEST_CASE("decoupled systems reproduce single-species runs exactly") {
    const Grid g = make_grid(1, 48);
    std::vector<ScalarField> ks{lattice_kernel(g, 0.5), ScalarField(g), ScalarField(g), lattice_kernel(g, -0.3, 0.4)};
    const double shift = 1.0;
    const Problem sys{g,
                      {InternalEnergy::entropy(), InternalEnergy::power(2)},
                      DriftModel::potential(g, 2, ks, shift),
                      {profile(g, 0.4), profile(g, 0.6, 1.0)},
                      0.01,
                      1e-3};
    const auto a = single(g, sys.energies[0], sys.rho0[0], 0.01, 1e-3, DriftModel::potential(g, 1, {ks[0]}, shift));
    const auto b = single(g, sys.energies[1], sys.rho0[1], 0.01, 1e-3, DriftModel::potential(g, 1, {ks[3]}, shift));
    const auto ts = run_jko_system(sys, 1e-3, 1e-10);
    const auto ta = run_jko(a, 1e-3, 1e-10);
    const auto tb = run_jko(b, 1e-3, 1e-10);
    for (std::size_t k = 0; k < ts.states.size(); ++k) {
        CHECK(ts.states[k][0].values() == ta.states[k][0].values());
        CHECK(ts.states[k][1].values() == tb.states[k][0].values());
    }
}

TEST_CASE("symmetric systems dissipate the total energy") {
    const Grid g = make_grid(1, 64);
    const ScalarField w = lattice_kernel(g, 0.4);
    const Problem p{g,
                    {InternalEnergy::power(2), InternalEnergy::entropy()},
                    DriftModel::potential(g, 2, {ScalarField(g), w, w, ScalarField(g)}),
                    {profile(g, 0.5), profile(g, 0.5, 2.0)},
                    0.02,
                    1e-3};
    const auto traj = run_jko_system(p, 1e-3, 1e-10);
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        CAPTURE(k);
        CHECK(total_energy(p, traj.states[k]) <= total_energy(p, traj.states[k - 1]) + 1e-9);
    }
}

TEST_CASE("nonsymmetric systems conserve both masses") {
    const Grid g = make_grid(1, 64);
    const Problem p{g,
                    {InternalEnergy::power(2), InternalEnergy::power(2)},
                    DriftModel::potential(g, 2, {lattice_kernel(g, 0.2), lattice_kernel(g, 1.0), lattice_kernel(g, -1.0), ScalarField(g)}),
                    {profile(g, 0.5), profile(g, 0.5, 2.0)},
                    0.02,
                    1e-3};
    const auto traj = run_jko_system(p, 1e-3, 1e-10);
    for (const auto& s : traj.states)
        for (const auto& r : s) {
            CHECK(std::abs(r.mass() - 1) <= 1e-12);
            CHECK(*std::min_element(r.values().begin(), r.values().end()) >= 0.0);
        }
}

TEST_CASE("step dissipation and summability with the debiased transport estimate") {
    const Grid g = make_grid(1, 64);
    const auto drift = DriftModel::potential(g, 1, {lattice_kernel(g, 0.5)});
    DriftConstants c = estimate_constants(drift, {0, 1, 1e-4});
    const double c_hat = c.lip_x * c.lip_x;  // |∇U|² bounds the drift term per step
    const auto p = single(g, InternalEnergy::power(2), profile(g, 0.6), 0.03, 1e-3, drift);
    const auto traj = run_jko(p, 1e-3, 1e-10);
    const double h = p.step;
    double sum = 0.0, emin = INFINITY;
    for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
        const double e0 = internal_energy(p.energies[0], traj.states[k][0]);
        const double e1 = internal_energy(p.energies[0], traj.states[k + 1][0]);
        const double w2 = traj.steps[k].w2_debiased[0];
        CHECK(w2 / (4 * h) <= e0 - e1 + c_hat * h);
        sum += w2;
        emin = std::min(emin, e1);
    }
    // ℰ >= 0 for the porous medium energy.
    const double e_init = internal_energy(p.energies[0], p.rho0[0]);
    CHECK(sum <= 4 * h * (e_init - 0.0 + c_hat * (1 + p.horizon)));
    CHECK(emin >= 0.0);
}

TEST_CASE("Euler-Lagrange residual") {
    const Grid g = make_grid(1, 64);
    const double h = 1e-3, eps = 5e-4;
    const auto e = InternalEnergy::entropy();
    VectorField xi(g);
    // Mixed parity: against the even heat profile, a field of one parity gives
    // a residual that vanishes by symmetry.
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.center(k)[0];
        xi[0][k] = std::cos(2 * M_PI * x) + std::sin(2 * M_PI * x);
    }
    const ScalarField U(g);

    SUBCASE("uniform fixed point") {
        JkoStepOptions o;
        o.eps = eps;
        o.keep_plan = true;
        const Density u = Density::uniform(g);
        const auto r = jko_step(u, h, e, U, o);
        CHECK(el_residual(u, r.rho, h, e, U, xi, r.plan) <= 1e-8);
    }
    SUBCASE("converged step and perturbed minimizer") {
        const auto p = single(g, e, profile(g, 0.5), 0.01, h, DriftModel::none(g, 1));
        JkoRunOptions ro;
        ro.eps = eps;
        ro.keep_plans = true;
        const auto traj = run_jko(p, ro);
        REQUIRE(traj.plans.size() == traj.steps.size());
        double worst = 0.0;
        for (std::size_t k = 0; k < traj.steps.size(); ++k)
            worst = std::max(worst, el_residual(traj.states[k][0], traj.states[k + 1][0], h, e, U, xi, traj.plans[k]));
        CHECK(worst <= 1e-2);

        const Density& prev = traj.states[4][0];
        const Density& next = traj.states[5][0];
        const double base = el_residual(prev, next, h, e, U, xi, traj.plans[4]);
        std::vector<double> v = next.values();
        for (std::size_t k = 0; k < v.size() / 2; ++k) v[k] *= 1.1;
        const Density bad = normalize(g, v);
        SinkhornOptions so;
        so.eps = eps;
        so.keep_plan = true;
        const auto plan = sinkhorn_w2(prev, bad, so);
        const double perturbed = el_residual(prev, bad, h, e, U, xi, TransportPlan{g, plan.plan});
        CHECK(perturbed >= 10 * base);
    }
    SUBCASE("missing plan") {
        const Density u = Density::uniform(g);
        CHECK_THROWS_WITH(el_residual(u, u, h, e, U, xi, std::nullopt), doctest::Contains("plan"));
    }
}
