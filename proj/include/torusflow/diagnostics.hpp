#pragma once

#include <cstdint>
#include <vector>

#include "torusflow/energy.hpp"
#include "torusflow/grid.hpp"
#include "torusflow/jko.hpp"

namespace torusflow {

// Margin granted to the step inequality of the energy ledger. The rows of
// the heat and porous-medium acceptance runs clear zero with room to spare
// when the debiased transport estimate is used, so no slack is needed.
constexpr double kLedgerSlack = 0.0;

struct LedgerRow {
    int step = 0;               // k: the step from states[k] to states[k+1]
    double energy = 0.0;        // Σ_i ℰ_i(ρ_i^k)
    double energy_next = 0.0;   // Σ_i ℰ_i(ρ_i^{k+1})
    double drift_self = 0.0;    // Σ_i ⟨U_i[ρ^k], ρ_i^k⟩
    double drift_cross = 0.0;   // Σ_i ⟨U_i[ρ^k], ρ_i^{k+1}⟩
    double w2_sq = 0.0;         // Σ_i primal plan cost
    double w2_used = 0.0;       // Σ_i transport estimate entering the inequality
    double entropy = 0.0;       // Σ_i Ent(ρ_i^k)
    double sobolev = 0.0;       // Σ_i ‖∇(ρ_i^k)^{m_i/2}‖²
    double lhs = 0.0;           // w2_used / 2h
    double rhs = 0.0;           // energy decrease + drift decrease + slack
    bool flagged = false;
};

struct Ledger {
    std::vector<LedgerRow> rows;
    double slack = kLedgerSlack;
    bool debiased = true;
    int flags() const;
};

Ledger energy_ledger(const Trajectory& traj, const Problem& problem, double slack = kLedgerSlack);

// Per output interval of a parabolic run: F_ε energy, dissipation, clipping.
struct ParabolicLedgerRow {
    int interval = 0;
    double time = 0.0;
    double energy = 0.0;
    double energy_next = 0.0;
    double dissipation = 0.0;
    double drift_allowance = 0.0;
    double clipped_mass = 0.0;
    double l2_norm_sq = 0.0;
    bool flagged = false;
};

struct ParabolicLedger {
    std::vector<ParabolicLedgerRow> rows;
    double slack = 0.0;
    int flags() const;
};

// Flags intervals violating F_ε(next) + D/2 <= F_ε + Δt·max|v|²·max‖ρ‖²/2 + slack.
ParabolicLedger parabolic_ledger(const Trajectory& traj, const Problem& problem, double eps_reg,
                                 double slack = 0.0);

struct TransportDiagnosticOptions {
    double eps = 1e-4;
    double tol = 1e-8;
    std::uint64_t seed = 977;
};

// W2 of species tuples: sqrt(Σ_i W2²), Sinkhorn divergence estimate.
double tuple_w2_sq(const DensityTuple& a, const DensityTuple& b, const TransportDiagnosticOptions& opts);

// max over sampled time pairs (s, t) of W2(ρ_t, ρ_s)/sqrt(|t-s| + h). The
// sampled times depend only on the seed and the horizon.
double holder_check(const Trajectory& traj, int sample_pairs, const TransportDiagnosticOptions& opts = {});

double sobolev_integrand(const Density& rho, double m);
// Σ_{k>=1} h·‖∇(ρ^k)^{m/2}‖² over the first species.
double sobolev_estimate(const Trajectory& traj, double m);

// φ(t, x) = g(t)·S(x) with g a polynomial, coefficients in increasing degree.
class TestFunction {
public:
    TestFunction(const Grid& g, double horizon, std::vector<double> time_poly, ScalarField space);
    // g(t) = (1 - t/T)^p, S(x) = 1 + Π_a cos(2π x_a).
    static TestFunction cosine_decay(const Grid& g, double horizon, int p = 1);
    static TestFunction zero(const Grid& g, double horizon);

    const Grid& grid() const { return grid_; }
    double horizon() const { return T_; }
    const ScalarField& space() const { return space_; }
    double g(double t) const;
    double dg(double t) const;
    double G(double t) const;  // ∫_0^t g

private:
    Grid grid_;
    double T_;
    std::vector<double> poly_;
    ScalarField space_;
};

enum class ResidualMode { Potential, Velocity };

// Absolute weak-form residual with states piecewise constant in time;
// integrals beyond the test function's horizon are dropped. eps_reg > 0
// uses F'_ε in place of F'.
double weak_residual(const Trajectory& traj, const Problem& problem, const TestFunction& phi, ResidualMode mode,
                     double eps_reg = 0.0);

struct StabilityPoint {
    double time = 0.0;
    double w2_sum = 0.0;
    double bound = 0.0;
    bool flagged = false;
};

constexpr double kStabilityMargin = 0.2;

std::vector<StabilityPoint> stability_compare(const Trajectory& a, const Trajectory& b, double c_hat,
                                              const TransportDiagnosticOptions& opts = {});

double l1_distance(const DensityTuple& a, const DensityTuple& b);

}  // namespace torusflow
