#pragma once

#include <optional>
#include <string>
#include <vector>

#include "torusflow/energy.hpp"
#include "torusflow/grid.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

struct Problem {
    Grid grid;
    std::vector<InternalEnergy> energies;  // one per species
    DriftModel drift;
    DensityTuple rho0;
    double horizon = 0.0;
    double step = 0.0;

    int species() const { return int(rho0.size()); }
    // ⌊T/h⌋ + 1
    int step_count() const;
    // Throws std::invalid_argument describing the first inconsistency.
    void validate() const;
};

struct StepRecord {
    std::vector<double> w2_sq;        // primal cost of the step's plan, per species
    std::vector<double> w2_debiased;  // Sinkhorn divergence between the two iterates, per species
    std::vector<int> iterations;
};

// The state on ((k-1)h, kh] is states[k]; states[0] = ρ0 sits at t = 0.
struct Trajectory {
    Grid grid;
    std::string solver;
    double h = 0.0;
    std::vector<double> times;
    std::vector<DensityTuple> states;
    std::vector<StepRecord> steps;             // JKO only: steps[k] maps states[k] to states[k+1]
    std::vector<std::optional<TransportPlan>> plans;  // JKO with plan retention, per step and species

    // Parabolic runs, per output interval: clipped mass and Σ dt Σ |∇F'_ε|² dx^d.
    std::vector<double> clipped_mass;
    std::vector<double> dissipation;
    std::vector<int> substeps;
    double total_clipped = 0.0;
};

struct JkoRunOptions {
    double eps = 5e-4;
    double tol = 1e-10;
    int max_iter = 100000;
    bool debias = true;
    bool record_debiased = true;
    bool keep_plans = false;
};

// Failure of the k-th outer step, carrying the last good state.
class StepFailure : public std::runtime_error {
public:
    StepFailure(const std::string& what, int step, DensityTuple last)
        : std::runtime_error(what), step_(step), last_(std::move(last)) {}
    int step() const { return step_; }
    const DensityTuple& last_state() const { return last_; }

private:
    int step_;
    DensityTuple last_;
};

Trajectory run_jko(const Problem& problem, const JkoRunOptions& opts);
Trajectory run_jko(const Problem& problem, double eps, double tol);
Trajectory run_jko_system(const Problem& problem, const JkoRunOptions& opts);
Trajectory run_jko_system(const Problem& problem, double eps, double tol);

// |∫ξ(y)·(x-y)dγ + h∫F'(ρ_next) div ξ - h∫∇U·ξ ρ_next| for the plan γ
// from rho_prev to rho_next.
double el_residual(const Density& rho_prev, const Density& rho_next, double h, const InternalEnergy& energy,
                   const ScalarField& potential, const VectorField& xi, const std::optional<TransportPlan>& plan);

}  // namespace torusflow
