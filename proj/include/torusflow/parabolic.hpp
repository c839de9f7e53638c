#pragma once

#include <stdexcept>
#include <vector>

#include "torusflow/energy.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/jko.hpp"

namespace torusflow {

struct ParabolicState {
    DensityTuple densities;
    double time = 0.0;
    double dt_last = 0.0;
};

struct ParabolicStepInfo {
    double mass_defect = 0.0;   // max |mass - 1| before clipping
    double clipped_mass = 0.0;  // Σ negative parts removed, all species
    double dissipation = 0.0;   // dt·Σ_faces |∇F'_ε(ρ)|² dx^d, all species
};

class CflViolation : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Velocity transported by the scheme: -∇U in potential mode, V otherwise.
std::vector<VectorField> advection_velocity(const DriftModel& drift, const DensityTuple& rho);

// min over species of 0.25·dx²/max F''_ε and 0.5·dx/max|v|.
double cfl_bound(const DensityTuple& rho, const std::vector<RegularizedEnergy>& energies, const DriftModel& drift);

// Explicit conservative step of ∂tρ_i = ΔF'_ε(ρ_i) - div(ρ_i v_i).
ParabolicState parabolic_step(const ParabolicState& state, const std::vector<RegularizedEnergy>& energies,
                              const DriftModel& drift, double dt, ParabolicStepInfo* info = nullptr);

struct ParabolicOptions {
    double eps_reg = 1e-3;
    double cfl_safety = 0.9;
    // Spacing of recorded states; 0 selects the problem step h.
    double output_interval = 0.0;
    long max_steps = 50'000'000;
};

// States are recorded at multiples of the output interval not exceeding T,
// plus T itself.
Trajectory run_parabolic(const Problem& problem, const ParabolicOptions& opts, double T);
Trajectory run_parabolic(const Problem& problem, double eps_reg, double cfl_safety, double T);

}  // namespace torusflow
