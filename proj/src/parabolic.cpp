#include "torusflow/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace torusflow {

std::vector<VectorField> advection_velocity(const DriftModel& drift, const DensityTuple& rho) {
    auto v = velocity_field(drift, rho);
    if (drift.mode() == DriftMode::Potential)
        for (auto& f : v)
            for (auto& c : f.components)
                for (double& x : c) x = -x;
    return v;
}

namespace {

double cfl_from(const DensityTuple& rho, const std::vector<RegularizedEnergy>& energies,
                const std::vector<VectorField>& vel) {
    double bound = INFINITY;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const Grid& g = rho[i].grid();
        double fpp = 0.0, vmax = 0.0;
        for (std::size_t k = 0; k < g.size(); ++k) fpp = std::max(fpp, energies[i].d2F(rho[i][k]));
        for (int a = 0; a < g.dim(); ++a)
            for (double x : vel[i][a]) vmax = std::max(vmax, std::abs(x));
        const double dx = g.dx();
        if (fpp > 0) bound = std::min(bound, 0.25 * dx * dx / fpp);
        if (vmax > 0) bound = std::min(bound, 0.5 * dx / vmax);
    }
    return bound;
}

void check_inputs(const DensityTuple& rho, const std::vector<RegularizedEnergy>& energies, const DriftModel& drift) {
    if (rho.size() != energies.size() || int(rho.size()) != drift.species())
        throw std::invalid_argument("parabolic step: species counts of state, energies and drift differ");
}

}  // namespace

double cfl_bound(const DensityTuple& rho, const std::vector<RegularizedEnergy>& energies, const DriftModel& drift) {
    check_inputs(rho, energies, drift);
    return cfl_from(rho, energies, advection_velocity(drift, rho));
}

namespace {

ParabolicState step_with(const ParabolicState& state, const std::vector<RegularizedEnergy>& energies,
                         const std::vector<VectorField>& vel, double dt, ParabolicStepInfo* info) {
    ParabolicState next;
    next.time = state.time + dt;
    next.dt_last = dt;
    ParabolicStepInfo local;
    for (std::size_t s = 0; s < state.densities.size(); ++s) {
        const Density& rho = state.densities[s];
        const Grid& g = rho.grid();
        const std::size_t N = g.size();
        const double dx = g.dx();
        std::vector<double> p(N);
        for (std::size_t k = 0; k < N; ++k) p[k] = energies[s].dF(rho[k]);
        std::vector<double> out(rho.values());
        // Face between k and its +1 neighbor along each axis.
        for (int a = 0; a < g.dim(); ++a) {
            const auto& v = vel[s][a];
            for (std::size_t k = 0; k < N; ++k) {
                const std::size_t r = g.neighbor(k, a, 1);
                const double gradp = (p[r] - p[k]) / dx;
                const double vf = 0.5 * (v[k] + v[r]);
                const double flux = -gradp + (vf > 0 ? vf * rho[k] : vf * rho[r]);
                out[k] -= dt * flux / dx;
                out[r] += dt * flux / dx;
                local.dissipation += dt * gradp * gradp * g.cell_volume();
            }
        }
        double neg = 0.0, mass = 0.0;
        for (double x : out) {
            if (!std::isfinite(x)) throw std::runtime_error("parabolic step produced a non-finite density");
            mass += x;
        }
        mass *= g.cell_volume();
        local.mass_defect = std::max(local.mass_defect, std::abs(mass - 1.0));
        for (double& x : out)
            if (x < 0) neg -= x, x = 0.0;
        local.clipped_mass += neg * g.cell_volume();
        next.densities.push_back(neg > 0 || std::abs(mass - 1.0) > 0 ? normalize(g, std::move(out))
                                                                     : Density(g, std::move(out)));
    }
    if (info) *info = local;
    return next;
}

}  // namespace

ParabolicState parabolic_step(const ParabolicState& state, const std::vector<RegularizedEnergy>& energies,
                              const DriftModel& drift, double dt, ParabolicStepInfo* info) {
    check_inputs(state.densities, energies, drift);
    if (!(dt > 0)) throw std::invalid_argument("parabolic step: dt must be positive");
    const auto vel = advection_velocity(drift, state.densities);
    const double bound = cfl_from(state.densities, energies, vel);
    if (dt > bound * (1.0 + 1e-12))
        throw CflViolation("parabolic step refused: dt = " + std::to_string(dt) + " exceeds CFL bound " +
                           std::to_string(bound));
    return step_with(state, energies, vel, dt, info);
}

Trajectory run_parabolic(const Problem& problem, const ParabolicOptions& opts, double T) {
    problem.validate();
    if (!(T > 0)) throw std::invalid_argument("run_parabolic: T must be positive");
    if (!(opts.cfl_safety > 0 && opts.cfl_safety <= 1)) throw std::invalid_argument("cfl_safety must lie in (0,1]");
    std::vector<RegularizedEnergy> reg;
    for (const auto& e : problem.energies) {
        const auto issues = check_parabolic_hypotheses(e);
        if (!issues.empty()) throw std::invalid_argument("energy " + e.name() + " unsuitable for the parabolic solver: " + issues.front());
        reg.push_back(regularize(e, opts.eps_reg));
    }
    const double interval = opts.output_interval > 0 ? opts.output_interval : problem.step;

    std::vector<double> outputs;
    for (long k = 1;; ++k) {
        const double t = k * interval;
        if (t > T * (1.0 + 1e-12)) break;
        outputs.push_back(t);
    }
    if (outputs.empty() || std::abs(outputs.back() - T) > 1e-12 * T) outputs.push_back(T);

    Trajectory traj{problem.grid, "parabolic", interval, {0.0}, {problem.rho0}, {}, {}, {}, {}, {}, 0.0};
    ParabolicState st{problem.rho0, 0.0, 0.0};
    long steps = 0;
    for (double target : outputs) {
        double clipped = 0.0, diss = 0.0;
        int sub = 0;
        while (st.time < target) {
            const auto vel = advection_velocity(problem.drift, st.densities);
            double dt = opts.cfl_safety * cfl_from(st.densities, reg, vel);
            if (!std::isfinite(dt)) dt = target - st.time;
            bool last = false;
            if (st.time + dt >= target * (1.0 - 1e-14)) {
                dt = target - st.time;
                last = true;
            }
            ParabolicStepInfo info;
            try {
                st = step_with(st, reg, vel, dt, &info);
            } catch (const std::exception& e) {
                throw StepFailure("parabolic step " + std::to_string(steps + 1) + " at t=" +
                                      std::to_string(st.time) + ": " + e.what(),
                                  int(steps + 1), st.densities);
            }
            if (last) st.time = target;
            clipped += info.clipped_mass;
            diss += info.dissipation;
            ++sub;
            if (++steps > opts.max_steps) throw std::runtime_error("run_parabolic: step budget exhausted");
        }
        traj.times.push_back(target);
        traj.states.push_back(st.densities);
        traj.clipped_mass.push_back(clipped);
        traj.dissipation.push_back(diss);
        traj.substeps.push_back(sub);
        traj.total_clipped += clipped;
    }
    return traj;
}

Trajectory run_parabolic(const Problem& problem, double eps_reg, double cfl_safety, double T) {
    ParabolicOptions o;
    o.eps_reg = eps_reg;
    o.cfl_safety = cfl_safety;
    return run_parabolic(problem, o, T);
}

}  // namespace torusflow
