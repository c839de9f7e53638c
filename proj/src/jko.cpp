#include "torusflow/jko.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace torusflow {

int Problem::step_count() const { return int(std::floor(horizon / step + 1e-9)) + 1; }

void Problem::validate() const {
    if (!(horizon > 0)) throw std::invalid_argument("horizon T must be positive");
    if (!(step > 0)) throw std::invalid_argument("step h must be positive");
    if (rho0.empty()) throw std::invalid_argument("problem needs at least one species");
    if (energies.size() != rho0.size())
        throw std::invalid_argument("one energy per species is required");
    if (drift.species() != species())
        throw std::invalid_argument("drift species count does not match the number of densities");
    if (!(drift.grid() == grid)) throw std::invalid_argument("drift grid does not match the problem grid");
    for (std::size_t i = 0; i < rho0.size(); ++i) {
        if (!(rho0[i].grid() == grid)) throw std::invalid_argument("initial density grid mismatch");
        if (std::abs(rho0[i].mass() - 1.0) > 1e-12)
            throw std::invalid_argument("initial density " + std::to_string(i) + " is not normalized");
        if (!std::isfinite(internal_energy(energies[i], rho0[i])))
            throw std::invalid_argument("initial energy of species " + std::to_string(i) + " is not finite");
    }
}

namespace {

Trajectory run_impl(const Problem& problem, const JkoRunOptions& opts) {
    problem.validate();
    if (problem.drift.mode() != DriftMode::Potential)
        throw std::invalid_argument("the JKO solver needs a potential drift");
    const int l = problem.species();
    const int N = problem.step_count();
    const CostMatrix cost(problem.grid);
    std::vector<JkoWarmStart> warm(l);

    Trajectory traj{problem.grid, "jko", problem.step, {}, {}, {}, {}, {}, {}, {}, 0.0};
    traj.times.push_back(0.0);
    traj.states.push_back(problem.rho0);

    SinkhornOptions div_opts;
    div_opts.eps = opts.eps;
    div_opts.tol = 1e-9;

    for (int k = 0; k < N; ++k) {
        const DensityTuple& prev = traj.states.back();
        // Frozen at the previous iterate for every species.
        const auto U = potential_from_kernel(problem.drift, prev);
        DensityTuple next;
        StepRecord rec;
        std::vector<std::optional<TransportPlan>> plans;
        for (int i = 0; i < l; ++i) {
            JkoStepOptions so;
            so.eps = opts.eps;
            so.tol = opts.tol;
            so.max_iter = opts.max_iter;
            so.debias = opts.debias;
            so.keep_plan = opts.keep_plans;
            so.cost = &cost;
            so.warm = &warm[i];
            JkoStepResult r = [&] {
                try {
                    return jko_step(prev[i], problem.step, problem.energies[i], U[i], so);
                } catch (const std::exception& e) {
                    throw StepFailure("JKO step " + std::to_string(k + 1) + ", species " + std::to_string(i) +
                                          ": " + e.what(),
                                      k + 1, prev);
                }
            }();
            rec.w2_sq.push_back(r.transport.w2_sq);
            rec.iterations.push_back(r.transport.iterations);
            if (opts.record_debiased)
                rec.w2_debiased.push_back(sinkhorn_divergence(prev[i], r.rho, div_opts, &cost));
            plans.push_back(std::move(r.plan));
            next.push_back(std::move(r.rho));
        }
        traj.steps.push_back(std::move(rec));
        if (opts.keep_plans)
            for (auto& p : plans) traj.plans.push_back(std::move(p));
        traj.states.push_back(std::move(next));
        traj.times.push_back((k + 1) * problem.step);
    }
    return traj;
}

}  // namespace

Trajectory run_jko(const Problem& problem, const JkoRunOptions& opts) {
    if (problem.species() != 1) throw std::invalid_argument("run_jko handles a single species; use run_jko_system");
    return run_impl(problem, opts);
}

Trajectory run_jko(const Problem& problem, double eps, double tol) {
    JkoRunOptions o;
    o.eps = eps;
    o.tol = tol;
    return run_jko(problem, o);
}

Trajectory run_jko_system(const Problem& problem, const JkoRunOptions& opts) {
    if (problem.species() < 2) throw std::invalid_argument("run_jko_system needs at least two species");
    return run_impl(problem, opts);
}

Trajectory run_jko_system(const Problem& problem, double eps, double tol) {
    JkoRunOptions o;
    o.eps = eps;
    o.tol = tol;
    return run_jko_system(problem, o);
}

double el_residual(const Density& rho_prev, const Density& rho_next, double h, const InternalEnergy& energy,
                   const ScalarField& potential, const VectorField& xi, const std::optional<TransportPlan>& plan) {
    if (!plan) throw std::invalid_argument("el_residual: missing transport plan (run the step with plan retention)");
    const Grid& g = rho_next.grid();
    if (!(rho_prev.grid() == g) || !(potential.grid == g) || !(xi.grid == g) || !(plan->grid == g))
        throw std::invalid_argument("el_residual: inputs live on different grids");
    const std::size_t N = g.size();
    if (plan->mass.size() != N * N) throw std::invalid_argument("el_residual: plan size mismatch");

    double transport = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        const auto x = g.center(i);
        for (std::size_t j = 0; j < N; ++j) {
            const double p = plan->mass[i * N + j];
            if (p == 0.0) continue;
            const auto y = g.center(j);
            double dot = 0.0;
            for (int a = 0; a < g.dim(); ++a) dot += xi[a][j] * torus_displacement(x[a], y[a]);
            transport += p * dot;
        }
    }
    const ScalarField dxi = div(xi);
    const VectorField gu = grad(potential);
    double pressure = 0.0, drift = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        pressure += energy.dF(rho_next[j]) * dxi[j];
        double dot = 0.0;
        for (int a = 0; a < g.dim(); ++a) dot += gu[a][j] * xi[a][j];
        drift += dot * rho_next[j];
    }
    const double w = g.cell_volume();
    return std::abs(transport + h * pressure * w - h * drift * w);
}

}  // namespace torusflow
