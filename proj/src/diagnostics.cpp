#include "torusflow/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "torusflow/parabolic.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

namespace {

double energy_sum(const Problem& p, const DensityTuple& rho) {
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) s += internal_energy(p.energies[i], rho[i]);
    return s;
}

double potential_pairing(const std::vector<ScalarField>& U, const DensityTuple& rho) {
    double s = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) s += inner(rho[i].grid(), U[i].values, rho[i].values());
    return s;
}

}  // namespace

int Ledger::flags() const {
    return int(std::count_if(rows.begin(), rows.end(), [](const LedgerRow& r) { return r.flagged; }));
}

int ParabolicLedger::flags() const {
    return int(std::count_if(rows.begin(), rows.end(), [](const ParabolicLedgerRow& r) { return r.flagged; }));
}

Ledger energy_ledger(const Trajectory& traj, const Problem& problem, double slack) {
    if (traj.steps.empty() && traj.states.size() > 1)
        throw std::invalid_argument("energy_ledger: trajectory carries no transport records");
    if (traj.steps.size() + 1 != traj.states.size())
        throw std::invalid_argument("energy_ledger: transport records do not match the state count");
    Ledger led;
    led.slack = slack;
    led.debiased = std::all_of(traj.steps.begin(), traj.steps.end(),
                               [](const StepRecord& r) { return !r.w2_debiased.empty(); });
    const double h = traj.h;
    for (std::size_t k = 0; k < traj.steps.size(); ++k) {
        const DensityTuple& cur = traj.states[k];
        const DensityTuple& nxt = traj.states[k + 1];
        const auto U = potential_from_kernel(problem.drift, cur);
        LedgerRow r;
        r.step = int(k);
        r.energy = energy_sum(problem, cur);
        r.energy_next = energy_sum(problem, nxt);
        r.drift_self = potential_pairing(U, cur);
        r.drift_cross = potential_pairing(U, nxt);
        for (std::size_t i = 0; i < cur.size(); ++i) {
            r.w2_sq += traj.steps[k].w2_sq.at(i);
            r.w2_used += led.debiased ? traj.steps[k].w2_debiased.at(i) : traj.steps[k].w2_sq.at(i);
            r.entropy += entropy_of(cur[i]);
            r.sobolev += sobolev_integrand(cur[i], problem.energies[i].exponent());
        }
        r.lhs = r.w2_used / (2.0 * h);
        r.rhs = r.energy - r.energy_next + r.drift_self - r.drift_cross + slack;
        r.flagged = !(r.lhs <= r.rhs) || !std::isfinite(r.lhs) || !std::isfinite(r.rhs);
        led.rows.push_back(r);
    }
    return led;
}

ParabolicLedger parabolic_ledger(const Trajectory& traj, const Problem& problem, double eps_reg, double slack) {
    if (traj.dissipation.size() + 1 != traj.states.size())
        throw std::invalid_argument("parabolic_ledger: trajectory carries no dissipation records");
    std::vector<RegularizedEnergy> reg;
    for (const auto& e : problem.energies) reg.push_back(regularize(e, eps_reg));
    auto freg = [&](const DensityTuple& rho) {
        double s = 0.0;
        for (std::size_t i = 0; i < rho.size(); ++i) {
            double acc = 0.0;
            for (double v : rho[i].values()) acc += reg[i].F(v);
            s += acc * rho[i].grid().cell_volume();
        }
        return s;
    };
    auto l2 = [](const DensityTuple& rho) {
        double m = 0.0;
        for (const auto& r : rho) m = std::max(m, inner(r.grid(), r.values(), r.values()));
        return m;
    };
    auto vmax = [&](const DensityTuple& rho) {
        double m = 0.0;
        for (const auto& f : advection_velocity(problem.drift, rho))
            for (const auto& c : f.components)
                for (double x : c) m = std::max(m, std::abs(x));
        return m;
    };
    ParabolicLedger led;
    led.slack = slack;
    for (std::size_t k = 0; k + 1 < traj.states.size(); ++k) {
        ParabolicLedgerRow r;
        r.interval = int(k);
        r.time = traj.times[k + 1];
        r.energy = freg(traj.states[k]);
        r.energy_next = freg(traj.states[k + 1]);
        r.dissipation = traj.dissipation[k];
        r.clipped_mass = traj.clipped_mass[k];
        r.l2_norm_sq = l2(traj.states[k + 1]);
        const double v = std::max(vmax(traj.states[k]), vmax(traj.states[k + 1]));
        r.drift_allowance = 0.5 * (traj.times[k + 1] - traj.times[k]) * v * v * std::max(l2(traj.states[k]), r.l2_norm_sq);
        r.flagged = !(r.energy_next + 0.5 * r.dissipation <= r.energy + r.drift_allowance + slack);
        led.rows.push_back(r);
    }
    return led;
}

double tuple_w2_sq(const DensityTuple& a, const DensityTuple& b, const TransportDiagnosticOptions& opts) {
    if (a.size() != b.size()) throw std::invalid_argument("tuple_w2_sq: species counts differ");
    SinkhornOptions so;
    so.eps = opts.eps;
    so.tol = opts.tol;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].values() == b[i].values()) continue;
        s += sinkhorn_divergence(a[i], b[i], so);
    }
    return s;
}

namespace {

// State index whose piecewise-constant interval ((k-1)h, kh] contains t.
std::size_t state_at(const Trajectory& traj, double t) {
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        if (t <= traj.times[k] + 1e-12) return k;
    return traj.times.size() - 1;
}

}  // namespace

double holder_check(const Trajectory& traj, int sample_pairs, const TransportDiagnosticOptions& opts) {
    if (traj.states.size() < 2) throw std::invalid_argument("holder_check needs at least two states");
    const double T = traj.times.back();
    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double best = 0.0;
    for (int p = 0; p < sample_pairs; ++p) {
        const double s = U(rng) * T, t = U(rng) * T;
        const std::size_t ks = state_at(traj, s), kt = state_at(traj, t);
        if (ks == kt) continue;
        const double w2 = std::sqrt(tuple_w2_sq(traj.states[ks], traj.states[kt], opts));
        best = std::max(best, w2 / std::sqrt(std::abs(traj.times[kt] - traj.times[ks]) + traj.h));
    }
    return best;
}

double sobolev_integrand(const Density& rho, double m) {
    if (!(m >= 1)) throw std::invalid_argument("sobolev exponent must be at least 1");
    const Grid& g = rho.grid();
    ScalarField f(g);
    for (std::size_t k = 0; k < g.size(); ++k) f[k] = std::pow(rho[k], 0.5 * m);
    const VectorField d = grad(f);
    double s = 0.0;
    for (int a = 0; a < g.dim(); ++a) s += inner(g, d[a], d[a]);
    return s;
}

double sobolev_estimate(const Trajectory& traj, double m) {
    double s = 0.0;
    for (std::size_t k = 1; k < traj.states.size(); ++k) s += traj.h * sobolev_integrand(traj.states[k].at(0), m);
    return s;
}

TestFunction::TestFunction(const Grid& g, double horizon, std::vector<double> time_poly, ScalarField space)
    : grid_(g), T_(horizon), poly_(std::move(time_poly)), space_(std::move(space)) {
    if (!(space_.grid == g)) throw std::invalid_argument("test function space factor grid mismatch");
    if (!(horizon > 0)) throw std::invalid_argument("test function horizon must be positive");
    double scale = 0.0;
    for (double c : poly_) scale = std::max(scale, std::abs(c));
    if (std::abs(this->g(T_)) > 1e-12 * std::max(1.0, scale))
        throw std::invalid_argument("test function must vanish at the final time");
}

TestFunction TestFunction::cosine_decay(const Grid& g, double horizon, int p) {
    if (p < 1) throw std::invalid_argument("cosine_decay needs p >= 1");
    // Expand (1 - t/T)^p.
    std::vector<double> c(p + 1);
    double binom = 1.0;
    for (int k = 0; k <= p; ++k) {
        c[k] = binom * std::pow(-1.0 / horizon, k);
        binom = binom * (p - k) / (k + 1);
    }
    ScalarField s = sample(g, [&](double x, double y) {
        return 1.0 + std::cos(2 * M_PI * x) * (g.dim() == 2 ? std::cos(2 * M_PI * y) : 1.0);
    });
    return TestFunction(g, horizon, std::move(c), std::move(s));
}

TestFunction TestFunction::zero(const Grid& g, double horizon) { return TestFunction(g, horizon, {0.0}, ScalarField(g)); }

double TestFunction::g(double t) const {
    double s = 0.0;
    for (std::size_t k = poly_.size(); k-- > 0;) s = s * t + poly_[k];
    return s;
}

double TestFunction::dg(double t) const {
    double s = 0.0;
    for (std::size_t k = poly_.size(); k-- > 1;) s = s * t + k * poly_[k];
    return s;
}

double TestFunction::G(double t) const {
    double s = 0.0;
    for (std::size_t k = poly_.size(); k-- > 0;) s = s * t + poly_[k] / (k + 1);
    return s * t;
}

double weak_residual(const Trajectory& traj, const Problem& problem, const TestFunction& phi, ResidualMode mode,
                     double eps_reg) {
    const Grid& g = phi.grid();
    if (!(traj.grid == g)) throw std::invalid_argument("weak_residual: grid mismatch");
    if (traj.states.empty()) throw std::invalid_argument("weak_residual: empty trajectory");
    if (std::abs(phi.g(phi.horizon())) > 1e-12) throw std::invalid_argument("weak_residual: phi(T) must vanish");
    const double T = phi.horizon();
    const ScalarField& S = phi.space();
    const ScalarField lapS = laplacian(S);
    const VectorField gradS = grad(S);
    std::vector<std::optional<RegularizedEnergy>> reg;
    for (const auto& e : problem.energies)
        reg.push_back(eps_reg > 0 ? std::optional<RegularizedEnergy>(regularize(e, eps_reg)) : std::nullopt);
    auto pressure = [&](std::size_t i, double v) { return reg[i] ? reg[i]->dF(v) : problem.energies[i].dF(v); };

    double total = 0.0;
    for (const auto& r : traj.states[0]) total += phi.g(0.0) * inner(g, S.values, r.values());
    for (std::size_t k = 1; k < traj.states.size(); ++k) {
        const double t0 = traj.times[k - 1];
        const double t1 = std::min(traj.times[k], T);
        if (t0 >= T) break;
        const double int_dg = phi.g(t1) - phi.g(t0);
        const double int_g = phi.G(t1) - phi.G(t0);
        const DensityTuple& rho = traj.states[k];
        const auto vel = mode == ResidualMode::Potential ? velocity_field(problem.drift, rho)
                                                         : advection_velocity(problem.drift, rho);
        for (std::size_t i = 0; i < rho.size(); ++i) {
            double mass_term = inner(g, S.values, rho[i].values());
            double diff_term = 0.0, drift_term = 0.0;
            for (std::size_t c = 0; c < g.size(); ++c) {
                diff_term += pressure(i, rho[i][c]) * lapS[c];
                double dot = 0.0;
                for (int a = 0; a < g.dim(); ++a) dot += vel[i][a][c] * gradS[a][c];
                drift_term += dot * rho[i][c];
            }
            diff_term *= g.cell_volume();
            drift_term *= g.cell_volume();
            // Potential mode: ∂tρ = ΔF' + div(ρ∇U). Velocity mode: ∂tρ = ΔF' - div(ρV).
            const double transport = mode == ResidualMode::Potential ? -drift_term : drift_term;
            total += int_dg * mass_term + int_g * (diff_term + transport);
        }
    }
    return std::abs(total);
}

std::vector<StabilityPoint> stability_compare(const Trajectory& a, const Trajectory& b, double c_hat,
                                              const TransportDiagnosticOptions& opts) {
    if (!(a.grid == b.grid)) throw std::invalid_argument("stability_compare: trajectories live on different grids");
    if (a.times.size() != b.times.size()) throw std::invalid_argument("stability_compare: time grids differ");
    for (std::size_t k = 0; k < a.times.size(); ++k)
        if (std::abs(a.times[k] - b.times[k]) > 1e-12 * std::max(1.0, a.times[k]))
            throw std::invalid_argument("stability_compare: time grids differ");
    if (!a.states.empty() && a.states[0].size() != b.states[0].size())
        throw std::invalid_argument("stability_compare: species counts differ");
    std::vector<StabilityPoint> out;
    double initial = 0.0;
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        StabilityPoint p;
        p.time = a.times[k];
        p.w2_sum = tuple_w2_sq(a.states[k], b.states[k], opts);
        if (k == 0) initial = p.w2_sum;
        p.bound = std::exp(4.0 * c_hat * p.time) * initial * (1.0 + kStabilityMargin);
        p.flagged = k > 0 && p.w2_sum > p.bound;
        out.push_back(p);
    }
    return out;
}

double l1_distance(const DensityTuple& a, const DensityTuple& b) {
    if (a.size() != b.size()) throw std::invalid_argument("l1_distance: species counts differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].grid() == b[i].grid())) throw std::invalid_argument("l1_distance: grid mismatch");
        double acc = 0.0;
        for (std::size_t k = 0; k < a[i].size(); ++k) acc += std::abs(a[i][k] - b[i][k]);
        s += acc * a[i].grid().cell_volume();
    }
    return s;
}

}  // namespace torusflow
