#include "torusflow/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace torusflow {

namespace {

constexpr double kFloor = 1e-300;
// log(1e290): scalings are absorbed into the potentials beyond this.
constexpr double kAbsorbLog = 667.0;

// Plan γ_ij = exp(lu_i + lv_j + (f_i + g_j - c_ij)/eps). The kernel
// exp((f_i + g_j - c_ij)/eps) is cached; when a scaled sum underflows the
// engine switches to log-sum-exp evaluation for the rest of the solve.
class ScalingEngine {
public:
    ScalingEngine(std::span<const double> cost, std::size_t M, std::size_t N, double eps,
                  std::vector<double> f, std::vector<double> g)
        : c_(cost), M_(M), N_(N), eps_(eps), f_(std::move(f)), g_(std::move(g)),
          lu_(M, 0.0), lv_(N, 0.0) {
        rebuild();
    }

    double eps() const { return eps_; }
    bool log_mode() const { return log_mode_; }
    std::vector<double>& lu() { return lu_; }
    std::vector<double>& lv() { return lv_; }
    const std::vector<double>& g() const { return g_; }

    void set_eps(double eps) {
        absorb_scalings();
        eps_ = eps;
        if (!log_mode_) rebuild();
    }

    // out_j = log Σ_i exp(lu_i) K_ij
    void log_col_sums(std::vector<double>& out) {
        out.assign(N_, 0.0);
        if (!log_mode_) {
            std::vector<double> s(N_, 0.0);
            for (std::size_t i = 0; i < M_; ++i) {
                const double ui = std::exp(lu_[i]);
                const double* row = &k_[i * N_];
                for (std::size_t j = 0; j < N_; ++j) s[j] += ui * row[j];
            }
            bool ok = true;
            for (std::size_t j = 0; j < N_; ++j) {
                if (!(s[j] > 0) || !std::isfinite(s[j])) { ok = false; break; }
                out[j] = std::log(s[j]);
            }
            if (ok) return;
            enter_log_mode();
        }
        std::vector<double> col(M_);
        for (std::size_t j = 0; j < N_; ++j) {
            double mx = -INFINITY;
            for (std::size_t i = 0; i < M_; ++i) {
                col[i] = lu_[i] + (f_[i] + g_[j] - c_[i * N_ + j]) / eps_;
                mx = std::max(mx, col[i]);
            }
            double acc = 0.0;
            for (std::size_t i = 0; i < M_; ++i) acc += std::exp(col[i] - mx);
            out[j] = mx + std::log(acc);
        }
    }

    // out_i = log Σ_j K_ij exp(lv_j)
    void log_row_sums(std::vector<double>& out) {
        out.assign(M_, 0.0);
        if (!log_mode_) {
            std::vector<double> v(N_);
            for (std::size_t j = 0; j < N_; ++j) v[j] = std::exp(lv_[j]);
            bool ok = true;
            for (std::size_t i = 0; i < M_; ++i) {
                const double* row = &k_[i * N_];
                double s = 0.0;
                for (std::size_t j = 0; j < N_; ++j) s += row[j] * v[j];
                if (!(s > 0) || !std::isfinite(s)) { ok = false; break; }
                out[i] = std::log(s);
            }
            if (ok) return;
            enter_log_mode();
        }
        std::vector<double> row(N_);
        for (std::size_t i = 0; i < M_; ++i) {
            double mx = -INFINITY;
            for (std::size_t j = 0; j < N_; ++j) {
                row[j] = lv_[j] + (f_[i] + g_[j] - c_[i * N_ + j]) / eps_;
                mx = std::max(mx, row[j]);
            }
            double acc = 0.0;
            for (std::size_t j = 0; j < N_; ++j) acc += std::exp(row[j] - mx);
            out[i] = mx + std::log(acc);
        }
    }

    void absorb_if_needed() {
        if (log_mode_) {
            absorb_scalings();
            return;
        }
        auto out_of_range = [](const std::vector<double>& l) {
            return std::any_of(l.begin(), l.end(), [](double x) { return std::abs(x) > kAbsorbLog; });
        };
        if (out_of_range(lu_) || out_of_range(lv_)) {
            absorb_scalings();
            rebuild();
        }
    }

    double log_plan(std::size_t i, std::size_t j) const {
        return lu_[i] + lv_[j] + (f_[i] + g_[j] - c_[i * N_ + j]) / eps_;
    }

    // g + eps·lv: the full column potential.
    std::vector<double> total_g() const {
        std::vector<double> out(N_);
        for (std::size_t j = 0; j < N_; ++j) out[j] = g_[j] + eps_ * lv_[j];
        return out;
    }

private:
    void absorb_scalings() {
        for (std::size_t i = 0; i < M_; ++i) f_[i] += eps_ * lu_[i], lu_[i] = 0.0;
        for (std::size_t j = 0; j < N_; ++j) g_[j] += eps_ * lv_[j], lv_[j] = 0.0;
    }

    void enter_log_mode() {
        log_mode_ = true;
        k_.clear();
        k_.shrink_to_fit();
    }

    void rebuild() {
        k_.resize(M_ * N_);
        for (std::size_t i = 0; i < M_; ++i)
            for (std::size_t j = 0; j < N_; ++j)
                k_[i * N_ + j] = std::exp((f_[i] + g_[j] - c_[i * N_ + j]) / eps_);
    }

    std::span<const double> c_;
    std::size_t M_, N_;
    double eps_;
    std::vector<double> f_, g_;
    std::vector<double> lu_, lv_;
    std::vector<double> k_;
    bool log_mode_ = false;
};

double max_cost(std::span<const double> c) {
    double m = 0.0;
    for (double x : c) m = std::max(m, x);
    return m;
}

void check_mass_vector(std::span<const double> a, const char* what) {
    for (double x : a)
        if (!(x >= 0) || !std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": invalid mass entry");
}

}  // namespace

CostMatrix::CostMatrix(const Grid& g) : grid_(g), n_(g.size()) {
    if (n_ > kMaxCells)
        throw std::invalid_argument("cost matrix size guard exceeded: " + std::to_string(n_) + " cells > " +
                                    std::to_string(kMaxCells));
    c_.resize(n_ * n_);
    for (std::size_t i = 0; i < n_; ++i) {
        auto xi = g.center(i);
        for (std::size_t j = i; j < n_; ++j) {
            auto xj = g.center(j);
            double sq = 0.0;
            for (int a = 0; a < g.dim(); ++a) {
                const double d = torus_displacement(xi[a], xj[a]);
                sq += d * d;
            }
            c_[i * n_ + j] = c_[j * n_ + i] = sq;
            max_ = std::max(max_, sq);
        }
    }
}

TransportResult sinkhorn(std::span<const double> a, std::span<const double> b, std::span<const double> cost,
                         double unit, const SinkhornOptions& opts) {
    const std::size_t M = a.size(), N = b.size();
    if (cost.size() != M * N) throw std::invalid_argument("sinkhorn: cost size does not match marginals");
    if (!(opts.eps > 0)) throw std::invalid_argument("sinkhorn: eps must be positive");
    if (!(unit > 0)) throw std::invalid_argument("sinkhorn: unit must be positive");
    check_mass_vector(a, "sinkhorn first marginal");
    check_mass_vector(b, "sinkhorn second marginal");

    std::vector<double> la(M), lb(N);
    for (std::size_t i = 0; i < M; ++i) la[i] = std::log(std::max(a[i], kFloor));
    for (std::size_t j = 0; j < N; ++j) lb[j] = std::log(std::max(b[j], kFloor));

    std::vector<double> stages;
    if (opts.anneal) {
        for (double e = std::max(max_cost(cost), opts.eps); e > opts.eps; e *= 0.5) stages.push_back(e);
    }
    stages.push_back(opts.eps);

    ScalingEngine eng(cost, M, N, stages.front(), std::vector<double>(M, 0.0), std::vector<double>(N, 0.0));
    std::vector<double> ls, lr;
    TransportResult res;
    res.eps = opts.eps;
    int total = 0;
    double err = INFINITY;
    for (std::size_t s = 0; s < stages.size(); ++s) {
        const bool last = s + 1 == stages.size();
        eng.set_eps(stages[s]);
        const double stage_tol = last ? opts.tol : std::max(opts.tol, 1e-3);
        const int stage_cap = last ? opts.max_iter : 2000;
        for (int it = 0;; ++it) {
            eng.log_col_sums(ls);
            if (it > 0) {
                err = 0.0;
                for (std::size_t j = 0; j < N; ++j)
                    err = std::max(err, std::abs(std::exp(eng.lv()[j] + ls[j]) - b[j]) / unit);
                if (err <= stage_tol) break;
            }
            if (it >= stage_cap || total >= opts.max_iter) break;
            for (std::size_t j = 0; j < N; ++j) eng.lv()[j] = lb[j] - ls[j];
            eng.log_row_sums(lr);
            for (std::size_t i = 0; i < M; ++i) eng.lu()[i] = la[i] - lr[i];
            eng.absorb_if_needed();
            ++total;
        }
    }
    res.iterations = total;
    res.plan_marginal_err = err;
    res.converged = err <= opts.tol;

    double cost_sum = 0.0, kl = 0.0;
    if (opts.keep_plan) res.plan.assign(M * N, 0.0);
    for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t j = 0; j < N; ++j) {
            const double lp = eng.log_plan(i, j);
            const double p = std::exp(lp);
            cost_sum += p * cost[i * N + j];
            if (p > 0) kl += p * (lp - la[i] - lb[j]) - p;
            kl += std::exp(la[i] + lb[j]);
            if (opts.keep_plan) res.plan[i * N + j] = p;
        }
    }
    res.w2_sq = std::max(cost_sum, 0.0);
    res.entropic_cost = cost_sum + opts.eps * kl;
    return res;
}

TransportResult sinkhorn_w2(const Density& mu, const Density& nu, const SinkhornOptions& opts,
                            const CostMatrix* cost) {
    if (!(mu.grid() == nu.grid())) throw std::invalid_argument("sinkhorn_w2: densities live on different grids");
    std::unique_ptr<CostMatrix> own;
    if (!cost) {
        own = std::make_unique<CostMatrix>(mu.grid());
        cost = own.get();
    } else if (!(cost->grid() == mu.grid())) {
        throw std::invalid_argument("sinkhorn_w2: cost matrix grid mismatch");
    }
    const double w = mu.grid().cell_volume();
    std::vector<double> a(mu.values()), b(nu.values());
    for (double& x : a) x *= w;
    for (double& x : b) x *= w;
    return sinkhorn(a, b, cost->entries(), w, opts);
}

TransportResult sinkhorn_w2(const Density& mu, const Density& nu, double eps, double tol, int max_iter) {
    SinkhornOptions o;
    o.eps = eps;
    o.tol = tol;
    o.max_iter = max_iter;
    return sinkhorn_w2(mu, nu, o, nullptr);
}

double sinkhorn_divergence(const Density& mu, const Density& nu, const SinkhornOptions& opts,
                           const CostMatrix* cost) {
    std::unique_ptr<CostMatrix> own;
    if (!cost) {
        own = std::make_unique<CostMatrix>(mu.grid());
        cost = own.get();
    }
    SinkhornOptions o = opts;
    o.keep_plan = false;
    const double ab = sinkhorn_w2(mu, nu, o, cost).entropic_cost;
    const double aa = sinkhorn_w2(mu, mu, o, cost).entropic_cost;
    const double bb = sinkhorn_w2(nu, nu, o, cost).entropic_cost;
    return std::max(ab - 0.5 * (aa + bb), 0.0);
}

namespace {

std::vector<double> point_costs(const std::vector<Point>& xs, const std::vector<Point>& ys) {
    std::vector<double> c(xs.size() * ys.size());
    for (std::size_t i = 0; i < xs.size(); ++i)
        for (std::size_t j = 0; j < ys.size(); ++j) {
            const double d = quotient_distance(xs[i], ys[j]);
            c[i * ys.size() + j] = d * d;
        }
    return c;
}

}  // namespace

TransportResult sinkhorn_points(const std::vector<Point>& xs, const std::vector<Point>& ys,
                                const SinkhornOptions& opts) {
    if (xs.empty() || ys.empty()) throw std::invalid_argument("sinkhorn_points: empty atom list");
    std::vector<double> a(xs.size(), 1.0 / xs.size()), b(ys.size(), 1.0 / ys.size());
    const auto c = point_costs(xs, ys);
    return sinkhorn(a, b, c, std::min(a[0], b[0]), opts);
}

double exact_w2_permutation(const std::vector<Point>& xs, const std::vector<Point>& ys) {
    const std::size_t N = xs.size();
    if (N != ys.size()) throw std::invalid_argument("exact_w2_permutation: atom counts differ");
    if (N == 0) throw std::invalid_argument("exact_w2_permutation: empty atom list");
    if (N > 8) throw std::invalid_argument("exact_w2_permutation supports at most 8 atoms");
    const auto c = point_costs(xs, ys);
    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double s = 0.0;
        for (std::size_t i = 0; i < N; ++i) s += c[i * N + perm[i]];
        best = std::min(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / N;
}

JkoStepResult jko_step(const Density& rho_prev, double h, const InternalEnergy& energy,
                       const ScalarField& potential, const JkoStepOptions& opts) {
    const Grid& grid = rho_prev.grid();
    if (!(h > 0)) throw std::invalid_argument("jko_step: h must be positive");
    if (!(opts.eps > 0)) throw std::invalid_argument("jko_step: eps must be positive");
    if (!(potential.grid == grid)) throw std::invalid_argument("jko_step: potential grid mismatch");
    if (!energy.is_convex()) throw std::invalid_argument("jko_step: energy must be convex");

    std::unique_ptr<CostMatrix> own;
    const CostMatrix* cost = opts.cost;
    if (!cost) {
        own = std::make_unique<CostMatrix>(grid);
        cost = own.get();
    } else if (!(cost->grid() == grid)) {
        throw std::invalid_argument("jko_step: cost matrix grid mismatch");
    }

    const std::size_t N = grid.size();
    const double w = grid.cell_volume();
    const double lw = std::log(w);
    const double eps = opts.eps;
    const double tau = 2.0 * h;
    const double kappa = opts.debias ? 0.5 * eps : 0.0;

    std::vector<double> la(N);
    for (std::size_t i = 0; i < N; ++i) la[i] = std::log(std::max(rho_prev[i], kFloor)) + lw;

    std::vector<double> g0;
    if (opts.warm && opts.warm->g.size() == N) g0 = opts.warm->g;
    else g0.assign(N, eps * lw);
    ScalingEngine eng(cost->entries(), N, N, eps, std::vector<double>(N, eps * lw), std::move(g0));

    std::vector<double> ls, lr, second(N), prev(N);
    auto update_u = [&] {
        eng.log_row_sums(lr);
        for (std::size_t i = 0; i < N; ++i) eng.lu()[i] = la[i] - lr[i];
        eng.absorb_if_needed();
    };
    update_u();

    double change = INFINITY;
    int it = 0;
    bool converged = false;
    for (;; ++it) {
        eng.log_col_sums(ls);
        for (std::size_t j = 0; j < N; ++j) second[j] = std::exp(eng.lv()[j] + ls[j]) / w;
        if (it > 0) {
            change = 0.0;
            for (std::size_t j = 0; j < N; ++j) change = std::max(change, std::abs(second[j] - prev[j]));
            if (change <= opts.tol) {
                converged = true;
                break;
            }
        }
        if (it >= opts.max_iter) break;
        prev.swap(second);
        const double inv_eps = 1.0 / eng.eps();
        for (std::size_t j = 0; j < N; ++j) {
            const double log_sigma = ls[j] - eng.g()[j] * inv_eps;
            const double z = kl_prox_log(energy, log_sigma, eps, tau, potential[j], kappa);
            eng.lv()[j] = z + lw - ls[j];
        }
        update_u();
    }
    if (!converged)
        throw ConvergenceError("jko_step: inner iterations did not converge (change " + std::to_string(change) +
                                   " after " + std::to_string(it) + " iterations)",
                               it, change);

    JkoStepResult out{normalize(grid, second), {}, std::nullopt};
    TransportResult& tr = out.transport;
    tr.eps = eps;
    tr.iterations = it;
    tr.converged = true;
    double cost_sum = 0.0, row_err = 0.0;
    std::vector<double> plan;
    if (opts.keep_plan) plan.assign(N * N, 0.0);
    const auto ce = cost->entries();
    for (std::size_t i = 0; i < N; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            const double p = std::exp(eng.log_plan(i, j));
            row += p;
            cost_sum += p * ce[i * N + j];
            if (opts.keep_plan) plan[i * N + j] = p;
        }
        row_err = std::max(row_err, std::abs(row - std::exp(la[i])) / w);
    }
    tr.w2_sq = cost_sum;
    tr.plan_marginal_err = row_err;
    tr.entropic_cost = cost_sum;
    if (opts.keep_plan) out.plan = TransportPlan{grid, std::move(plan)};
    if (opts.warm) opts.warm->g = eng.total_g();
    return out;
}

JkoStepResult jko_step(const Density& rho_prev, double h, const InternalEnergy& energy,
                       const ScalarField& potential, double eps, double tol, int max_iter) {
    JkoStepOptions o;
    o.eps = eps;
    o.tol = tol;
    o.max_iter = max_iter;
    return jko_step(rho_prev, h, energy, potential, o);
}

}  // namespace torusflow
