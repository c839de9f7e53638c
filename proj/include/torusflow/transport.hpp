#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "torusflow/energy.hpp"
#include "torusflow/grid.hpp"

namespace torusflow {

// Squared torus distances between cell centers, row-major.
class CostMatrix {
public:
    static constexpr std::size_t kMaxCells = 16384;

    explicit CostMatrix(const Grid& g);

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return c_[i * n_ + j]; }
    std::span<const double> entries() const { return c_; }
    double max() const { return max_; }

private:
    Grid grid_;
    std::size_t n_;
    std::vector<double> c_;
    double max_ = 0.0;
};

inline CostMatrix cost_matrix(const Grid& g) { return CostMatrix(g); }

struct TransportResult {
    double w2_sq = 0.0;             // ⟨c, γ⟩ of the computed plan
    double plan_marginal_err = 0.0; // max marginal violation per unit reference mass
    int iterations = 0;
    double eps = 0.0;
    bool converged = false;
    double entropic_cost = 0.0;     // ⟨c, γ⟩ + eps·KL(γ | a⊗b)
    std::vector<double> plan;       // row-major masses, only when requested
};

struct SinkhornOptions {
    double eps = 1e-3;
    double tol = 1e-10;
    int max_iter = 200000;
    bool keep_plan = false;
    // Geometric eps-continuation from the largest cost down to eps.
    bool anneal = true;
};

// Balanced entropic transport between mass vectors a (size M) and b (size N)
// for a row-major M×N cost. Marginal errors are measured per `unit` of mass.
TransportResult sinkhorn(std::span<const double> a, std::span<const double> b,
                         std::span<const double> cost, double unit,
                         const SinkhornOptions& opts);

TransportResult sinkhorn_w2(const Density& mu, const Density& nu, const SinkhornOptions& opts,
                            const CostMatrix* cost = nullptr);
TransportResult sinkhorn_w2(const Density& mu, const Density& nu, double eps, double tol, int max_iter);

// OT_eps(μ,ν) - (OT_eps(μ,μ) + OT_eps(ν,ν))/2 with OT_eps the entropic cost;
// clamped at 0. Approximates W2² with the entropic blur removed.
double sinkhorn_divergence(const Density& mu, const Density& nu, const SinkhornOptions& opts,
                           const CostMatrix* cost = nullptr);

using Point = std::vector<double>;

// Uniform atoms, quotient-distance cost.
TransportResult sinkhorn_points(const std::vector<Point>& xs, const std::vector<Point>& ys,
                                const SinkhornOptions& opts);
double exact_w2_permutation(const std::vector<Point>& xs, const std::vector<Point>& ys);

struct TransportPlan {
    Grid grid;
    std::vector<double> mass;  // row-major: row = previous state, column = next state
};

// Dual potential carried between consecutive steps to warm-start scalings.
struct JkoWarmStart {
    std::vector<double> g;
};

struct JkoStepOptions {
    double eps = 5e-4;
    double tol = 1e-10;
    int max_iter = 100000;
    bool keep_plan = false;
    // Subtracts (eps/4h)·Ent from the energy to cancel the diffusion added by
    // the entropic blur of the plan.
    bool debias = true;
    const CostMatrix* cost = nullptr;
    JkoWarmStart* warm = nullptr;
};

struct JkoStepResult {
    Density rho;
    TransportResult transport;
    std::optional<TransportPlan> plan;
};

// One entropic minimizing-movement step with the potential frozen.
JkoStepResult jko_step(const Density& rho_prev, double h, const InternalEnergy& energy,
                       const ScalarField& potential, const JkoStepOptions& opts);
JkoStepResult jko_step(const Density& rho_prev, double h, const InternalEnergy& energy,
                       const ScalarField& potential, double eps, double tol, int max_iter);

class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, int iterations, double error)
        : std::runtime_error(what), iterations_(iterations), error_(error) {}
    int iterations() const { return iterations_; }
    double error() const { return error_; }

private:
    int iterations_;
    double error_;
};

}  // namespace torusflow
