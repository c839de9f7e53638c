#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "torusflow/grid.hpp"

namespace torusflow {

enum class DriftMode { Potential, Velocity };
enum class ConvolutionMethod { Direct, Transform };

// Convolution drifts. Kernels are stored on the working grid with entry k
// holding the kernel at the lattice displacement (i·dx, j·dx), (i, j) =
// grid.coords(k). Kernel (i, j) acts on species j and feeds species i.
class DriftModel {
public:
    // shift defaults to the smallest constant guaranteeing U >= 0.
    static DriftModel potential(const Grid& g, int species, std::vector<ScalarField> kernels,
                                std::optional<double> nonneg_shift = std::nullopt);
    static DriftModel velocity(const Grid& g, int species, std::vector<VectorField> kernels);
    static DriftModel none(const Grid& g, int species);

    const Grid& grid() const { return grid_; }
    int species() const { return species_; }
    DriftMode mode() const { return mode_; }
    double nonneg_shift() const { return shift_; }
    const ScalarField& potential_kernel(int i, int j) const;
    const VectorField& velocity_kernel(int i, int j) const;
    bool is_zero() const;
    // Zero cross-species kernels.
    bool is_decoupled() const;

private:
    DriftModel(const Grid& g, int species, DriftMode mode) : grid_(g), species_(species), mode_(mode) {}
    Grid grid_;
    int species_;
    DriftMode mode_;
    std::vector<ScalarField> potential_kernels_;
    std::vector<VectorField> velocity_kernels_;
    double shift_ = 0.0;
};

// (K ⋆ v)(x_a) = Σ_b K(x_a - x_b) v_b dx^d.
std::vector<double> circular_convolve(const Grid& g, const std::vector<double>& kernel,
                                      const std::vector<double>& values,
                                      ConvolutionMethod method = ConvolutionMethod::Direct);

std::vector<ScalarField> potential_from_kernel(const DriftModel& model, const DensityTuple& rho,
                                               ConvolutionMethod method = ConvolutionMethod::Direct);
// Potential mode returns grad U; velocity mode returns the kernel sum.
std::vector<VectorField> velocity_field(const DriftModel& model, const DensityTuple& rho,
                                        ConvolutionMethod method = ConvolutionMethod::Direct);

struct DriftConstants {
    double lip_x = 0.0;     // bound on sup|grad U| (sup|V| in velocity mode), uniform in ρ
    double lap_plus = 0.0;  // bound on sup (ΔU)_+ (sup (div V)_+ in velocity mode)
    double lip_w2 = 0.0;    // sampled sup |V[ρ]-V[ν]|_∞ / Σ_j W2(ρ_j, ν_j)
    double vel_lip_x = 0.0; // bound on the spatial Lipschitz constant of the velocity
};

struct EstimateOptions {
    int pairs = 20;
    std::uint64_t seed = 20240601;
    double eps = 1e-4;
};

DriftConstants estimate_constants(const DriftModel& model, const EstimateOptions& opts = {});

// Constant entering the stability bound: max of the spatial and the
// W2-Lipschitz constants of the velocity.
double stability_constant(const DriftConstants& c);

// |V[ρ] - V[ν]|_∞ over species and cells.
double velocity_gap(const DriftModel& model, const DensityTuple& rho, const DensityTuple& nu);

}  // namespace torusflow
