#include "torusflow/interaction.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <stdexcept>

#include "torusflow/transport.hpp"

namespace torusflow {

namespace {

double sup_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double sup_norm(const VectorField& f) {
    double m = 0.0;
    for (std::size_t k = 0; k < f.grid.size(); ++k) {
        double sq = 0.0;
        for (int a = 0; a < f.grid.dim(); ++a) sq += f[a][k] * f[a][k];
        m = std::max(m, std::sqrt(sq));
    }
    return m;
}

// Pointwise Frobenius norm of the centered-difference Jacobian, maximized.
double sup_jacobian(const VectorField& f) {
    const Grid& g = f.grid;
    std::vector<double> sq(g.size(), 0.0);
    for (int a = 0; a < g.dim(); ++a) {
        VectorField d = grad(ScalarField(g, f[a]));
        for (int b = 0; b < g.dim(); ++b)
            for (std::size_t k = 0; k < g.size(); ++k) sq[k] += d[b][k] * d[b][k];
    }
    double m = 0.0;
    for (double x : sq) m = std::max(m, std::sqrt(x));
    return m;
}

double sup_positive(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, x);
    return m;
}

std::vector<double> convolve_direct(const Grid& g, const std::vector<double>& kernel,
                                    const std::vector<double>& values) {
    const std::size_t N = g.size();
    std::vector<double> out(N, 0.0);
    const int n = g.n();
    if (g.dim() == 1) {
        for (int a = 0; a < n; ++a) {
            double s = 0.0;
            for (int b = 0; b < n; ++b) s += kernel[(a - b + n) % n] * values[b];
            out[a] = s;
        }
    } else {
        for (int ay = 0; ay < n; ++ay)
            for (int ax = 0; ax < n; ++ax) {
                double s = 0.0;
                for (int by = 0; by < n; ++by) {
                    const int dy = (ay - by + n) % n;
                    for (int bx = 0; bx < n; ++bx)
                        s += kernel[std::size_t((ax - bx + n) % n) + std::size_t(n) * dy] *
                             values[std::size_t(bx) + std::size_t(n) * by];
                }
                out[std::size_t(ax) + std::size_t(n) * ay] = s;
            }
    }
    const double w = g.cell_volume();
    for (double& x : out) x *= w;
    return out;
}

std::vector<double> convolve_fft(const Grid& g, const std::vector<double>& kernel,
                                 const std::vector<double>& values) {
    const std::size_t N = g.size();
    const int n = g.n();
    auto* buf_k = fftw_alloc_complex(N);
    auto* buf_v = fftw_alloc_complex(N);
    // Axis 0 varies fastest in cell order, so it is FFTW's last dimension.
    fftw_plan pk = g.dim() == 1 ? fftw_plan_dft_1d(n, buf_k, buf_k, FFTW_FORWARD, FFTW_ESTIMATE)
                                : fftw_plan_dft_2d(n, n, buf_k, buf_k, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan pv = g.dim() == 1 ? fftw_plan_dft_1d(n, buf_v, buf_v, FFTW_FORWARD, FFTW_ESTIMATE)
                                : fftw_plan_dft_2d(n, n, buf_v, buf_v, FFTW_FORWARD, FFTW_ESTIMATE);
    fftw_plan pb = g.dim() == 1 ? fftw_plan_dft_1d(n, buf_v, buf_v, FFTW_BACKWARD, FFTW_ESTIMATE)
                                : fftw_plan_dft_2d(n, n, buf_v, buf_v, FFTW_BACKWARD, FFTW_ESTIMATE);
    for (std::size_t k = 0; k < N; ++k) {
        buf_k[k][0] = kernel[k];
        buf_k[k][1] = 0.0;
        buf_v[k][0] = values[k];
        buf_v[k][1] = 0.0;
    }
    fftw_execute(pk);
    fftw_execute(pv);
    for (std::size_t k = 0; k < N; ++k) {
        const double re = buf_k[k][0] * buf_v[k][0] - buf_k[k][1] * buf_v[k][1];
        const double im = buf_k[k][0] * buf_v[k][1] + buf_k[k][1] * buf_v[k][0];
        buf_v[k][0] = re;
        buf_v[k][1] = im;
    }
    fftw_execute(pb);
    std::vector<double> out(N);
    const double scale = g.cell_volume() / double(N);
    for (std::size_t k = 0; k < N; ++k) out[k] = buf_v[k][0] * scale;
    fftw_destroy_plan(pk);
    fftw_destroy_plan(pv);
    fftw_destroy_plan(pb);
    fftw_free(buf_k);
    fftw_free(buf_v);
    return out;
}

void check_tuple(const DriftModel& model, const DensityTuple& rho) {
    if (int(rho.size()) != model.species())
        throw std::invalid_argument("drift evaluation: density tuple has " + std::to_string(rho.size()) +
                                    " species, model expects " + std::to_string(model.species()));
    for (const auto& r : rho)
        if (!(r.grid() == model.grid())) throw std::invalid_argument("drift evaluation: density grid mismatch");
}

// Density pair families used to probe the W2-Lipschitz constant: narrow
// bumps against small shifts of themselves (near-extremal for smooth
// kernels) and random smooth profiles.
std::vector<double> bump(const Grid& g, double cx, double cy, double width) {
    std::vector<double> v(g.size());
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto c = g.center(k);
        double r2 = torus_displacement(c[0], cx) * torus_displacement(c[0], cx);
        if (g.dim() == 2) r2 += torus_displacement(c[1], cy) * torus_displacement(c[1], cy);
        v[k] = std::exp(-0.5 * r2 / (width * width)) + 1e-6;
    }
    return v;
}

std::vector<double> smooth_random(const Grid& g, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::vector<double> v(g.size(), 1.0);
    for (int mode = 1; mode <= 3; ++mode) {
        const double amp = 0.3 * U(rng) / mode, phx = U(rng), phy = U(rng);
        for (std::size_t k = 0; k < g.size(); ++k) {
            auto c = g.center(k);
            double arg = 2 * M_PI * mode * (c[0] + phx);
            if (g.dim() == 2) arg += 2 * M_PI * mode * (c[1] + phy);
            v[k] += amp * std::cos(arg);
        }
    }
    return v;
}

}  // namespace

DriftModel DriftModel::potential(const Grid& g, int species, std::vector<ScalarField> kernels,
                                 std::optional<double> nonneg_shift) {
    if (species < 1) throw std::invalid_argument("drift model needs at least one species");
    if (kernels.size() != std::size_t(species) * species)
        throw std::invalid_argument("potential drift needs species² kernels");
    for (const auto& k : kernels)
        if (!(k.grid == g)) throw std::invalid_argument("kernel grid does not match the working grid");
    DriftModel m(g, species, DriftMode::Potential);
    m.potential_kernels_ = std::move(kernels);
    double need = 0.0;
    for (int i = 0; i < species; ++i) {
        double s = 0.0;
        for (int j = 0; j < species; ++j) s += sup_abs(m.potential_kernel(i, j).values);
        need = std::max(need, s);
    }
    m.shift_ = nonneg_shift.value_or(need);
    return m;
}

DriftModel DriftModel::velocity(const Grid& g, int species, std::vector<VectorField> kernels) {
    if (species < 1) throw std::invalid_argument("drift model needs at least one species");
    if (kernels.size() != std::size_t(species) * species)
        throw std::invalid_argument("velocity drift needs species² kernels");
    for (const auto& k : kernels)
        if (!(k.grid == g)) throw std::invalid_argument("kernel grid does not match the working grid");
    DriftModel m(g, species, DriftMode::Velocity);
    m.velocity_kernels_ = std::move(kernels);
    return m;
}

DriftModel DriftModel::none(const Grid& g, int species) {
    return potential(g, species, std::vector<ScalarField>(std::size_t(species) * species, ScalarField(g)), 0.0);
}

const ScalarField& DriftModel::potential_kernel(int i, int j) const {
    if (mode_ != DriftMode::Potential) throw std::logic_error("drift model is not in potential mode");
    return potential_kernels_.at(std::size_t(i) * species_ + j);
}

const VectorField& DriftModel::velocity_kernel(int i, int j) const {
    if (mode_ != DriftMode::Velocity) throw std::logic_error("drift model is not in velocity mode");
    return velocity_kernels_.at(std::size_t(i) * species_ + j);
}

bool DriftModel::is_zero() const {
    for (const auto& k : potential_kernels_)
        if (sup_abs(k.values) != 0.0) return false;
    for (const auto& k : velocity_kernels_)
        for (const auto& c : k.components)
            if (sup_abs(c) != 0.0) return false;
    return true;
}

bool DriftModel::is_decoupled() const {
    for (int i = 0; i < species_; ++i)
        for (int j = 0; j < species_; ++j) {
            if (i == j) continue;
            if (mode_ == DriftMode::Potential) {
                if (sup_abs(potential_kernel(i, j).values) != 0.0) return false;
            } else {
                for (const auto& c : velocity_kernel(i, j).components)
                    if (sup_abs(c) != 0.0) return false;
            }
        }
    return true;
}

std::vector<double> circular_convolve(const Grid& g, const std::vector<double>& kernel,
                                      const std::vector<double>& values, ConvolutionMethod method) {
    if (kernel.size() != g.size() || values.size() != g.size())
        throw std::invalid_argument("circular_convolve: size mismatch");
    return method == ConvolutionMethod::Direct ? convolve_direct(g, kernel, values) : convolve_fft(g, kernel, values);
}

std::vector<ScalarField> potential_from_kernel(const DriftModel& model, const DensityTuple& rho,
                                               ConvolutionMethod method) {
    if (model.mode() != DriftMode::Potential)
        throw std::invalid_argument("potential_from_kernel: drift model is in velocity mode");
    check_tuple(model, rho);
    const Grid& g = model.grid();
    std::vector<ScalarField> out;
    for (int i = 0; i < model.species(); ++i) {
        ScalarField u(g, model.nonneg_shift());
        for (int j = 0; j < model.species(); ++j) {
            const auto& k = model.potential_kernel(i, j).values;
            if (sup_abs(k) == 0.0) continue;
            const auto c = circular_convolve(g, k, rho[j].values(), method);
            for (std::size_t q = 0; q < g.size(); ++q) u[q] += c[q];
        }
        out.push_back(std::move(u));
    }
    return out;
}

std::vector<VectorField> velocity_field(const DriftModel& model, const DensityTuple& rho, ConvolutionMethod method) {
    check_tuple(model, rho);
    std::vector<VectorField> out;
    if (model.mode() == DriftMode::Potential) {
        for (const auto& u : potential_from_kernel(model, rho, method)) out.push_back(grad(u));
        return out;
    }
    const Grid& g = model.grid();
    for (int i = 0; i < model.species(); ++i) {
        VectorField v(g);
        for (int j = 0; j < model.species(); ++j) {
            const auto& k = model.velocity_kernel(i, j);
            for (int a = 0; a < g.dim(); ++a) {
                if (sup_abs(k[a]) == 0.0) continue;
                const auto c = circular_convolve(g, k[a], rho[j].values(), method);
                for (std::size_t q = 0; q < g.size(); ++q) v[a][q] += c[q];
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

double velocity_gap(const DriftModel& model, const DensityTuple& rho, const DensityTuple& nu) {
    const auto a = velocity_field(model, rho);
    const auto b = velocity_field(model, nu);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        VectorField d(model.grid());
        for (int c = 0; c < model.grid().dim(); ++c)
            for (std::size_t k = 0; k < model.grid().size(); ++k) d[c][k] = a[i][c][k] - b[i][c][k];
        m = std::max(m, sup_norm(d));
    }
    return m;
}

DriftConstants estimate_constants(const DriftModel& model, const EstimateOptions& opts) {
    const Grid& g = model.grid();
    const int l = model.species();
    DriftConstants out;
    for (int i = 0; i < l; ++i) {
        double lx = 0.0, lap = 0.0, vlx = 0.0;
        for (int j = 0; j < l; ++j) {
            if (model.mode() == DriftMode::Potential) {
                const auto& w = model.potential_kernel(i, j);
                const VectorField gw = grad(w);
                lx += sup_norm(gw);
                lap += sup_positive(div(gw).values);
                vlx += sup_jacobian(gw);
            } else {
                const auto& b = model.velocity_kernel(i, j);
                lx += sup_norm(b);
                lap += sup_positive(div(b).values);
                vlx += sup_jacobian(b);
            }
        }
        out.lip_x = std::max(out.lip_x, lx);
        out.lap_plus = std::max(out.lap_plus, lap);
        out.vel_lip_x = std::max(out.vel_lip_x, vlx);
    }
    if (model.is_zero() || opts.pairs <= 0) return out;

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const CostMatrix cost(g);
    SinkhornOptions so;
    so.eps = opts.eps;
    so.tol = 1e-9;
    for (int p = 0; p < opts.pairs; ++p) {
        DensityTuple rho, nu;
        double w2_sum = 0.0;
        for (int j = 0; j < l; ++j) {
            std::vector<double> a, b;
            if (p % 2 == 0) {
                const double cx = U(rng), cy = U(rng);
                const double width = (1.5 + 2.0 * U(rng)) * g.dx();
                const double shift = (1 + int(3 * U(rng))) * g.dx();
                a = bump(g, cx, cy, width);
                b = bump(g, cx + shift, cy, width);
            } else {
                a = smooth_random(g, rng);
                b = smooth_random(g, rng);
            }
            rho.push_back(normalize(g, a));
            nu.push_back(normalize(g, b));
            w2_sum += std::sqrt(sinkhorn_divergence(rho.back(), nu.back(), so, &cost));
        }
        if (w2_sum > 0) out.lip_w2 = std::max(out.lip_w2, velocity_gap(model, rho, nu) / w2_sum);
    }
    return out;
}

double stability_constant(const DriftConstants& c) { return std::max(c.vel_lip_x, c.lip_w2); }

}  // namespace torusflow
