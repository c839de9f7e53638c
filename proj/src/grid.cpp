#include "torusflow/grid.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace torusflow {

namespace {

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

}  // namespace

Grid::Grid(int dim, int n)
    : dim_(dim), n_(n), dx_(1.0 / n), size_(dim == 1 ? std::size_t(n) : std::size_t(n) * n) {}

Grid Grid::make(int dim, int n) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("unsupported dimension " + std::to_string(dim));
    if (n < 2) throw std::invalid_argument("grid needs at least 2 cells per axis, got " + std::to_string(n));
    return Grid(dim, n);
}

std::size_t Grid::index(int i, int j) const {
    i %= n_;
    if (i < 0) i += n_;
    if (dim_ == 1) return std::size_t(i);
    j %= n_;
    if (j < 0) j += n_;
    return std::size_t(i) + std::size_t(n_) * std::size_t(j);
}

std::array<int, 2> Grid::coords(std::size_t k) const {
    if (dim_ == 1) return {int(k), 0};
    return {int(k % n_), int(k / n_)};
}

std::array<double, 2> Grid::center(std::size_t k) const {
    auto c = coords(k);
    return {(c[0] + 0.5) * dx_, dim_ == 1 ? 0.0 : (c[1] + 0.5) * dx_};
}

std::size_t Grid::neighbor(std::size_t k, int axis, int offset) const {
    auto c = coords(k);
    c[axis] += offset;
    return index(c[0], c[1]);
}

double quotient_distance(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.empty() || x.size() > 2)
        throw std::invalid_argument("quotient_distance: points must share dimension 1 or 2");
    double sq = 0.0;
    for (std::size_t a = 0; a < x.size(); ++a) {
        double best = INFINITY;
        for (int shift = -1; shift <= 1; ++shift) best = std::min(best, std::abs(x[a] - y[a] + shift));
        sq += best * best;
    }
    return std::sqrt(sq);
}

double torus_displacement(double x, double y) {
    double d = x - y;
    d -= std::round(d);
    return d;
}

ScalarField::ScalarField(const Grid& g, double fill) : grid(g), values(g.size(), fill) {}

ScalarField::ScalarField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.size()) throw std::invalid_argument("scalar field size does not match grid");
    require_finite(values, "scalar field");
}

VectorField::VectorField(const Grid& g) : grid(g), components(g.dim(), std::vector<double>(g.size(), 0.0)) {}

Density::Density(const Grid& g, std::vector<double> values) : grid_(g), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw std::invalid_argument("density size does not match grid");
    require_finite(values_, "density");
    for (double v : values_)
        if (v < 0.0) throw std::invalid_argument("density has a negative entry");
}

Density Density::uniform(const Grid& g) { return Density(g, std::vector<double>(g.size(), 1.0)); }

double Density::mass() const { return integrate(grid_, values_); }

Density normalize(const Grid& g, std::vector<double> values) {
    double total = integrate(g, values);
    if (!(total > 0.0) || !std::isfinite(total)) throw std::invalid_argument("degenerate density (total mass not positive)");
    for (double& v : values) v /= total;
    return Density(g, std::move(values));
}

Density normalize(const Density& rho) { return normalize(rho.grid(), rho.values()); }

VectorField grad(const ScalarField& f) {
    const Grid& g = f.grid;
    VectorField out(g);
    const double inv = 0.5 / g.dx();
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < g.size(); ++k)
            out[a][k] = (f[g.neighbor(k, a, 1)] - f[g.neighbor(k, a, -1)]) * inv;
    return out;
}

ScalarField div(const VectorField& w) {
    const Grid& g = w.grid;
    ScalarField out(g);
    const double inv = 0.5 / g.dx();
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < g.size(); ++k)
            out[k] += (w[a][g.neighbor(k, a, 1)] - w[a][g.neighbor(k, a, -1)]) * inv;
    return out;
}

ScalarField laplacian(const ScalarField& f) {
    const Grid& g = f.grid;
    ScalarField out(g);
    const double inv = 1.0 / (g.dx() * g.dx());
    for (int a = 0; a < g.dim(); ++a)
        for (std::size_t k = 0; k < g.size(); ++k)
            out[k] += (f[g.neighbor(k, a, 1)] - 2.0 * f[k] + f[g.neighbor(k, a, -1)]) * inv;
    return out;
}

double integrate(const Grid& g, std::span<const double> values) {
    return std::accumulate(values.begin(), values.end(), 0.0) * g.cell_volume();
}

double inner(const Grid& g, std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("inner: size mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
    return s * g.cell_volume();
}

}  // namespace torusflow
