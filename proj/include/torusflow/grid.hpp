#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace torusflow {

// Periodic cell-centered grid on [0,1)^dim. Cell k has axis indices
// (k % n, k / n); axis 0 varies fastest.
class Grid {
public:
    static Grid make(int dim, int n);

    int dim() const { return dim_; }
    int n() const { return n_; }
    double dx() const { return dx_; }
    std::size_t size() const { return size_; }
    double cell_volume() const { return dim_ == 1 ? dx_ : dx_ * dx_; }

    std::size_t index(int i, int j = 0) const;
    std::array<int, 2> coords(std::size_t k) const;
    std::array<double, 2> center(std::size_t k) const;
    // Neighbor of cell k shifted by `offset` cells along `axis`, wrapping.
    std::size_t neighbor(std::size_t k, int axis, int offset) const;

    bool operator==(const Grid&) const = default;

private:
    Grid(int dim, int n);
    int dim_;
    int n_;
    double dx_;
    std::size_t size_;
};

inline Grid make_grid(int dim, int n) { return Grid::make(dim, n); }

// Flat-torus distance; x and y must have the same length (1 or 2).
double quotient_distance(std::span<const double> x, std::span<const double> y);
// Minimal-image displacement x - y, componentwise in [-1/2, 1/2].
double torus_displacement(double x, double y);

struct ScalarField {
    Grid grid;
    std::vector<double> values;

    explicit ScalarField(const Grid& g, double fill = 0.0);
    ScalarField(const Grid& g, std::vector<double> v);

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t k) const { return values[k]; }
    double& operator[](std::size_t k) { return values[k]; }
};

struct VectorField {
    Grid grid;
    std::vector<std::vector<double>> components;

    explicit VectorField(const Grid& g);
    const std::vector<double>& operator[](int axis) const { return components[axis]; }
    std::vector<double>& operator[](int axis) { return components[axis]; }
};

// Nonnegative cell values of unit total mass (after normalize). The
// constructor checks nonnegativity and finiteness only.
class Density {
public:
    Density(const Grid& g, std::vector<double> values);
    static Density uniform(const Grid& g);

    const Grid& grid() const { return grid_; }
    const std::vector<double>& values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t k) const { return values_[k]; }
    double mass() const;
    ScalarField field() const { return ScalarField(grid_, values_); }

private:
    Grid grid_;
    std::vector<double> values_;
};

using DensityTuple = std::vector<Density>;

Density normalize(const Density& rho);
Density normalize(const Grid& g, std::vector<double> values);

// Centered periodic differences.
VectorField grad(const ScalarField& f);
ScalarField div(const VectorField& w);
// Compact (2·dim+1)-point Laplacian.
ScalarField laplacian(const ScalarField& f);

double integrate(const Grid& g, std::span<const double> values);
double inner(const Grid& g, std::span<const double> a, std::span<const double> b);

// Evaluates fn(x, y) at every cell center (y = 0 in 1D).
template <class Fn>
ScalarField sample(const Grid& g, Fn&& fn) {
    ScalarField out(g);
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto c = g.center(k);
        out[k] = fn(c[0], c[1]);
    }
    return out;
}

}  // namespace torusflow
