#pragma once

#include <string>
#include <vector>

#include "torusflow/grid.hpp"

namespace torusflow {

enum class EnergyKind { Entropy, Power, Zero };
enum class EnergyTerm { E, F, Fp, Fpp };

// Internal energy density E with the pressure F' = tE' - E and F = ∫F'.
// Power energies are constructible for any m > 0 so that the hypothesis
// checks can diagnose m <= 1; solvers reject non-convex energies.
class InternalEnergy {
public:
    static InternalEnergy entropy(double reference_constant = 1.0);
    static InternalEnergy power(double m, double reference_constant = 1.0);
    static InternalEnergy zero();

    EnergyKind kind() const { return kind_; }
    double exponent() const { return m_; }  // 1 for entropy and zero
    double reference_constant() const { return C_; }
    bool is_convex() const { return kind_ != EnergyKind::Power || m_ >= 1.0; }
    std::string name() const;

    double E(double t) const;
    double dE(double t) const;   // E'
    double d2E(double t) const;  // E''
    double F(double t) const;
    double dF(double t) const;   // F'
    double d2F(double t) const;  // F''

    bool operator==(const InternalEnergy&) const = default;

private:
    InternalEnergy(EnergyKind k, double m, double C) : kind_(k), m_(m), C_(C) {}
    EnergyKind kind_;
    double m_;
    double C_;
};

double evaluate(const InternalEnergy& energy, double t, EnergyTerm which);

// F with its curvature clamped to [eps, 1/eps] by quadratic extension
// below delta and above M.
class RegularizedEnergy {
public:
    const InternalEnergy& base() const { return base_; }
    double eps() const { return eps_; }
    double delta() const { return delta_; }
    double M() const { return M_; }  // +inf when the upper cap is inactive

    double F(double rho) const;
    double dF(double rho) const;
    double d2F(double rho) const;

private:
    friend RegularizedEnergy regularize(const InternalEnergy&, double);
    RegularizedEnergy(const InternalEnergy& b, double eps, double delta, double M)
        : base_(b), eps_(eps), delta_(delta), M_(M) {}
    InternalEnergy base_;
    double eps_;
    double delta_;
    double M_;
};

RegularizedEnergy regularize(const InternalEnergy& energy, double eps);

// g(r) = r^d E(r^{-d}) convex and nonincreasing on a log-spaced sample of r.
bool mccann_check(const InternalEnergy& energy, int dim, int samples = 200);

// Minimizer of eps·(ρ log(ρ/s) - ρ + s) + tau·(E(ρ) + u·ρ) over ρ >= 0.
double kl_prox(const InternalEnergy& energy, double s, double eps, double tau, double u);

// Same minimizer with log s as input and an extra concave term
// -entropy_weight·(ρ log ρ - ρ); needs 0 <= entropy_weight < eps.
// Returns log ρ*.
double kl_prox_log(const InternalEnergy& energy, double log_s, double eps, double tau, double u,
                   double entropy_weight = 0.0);

// Sampled hypothesis checks on (0, t_max]. Each returned string describes one
// violated condition; empty means all checks passed.
std::vector<std::string> check_growth(const InternalEnergy& energy, double C, double t_max = 100.0,
                                      int samples = 400);
std::vector<std::string> check_parabolic_hypotheses(const InternalEnergy& energy, double t_max = 100.0,
                                                    int samples = 400);
// Smallest C making the sampled growth inequalities hold (inf if none does).
double minimal_growth_constant(const InternalEnergy& energy, double t_max = 100.0, int samples = 400);

// ∫E(ρ) with 0·log 0 = 0.
double internal_energy(const InternalEnergy& energy, const Density& rho);
double entropy_of(const Density& rho);

}  // namespace torusflow
