#include "torusflow/energy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace torusflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kCheckTol = 1e-10;

std::vector<double> log_spaced(double lo, double hi, int count) {
    std::vector<double> out(count);
    const double a = std::log(lo), b = std::log(hi);
    for (int k = 0; k < count; ++k) out[k] = std::exp(a + (b - a) * k / (count - 1));
    return out;
}

std::string describe(const char* what, double t, double lhs, double rhs) {
    std::ostringstream os;
    os.precision(6);
    os << what << " fails at t=" << t << " (" << lhs << " vs " << rhs << ")";
    return os.str();
}

}  // namespace

InternalEnergy InternalEnergy::entropy(double reference_constant) {
    if (!(reference_constant > 0)) throw std::invalid_argument("reference constant must be positive");
    return InternalEnergy(EnergyKind::Entropy, 1.0, reference_constant);
}

InternalEnergy InternalEnergy::power(double m, double reference_constant) {
    if (!(m > 0) || !std::isfinite(m)) throw std::invalid_argument("power energy exponent must be positive");
    if (!(reference_constant > 0)) throw std::invalid_argument("reference constant must be positive");
    return InternalEnergy(EnergyKind::Power, m, reference_constant);
}

InternalEnergy InternalEnergy::zero() { return InternalEnergy(EnergyKind::Zero, 1.0, 1.0); }

std::string InternalEnergy::name() const {
    switch (kind_) {
        case EnergyKind::Entropy: return "entropy";
        case EnergyKind::Zero: return "zero";
        case EnergyKind::Power: {
            std::ostringstream os;
            os << "power(" << m_ << ")";
            return os.str();
        }
    }
    return "?";
}

double InternalEnergy::E(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return t > 0 ? t * std::log(t) : 0.0;
        case EnergyKind::Power: return std::pow(t, m_);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double InternalEnergy::dE(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return t > 0 ? std::log(t) + 1.0 : -kInf;
        case EnergyKind::Power: return m_ * std::pow(t, m_ - 1.0);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double InternalEnergy::d2E(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return 1.0 / t;
        case EnergyKind::Power: return m_ * (m_ - 1.0) * std::pow(t, m_ - 2.0);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double InternalEnergy::F(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return 0.5 * t * t;
        case EnergyKind::Power: return (m_ - 1.0) / (m_ + 1.0) * std::pow(t, m_ + 1.0);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double InternalEnergy::dF(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return t;
        case EnergyKind::Power: return (m_ - 1.0) * std::pow(t, m_);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double InternalEnergy::d2F(double t) const {
    switch (kind_) {
        case EnergyKind::Entropy: return 1.0;
        case EnergyKind::Power: return m_ * (m_ - 1.0) * std::pow(t, m_ - 1.0);
        case EnergyKind::Zero: return 0.0;
    }
    return 0.0;
}

double evaluate(const InternalEnergy& energy, double t, EnergyTerm which) {
    if (!(t >= 0)) throw std::invalid_argument("energy evaluated at negative argument");
    switch (which) {
        case EnergyTerm::E: return energy.E(t);
        case EnergyTerm::F: return energy.F(t);
        case EnergyTerm::Fp: return energy.dF(t);
        case EnergyTerm::Fpp: return energy.d2F(t);
    }
    return 0.0;
}

RegularizedEnergy regularize(const InternalEnergy& energy, double eps) {
    if (!(eps > 0 && eps < 1)) throw std::invalid_argument("regularization eps must lie in (0,1)");
    switch (energy.kind()) {
        case EnergyKind::Zero:
            throw std::invalid_argument("cannot regularize the zero energy (F'' vanishes identically)");
        case EnergyKind::Entropy:
            return RegularizedEnergy(energy, eps, 0.0, kInf);
        case EnergyKind::Power: {
            const double m = energy.exponent();
            if (m <= 1.0)
                throw std::invalid_argument("cannot regularize power energy with m <= 1 (F'' not positive nondecreasing)");
            const double c = m * (m - 1.0);
            const double q = 1.0 / (m - 1.0);
            return RegularizedEnergy(energy, eps, std::pow(eps / c, q), std::pow(1.0 / (eps * c), q));
        }
    }
    throw std::logic_error("unreachable");
}

double RegularizedEnergy::F(double rho) const {
    if (rho < delta_) {
        const double d = rho - delta_;
        return base_.F(delta_) + base_.dF(delta_) * d + 0.5 * eps_ * d * d;
    }
    if (rho > M_) {
        const double d = rho - M_;
        return base_.F(M_) + base_.dF(M_) * d + 0.5 / eps_ * d * d;
    }
    return base_.F(rho);
}

double RegularizedEnergy::dF(double rho) const {
    if (rho < delta_) return base_.dF(delta_) + eps_ * (rho - delta_);
    if (rho > M_) return base_.dF(M_) + (rho - M_) / eps_;
    return base_.dF(rho);
}

double RegularizedEnergy::d2F(double rho) const {
    if (rho < delta_) return eps_;
    if (rho > M_) return 1.0 / eps_;
    return base_.d2F(rho);
}

bool mccann_check(const InternalEnergy& energy, int dim, int samples) {
    if (samples < 3) throw std::invalid_argument("mccann_check needs at least 3 samples");
    if (dim != 1 && dim != 2) throw std::invalid_argument("unsupported dimension");
    const auto r = log_spaced(1e-3, 1e3, samples);
    std::vector<double> g(samples);
    for (int k = 0; k < samples; ++k) {
        const double rd = std::pow(r[k], dim);
        g[k] = rd * energy.E(1.0 / rd);
        if (!std::isfinite(g[k])) return false;
    }
    double prev_slope = -kInf;
    for (int k = 0; k + 1 < samples; ++k) {
        if (g[k + 1] > g[k] + kCheckTol * (1.0 + std::abs(g[k]))) return false;
        const double slope = (g[k + 1] - g[k]) / (r[k + 1] - r[k]);
        if (slope < prev_slope - kCheckTol * (1.0 + std::abs(prev_slope))) return false;
        prev_slope = slope;
    }
    return true;
}

double kl_prox_log(const InternalEnergy& energy, double log_s, double eps, double tau, double u,
                   double entropy_weight) {
    if (!(eps > 0) || !(tau > 0)) throw std::invalid_argument("kl_prox needs eps > 0 and tau > 0");
    if (!(entropy_weight >= 0 && entropy_weight < eps)) throw std::invalid_argument("kl_prox entropy weight out of range");
    if (!std::isfinite(log_s) || !std::isfinite(u)) throw std::invalid_argument("kl_prox: non-finite input");
    // First-order condition in z = log ρ:
    //   A z + tau·E'(e^z) - B = 0,  A = eps - κ,  B = eps log s - tau u.
    const double A = eps - entropy_weight;
    const double B = eps * log_s - tau * u;
    switch (energy.kind()) {
        case EnergyKind::Zero: return B / A;
        case EnergyKind::Entropy: return (B - tau) / (A + tau);
        case EnergyKind::Power: break;
    }
    const double m = energy.exponent();
    if (m <= 1.0) throw std::invalid_argument("kl_prox requires a strictly convex energy (power m > 1)");
    const double c = tau * m;
    const double p = m - 1.0;
    auto phi = [&](double z) { return A * z + c * std::exp(p * z) - B; };

    // phi is convex and increasing, so Newton from any point with phi >= 0
    // decreases monotonically to the root; [lo, hi] brackets it.
    double hi = std::min(B / A, B > c ? std::log(B / c) / p : 0.0);
    double lo = B / A - c * std::exp(p * hi) / A;
    double z = hi;
    const double scale = std::max(eps, std::abs(B));
    for (int it = 0; it < 200; ++it) {
        const double f = phi(z);
        if (std::abs(f) <= 1e-12 * scale) return z;
        if (f > 0) hi = z; else lo = z;
        const double df = A + c * p * std::exp(p * z);
        double next = z - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - z) <= 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(z)))
            return next;
        z = next;
    }
    throw std::runtime_error("kl_prox: Newton/bisection did not converge");
}

double kl_prox(const InternalEnergy& energy, double s, double eps, double tau, double u) {
    if (!(s > 0)) throw std::invalid_argument("kl_prox needs s > 0");
    return std::exp(kl_prox_log(energy, std::log(s), eps, tau, u, 0.0));
}

std::vector<std::string> check_growth(const InternalEnergy& energy, double C, double t_max, int samples) {
    std::vector<std::string> issues;
    if (energy.E(0.0) != 0.0) issues.push_back("E(0) != 0");
    const auto t = log_spaced(1e-6, t_max, samples);
    const double m = energy.exponent();
    for (int k = 0; k < samples; ++k) {
        const double lower = std::pow(t[k], m - 2.0) / C;
        if (energy.d2E(t[k]) < lower * (1.0 - kCheckTol)) {
            issues.push_back(describe("E''(t) >= t^(m-2)/C", t[k], energy.d2E(t[k]), lower));
            break;
        }
    }
    for (int k = 0; k < samples; ++k) {
        const double upper = C * (1.0 + std::pow(t[k], m));
        if (energy.dF(t[k]) > upper * (1.0 + kCheckTol)) {
            issues.push_back(describe("F'(t) <= C(1+t^m)", t[k], energy.dF(t[k]), upper));
            break;
        }
    }
    for (int k = 0; k + 1 < samples; ++k) {
        const double mid = 0.5 * (t[k] + t[k + 1]);
        const double chord = 0.5 * (energy.E(t[k]) + energy.E(t[k + 1]));
        if (energy.E(mid) > chord + kCheckTol * (1.0 + std::abs(chord))) {
            issues.push_back(describe("midpoint convexity of E", mid, energy.E(mid), chord));
            break;
        }
    }
    return issues;
}

std::vector<std::string> check_parabolic_hypotheses(const InternalEnergy& energy, double t_max, int samples) {
    std::vector<std::string> issues;
    if (energy.F(0.0) != 0.0 || energy.dF(0.0) != 0.0) issues.push_back("F(0) = F'(0) = 0 fails");
    const auto t = log_spaced(1e-6, t_max, samples);
    for (int k = 0; k < samples; ++k) {
        if (!(energy.d2F(t[k]) > 0)) {
            issues.push_back(describe("F''(t) > 0", t[k], energy.d2F(t[k]), 0.0));
            break;
        }
    }
    for (int k = 0; k + 1 < samples; ++k) {
        if (energy.d2F(t[k + 1]) < energy.d2F(t[k]) * (1.0 - kCheckTol)) {
            issues.push_back(describe("F'' nondecreasing", t[k + 1], energy.d2F(t[k + 1]), energy.d2F(t[k])));
            break;
        }
    }
    // Some C with F' <= C(1+t^2+F) exists iff the ratio stays bounded; on a
    // finite sample this is read as the ratio not growing over the last decade.
    auto ratio = [&](double x) { return energy.dF(x) / (1.0 + x * x + energy.F(x)); };
    const double top = ratio(t.back()), below = ratio(t.back() / 10.0);
    if (top > below * (1.0 + kCheckTol) && top > 1.0)
        issues.push_back(describe("F'(t)/(1+t^2+F(t)) bounded", t.back(), top, below));
    return issues;
}

double minimal_growth_constant(const InternalEnergy& energy, double t_max, int samples) {
    const auto t = log_spaced(1e-6, t_max, samples);
    const double m = energy.exponent();
    double C = 0.0;
    for (double s : t) {
        const double e2 = energy.d2E(s);
        if (!(e2 > 0)) return kInf;
        C = std::max({C, std::pow(s, m - 2.0) / e2, energy.dF(s) / (1.0 + std::pow(s, m))});
    }
    return C;
}

double internal_energy(const InternalEnergy& energy, const Density& rho) {
    double s = 0.0;
    for (double v : rho.values()) s += energy.E(v);
    return s * rho.grid().cell_volume();
}

double entropy_of(const Density& rho) { return internal_energy(InternalEnergy::entropy(), rho); }

}  // namespace torusflow
