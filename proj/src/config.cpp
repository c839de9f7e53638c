#include "torusflow/config.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "torusflow/energy.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

namespace {

struct Call {
    std::string name;
    std::vector<double> args;
};

Call parse_call(const std::string& text, const std::string& field) {
    static const std::regex re(R"(^\s*([A-Za-z_][A-Za-z_0-9]*)\s*(?:\(([^()]*)\))?\s*$)");
    std::smatch m;
    if (!std::regex_match(text, m, re)) throw ConfigError(field, "cannot parse '" + text + "'");
    Call c{m[1].str(), {}};
    if (m[2].matched) {
        std::stringstream ss(m[2].str());
        std::string item;
        while (std::getline(ss, item, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(item, &used);
            } catch (const std::exception&) {
                throw ConfigError(field, "argument '" + item + "' of '" + text + "' is not a number");
            }
            if (item.find_first_not_of(" \t", used) != std::string::npos)
                throw ConfigError(field, "argument '" + item + "' of '" + text + "' is not a number");
            c.args.push_back(v);
        }
    }
    return c;
}

void expect_args(const Call& c, std::size_t lo, std::size_t hi, const std::string& field) {
    if (c.args.size() < lo || c.args.size() > hi)
        throw ConfigError(field, "'" + c.name + "' takes " + std::to_string(lo) +
                                     (lo == hi ? "" : "-" + std::to_string(hi)) + " arguments, got " +
                                     std::to_string(c.args.size()));
}

double periodic_gauss(const Grid& g, std::size_t k, double cx, double cy, double w) {
    const auto c = g.center(k);
    double r2 = std::pow(torus_displacement(c[0], cx), 2);
    if (g.dim() == 2) r2 += std::pow(torus_displacement(c[1], cy), 2);
    return std::exp(-0.5 * r2 / (w * w));
}

std::vector<double> inline_values(const json& arr, const Grid& g, const std::string& field) {
    if (arr.size() != g.size())
        throw ConfigError(field, "inline array has " + std::to_string(arr.size()) + " entries, grid has " +
                                     std::to_string(g.size()) + " cells");
    std::vector<double> v;
    for (const auto& x : arr) {
        if (!x.is_number()) throw ConfigError(field, "inline array entries must be numbers");
        v.push_back(x.get<double>());
        if (!std::isfinite(v.back())) throw ConfigError(field, "inline array entries must be finite");
    }
    return v;
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& field) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(field + "." + key, "has the wrong type");
    }
}

const json& require(const json& obj, const char* key, const std::string& field) {
    if (!obj.is_object() || !obj.contains(key)) throw ConfigError(field.empty() ? key : field + "." + key, "is required");
    return obj.at(key);
}

void reject_unknown(const json& obj, std::set<std::string> known, const std::string& field) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(field.empty() ? it.key() : field + "." + it.key(), "unknown field");
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') ++line, col = 1;
        else ++col;
    }
    return {line, col};
}

}  // namespace

Grid config_grid(const RunConfig& cfg) {
    try {
        return make_grid(cfg.dim, cfg.n);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("grid", e.what());
    }
}

Density build_initial(const json& profile, const Grid& g, const std::string& field) {
    if (profile.is_array()) {
        auto v = inline_values(profile, g, field);
        for (double x : v)
            if (x < 0) throw ConfigError(field, "inline density has a negative entry");
        try {
            return normalize(g, std::move(v));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(field, e.what());
        }
    }
    if (!profile.is_string()) throw ConfigError(field, "must be a profile name or an inline array");
    const Call c = parse_call(profile.get<std::string>(), field);
    std::vector<double> v(g.size());
    if (c.name == "uniform") {
        expect_args(c, 0, 0, field);
        std::fill(v.begin(), v.end(), 1.0);
    } else if (c.name == "cosine") {
        expect_args(c, 1, 2, field);
        const double a = c.args[0], f = c.args.size() > 1 ? c.args[1] : 1.0;
        if (std::abs(a) >= 1) throw ConfigError(field, "cosine amplitude must be below 1 in magnitude");
        if (f != std::round(f) || f < 1) throw ConfigError(field, "cosine frequency must be a positive integer");
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto x = g.center(k);
            double p = std::cos(2 * M_PI * f * x[0]);
            if (g.dim() == 2) p *= std::cos(2 * M_PI * f * x[1]);
            v[k] = 1.0 + a * p;
        }
    } else if (c.name == "bump") {
        expect_args(c, 2, 3, field);
        const double cx = c.args[0];
        const double cy = c.args.size() == 3 ? c.args[1] : c.args[0];
        const double w = c.args.back();
        if (!(w > 0)) throw ConfigError(field, "bump width must be positive");
        for (std::size_t k = 0; k < g.size(); ++k) v[k] = periodic_gauss(g, k, cx, cy, w);
    } else if (c.name == "two_bumps") {
        expect_args(c, 3, 3, field);
        const double w = c.args[2];
        if (!(w > 0)) throw ConfigError(field, "bump width must be positive");
        for (std::size_t k = 0; k < g.size(); ++k)
            v[k] = periodic_gauss(g, k, c.args[0], c.args[0], w) + periodic_gauss(g, k, c.args[1], c.args[1], w);
    } else {
        throw ConfigError(field, "unknown profile '" + c.name + "'");
    }
    return normalize(g, std::move(v));
}

ScalarField build_kernel(const json& spec, const Grid& g, const std::string& field) {
    if (spec.is_array()) return ScalarField(g, inline_values(spec, g, field));
    if (!spec.is_string()) throw ConfigError(field, "must be a kernel name or an inline array");
    const Call c = parse_call(spec.get<std::string>(), field);
    ScalarField out(g);
    // Kernels are sampled on lattice displacements (i·dx, j·dx).
    auto disp = [&](std::size_t k) {
        const auto ij = g.coords(k);
        return std::array<double, 2>{ij[0] * g.dx(), ij[1] * g.dx()};
    };
    if (c.name == "zero") {
        expect_args(c, 0, 0, field);
    } else if (c.name == "cosine" || c.name == "sine") {
        expect_args(c, 0, 1, field);
        const double a = c.args.empty() ? 1.0 : c.args[0];
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto d = disp(k);
            double s = 0.0;
            for (int ax = 0; ax < g.dim(); ++ax)
                s += c.name == "cosine" ? std::cos(2 * M_PI * d[ax]) : std::sin(2 * M_PI * d[ax]);
            out[k] = a * s;
        }
    } else if (c.name == "gaussian_bump") {
        expect_args(c, 1, 2, field);
        const double sigma = c.args[0];
        const double a = c.args.size() > 1 ? c.args[1] : 1.0;
        if (!(sigma > 0)) throw ConfigError(field, "gaussian_bump sigma must be positive");
        for (std::size_t k = 0; k < g.size(); ++k) {
            const auto d = disp(k);
            double r2 = 0.0;
            for (int ax = 0; ax < g.dim(); ++ax) r2 += std::pow(torus_displacement(d[ax], 0.0), 2);
            out[k] = a * std::exp(-0.5 * r2 / (sigma * sigma));
        }
    } else {
        throw ConfigError(field, "unknown kernel '" + c.name + "'");
    }
    return out;
}

InternalEnergy build_energy(const EnergyConfig& e) {
    const double C = e.C.value_or(1.0);
    if (e.kind == "entropy") return InternalEnergy::entropy(C);
    if (e.kind == "zero") return InternalEnergy::zero();
    if (e.kind == "power") return InternalEnergy::power(e.m, C);
    throw ConfigError("energy.kind", "unknown energy kind '" + e.kind + "'");
}

DriftModel build_drift(const RunConfig& cfg, const Grid& g) {
    const int l = int(cfg.species.size());
    const json& K = cfg.drift.kernels;
    if (K.is_null()) {
        if (cfg.drift.mode == "velocity") {
            std::vector<VectorField> ks(std::size_t(l) * l, VectorField(g));
            return DriftModel::velocity(g, l, std::move(ks));
        }
        return DriftModel::none(g, l);
    }
    if (!K.is_array() || int(K.size()) != l)
        throw ConfigError("drift.kernels", "must be a " + std::to_string(l) + "×" + std::to_string(l) + " matrix");
    for (const auto& row : K)
        if (!row.is_array() || int(row.size()) != l)
            throw ConfigError("drift.kernels", "must be a " + std::to_string(l) + "×" + std::to_string(l) + " matrix");
    if (cfg.drift.mode == "potential") {
        std::vector<ScalarField> ks;
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < l; ++j)
                ks.push_back(build_kernel(K[i][j], g, "drift.kernels[" + std::to_string(i) + "][" + std::to_string(j) + "]"));
        return DriftModel::potential(g, l, std::move(ks), cfg.drift.nonneg_shift);
    }
    std::vector<VectorField> ks;
    for (int i = 0; i < l; ++i)
        for (int j = 0; j < l; ++j) {
            const std::string f = "drift.kernels[" + std::to_string(i) + "][" + std::to_string(j) + "]";
            const json& e = K[i][j];
            if (!e.is_array() || int(e.size()) != g.dim() || (g.dim() == 1 && e.size() == 1 && e[0].is_number()))
                throw ConfigError(f, "velocity entries must list one kernel per axis");
            VectorField v(g);
            for (int a = 0; a < g.dim(); ++a) v[a] = build_kernel(e[a], g, f + "[" + std::to_string(a) + "]").values;
            ks.push_back(std::move(v));
        }
    return DriftModel::velocity(g, l, std::move(ks));
}

Problem build_problem(const RunConfig& cfg) {
    const Grid g = config_grid(cfg);
    Problem p{g, {}, build_drift(cfg, g), {}, cfg.T, cfg.jko.h};
    for (std::size_t i = 0; i < cfg.species.size(); ++i) {
        p.energies.push_back(build_energy(cfg.species[i].energy));
        p.rho0.push_back(build_initial(cfg.species[i].initial, g, "species[" + std::to_string(i) + "].initial"));
    }
    return p;
}

json to_json(const RunConfig& c) {
    json j;
    j["grid"] = {{"dim", c.dim}, {"n", c.n}};
    j["species"] = json::array();
    for (const auto& s : c.species) {
        json e = {{"kind", s.energy.kind}};
        if (s.energy.kind == "power") e["m"] = s.energy.m;
        if (s.energy.C) e["C"] = *s.energy.C;
        j["species"].push_back({{"energy", e}, {"initial", s.initial}});
    }
    j["drift"] = {{"mode", c.drift.mode}, {"kernels", c.drift.kernels}};
    if (c.drift.nonneg_shift) j["drift"]["nonneg_shift"] = *c.drift.nonneg_shift;
    j["solver"] = c.solver;
    j["jko"] = {{"h", c.jko.h}, {"eps", c.jko.eps}, {"tol", c.jko.tol}, {"max_iter", c.jko.max_iter},
                {"debias", c.jko.debias}};
    j["parabolic"] = {{"eps_reg", c.parabolic.eps_reg}, {"cfl_safety", c.parabolic.cfl_safety}};
    j["T"] = c.T;
    j["output"] = {{"cadence", c.output.cadence}, {"directory", c.output.directory}};
    json d = {{"ledger_slack", c.diagnostics.ledger_slack},
              {"transport_eps", c.diagnostics.transport_eps},
              {"holder_pairs", c.diagnostics.holder_pairs},
              {"constant_pairs", c.diagnostics.constant_pairs}};
    if (c.diagnostics.stability) {
        json s = {{"initial", c.diagnostics.stability->initial}};
        if (c.diagnostics.stability->c_hat) s["c_hat"] = *c.diagnostics.stability->c_hat;
        d["stability"] = s;
    }
    j["diagnostics"] = d;
    return j;
}

RunConfig config_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("", "configuration must be a JSON object");
    reject_unknown(doc, {"grid", "species", "drift", "solver", "jko", "parabolic", "T", "output", "diagnostics"}, "");
    RunConfig c;
    const json& grid = require(doc, "grid", "");
    reject_unknown(grid, {"dim", "n"}, "grid");
    c.dim = get_or<int>(grid, "dim", 1, "grid");
    c.n = get_or<int>(require(doc, "grid", ""), "n", 0, "grid");
    if (!grid.contains("n")) throw ConfigError("grid.n", "is required");

    const json& sp = require(doc, "species", "");
    if (!sp.is_array() || sp.empty()) throw ConfigError("species", "must be a non-empty list");
    for (std::size_t i = 0; i < sp.size(); ++i) {
        const std::string f = "species[" + std::to_string(i) + "]";
        reject_unknown(sp[i], {"energy", "initial"}, f);
        SpeciesConfig s;
        const json& e = require(sp[i], "energy", f);
        reject_unknown(e, {"kind", "m", "C"}, f + ".energy");
        s.energy.kind = get_or<std::string>(e, "kind", "", f + ".energy");
        if (s.energy.kind.empty()) throw ConfigError(f + ".energy.kind", "is required");
        if (s.energy.kind == "power") {
            if (!e.contains("m")) throw ConfigError(f + ".energy.m", "is required for power energies");
            s.energy.m = get_or<double>(e, "m", 0.0, f + ".energy");
        } else if (e.contains("m")) {
            throw ConfigError(f + ".energy.m", "only power energies take an exponent");
        }
        if (e.contains("C")) s.energy.C = get_or<double>(e, "C", 1.0, f + ".energy");
        s.initial = require(sp[i], "initial", f);
        c.species.push_back(std::move(s));
    }

    if (doc.contains("drift")) {
        const json& d = doc["drift"];
        reject_unknown(d, {"mode", "kernels", "nonneg_shift"}, "drift");
        c.drift.mode = get_or<std::string>(d, "mode", "potential", "drift");
        if (d.contains("kernels")) c.drift.kernels = d["kernels"];
        if (d.contains("nonneg_shift") && !d["nonneg_shift"].is_null())
            c.drift.nonneg_shift = get_or<double>(d, "nonneg_shift", 0.0, "drift");
    }
    c.solver = get_or<std::string>(doc, "solver", "jko", "");
    if (doc.contains("jko")) {
        const json& j = doc["jko"];
        reject_unknown(j, {"h", "eps", "tol", "max_iter", "debias"}, "jko");
        c.jko.h = get_or<double>(j, "h", c.jko.h, "jko");
        c.jko.eps = get_or<double>(j, "eps", 0.0, "jko");
        c.jko.tol = get_or<double>(j, "tol", c.jko.tol, "jko");
        c.jko.max_iter = get_or<int>(j, "max_iter", c.jko.max_iter, "jko");
        c.jko.debias = get_or<bool>(j, "debias", c.jko.debias, "jko");
    }
    if (doc.contains("parabolic")) {
        const json& p = doc["parabolic"];
        reject_unknown(p, {"eps_reg", "cfl_safety"}, "parabolic");
        c.parabolic.eps_reg = get_or<double>(p, "eps_reg", c.parabolic.eps_reg, "parabolic");
        c.parabolic.cfl_safety = get_or<double>(p, "cfl_safety", c.parabolic.cfl_safety, "parabolic");
    }
    if (!doc.contains("T")) throw ConfigError("T", "is required");
    c.T = get_or<double>(doc, "T", 0.0, "");
    if (doc.contains("output")) {
        const json& o = doc["output"];
        reject_unknown(o, {"cadence", "directory"}, "output");
        c.output.cadence = get_or<int>(o, "cadence", 1, "output");
        c.output.directory = get_or<std::string>(o, "directory", "out", "output");
    }
    if (doc.contains("diagnostics")) {
        const json& d = doc["diagnostics"];
        reject_unknown(d, {"ledger_slack", "transport_eps", "holder_pairs", "constant_pairs", "stability"}, "diagnostics");
        c.diagnostics.ledger_slack = get_or<double>(d, "ledger_slack", kLedgerSlack, "diagnostics");
        c.diagnostics.transport_eps = get_or<double>(d, "transport_eps", 1e-4, "diagnostics");
        c.diagnostics.holder_pairs = get_or<int>(d, "holder_pairs", 0, "diagnostics");
        c.diagnostics.constant_pairs = get_or<int>(d, "constant_pairs", 20, "diagnostics");
        if (d.contains("stability") && !d["stability"].is_null()) {
            const json& s = d["stability"];
            reject_unknown(s, {"initial", "c_hat"}, "diagnostics.stability");
            StabilityConfig st;
            const json& init = require(s, "initial", "diagnostics.stability");
            if (!init.is_array()) throw ConfigError("diagnostics.stability.initial", "must list one profile per species");
            for (const auto& p : init) st.initial.push_back(p);
            if (s.contains("c_hat") && !s["c_hat"].is_null()) st.c_hat = get_or<double>(s, "c_hat", 0.0, "diagnostics.stability");
            c.diagnostics.stability = std::move(st);
        }
    }
    return c;
}

ParsedConfig validate_config(const json& doc) {
    ParsedConfig out;
    RunConfig& c = out.config;
    c = config_from_json(doc);

    if (c.dim != 1 && c.dim != 2) throw ConfigError("grid.dim", "unsupported dimension " + std::to_string(c.dim));
    if (c.n < 2) throw ConfigError("grid.n", "must be at least 2");
    const Grid g = config_grid(c);
    if (g.size() > CostMatrix::kMaxCells)
        throw ConfigError("grid.n", "grid has " + std::to_string(g.size()) + " cells, above the limit of " +
                                        std::to_string(CostMatrix::kMaxCells));
    if (c.solver != "jko" && c.solver != "parabolic" && c.solver != "both")
        throw ConfigError("solver", "must be one of jko, parabolic, both");
    if (!(c.T > 0) || !std::isfinite(c.T)) throw ConfigError("T", "must be positive");
    if (!(c.jko.h > 0) || !std::isfinite(c.jko.h)) throw ConfigError("jko.h", "must be positive");
    if (c.jko.eps == 0.0) c.jko.eps = 5.0 * g.dx() * g.dx();
    if (!(c.jko.eps > 0)) throw ConfigError("jko.eps", "must be positive");
    if (!(c.jko.tol > 0)) throw ConfigError("jko.tol", "must be positive");
    if (c.jko.max_iter < 1) throw ConfigError("jko.max_iter", "must be at least 1");
    if (!(c.parabolic.eps_reg > 0 && c.parabolic.eps_reg < 1)) throw ConfigError("parabolic.eps_reg", "must lie in (0,1)");
    if (!(c.parabolic.cfl_safety > 0 && c.parabolic.cfl_safety <= 1))
        throw ConfigError("parabolic.cfl_safety", "must lie in (0,1]");
    if (c.output.cadence < 1) throw ConfigError("output.cadence", "must be at least 1");
    if (c.output.directory.empty()) throw ConfigError("output.directory", "must not be empty");
    if (!(c.diagnostics.ledger_slack >= 0)) throw ConfigError("diagnostics.ledger_slack", "must be nonnegative");
    if (!(c.diagnostics.transport_eps > 0)) throw ConfigError("diagnostics.transport_eps", "must be positive");
    if (c.diagnostics.holder_pairs < 0) throw ConfigError("diagnostics.holder_pairs", "must be nonnegative");
    if (c.diagnostics.constant_pairs < 0) throw ConfigError("diagnostics.constant_pairs", "must be nonnegative");
    if (c.drift.mode != "potential" && c.drift.mode != "velocity")
        throw ConfigError("drift.mode", "must be potential or velocity");
    if (c.drift.mode == "velocity" && c.solver != "parabolic")
        throw ConfigError("drift.mode", "velocity drifts need solver = parabolic (the JKO route needs a potential)");
    const bool stability = c.diagnostics.stability.has_value();
    if (stability && c.diagnostics.stability->initial.size() != c.species.size())
        throw ConfigError("diagnostics.stability.initial", "must list one profile per species");

    for (std::size_t i = 0; i < c.species.size(); ++i) {
        const std::string f = "species[" + std::to_string(i) + "].energy";
        const EnergyConfig& e = c.species[i].energy;
        if (e.kind != "entropy" && e.kind != "power" && e.kind != "zero")
            throw ConfigError(f + ".kind", "must be entropy, power or zero");
        if (e.C && !(*e.C > 0)) throw ConfigError(f + ".C", "must be positive");
        if (e.kind == "power" && !(e.m > 0 && std::isfinite(e.m))) throw ConfigError(f + ".m", "m must exceed 1");
        const InternalEnergy energy = build_energy(e);
        // Displacement convexity is checked before the range of m so that a
        // stability request reports the condition it needs.
        if (!mccann_check(energy, c.dim)) {
            if (stability)
                throw ConfigError(f, "energy " + energy.name() +
                                         " violates McCann's condition (r^d E(r^-d) convex nonincreasing), "
                                         "required by the stability diagnostic");
            out.warnings.push_back(f + ": energy " + energy.name() + " violates McCann's condition");
        }
        if (e.kind == "power" && !(e.m > 1)) throw ConfigError(f + ".m", "m must exceed 1");
        if (e.kind == "zero" && c.solver != "jko")
            throw ConfigError(f + ".kind", "the parabolic solver needs a nondegenerate energy");

        const double cmin = minimal_growth_constant(energy);
        out.growth_constants.push_back(cmin);
        if (e.kind != "zero") {
            if (e.C) {
                for (const auto& issue : check_growth(energy, *e.C)) out.warnings.push_back(f + ": growth check: " + issue);
            }
            if (c.solver != "jko")
                for (const auto& issue : check_parabolic_hypotheses(energy)) out.warnings.push_back(f + ": " + issue);
        }
    }

    Problem p = [&] {
        try {
            return build_problem(c);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            throw ConfigError("", e.what());
        }
    }();
    for (std::size_t i = 0; i < p.rho0.size(); ++i)
        if (!std::isfinite(internal_energy(p.energies[i], p.rho0[i])))
            throw ConfigError("species[" + std::to_string(i) + "].initial", "initial energy is not finite");
    if (stability)
        for (std::size_t i = 0; i < c.species.size(); ++i)
            build_initial(c.diagnostics.stability->initial[i], g, "diagnostics.stability.initial[" + std::to_string(i) + "]");

    EstimateOptions eo;
    eo.pairs = c.diagnostics.constant_pairs;
    eo.eps = c.diagnostics.transport_eps;
    out.constants = estimate_constants(p.drift, eo);
    return out;
}

ParsedConfig parse_config_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        throw ConfigParseError("parse error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                                   ": " + e.what(),
                               line, col);
    }
    return validate_config(doc);
}

ParsedConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("", "cannot open configuration file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace torusflow
