#include "torusflow/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "torusflow/parabolic.hpp"
#include "torusflow/transport.hpp"

namespace torusflow {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Trajectory run_jko_any(const Problem& p, const JkoConfig& c) {
    JkoRunOptions o;
    o.eps = c.eps;
    o.tol = c.tol;
    o.max_iter = c.max_iter;
    o.debias = c.debias;
    return p.species() == 1 ? run_jko(p, o) : run_jko_system(p, o);
}

Trajectory run_parabolic_cfg(const Problem& p, const RunConfig& c) {
    ParabolicOptions o;
    o.eps_reg = c.parabolic.eps_reg;
    o.cfl_safety = c.parabolic.cfl_safety;
    o.output_interval = c.jko.h;
    return run_parabolic(p, o, c.T);
}

// JKO state covering time t: states[k] lives on ((k-1)h, kh].
const DensityTuple& jko_state_at(const Trajectory& traj, double t) {
    long k = long(std::ceil(t / traj.h - 1e-9));
    k = std::clamp(k, 0L, long(traj.states.size()) - 1);
    return traj.states[std::size_t(k)];
}

void append_states(std::string& out, const Trajectory& traj, int cadence) {
    out += "time,species,cell_index,value\n";
    const std::size_t last = traj.states.size() - 1;
    for (std::size_t k = 0; k < traj.states.size(); ++k) {
        if (k % std::size_t(cadence) != 0 && k != last) continue;
        const std::string t = format_double(traj.times[k]);
        for (std::size_t i = 0; i < traj.states[k].size(); ++i) {
            const auto& v = traj.states[k][i].values();
            for (std::size_t c = 0; c < v.size(); ++c)
                out += t + "," + std::to_string(i) + "," + std::to_string(c) + "," + format_double(v[c]) + "\n";
        }
    }
}

std::string render_ledger(const Ledger& l) {
    std::string s = "step,energy,energy_next,drift_self,drift_cross,w2_sq,w2_used,entropy,sobolev,lhs,rhs,flagged\n";
    for (const auto& r : l.rows) {
        s += std::to_string(r.step);
        for (double v : {r.energy, r.energy_next, r.drift_self, r.drift_cross, r.w2_sq, r.w2_used, r.entropy,
                         r.sobolev, r.lhs, r.rhs})
            s += "," + format_double(v);
        s += r.flagged ? ",1\n" : ",0\n";
    }
    return s;
}

std::string render_pledger(const ParabolicLedger& l) {
    std::string s = "interval,time,energy,energy_next,dissipation,drift_allowance,clipped_mass,l2_norm_sq,flagged\n";
    for (const auto& r : l.rows) {
        s += std::to_string(r.interval);
        for (double v : {r.time, r.energy, r.energy_next, r.dissipation, r.drift_allowance, r.clipped_mass,
                         r.l2_norm_sq})
            s += "," + format_double(v);
        s += r.flagged ? ",1\n" : ",0\n";
    }
    return s;
}

std::string snapshot_csv(const DensityTuple& rho) {
    std::string s = "species,cell_index,value\n";
    for (std::size_t i = 0; i < rho.size(); ++i)
        for (std::size_t c = 0; c < rho[i].values().size(); ++c)
            s += std::to_string(i) + "," + std::to_string(c) + "," + format_double(rho[i].values()[c]) + "\n";
    return s;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(item);
    return out;
}

}  // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.16e", v);
    return buf;
}

int RunArtifacts::flags() const {
    int f = 0;
    if (ledger) f += ledger->flags();
    if (parabolic_ledger) f += parabolic_ledger->flags();
    for (const auto& p : series) f += p.flagged;
    return f;
}

RunArtifacts execute(const ParsedConfig& parsed) {
    RunArtifacts art;
    const RunConfig& cfg = parsed.config;
    art.config = cfg;
    const Problem problem = build_problem(cfg);
    const bool use_jko = cfg.solver != "parabolic";
    const bool use_par = cfg.solver != "jko";
    const double slack = cfg.diagnostics.ledger_slack;

    if (use_jko) {
        art.jko = run_jko_any(problem, cfg.jko);
        art.ledger = energy_ledger(*art.jko, problem, slack);
    }
    if (use_par) {
        art.parabolic = run_parabolic_cfg(problem, cfg);
        art.parabolic_ledger = parabolic_ledger(*art.parabolic, problem, cfg.parabolic.eps_reg, slack);
    }
    if (art.jko && art.parabolic) {
        const Trajectory& p = *art.parabolic;
        for (std::size_t k = 0; k < p.states.size(); ++k)
            art.series.push_back(
                {"l1_cross", p.times[k], l1_distance(p.states[k], jko_state_at(*art.jko, p.times[k])), kNaN, false});
    }

    TransportDiagnosticOptions topts;
    topts.eps = cfg.diagnostics.transport_eps;
    double c_hat = stability_constant(parsed.constants);
    if (cfg.diagnostics.stability && cfg.diagnostics.stability->c_hat) c_hat = *cfg.diagnostics.stability->c_hat;
    if (cfg.diagnostics.stability) {
        Problem other = problem;
        for (std::size_t i = 0; i < other.rho0.size(); ++i)
            other.rho0[i] = build_initial(cfg.diagnostics.stability->initial[i], problem.grid,
                                          "diagnostics.stability.initial[" + std::to_string(i) + "]");
        const Trajectory& base = use_par ? *art.parabolic : *art.jko;
        const Trajectory pert = use_par ? run_parabolic_cfg(other, cfg) : run_jko_any(other, cfg.jko);
        for (const auto& pt : stability_compare(base, pert, c_hat, topts))
            art.series.push_back({"stability", pt.time, pt.w2_sum, pt.bound, pt.flagged});
    }
    if (cfg.diagnostics.holder_pairs > 0) {
        const Trajectory& t = art.jko ? *art.jko : *art.parabolic;
        art.series.push_back({"holder", 0.0, holder_check(t, cfg.diagnostics.holder_pairs, topts), kNaN, false});
    }

    json& m = art.meta;
    m["config"] = to_json(cfg);
    m["version"] = {{"torusflow", kVersion}, {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
    m["constants"] = {{"lip_x", parsed.constants.lip_x},
                      {"lip_w2", parsed.constants.lip_w2},
                      {"lap_plus", parsed.constants.lap_plus},
                      {"vel_lip_x", parsed.constants.vel_lip_x},
                      {"c_hat", c_hat},
                      {"growth_constants", parsed.growth_constants}};
    m["slack"] = {{"ledger", slack}, {"stability_margin", kStabilityMargin}};
    m["warnings"] = parsed.warnings;
    if (art.parabolic) m["parabolic_total_clipped"] = art.parabolic->total_clipped;
    return art;
}

std::map<std::string, std::string> render_outputs(const RunArtifacts& art) {
    std::map<std::string, std::string> files;
    const int cadence = art.config.output.cadence;
    const bool both = art.jko && art.parabolic;
    if (art.jko) append_states(files["states.csv"], *art.jko, cadence);
    if (art.parabolic) append_states(files[both ? "states_parabolic.csv" : "states.csv"], *art.parabolic, cadence);
    if (art.ledger) files["ledger.csv"] = render_ledger(*art.ledger);
    if (art.parabolic_ledger) files[both ? "ledger_parabolic.csv" : "ledger.csv"] = render_pledger(*art.parabolic_ledger);
    if (!art.series.empty()) {
        std::string& s = files["series.csv"];
        s = "series,time,value,bound,flagged\n";
        for (const auto& p : art.series)
            s += p.series + "," + format_double(p.time) + "," + format_double(p.value) + "," +
                 (std::isnan(p.bound) ? std::string("nan") : format_double(p.bound)) + (p.flagged ? ",1\n" : ",0\n");
    }
    files["meta.json"] = art.meta.dump(2) + "\n";
    return files;
}

void write_outputs(const std::map<std::string, std::string>& files, const std::string& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, content] : files) {
        const auto path = std::filesystem::path(dir) / name;
        std::ofstream f(path, std::ios::binary);
        f << content;
        if (!f) throw std::runtime_error("cannot write " + path.string());
    }
}

int run_command(const ParsedConfig& parsed, bool strict, std::ostream& out, std::ostream& err) {
    for (const auto& w : parsed.warnings) err << "warning: " << w << "\n";
    const std::string& dir = parsed.config.output.directory;
    RunArtifacts art;
    try {
        art = execute(parsed);
    } catch (const StepFailure& e) {
        const auto path = std::filesystem::path(dir) / "failure_snapshot.csv";
        try {
            write_outputs({{path.filename().string(), snapshot_csv(e.last_state())}}, dir);
            err << "error: step " << e.step() << ": " << e.what() << "; last state written to " << path.string()
                << "\n";
        } catch (const std::exception& io) {
            err << "error: step " << e.step() << ": " << e.what() << "; snapshot not written: " << io.what() << "\n";
        }
        return 1;
    }
    write_outputs(render_outputs(art), dir);
    const int flags = art.flags();
    out << "outputs written to " << dir << "\n";
    if (art.ledger) out << "ledger flags: " << art.ledger->flags() << "\n";
    if (art.parabolic_ledger) out << "parabolic ledger flags: " << art.parabolic_ledger->flags() << "\n";
    for (const auto& p : art.series)
        if (p.flagged) out << "flagged " << p.series << " at t=" << format_double(p.time) << "\n";
    if (strict && flags > 0) {
        err << "error: " << flags << " flagged inequalities (strict mode)\n";
        return 2;
    }
    return 0;
}

StatesTable read_states(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "time,species,cell_index,value")
        throw std::runtime_error(path + ": missing states header");
    StatesTable t;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 4) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 4 columns");
        double time, value;
        long sp, cell;
        try {
            time = std::stod(f[0]);
            sp = std::stol(f[1]);
            cell = std::stol(f[2]);
            value = std::stod(f[3]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": malformed row");
        }
        if (t.times.empty() || t.times.back() != time) {
            t.times.push_back(time);
            t.states.emplace_back();
        }
        auto& st = t.states.back();
        if (sp < 0 || std::size_t(sp) > st.size())
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": species out of order");
        if (std::size_t(sp) == st.size()) st.emplace_back();
        if (cell != long(st[sp].size()))
            throw std::runtime_error(path + ":" + std::to_string(lineno) + ": cell out of order");
        st[sp].push_back(value);
    }
    if (t.times.empty()) throw std::runtime_error(path + ": no states");
    return t;
}

W2Report w2_between(const StatesTable& a, const StatesTable& b, double time, double eps, int dim) {
    auto pick = [time](const StatesTable& t, const char* which) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < t.times.size(); ++k)
            if (std::abs(t.times[k] - time) < std::abs(t.times[best] - time)) best = k;
        if (std::abs(t.times[best] - time) > 1e-9 * std::max(1.0, std::abs(time)))
            throw std::runtime_error(std::string("no state at time ") + format_double(time) + " in " + which);
        return best;
    };
    const std::size_t ka = pick(a, "a"), kb = pick(b, "b");
    const auto& sa = a.states[ka];
    const auto& sb = b.states[kb];
    if (sa.size() != sb.size()) throw std::runtime_error("species counts differ");
    W2Report r;
    r.time = a.times[ka];
    for (std::size_t i = 0; i < sa.size(); ++i) {
        if (sa[i].size() != sb[i].size()) throw std::runtime_error("cell counts differ");
        const std::size_t cells = sa[i].size();
        int n = int(cells);
        if (dim == 2) {
            n = int(std::lround(std::sqrt(double(cells))));
            if (std::size_t(n) * std::size_t(n) != cells) throw std::runtime_error("cell count is not a square");
        }
        const Grid g = make_grid(dim, n);
        SinkhornOptions o;
        o.eps = eps;
        const auto res = sinkhorn_w2(normalize(g, sa[i]), normalize(g, sb[i]), o, nullptr);
        r.w2_sq.push_back(res.w2_sq);
        r.total += res.w2_sq;
        r.converged = r.converged && res.converged;
    }
    return r;
}

}  // namespace torusflow
