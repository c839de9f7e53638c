#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "torusflow/config.hpp"
#include "torusflow/diagnostics.hpp"
#include "torusflow/jko.hpp"

namespace torusflow {

constexpr const char* kVersion = "0.1.0";

struct SeriesPoint {
    std::string series;  // l1_cross | stability | stability_zero | holder
    double time = 0.0;
    double value = 0.0;
    double bound = 0.0;  // NaN when the series has no bound
    bool flagged = false;
};

struct RunArtifacts {
    RunConfig config;
    std::optional<Trajectory> jko;
    std::optional<Trajectory> parabolic;
    std::optional<Ledger> ledger;
    std::optional<ParabolicLedger> parabolic_ledger;
    std::vector<SeriesPoint> series;
    json meta;

    int flags() const;
};

// Runs the configured solvers and diagnostics. Solver failures surface as
// StepFailure.
RunArtifacts execute(const ParsedConfig& parsed);

// File name → content. Nothing touches the disk.
std::map<std::string, std::string> render_outputs(const RunArtifacts& art);
void write_outputs(const std::map<std::string, std::string>& files, const std::string& dir);

// Exit status: 0 on success, 1 on solver failure, 2 when strict and any
// inequality is flagged.
int run_command(const ParsedConfig& parsed, bool strict, std::ostream& out, std::ostream& err);

struct StatesTable {
    std::vector<double> times;
    // states[t][species] holds cell values in cell order
    std::vector<std::vector<std::vector<double>>> states;
};

StatesTable read_states(const std::string& path);
std::string format_double(double v);

struct W2Report {
    double time = 0.0;
    std::vector<double> w2_sq;  // per species
    double total = 0.0;
    bool converged = true;
};

// Entropic W2² between the two files' states at the time nearest `time`.
W2Report w2_between(const StatesTable& a, const StatesTable& b, double time, double eps, int dim);

}  // namespace torusflow
