#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "torusflow/diagnostics.hpp"
#include "torusflow/interaction.hpp"
#include "torusflow/jko.hpp"

namespace torusflow {

using json = nlohmann::json;

struct EnergyConfig {
    std::string kind = "entropy";  // entropy | power | zero
    double m = 1.0;                // power exponent
    std::optional<double> C;       // growth constant checked at load
    bool operator==(const EnergyConfig&) const = default;
};

struct SpeciesConfig {
    EnergyConfig energy;
    json initial;  // profile string or inline per-cell array
    bool operator==(const SpeciesConfig&) const = default;
};

struct DriftConfig {
    std::string mode = "potential";  // potential | velocity
    // species × species matrix. Potential entries are kernel specs; velocity
    // entries are lists of one kernel spec per axis.
    json kernels;
    std::optional<double> nonneg_shift;
    bool operator==(const DriftConfig&) const = default;
};

struct JkoConfig {
    double h = 1e-3;
    double eps = 0.0;  // resolved to 5·dx² when absent
    double tol = 1e-10;
    int max_iter = 100000;
    bool debias = true;
    bool operator==(const JkoConfig&) const = default;
};

struct ParabolicConfig {
    double eps_reg = 1e-3;
    double cfl_safety = 0.9;
    bool operator==(const ParabolicConfig&) const = default;
};

struct OutputConfig {
    int cadence = 1;  // stride in JKO steps; parabolic outputs every cadence·h
    std::string directory = "out";
    bool operator==(const OutputConfig&) const = default;
};

struct StabilityConfig {
    std::vector<json> initial;  // perturbed initial profile per species
    std::optional<double> c_hat;
    bool operator==(const StabilityConfig&) const = default;
};

struct DiagnosticsConfig {
    double ledger_slack = kLedgerSlack;
    double transport_eps = 1e-4;
    int holder_pairs = 0;
    int constant_pairs = 20;
    std::optional<StabilityConfig> stability;
    bool operator==(const DiagnosticsConfig&) const = default;
};

struct RunConfig {
    int dim = 1;
    int n = 128;
    std::vector<SpeciesConfig> species;
    DriftConfig drift;
    std::string solver = "jko";  // jko | parabolic | both
    JkoConfig jko;
    ParabolicConfig parabolic;
    double T = 0.05;
    OutputConfig output;
    DiagnosticsConfig diagnostics;
    bool operator==(const RunConfig&) const = default;
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, const std::string& message)
        : std::runtime_error(field.empty() ? message : field + ": " + message), field_(field) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class ConfigParseError : public std::runtime_error {
public:
    ConfigParseError(const std::string& message, std::size_t line, std::size_t column)
        : std::runtime_error(message), line_(line), column_(column) {}
    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }

private:
    std::size_t line_, column_;
};

struct ParsedConfig {
    RunConfig config;
    std::vector<std::string> warnings;
    DriftConstants constants;
    std::vector<double> growth_constants;  // smallest admissible C per species
};

// Parses and validates. Every hypothesis check runs here; failures that do
// not invalidate the run are collected as warnings.
ParsedConfig parse_config(const std::string& path);
ParsedConfig parse_config_text(const std::string& text);
ParsedConfig validate_config(const json& doc);

json to_json(const RunConfig& cfg);
RunConfig config_from_json(const json& doc);

Grid config_grid(const RunConfig& cfg);
Density build_initial(const json& profile, const Grid& g, const std::string& field = "initial");
ScalarField build_kernel(const json& spec, const Grid& g, const std::string& field = "kernel");
DriftModel build_drift(const RunConfig& cfg, const Grid& g);
Problem build_problem(const RunConfig& cfg);
InternalEnergy build_energy(const EnergyConfig& e);

}  // namespace torusflow
