#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "torusflow/config.hpp"
#include "torusflow/run.hpp"

using namespace torusflow;

namespace {

int infer_dim(const std::string& states_path) {
    const auto meta = std::filesystem::path(states_path).parent_path() / "meta.json";
    std::ifstream in(meta);
    if (!in) return 1;
    try {
        return json::parse(in).at("config").at("grid").at("dim").get<int>();
    } catch (const std::exception&) {
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gradient-flow solvers for interacting densities on the flat torus"};
    app.require_subcommand(1);

    std::string config;
    bool strict = false;
    auto* run = app.add_subcommand("run", "Run the configured solvers and write outputs");
    run->add_option("--config", config, "Configuration file")->required();
    run->add_flag("--strict", strict, "Exit nonzero when any inequality is flagged");

    auto* check = app.add_subcommand("check", "Validate a configuration");
    check->add_option("--config", config, "Configuration file")->required();

    std::string a, b;
    double time = 0.0, eps = 1e-4;
    int dim = 0;
    auto* w2 = app.add_subcommand("w2", "Entropic W2 between two states files");
    w2->add_option("--a", a, "First states file")->required();
    w2->add_option("--b", b, "Second states file")->required();
    w2->add_option("--time", time, "Time to compare")->required();
    w2->add_option("--eps", eps, "Entropic regularization")->check(CLI::PositiveNumber);
    w2->add_option("--dim", dim, "Grid dimension; read from meta.json when omitted")->check(CLI::Range(1, 2));

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run || *check) {
            const ParsedConfig parsed = parse_config(config);
            if (*check) {
                for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
                std::cout << "ok: " << config << "\n";
                return 0;
            }
            return run_command(parsed, strict, std::cout, std::cerr);
        }
        const StatesTable ta = read_states(a), tb = read_states(b);
        const W2Report r = w2_between(ta, tb, time, eps, dim ? dim : infer_dim(a));
        std::cout << "time," << format_double(r.time) << "\n";
        for (std::size_t i = 0; i < r.w2_sq.size(); ++i)
            std::cout << "w2_sq[" << i << "]," << format_double(r.w2_sq[i]) << "\n";
        std::cout << "w2_sq_total," << format_double(r.total) << "\n";
        if (!r.converged) std::cerr << "warning: Sinkhorn did not reach tolerance\n";
        return 0;
    } catch (const ConfigParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
