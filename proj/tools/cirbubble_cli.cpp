#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "cirbubble/cli.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot read config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Pricing toolkit for a dividend stream with two mean-reverting beliefs:\n"
        "existence check, closed-form and grid prices, resale fixed point,\n"
        "Monte Carlo verification, and reference-figure reproduction."};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path, out_path;
    app.add_option("--config", config_path, "Flat key=value config file ('#' comments)");
    app.add_option("--out", out_path, "Output path (CSV file; directory for 'figures')");
    std::map<std::string, std::string> raw;
    for (const auto& key : cirbubble::config_keys())
        app.add_option("--" + key, raw[key], "Config key " + key);

    auto* cmd_check = app.add_subcommand(
        "check", "Report bubble existence, thresholds, and pasting constants");
    auto* cmd_price =
        app.add_subcommand("price", "Closed-form price curve (equal volatilities)");
    auto* cmd_solve = app.add_subcommand("solve", "Finite-difference price on a grid");
    auto* cmd_iterate =
        app.add_subcommand("iterate", "Resale fixed point from the intrinsic value");
    auto* cmd_simulate = app.add_subcommand("simulate", "Monte Carlo verification report");
    auto* cmd_figures =
        app.add_subcommand("figures", "Reproduce the three reference curve sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        cirbubble::run_config cfg;
        if (!config_path.empty()) cirbubble::parse_config_text(cfg, read_file(config_path));
        for (const auto& [key, value] : raw)  // flags override file values
            if (!value.empty()) cirbubble::apply_config_entry(cfg, key, value);
        cirbubble::validate_run_config(cfg);

        if (cmd_check->parsed()) return cirbubble::run_check(cfg, std::cout);
        if (cmd_price->parsed())
            return cirbubble::run_price(cfg, out_path, std::cout, std::cout);
        if (cmd_solve->parsed()) return cirbubble::run_solve(cfg, out_path, std::cout);
        if (cmd_iterate->parsed()) return cirbubble::run_iterate(cfg, out_path, std::cout);
        if (cmd_simulate->parsed()) return cirbubble::run_simulate(cfg, std::cout);
        return cirbubble::run_figures(cfg, out_path, std::cout);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
