#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nhrf/errors.hpp"
#include "nhrf/flow.hpp"
#include "nhrf/scenario.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonholonomic Ricci-flow laboratory: batch runner for geometric scenarios"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(nhrf::kToolName) + " " + nhrf::kToolVersion);

    std::string scenario_path, stages_arg = "geometry,flow,functionals,spectral", out_dir;
    std::optional<int> steps;
    std::optional<double> dchi, kappa, positivity;
    std::string integrator, connection;
    bool quiet = false;
    auto* run = app.add_subcommand("run", "Run the pipeline stages of a scenario and write the report");
    run->add_option("scenario", scenario_path, "Scenario YAML file or preset name")->required();
    run->add_option("-s,--stages", stages_arg, "Comma-separated stages (geometry,flow,functionals,spectral)");
    run->add_option("-o,--out", out_dir, "Output directory (default: the scenario's output.directory)");
    run->add_option("--steps", steps, "Override flow.steps");
    run->add_option("--dchi", dchi, "Override flow.dchi");
    run->add_option("--kappa", kappa, "Override flow.kappa");
    run->add_option("--integrator", integrator, "Override flow.integrator (euler | rk4)");
    run->add_option("--positivity-tolerance", positivity, "Override flow.positivity_tolerance");
    run->add_option("--connection", connection, "Override the connection switch (canonical | levi-civita)");
    run->add_flag("-q,--quiet", quiet, "Print nothing on success");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate", "Parse and validate a scenario without computing");
    validate->add_option("scenario", validate_path, "Scenario YAML file or preset name")->required();

    std::string show, write_dir;
    auto* presets = app.add_subcommand("presets", "List, print or export the built-in presets");
    presets->add_option("--show", show, "Print one preset");
    presets->add_option("--write", write_dir, "Write every preset as <name>.yaml into this directory");

    std::string report_path, quantity, plot_out;
    auto* plot = app.add_subcommand("plot-data", "Extract a two-column CSV from a report");
    plot->add_option("report", report_path, "report.json written by 'run'")->required();
    plot->add_option("quantity", quantity, "Quantity name, optionally qualified as <stage>.<name>")->required();
    plot->add_option("-o,--out", plot_out, "Write to a file instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*run) {
            nhrf::Scenario s = nhrf::load_scenario(scenario_path);
            if (steps) s.flow.steps = *steps;
            if (dchi) s.flow.dchi = *dchi;
            if (kappa) s.flow.kappa = *kappa;
            if (positivity) s.flow.positivity_tolerance = *positivity;
            if (!integrator.empty()) s.flow.integrator = nhrf::integrator_from_string(integrator);
            if (!connection.empty()) s.connection = s.flow.connection = nhrf::connection_from_string(connection);
            std::vector<nhrf::Stage> stages;
            for (const auto& t : split_commas(stages_arg)) stages.push_back(nhrf::stage_from_string(t));
            if (stages.empty()) throw nhrf::ValidationError("stages", "no stage selected");
            const nhrf::RunReport r = nhrf::run(s, stages);
            const std::string dir = out_dir.empty() ? s.output_directory : out_dir;
            nhrf::write_outputs(r, dir);
            if (!r.ok()) {
                std::cerr << "error in stage " << r.failed_stage << " (" << r.error_type << "): " << r.error_message << "\n";
                std::cerr << "partial outputs written to " << dir << "\n";
                return r.exit_code;
            }
            if (!quiet) {
                std::cout << s.name << " " << s.hash().substr(0, 12) << "\n";
                for (const auto& [name, text] : r.files) std::cout << "  wrote " << dir << "/" << name << "\n";
            }
            return 0;
        }
        if (*validate) {
            const nhrf::Scenario s = nhrf::load_scenario(validate_path);
            std::cout << "ok " << s.name << " n=" << s.n << " m=" << s.m << " hash=" << s.hash() << "\n";
            return 0;
        }
        if (*presets) {
            if (!show.empty()) {
                std::cout << nhrf::preset_text(show);
                return 0;
            }
            if (!write_dir.empty()) {
                std::filesystem::create_directories(write_dir);
                for (const auto& name : nhrf::preset_names()) {
                    std::ofstream out(std::filesystem::path(write_dir) / (name + ".yaml"));
                    out << nhrf::preset_text(name);
                }
            }
            for (const auto& name : nhrf::preset_names()) std::cout << name << "\n";
            return 0;
        }
        if (*plot) {
            std::ifstream in(report_path);
            if (!in) throw nhrf::ValidationError("", "cannot open report '" + report_path + "'");
            nlohmann::json doc;
            try {
                in >> doc;
            } catch (const nlohmann::json::exception& e) {
                throw nhrf::ValidationError("", "malformed report: " + std::string(e.what()));
            }
            const std::string csv = nhrf::emit_plot_data(doc, quantity);
            if (plot_out.empty()) {
                std::cout << csv;
            } else {
                std::ofstream out(plot_out);
                out << csv;
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error (" << nhrf::error_type_name(e) << "): " << e.what() << "\n";
        return nhrf::exit_code_for(e);
    }
    return 0;
}
