#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nhrf/chart.hpp"
#include "nhrf/connections.hpp"
#include "nhrf/flow.hpp"
#include "nhrf/geometry.hpp"
#include "nhrf/spectral.hpp"

namespace nhrf {

inline constexpr const char* kToolName = "nhrf";
inline constexpr const char* kToolVersion = "0.1.0";

struct FunctionalsConfig {
    std::string psi = "0";
    std::vector<double> chi{1.0};
    bool thermo = true;
};

enum class SpectralMethod { Analytic, Lattice };

struct SpectralConfig {
    std::string testing_function = "exp(-u)";
    std::vector<double> lambdas{4.0, 8.0, 16.0};
    HeatKernelMode mode = HeatKernelMode::Scalar;
    std::string phi = "0";
    std::vector<std::string> A;  // empty: zero
    std::string B = "0";
    int rank = 1;
    SpectralMethod method = SpectralMethod::Analytic;
    AnalyticSpectrum spectrum;
    // lattice: groups of 0-based axes assembled separately; eigenvalues combine by pairwise sums
    std::vector<std::vector<int>> lattice_factors;
};

struct Scenario {
    std::string name;
    int n = 2, m = 2;
    std::vector<Axis> axes;
    std::vector<std::pair<std::string, double>> parameters;  // declaration order
    std::vector<std::vector<std::string>> g, h, N;
    ConnectionKind connection = ConnectionKind::Canonical;
    Backend backend = Backend::Symbolic;
    FlowConfig flow;
    FunctionalsConfig functionals;
    SpectralConfig spectral;
    std::string output_directory;

    // Stable JSON form; its SHA-256 is the scenario hash.
    nlohmann::json canonical() const;
    std::string hash() const;
    // Builds the chart, parses every expression and checks shapes and symbols.
    void validate() const;
};

// Parses YAML text; origin is used in messages only.
Scenario parse_scenario(const std::string& text, const std::string& origin = "<text>");
// Reads a scenario file; a bare preset name is accepted when no such file exists.
Scenario load_scenario(const std::string& path);

std::vector<std::string> preset_names();
const std::string& preset_text(const std::string& name);
Scenario load_preset(const std::string& name);

ChartPtr make_chart(const Scenario& s);
// Symbolic fields; backend Grid samples them on the chart nodes (unseeded).
Geometry make_geometry(const Scenario& s, std::optional<Backend> backend = std::nullopt);
Geometry make_geometry(const Scenario& s, ChartPtr chart, Backend backend);
// Scalar field from an expression over the scenario's coordinates and parameters.
Field make_field(const Scenario& s, const std::string& source, const std::string& path = "field");

enum class Stage { Geometry, Flow, Functionals, Spectral };
std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
std::vector<Stage> all_stages();

struct RunReport {
    nlohmann::json doc;
    std::map<std::string, std::string> files;  // output name -> contents
    std::string failed_stage;
    std::string error_type;
    std::string error_message;
    int exit_code = 0;

    bool ok() const { return exit_code == 0; }
    std::string text() const;            // full JSON
    std::string canonical_text() const;  // JSON without timing and timestamp
};

// Runs the requested stages in dependency order. A failing stage stops the run; earlier outputs stay.
RunReport run(const Scenario& s, std::vector<Stage> stages);
void write_outputs(const RunReport& r, const std::filesystem::path& dir);

// Two-column CSV (abscissa, value); quantity may be qualified as "<stage>.<name>".
std::string emit_plot_data(const nlohmann::json& report, const std::string& quantity);

// 1 for validation-class errors, 2 for numerical failures.
int exit_code_for(const std::exception& e);
std::string error_type_name(const std::exception& e);

std::string sha256_hex(const std::string& data);

}  // namespace nhrf
