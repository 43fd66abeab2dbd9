#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "nhrf/errors.hpp"

using namespace nhrf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kMinimal = R"(
name: tiny
parameters: {a: 1.5}
chart:
  n: 2
  m: 2
  axes:
    - {lower: 0, upper: 2*pi, periodic: true, samples: 4}
    - {lower: 0, upper: 2*pi, periodic: true, samples: 4}
    - {lower: 0, upper: 2*pi, periodic: true, samples: 4}
    - {lower: 0, upper: 2*pi, periodic: true, samples: 4}
metric:
  g: [["a", "0"], ["0", "a"]]
  h: [["1", "0"], ["0", "1"]]
flow: {dchi: 1e-3, steps: 2}
)";

int shell(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace

TEST_CASE("presets load and validate") {
    const auto names = preset_names();
    CHECK(names.size() == 5);
    for (const auto& n : names) {
        Scenario s = load_preset(n);
        CHECK(s.name == n);
        CHECK_NOTHROW(s.validate());
        CHECK(s.hash().size() == 64);
    }
    Scenario f = load_preset("flat-t4");
    CHECK(f.n == 2);
    CHECK(f.m == 2);
    CHECK(f.axes.size() == 4);
    CHECK(f.axes[0].periodic);
    CHECK(f.g[0][0] == "1");
    CHECK(f.connection == ConnectionKind::Canonical);
    CHECK_THROWS(load_preset("no-such-preset"));
}

TEST_CASE("parse and validation errors") {
    Scenario s = parse_scenario(kMinimal);
    CHECK(s.name == "tiny");
    REQUIRE(s.parameters.size() == 1);
    CHECK(s.parameters[0].second == 1.5);
    CHECK_NOTHROW(s.validate());

    std::string bad = kMinimal;
    bad.replace(bad.find("[\"a\", \"0\"]"), 10, "[\"rho\", \"0\"]");
    CHECK_THROWS_AS(parse_scenario(bad).validate(), ValidationError);

    std::string one = kMinimal;
    one.replace(one.find("n: 2"), 4, "n: 1");
    CHECK_THROWS_AS(parse_scenario(one).validate(), ValidationError);

    CHECK_THROWS_AS(parse_scenario("chart: [unclosed"), ValidationError);
}

TEST_CASE("hash follows content, not formatting") {
    Scenario a = parse_scenario(kMinimal);
    Scenario b = parse_scenario(std::string("# comment\n") + kMinimal);
    CHECK(a.hash() == b.hash());
    b.flow.steps = 3;
    CHECK(a.hash() != b.hash());
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("run is deterministic and plot data resolves") {
    Scenario s = testing::preset("flat-t4");
    RunReport r1 = run(s, all_stages()), r2 = run(s, all_stages());
    REQUIRE(r1.ok());
    CHECK(r1.canonical_text() == r2.canonical_text());
    CHECK(r1.doc.contains("timestamp"));
    CHECK(r1.canonical_text().find("timestamp") == std::string::npos);

    const std::string csv = emit_plot_data(r1.doc, "F");
    CHECK(csv.rfind("chi,F\n", 0) == 0);
    CHECK(emit_plot_data(r1.doc, "flow.volume").rfind("chi,volume\n", 0) == 0);
    CHECK(emit_plot_data(r1.doc, "spectral.spectral").rfind("Lambda,spectral\n", 0) == 0);
    CHECK(emit_plot_data(r1.doc, "functionals.F").rfind("chi,F\n", 0) == 0);
    CHECK(emit_plot_data(r1.doc, "functionals.F") ==
          emit_plot_data(r1.doc, "functionals.F_spectral").replace(0, 15, "chi,F\n"));
    CHECK_THROWS_AS(emit_plot_data(r1.doc, "nothing"), ValidationError);

    const fs::path dir = fs::temp_directory_path() / "nhrf_cli_unit";
    fs::remove_all(dir);
    write_outputs(r1, dir);
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "flow.csv"));
    fs::remove_all(dir);
}

TEST_CASE("failing stage keeps earlier outputs") {
    Scenario s = testing::preset("shrinking-sphere");
    s.flow.kappa = 0.0;
    s.flow.dchi = 0.6;
    s.flow.steps = 1;
    s.flow.integrator = Integrator::Euler;
    RunReport r = run(s, {Stage::Geometry, Stage::Flow});
    CHECK(r.exit_code == 2);
    CHECK(r.failed_stage == "flow");
    CHECK(r.doc.at("outputs").contains("geometry"));
    CHECK(r.doc.contains("error"));
}

TEST_CASE("command line exit codes") {
    const char* cli = std::getenv("NHRF_CLI");
    if (!cli) {
        MESSAGE("NHRF_CLI not set, skipping");
        return;
    }
    const std::string exe = cli;
    const fs::path dir = fs::temp_directory_path() / "nhrf_cli_exit";
    fs::remove_all(dir);
    fs::create_directories(dir);
    {
        std::ofstream(dir / "ok.yaml") << kMinimal;
        std::string bad = kMinimal;
        bad.replace(bad.find("[\"a\", \"0\"]"), 10, "[\"rho\", \"0\"]");
        std::ofstream(dir / "bad.yaml") << bad;
    }
    CHECK(shell(exe + " --help") == 0);
    CHECK(shell(exe + " validate " + (dir / "ok.yaml").string()) == 0);
    CHECK(shell(exe + " validate " + (dir / "bad.yaml").string()) == 1);
    CHECK(shell(exe + " validate " + (dir / "missing.yaml").string()) == 1);
    CHECK(shell(exe + " presets") == 0);
    CHECK(shell(exe + " run " + (dir / "ok.yaml").string() + " -s geometry,flow -q -o " + (dir / "out").string()) == 0);
    CHECK(fs::exists(dir / "out" / "report.json"));
    CHECK(shell(exe + " plot-data " + (dir / "out" / "report.json").string() + " volume -o " + (dir / "v.csv").string()) ==
          0);
    CHECK(slurp(dir / "v.csv").rfind("chi,volume\n", 0) == 0);
    CHECK(shell(exe + " run shrinking-sphere -s flow --kappa 0 --dchi 0.6 --integrator euler --steps 1 -q -o " +
                (dir / "neg").string()) == 2);
    fs::remove_all(dir);
}
