#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nhrf/errors.hpp"
#include "nhrf/expr.hpp"
#include "nhrf/functionals.hpp"
#include "nhrf/scenario.hpp"
#include "nhrf/spectral.hpp"

namespace py = pybind11;

namespace {

nhrf::SymbolTable coordinate_table(const std::vector<std::string>& variables, const std::map<std::string, double>& params) {
    nhrf::SymbolTable t;
    for (const auto& v : variables) t.add_variable(v);
    t.add_parameter("pi");
    for (const auto& [k, _] : params) t.add_parameter(k);
    return t;
}

std::map<std::string, double> with_pi(std::map<std::string, double> p) {
    p["pi"] = 3.14159265358979323846;
    return p;
}

py::dict run_dict(const nhrf::RunReport& r) {
    py::dict d;
    d["report"] = r.text();
    d["canonical"] = r.canonical_text();
    d["files"] = r.files;
    d["exit_code"] = r.exit_code;
    d["failed_stage"] = r.failed_stage;
    d["error"] = r.error_message;
    return d;
}

}  // namespace

PYBIND11_MODULE(_nhrf, m) {
    m.doc() = "Nonholonomic Ricci-flow laboratory";
    m.attr("__version__") = nhrf::kToolVersion;

    // most recent registration is tried first, so the base class goes first
    py::register_exception<nhrf::Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<nhrf::ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<nhrf::ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<nhrf::SymbolError>(m, "SymbolError", PyExc_ValueError);
    py::register_exception<nhrf::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    m.def(
        "simplify",
        [](const std::string& src, const std::vector<std::string>& variables) {
            return nhrf::to_string(nhrf::simplify(nhrf::parse(src, coordinate_table(variables, {}))));
        },
        py::arg("source"), py::arg("variables"));
    m.def(
        "differentiate",
        [](const std::string& src, const std::vector<std::string>& variables, const std::string& wrt) {
            auto t = coordinate_table(variables, {});
            const int slot = t.variable_slot(wrt);
            if (slot < 0) throw nhrf::SymbolError("unknown coordinate", wrt);
            return nhrf::to_string(nhrf::differentiate(nhrf::parse(src, t), slot));
        },
        py::arg("source"), py::arg("variables"), py::arg("wrt"));
    m.def(
        "evaluate",
        [](const std::string& src, const std::map<std::string, double>& point, const std::map<std::string, double>& params) {
            std::vector<std::string> vars;
            for (const auto& [k, _] : point) vars.push_back(k);
            auto t = coordinate_table(vars, params);
            return nhrf::evaluate(nhrf::parse(src, t), t, point, with_pi(params));
        },
        py::arg("source"), py::arg("point"), py::arg("params") = std::map<std::string, double>{});

    m.def("presets", &nhrf::preset_names);
    m.def("preset_text", &nhrf::preset_text, py::return_value_policy::copy);
    m.def("validate", [](const std::string& path_or_preset) { return nhrf::load_scenario(path_or_preset).hash(); });
    m.def("validate_text", [](const std::string& text) { return nhrf::parse_scenario(text).hash(); });
    m.def(
        "run",
        [](const std::string& path_or_preset, const std::vector<std::string>& stages) {
            const nhrf::Scenario s = nhrf::load_scenario(path_or_preset);
            std::vector<nhrf::Stage> st;
            for (const auto& x : stages) st.push_back(nhrf::stage_from_string(x));
            if (st.empty()) st = nhrf::all_stages();
            nhrf::RunReport r;
            {
                py::gil_scoped_release release;
                r = nhrf::run(s, st);
            }
            return run_dict(r);
        },
        py::arg("scenario"), py::arg("stages") = std::vector<std::string>{});
    m.def(
        "plot_data",
        [](const std::string& report_json, const std::string& quantity) {
            return nhrf::emit_plot_data(nlohmann::json::parse(report_json), quantity);
        },
        py::arg("report"), py::arg("quantity"));
    m.def(
        "moments",
        [](const std::string& tf, int kmax) {
            const auto t = nhrf::moments(nhrf::TestingFunction(tf), kmax);
            py::dict d;
            d["f0"] = t.f0;
            d["f2"] = t.f2;
            d["higher"] = t.higher;
            d["f0_divergent"] = t.f0_divergent;
            d["f2_divergent"] = t.f2_divergent;
            return d;
        },
        py::arg("testing_function"), py::arg("kmax") = 0);
    m.def(
        "torus_trace",
        [](int dim, double length, const std::string& tf, double Lambda) {
            nhrf::SpectrumFactor f;
            f.dim = dim;
            f.length = length;
            return nhrf::spectral_trace(nhrf::AnalyticSpectrum{{f}}, nhrf::TestingFunction(tf), Lambda).value;
        },
        py::arg("dim"), py::arg("length"), py::arg("testing_function"), py::arg("Lambda"));
}
