#include "nhrf/scenario.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <openssl/evp.h>
#include <yaml-cpp/yaml.h>

#include "nhrf/errors.hpp"
#include "nhrf/functionals.hpp"

namespace nhrf {

using nlohmann::json;

// defined in the generated preset table
const std::vector<std::pair<std::string, std::string>>& embedded_presets();

namespace {

// ---------------------------------------------------------------- YAML helpers

std::string join(const std::string& a, const std::string& b) { return a.empty() ? b : a + "." + b; }
std::string at(const std::string& a, std::size_t i) { return a + "[" + std::to_string(i) + "]"; }

void allow_keys(const YAML::Node& node, const std::string& path, std::initializer_list<const char*> keys) {
    if (!node.IsMap()) throw ValidationError(path, "expected a mapping");
    for (const auto& kv : node) {
        const std::string k = kv.first.as<std::string>();
        if (std::none_of(keys.begin(), keys.end(), [&](const char* s) { return k == s; }))
            throw ValidationError(join(path, k), "unknown key");
    }
}

std::string scalar_text(const YAML::Node& n, const std::string& path) {
    if (!n.IsScalar()) throw ValidationError(path, "expected a scalar");
    return n.as<std::string>();
}

bool as_bool(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<bool>();
    } catch (const YAML::Exception&) {
        throw ValidationError(path, "expected true or false");
    }
}

int as_int(const YAML::Node& n, const std::string& path) {
    try {
        return n.as<int>();
    } catch (const YAML::Exception&) {
        throw ValidationError(path, "expected an integer");
    }
}

// Numbers may be written as constant expressions in pi and earlier parameters.
double as_number(const YAML::Node& n, const std::string& path, const std::vector<std::pair<std::string, double>>& params) {
    const std::string text = scalar_text(n, path);
    SymbolTable t;
    t.add_parameter("pi");
    std::vector<double> values{std::numbers::pi};
    for (const auto& [k, v] : params) {
        t.add_parameter(k);
        values.push_back(v);
    }
    try {
        Expr e = parse(text, t);
        const double v = evaluate(e, std::span<const double>(), values);
        if (!std::isfinite(v)) throw ValidationError(path, "value is not finite");
        return v;
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(path, e.what());
    }
}

std::vector<double> number_list(const YAML::Node& n, const std::string& path,
                                const std::vector<std::pair<std::string, double>>& params) {
    std::vector<double> out;
    if (n.IsScalar()) {
        out.push_back(as_number(n, path, params));
        return out;
    }
    if (!n.IsSequence()) throw ValidationError(path, "expected a number or a list of numbers");
    for (std::size_t i = 0; i < n.size(); ++i) out.push_back(as_number(n[i], at(path, i), params));
    return out;
}

std::vector<std::vector<std::string>> expr_matrix(const YAML::Node& n, const std::string& path, int rows, int cols) {
    if (!n.IsSequence() || static_cast<int>(n.size()) != rows)
        throw ValidationError(path, "expected " + std::to_string(rows) + " rows");
    std::vector<std::vector<std::string>> out(static_cast<std::size_t>(rows));
    for (int i = 0; i < rows; ++i) {
        const YAML::Node r = n[static_cast<std::size_t>(i)];
        const std::string p = at(path, static_cast<std::size_t>(i));
        if (!r.IsSequence() || static_cast<int>(r.size()) != cols)
            throw ValidationError(p, "expected " + std::to_string(cols) + " entries");
        for (int j = 0; j < cols; ++j) out[static_cast<std::size_t>(i)].push_back(scalar_text(r[static_cast<std::size_t>(j)], at(p, static_cast<std::size_t>(j))));
    }
    return out;
}

std::vector<std::vector<std::string>> zero_matrix(int rows, int cols) {
    return std::vector<std::vector<std::string>>(static_cast<std::size_t>(rows), std::vector<std::string>(static_cast<std::size_t>(cols), "0"));
}

// ---------------------------------------------------------------- expression plumbing

struct Symbols {
    SymbolTable table;
    ExprEnvPtr env;
};

Symbols symbols_for(const Scenario& s, const Chart& chart) {
    Symbols out;
    std::vector<std::string> names;
    for (const auto& p : s.parameters) names.push_back(p.first);
    out.table = chart.symbols(names);
    auto env = std::make_shared<ExprEnv>();
    env->dim = chart.dim();
    std::map<std::string, double> values{{"pi", std::numbers::pi}};
    for (const auto& p : s.parameters) values[p.first] = p.second;
    env->params = out.table.bind(values);
    out.env = env;
    return out;
}

Expr parse_at(const std::string& source, const SymbolTable& t, const std::string& path) {
    try {
        return parse(source, t);
    } catch (const SymbolError& e) {
        throw ValidationError(path, std::string("undeclared symbol '") + e.symbol() + "' in \"" + source + "\"");
    } catch (const ParseError& e) {
        throw ValidationError(path, std::string(e.what()) + " in \"" + source + "\"");
    } catch (const ArityError& e) {
        throw ValidationError(path, std::string(e.what()) + " in \"" + source + "\"");
    }
}

Field field_of(const Symbols& sy, const std::string& source, const std::string& path) {
    Expr e = simplify(parse_at(source, sy.table, path));
    if (e.is_number(0.0)) return Field::constant(0.0, sy.env->dim);
    return Field::symbolic(e, sy.env);
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

// ---------------------------------------------------------------- parsing

Scenario parse_scenario(const std::string& text, const std::string& origin) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ValidationError("", origin + ": malformed YAML: " + e.what());
    }
    if (!root.IsMap()) throw ValidationError("", origin + ": top level must be a mapping");
    allow_keys(root, "", {"name", "chart", "parameters", "metric", "nconnection", "connection", "backend", "flow",
                          "functionals", "spectral", "output"});
    Scenario s;
    s.name = root["name"] ? scalar_text(root["name"], "name") : "scenario";

    if (const YAML::Node p = root["parameters"]) {
        if (!p.IsMap() && !p.IsNull()) throw ValidationError("parameters", "expected a mapping");
        if (p.IsMap())
            for (const auto& kv : p) {
                const std::string k = kv.first.as<std::string>();
                if (k == "pi") throw ValidationError("parameters.pi", "pi is predefined");
                const double v = as_number(kv.second, "parameters." + k, s.parameters);
                s.parameters.emplace_back(k, v);
            }
    }

    const YAML::Node chart = root["chart"];
    if (!chart) throw ValidationError("chart", "missing");
    allow_keys(chart, "chart", {"n", "m", "axes"});
    if (!chart["n"]) throw ValidationError("chart.n", "missing");
    if (!chart["m"]) throw ValidationError("chart.m", "missing");
    s.n = as_int(chart["n"], "chart.n");
    s.m = as_int(chart["m"], "chart.m");
    if (s.n < 2) throw ValidationError("chart.n", "n must be >= 2");
    if (s.m < 1) throw ValidationError("chart.m", "m must be >= 1");
    if (s.n + s.m > kMaxDim) throw ValidationError("chart", "n + m must not exceed " + std::to_string(kMaxDim));
    const YAML::Node axes = chart["axes"];
    if (!axes || !axes.IsSequence() || static_cast<int>(axes.size()) != s.n + s.m)
        throw ValidationError("chart.axes", "expected a list of n + m axes");
    for (std::size_t k = 0; k < axes.size(); ++k) {
        const std::string p = at("chart.axes", k);
        const YAML::Node a = axes[k];
        allow_keys(a, p, {"name", "lower", "upper", "periodic", "samples", "quad_order", "polar", "theta0"});
        Axis ax;
        if (a["name"]) ax.name = scalar_text(a["name"], join(p, "name"));
        if (a["polar"]) ax.polar = as_bool(a["polar"], join(p, "polar"));
        if (a["theta0"]) ax.theta0 = as_number(a["theta0"], join(p, "theta0"), s.parameters);
        if (a["periodic"]) ax.periodic = as_bool(a["periodic"], join(p, "periodic"));
        if (ax.polar && ax.periodic) throw ValidationError(join(p, "periodic"), "a polar axis cannot be periodic");
        if (!ax.polar) {
            if (!a["lower"]) throw ValidationError(join(p, "lower"), "missing");
            if (!a["upper"]) throw ValidationError(join(p, "upper"), "missing");
            ax.lower = as_number(a["lower"], join(p, "lower"), s.parameters);
            ax.upper = as_number(a["upper"], join(p, "upper"), s.parameters);
        } else {
            ax.lower = ax.theta0;
            ax.upper = std::numbers::pi - ax.theta0;
        }
        if (a["samples"]) ax.samples = as_int(a["samples"], join(p, "samples"));
        if (a["quad_order"]) ax.quad_order = as_int(a["quad_order"], join(p, "quad_order"));
        s.axes.push_back(ax);
    }

    const YAML::Node metric = root["metric"];
    if (!metric) throw ValidationError("metric", "missing");
    allow_keys(metric, "metric", {"g", "h"});
    if (!metric["g"]) throw ValidationError("metric.g", "missing");
    if (!metric["h"]) throw ValidationError("metric.h", "missing");
    s.g = expr_matrix(metric["g"], "metric.g", s.n, s.n);
    s.h = expr_matrix(metric["h"], "metric.h", s.m, s.m);
    s.N = root["nconnection"] ? expr_matrix(root["nconnection"], "nconnection", s.n, s.m) : zero_matrix(s.n, s.m);

    if (root["connection"]) {
        const std::string c = scalar_text(root["connection"], "connection");
        try {
            s.connection = connection_from_string(c);
        } catch (const Error&) {
            throw ValidationError("connection", "unknown connection '" + c + "' (canonical | levi-civita)");
        }
    }
    if (root["backend"]) {
        const std::string b = scalar_text(root["backend"], "backend");
        if (b == "symbolic") s.backend = Backend::Symbolic;
        else if (b == "grid") s.backend = Backend::Grid;
        else throw ValidationError("backend", "unknown backend '" + b + "' (symbolic | grid)");
    }

    s.flow.connection = s.connection;
    if (const YAML::Node f = root["flow"]) {
        allow_keys(f, "flow", {"kappa", "dchi", "steps", "integrator", "positivity_tolerance"});
        if (f["kappa"]) {
            const std::string t = scalar_text(f["kappa"], "flow.kappa");
            if (t != "auto") s.flow.kappa = as_number(f["kappa"], "flow.kappa", s.parameters);
        }
        if (f["dchi"]) s.flow.dchi = as_number(f["dchi"], "flow.dchi", s.parameters);
        if (f["steps"]) s.flow.steps = as_int(f["steps"], "flow.steps");
        if (f["integrator"]) {
            const std::string t = scalar_text(f["integrator"], "flow.integrator");
            try {
                s.flow.integrator = integrator_from_string(t);
            } catch (const Error&) {
                throw ValidationError("flow.integrator", "unknown integrator '" + t + "' (euler | rk4)");
            }
        }
        if (f["positivity_tolerance"])
            s.flow.positivity_tolerance = as_number(f["positivity_tolerance"], "flow.positivity_tolerance", s.parameters);
    }

    if (const YAML::Node f = root["functionals"]) {
        allow_keys(f, "functionals", {"psi", "chi", "thermo"});
        if (f["psi"]) s.functionals.psi = scalar_text(f["psi"], "functionals.psi");
        if (f["chi"]) s.functionals.chi = number_list(f["chi"], "functionals.chi", s.parameters);
        if (f["thermo"]) s.functionals.thermo = as_bool(f["thermo"], "functionals.thermo");
    }

    if (const YAML::Node sp = root["spectral"]) {
        allow_keys(sp, "spectral", {"testing_function", "lambdas", "mode", "phi", "A", "B", "rank", "method", "spectrum", "lattice"});
        SpectralConfig& c = s.spectral;
        if (sp["testing_function"]) c.testing_function = scalar_text(sp["testing_function"], "spectral.testing_function");
        if (sp["lambdas"]) c.lambdas = number_list(sp["lambdas"], "spectral.lambdas", s.parameters);
        if (sp["mode"]) c.mode = heat_kernel_mode_from_string(scalar_text(sp["mode"], "spectral.mode"));
        if (sp["phi"]) c.phi = scalar_text(sp["phi"], "spectral.phi");
        if (sp["B"]) c.B = scalar_text(sp["B"], "spectral.B");
        if (sp["A"]) {
            const YAML::Node A = sp["A"];
            if (!A.IsSequence() || static_cast<int>(A.size()) != s.n + s.m)
                throw ValidationError("spectral.A", "expected n + m components");
            for (std::size_t i = 0; i < A.size(); ++i) c.A.push_back(scalar_text(A[i], at("spectral.A", i)));
        }
        if (sp["rank"]) c.rank = as_int(sp["rank"], "spectral.rank");
        if (sp["method"]) {
            const std::string t = scalar_text(sp["method"], "spectral.method");
            if (t == "analytic") c.method = SpectralMethod::Analytic;
            else if (t == "lattice") c.method = SpectralMethod::Lattice;
            else throw ValidationError("spectral.method", "unknown method '" + t + "' (analytic | lattice)");
        }
        if (const YAML::Node fs = sp["spectrum"]) {
            if (!fs.IsSequence()) throw ValidationError("spectral.spectrum", "expected a list of factors");
            for (std::size_t i = 0; i < fs.size(); ++i) {
                const std::string p = at("spectral.spectrum", i);
                allow_keys(fs[i], p, {"torus", "sphere", "length"});
                SpectrumFactor f;
                if (fs[i]["torus"]) {
                    f.kind = SpectrumFactor::Kind::Torus;
                    f.dim = as_int(fs[i]["torus"], join(p, "torus"));
                    if (f.dim < 1) throw ValidationError(join(p, "torus"), "dimension must be positive");
                    if (fs[i]["length"]) f.length = as_number(fs[i]["length"], join(p, "length"), s.parameters);
                    if (!(f.length > 0.0)) throw ValidationError(join(p, "length"), "must be positive");
                } else if (fs[i]["sphere"]) {
                    f.kind = SpectrumFactor::Kind::Sphere;
                    f.dim = 2;
                    f.radius = as_number(fs[i]["sphere"], join(p, "sphere"), s.parameters);
                    if (!(f.radius > 0.0)) throw ValidationError(join(p, "sphere"), "radius must be positive");
                } else {
                    throw ValidationError(p, "factor needs 'torus: <dim>' or 'sphere: <radius>'");
                }
                c.spectrum.factors.push_back(f);
            }
        }
        if (const YAML::Node l = sp["lattice"]) {
            allow_keys(l, "spectral.lattice", {"factors"});
            if (const YAML::Node fs = l["factors"]) {
                if (!fs.IsSequence()) throw ValidationError("spectral.lattice.factors", "expected a list of axis lists");
                for (std::size_t i = 0; i < fs.size(); ++i) {
                    const std::string p = at("spectral.lattice.factors", i);
                    if (!fs[i].IsSequence()) throw ValidationError(p, "expected a list of 1-based axis numbers");
                    std::vector<int> grp;
                    for (std::size_t j = 0; j < fs[i].size(); ++j) {
                        const int k = as_int(fs[i][j], at(p, j));
                        if (k < 1 || k > s.n + s.m) throw ValidationError(at(p, j), "axis number out of range");
                        grp.push_back(k - 1);
                    }
                    c.lattice_factors.push_back(grp);
                }
            }
        }
    }

    if (const YAML::Node o = root["output"]) {
        allow_keys(o, "output", {"directory"});
        if (o["directory"]) s.output_directory = scalar_text(o["directory"], "output.directory");
    }
    if (s.output_directory.empty()) s.output_directory = "nhrf-out/" + s.name;
    s.validate();
    return s;
}

Scenario load_scenario(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        const auto names = preset_names();
        if (std::find(names.begin(), names.end(), path) != names.end()) return load_preset(path);
        throw ValidationError("", "cannot open scenario file '" + path + "'");
    }
    std::ostringstream os;
    os << in.rdbuf();
    return parse_scenario(os.str(), path);
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : embedded_presets()) out.push_back(p.first);
    return out;
}

const std::string& preset_text(const std::string& name) {
    for (const auto& p : embedded_presets())
        if (p.first == name) return p.second;
    throw ValidationError("", "unknown preset '" + name + "'");
}

Scenario load_preset(const std::string& name) { return parse_scenario(preset_text(name), "preset:" + name); }

// ---------------------------------------------------------------- validation and construction

ChartPtr make_chart(const Scenario& s) { return std::make_shared<const Chart>(s.n, s.m, s.axes); }

void Scenario::validate() const {
    ChartPtr chart = make_chart(*this);
    Symbols sy = symbols_for(*this, *chart);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const std::string p = "metric.g[" + std::to_string(i) + "][" + std::to_string(j) + "]";
            Expr a = parse_at(g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], sy.table, p);
            Expr b = parse_at(g[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)], sy.table, p);
            if (simplify(a) != simplify(b)) throw ValidationError(p, "g must be symmetric");
        }
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            const std::string p = "metric.h[" + std::to_string(a) + "][" + std::to_string(b) + "]";
            Expr x = parse_at(h[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], sy.table, p);
            Expr y = parse_at(h[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)], sy.table, p);
            if (simplify(x) != simplify(y)) throw ValidationError(p, "h must be symmetric");
        }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a)
            parse_at(N[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)], sy.table,
                     "nconnection[" + std::to_string(i) + "][" + std::to_string(a) + "]");
    parse_at(functionals.psi, sy.table, "functionals.psi");
    for (std::size_t i = 0; i < functionals.chi.size(); ++i)
        if (!(functionals.chi[i] > 0.0)) throw ValidationError(at("functionals.chi", i), "chi must be positive");
    if (functionals.chi.empty()) throw ValidationError("functionals.chi", "at least one value required");
    if (!(flow.dchi > 0.0)) throw ValidationError("flow.dchi", "must be positive");
    if (flow.steps < 0) throw ValidationError("flow.steps", "must be nonnegative");
    if (flow.kappa && *flow.kappa < 0.0) throw ValidationError("flow.kappa", "must be nonnegative");
    parse_at(spectral.phi, sy.table, "spectral.phi");
    parse_at(spectral.B, sy.table, "spectral.B");
    for (std::size_t i = 0; i < spectral.A.size(); ++i) parse_at(spectral.A[i], sy.table, at("spectral.A", i));
    try {
        TestingFunction tf(spectral.testing_function);
    } catch (const Error& e) {
        throw ValidationError("spectral.testing_function", e.what());
    }
    for (std::size_t i = 0; i < spectral.lambdas.size(); ++i)
        if (!(spectral.lambdas[i] > 0.0)) throw ValidationError(at("spectral.lambdas", i), "Lambda must be positive");
    if (spectral.rank < 1) throw ValidationError("spectral.rank", "must be positive");
    if (spectral.method == SpectralMethod::Analytic && !spectral.spectrum.factors.empty() &&
        spectral.spectrum.dimension() != n + m)
        throw ValidationError("spectral.spectrum", "factor dimensions must add up to n + m");
    if (spectral.method == SpectralMethod::Lattice) {
        std::vector<int> seen;
        for (const auto& grp : spectral.lattice_factors)
            for (int k : grp) {
                if (std::find(seen.begin(), seen.end(), k) != seen.end())
                    throw ValidationError("spectral.lattice.factors", "axis listed twice");
                if (!axes[static_cast<std::size_t>(k)].periodic)
                    throw ValidationError("spectral.lattice.factors", "lattice axes must be periodic");
                seen.push_back(k);
            }
    }
}

Geometry make_geometry(const Scenario& s, ChartPtr chart, Backend backend) {
    Symbols sy = symbols_for(s, *chart);
    Geometry geo;
    geo.chart = chart;
    geo.backend = backend;
    geo.metric.g = SymFieldMatrix(s.n, chart->dim());
    geo.metric.h = SymFieldMatrix(s.m, chart->dim());
    geo.nconn = NConnection(s.n, s.m, chart->dim());
    auto place = [&](const Field& f) {
        if (backend == Backend::Grid && !f.is_zero()) return f.to_grid(chart, false);
        return f;
    };
    for (int i = 0; i < s.n; ++i)
        for (int j = i; j < s.n; ++j)
            geo.metric.g.set(i, j, place(field_of(sy, s.g[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)], "metric.g")));
    for (int a = 0; a < s.m; ++a)
        for (int b = a; b < s.m; ++b)
            geo.metric.h.set(a, b, place(field_of(sy, s.h[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)], "metric.h")));
    for (int i = 0; i < s.n; ++i)
        for (int a = 0; a < s.m; ++a)
            geo.nconn.set(i, a, place(field_of(sy, s.N[static_cast<std::size_t>(i)][static_cast<std::size_t>(a)], "nconnection")));
    return geo;
}

Geometry make_geometry(const Scenario& s, std::optional<Backend> backend) {
    return make_geometry(s, make_chart(s), backend.value_or(s.backend));
}

Field make_field(const Scenario& s, const std::string& source, const std::string& path) {
    ChartPtr chart = make_chart(s);
    return field_of(symbols_for(s, *chart), source, path);
}

// ---------------------------------------------------------------- canonical form and hash

json Scenario::canonical() const {
    json j;
    j["name"] = name;
    json ax = json::array();
    for (const auto& a : axes)
        ax.push_back({{"name", a.name}, {"lower", a.lower}, {"upper", a.upper}, {"periodic", a.periodic},
                      {"samples", a.samples}, {"quad_order", a.quad_order}, {"polar", a.polar}, {"theta0", a.theta0}});
    j["chart"] = {{"n", n}, {"m", m}, {"axes", ax}};
    json p = json::array();
    for (const auto& [k, v] : parameters) p.push_back({k, v});
    j["parameters"] = p;
    j["metric"] = {{"g", g}, {"h", h}};
    j["nconnection"] = N;
    j["connection"] = to_string(connection);
    j["backend"] = backend == Backend::Symbolic ? "symbolic" : "grid";
    j["flow"] = {{"kappa", flow.kappa ? json(*flow.kappa) : json("auto")},
                 {"dchi", flow.dchi},
                 {"steps", flow.steps},
                 {"integrator", to_string(flow.integrator)},
                 {"positivity_tolerance", flow.positivity_tolerance}};
    j["functionals"] = {{"psi", functionals.psi}, {"chi", functionals.chi}, {"thermo", functionals.thermo}};
    json fac = json::array();
    for (const auto& f : spectral.spectrum.factors) {
        if (f.kind == SpectrumFactor::Kind::Torus) fac.push_back({{"torus", f.dim}, {"length", f.length}});
        else fac.push_back({{"sphere", f.radius}});
    }
    j["spectral"] = {{"testing_function", spectral.testing_function},
                     {"lambdas", spectral.lambdas},
                     {"mode", to_string(spectral.mode)},
                     {"phi", spectral.phi},
                     {"A", spectral.A},
                     {"B", spectral.B},
                     {"rank", spectral.rank},
                     {"method", spectral.method == SpectralMethod::Analytic ? "analytic" : "lattice"},
                     {"spectrum", fac},
                     {"lattice_factors", spectral.lattice_factors}};
    j["output"] = {{"directory", output_directory}};
    return j;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("SHA-256 failed");
    std::string out;
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string Scenario::hash() const { return sha256_hex(canonical().dump()); }

// ---------------------------------------------------------------- stages

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Geometry: return "geometry";
        case Stage::Flow: return "flow";
        case Stage::Functionals: return "functionals";
        case Stage::Spectral: return "spectral";
    }
    return "?";
}

Stage stage_from_string(const std::string& s) {
    for (Stage st : all_stages())
        if (to_string(st) == s) return st;
    throw ValidationError("stages", "unknown stage '" + s + "' (geometry | flow | functionals | spectral)");
}

std::vector<Stage> all_stages() { return {Stage::Geometry, Stage::Flow, Stage::Functionals, Stage::Spectral}; }

namespace {

// A handful of grid nodes spread along the chart diagonal; valid for both backends.
std::vector<Site> sample_sites(const Chart& c, int count) {
    std::vector<Site> out;
    for (int s = 0; s < count; ++s) {
        std::size_t node = 0;
        for (int k = 0; k < c.dim(); ++k) {
            const int N = c.axis(k).samples;
            const int i = ((s + 1) * N) / (count + 1);
            node += static_cast<std::size_t>(i) * c.stride(k);
        }
        out.push_back(c.node_site(node));
    }
    return out;
}

struct TableBuilder {
    std::string name;
    std::size_t sites;
    json rows = json::array();
    double max_abs = 0.0;
    std::map<std::vector<int>, std::vector<double>> data;

    TableBuilder(std::string nm, std::size_t count) : name(std::move(nm)), sites(count) {}
    void put(const std::vector<int>& idx, std::size_t site, double v) {
        auto& row = data[idx];
        if (row.empty()) row.assign(sites, 0.0);
        row[site] = v;
    }
    json finish() {
        for (const auto& [idx, vals] : data) {
            bool nz = false;
            for (double v : vals) {
                max_abs = std::max(max_abs, std::fabs(v));
                if (v != 0.0) nz = true;
            }
            if (nz) rows.push_back({{"index", idx}, {"values", vals}});
        }
        return {{"name", name}, {"max_abs", max_abs}, {"entries", rows}};
    }
};

json geometry_stage(const Scenario& s, std::map<std::string, std::string>& files) {
    Geometry geo = make_geometry(s);
    const Chart& chart = *geo.chart;
    const int n = s.n, m = s.m, D = n + m;
    const ConnectionKind k = s.connection;
    const auto sites = sample_sites(chart, 4);
    const std::size_t S = sites.size();
    TableBuilder Nt{"N", S}, Om{"Omega", S}, Gt{"connection", S}, Tt{"torsion", S}, Zt{"distortion", S}, Rt{"riemann", S},
        Rc{"ricci", S};
    json scal = json::object();
    std::vector<double> sR(S), vol(S), metricity(S), w2(S), gb(S);
    for (std::size_t p = 0; p < S; ++p) {
        LocalMetric lm = local_metric(geo, sites[p]);
        PointGeometry pg(lm);
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < m; ++a) Nt.put({i + 1, n + a + 1}, p, pg.N(i, a).v);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j)
                for (int a = 0; a < m; ++a) Om.put({i + 1, j + 1, n + a + 1}, p, pg.Omega(i, j, a).v);
        const FrameTable& G = pg.connection(k);
        const Table3 T = pg.torsion();
        const Distortion Z = pg.distortion();
        const Curvature& C = pg.curvature(k);
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) {
                Rc.put({a + 1, b + 1}, p, C.Ric[a][b]);
                for (int c = 0; c < D; ++c) {
                    Gt.put({c + 1, a + 1, b + 1}, p, G[c][a][b].v);
                    Tt.put({c + 1, a + 1, b + 1}, p, T[c][a][b]);
                    Zt.put({c + 1, a + 1, b + 1}, p, Z.Z[c][a][b]);
                    for (int d = 0; d < D; ++d) Rt.put({a + 1, b + 1, c + 1, d + 1}, p, C.R[a][b][c][d]);
                }
            }
        sR[p] = C.sR;
        vol[p] = volume_density(lm);
        metricity[p] = pg.metricity_residual(k);
        if (D == 4) {
            w2[p] = pg.weyl_squared(k);
            gb[p] = pg.gauss_bonnet(k);
        }
    }
    json sites_j = json::array();
    for (const auto& st : sites) sites_j.push_back(std::vector<double>(st.u.begin(), st.u.begin() + D));
    json out;
    out["sites"] = sites_j;
    out["tables"] = json::array({Nt.finish(), Om.finish(), Gt.finish(), Tt.finish(), Zt.finish(), Rt.finish(), Rc.finish()});
    out["scalars"] = {{"sR", sR}, {"volume_density", vol}, {"metricity_residual", metricity}};
    if (D == 4) {
        out["scalars"]["weyl_squared"] = w2;
        out["scalars"]["gauss_bonnet"] = gb;
    }
    const Integral V = integrate(Field::constant(1.0, D), geo);
    double intR = 0.0;
    for (const QuadNode& q : integration_nodes(chart, geo.backend)) {
        LocalMetric lm = local_metric(geo, q.site);
        PointGeometry pg(lm);
        intR += q.weight * volume_density(lm) * pg.curvature(k).sR;
    }
    out["integrals"] = {{"volume", V.value}, {"scalar_curvature", intR}};
    files["geometry.json"] = out.dump(2);
    return out;
}

json columns_json(const std::vector<std::string>& names, const std::vector<std::vector<double>>& cols) {
    json j = json::object();
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = cols[i];
    return j;
}

json flow_stage(const Scenario& s, std::map<std::string, std::string>& files) {
    Geometry geo = make_geometry(s, Backend::Symbolic);
    FlowConfig cfg = s.flow;
    cfg.connection = s.connection;
    FlowState s0 = make_flow_state(geo, cfg);
    const Field psi = make_field(s, s.functionals.psi, "functionals.psi");
    const double chi_f = s.functionals.chi.front();
    std::vector<std::vector<double>> extra;
    auto observer = [&](int, const FlowState& st) {
        FunctionalEvaluator ev(st.geo, cfg.connection, psi, false);
        const FunctionalReport r = ev.report(chi_f);
        extra.push_back({r.F_standard, r.W_standard});
    };
    Trajectory t = evolve(s0, cfg, observer);
    const std::vector<std::string> names{"F", "W"};
    files["flow.csv"] = trajectory_csv(t, names, extra);

    std::vector<std::vector<double>> cols(9);
    for (std::size_t i = 0; i < t.chi.size(); ++i) {
        const auto& d = t.diag[i];
        const double row[9] = {t.chi[i], d.volume, d.r, d.min_sR, d.max_sR, d.einstein_residual, d.mixed_residual,
                               extra[i][0], extra[i][1]};
        for (int c = 0; c < 9; ++c) cols[static_cast<std::size_t>(c)].push_back(row[c]);
    }
    json out;
    out["kappa"] = cfg.kappa_for(geo.dim());
    out["dchi"] = cfg.dchi;
    out["steps"] = cfg.steps;
    out["integrator"] = to_string(cfg.integrator);
    out["functional_chi"] = chi_f;
    out["columns"] = columns_json({"chi", "volume", "r", "min_sR", "max_sR", "einstein_residual", "mixed_residual", "F", "W"}, cols);
    out["metric_drift"] = metric_drift(t.final_state, s0);
    out["volume_drift"] = std::fabs(t.diag.back().volume - t.diag.front().volume) / std::fabs(t.diag.front().volume);
    double emax = 0.0;
    for (const auto& d : t.diag) emax = std::max(emax, d.einstein_residual);
    out["max_einstein_residual"] = emax;
    out["csv"] = "flow.csv";
    return out;
}

json functionals_stage(const Scenario& s, std::map<std::string, std::string>& files) {
    Geometry geo = make_geometry(s);
    const Field psi = make_field(s, s.functionals.psi, "functionals.psi");
    FunctionalEvaluator ev(geo, s.connection, psi);
    const std::vector<std::string> names{"chi", "f0", "F_spectral", "F_standard", "W_spectral", "W_standard",
                                         "energy_spectral", "energy_standard", "entropy_spectral", "entropy_standard",
                                         "fluctuation", "log_partition", "mu_mass"};
    std::vector<std::vector<double>> cols(names.size());
    for (double chi : s.functionals.chi) {
        const FunctionalReport r = ev.report(chi);
        const double row[] = {r.chi, r.f0, r.F_spectral, r.F_standard, r.W_spectral, r.W_standard, r.energy_spectral,
                              r.energy_standard, r.entropy_spectral, r.entropy_standard, r.fluctuation, r.log_partition,
                              r.mu_mass};
        for (std::size_t c = 0; c < names.size(); ++c) cols[c].push_back(row[c]);
    }
    json out;
    out["psi"] = s.functionals.psi;
    out["columns"] = columns_json(names, cols);
    out["mass_rel_change"] = ev.mass_rel_change();
    out["resolved"] = ev.resolved();
    bool distinct = false;
    for (double c : s.functionals.chi) distinct |= c != s.functionals.chi.front();
    if (s.functionals.thermo && distinct) {
        const auto rows = thermo_consistency(ev, s.functionals.chi);
        const std::vector<std::string> tn{"chi", "energy", "entropy", "log_partition", "chi2_dlogZ",
                                          "residual_energy", "residual_entropy", "d2logZ_dbeta2", "fluctuation"};
        std::vector<std::vector<double>> tc(tn.size());
        for (const auto& r : rows) {
            const double row[] = {r.chi, r.energy, r.entropy, r.log_partition, r.chi2_dlogZ, r.residual_energy,
                                  r.residual_entropy, r.d2logZ_dbeta2, r.fluctuation};
            for (std::size_t c = 0; c < tn.size(); ++c) tc[c].push_back(row[c]);
        }
        out["thermo"] = columns_json(tn, tc);
    }
    files["functionals.json"] = out.dump(2);
    return out;
}

json spectral_stage(const Scenario& s, const std::string& hash, std::map<std::string, std::string>& files) {
    const SpectralConfig& c = s.spectral;
    const TestingFunction tf(c.testing_function);
    const MomentTable mom = moments(tf, 0);
    mom.require_finite();
    Geometry geo = make_geometry(s);
    const int D = geo.dim();
    json out;
    out["testing_function"] = c.testing_function;
    out["moments"] = {{"f0", mom.f0}, {"f2", mom.f2}, {"f4", mom.f4()}, {"f0_check", mom.f0_check}, {"f2_check", mom.f2_check}};
    out["mode"] = to_string(c.mode);
    out["method"] = c.method == SpectralMethod::Analytic ? "analytic" : "lattice";

    SpectralSeries ss{hash, c.lambdas, {}};
    std::vector<double> tails;
    if (c.method == SpectralMethod::Analytic) {
        if (c.spectrum.factors.empty()) throw PreconditionError("analytic method needs spectral.spectrum factors");
        for (double L : c.lambdas) {
            const TraceResult r = spectral_trace(c.spectrum, tf, L);
            ss.values.push_back(r.value);
            tails.push_back(r.tail_bound);
        }
    } else {
        OperatorTerms terms;
        terms.phi = make_field(s, c.phi, "spectral.phi");
        terms.B = make_field(s, c.B, "spectral.B");
        for (std::size_t i = 0; i < c.A.size(); ++i) terms.A.push_back(make_field(s, c.A[i], "spectral.A"));
        std::vector<std::vector<int>> groups = c.lattice_factors;
        if (groups.empty()) groups.push_back({});
        std::vector<double> ev;
        double asym = 0.0;
        for (const auto& grp : groups) {
            const LatticeOperator op = assemble_operator(geo, terms, grp);
            asym = std::max(asym, op.asymmetry);
            const auto e = op.eigenvalues();
            ev = ev.empty() ? e : product_spectrum(ev, e);
        }
        out["lattice"] = {{"points", ev.size()}, {"asymmetry", asym}, {"lowest", std::vector<double>(ev.begin(), ev.begin() + std::min<std::size_t>(ev.size(), 16))}};
        for (double L : c.lambdas) {
            ss.values.push_back(spectral_trace(ev, tf, L).value);
            tails.push_back(0.0);
        }
    }
    out["tail_bounds"] = tails;
    std::vector<double> a2;
    for (double L : c.lambdas) a2.push_back(seeley_dewitt_a2(geo, s.connection, L, c.rank));
    out["a2"] = a2;

    std::vector<std::vector<double>> cols{c.lambdas, ss.values};
    std::vector<std::string> names{"Lambda", "spectral"};
    if (D == 4) {
        const Field phi = make_field(s, c.phi, "spectral.phi");
        GeometricSeries gs{hash, c.lambdas, {}, {}};
        for (double L : c.lambdas) {
            const HeatKernelEstimate h = heat_kernel_estimate(geo, s.connection, phi, mom, L, c.mode);
            gs.values.push_back(h.value);
            gs.coefficients = h.terms;
            out["integrals"] = {{"I0", h.I0}, {"I2", h.I2}, {"I4", h.I4}};
        }
        const Comparison cmp = spectral_vs_geometric(ss, gs);
        std::vector<double> geo_v, rel;
        for (const auto& r : cmp.rows) {
            geo_v.push_back(r.geometric);
            rel.push_back(r.rel_error);
        }
        cols.push_back(geo_v);
        cols.push_back(rel);
        names.push_back("geometric");
        names.push_back("rel-error");
        out["coefficients"] = {{"geometric", cmp.geometric}, {"fitted", cmp.fitted}, {"rel_error", cmp.coefficient_rel_error}};
        files["spectral.csv"] = comparison_csv(cmp);
    } else {
        std::ostringstream os;
        os << "Lambda,spectral\n";
        for (std::size_t i = 0; i < c.lambdas.size(); ++i) os << fmt(c.lambdas[i]) << "," << fmt(ss.values[i]) << "\n";
        files["spectral.csv"] = os.str();
    }
    out["columns"] = columns_json(names, cols);
    out["csv"] = "spectral.csv";
    return out;
}

std::string utc_timestamp() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e) || dynamic_cast<const ParseError*>(&e) ||
        dynamic_cast<const SymbolError*>(&e) || dynamic_cast<const ArityError*>(&e) || dynamic_cast<const ShapeError*>(&e))
        return 1;
    return 2;
}

std::string error_type_name(const std::exception& e) {
    if (dynamic_cast<const ValidationError*>(&e)) return "ValidationError";
    if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
    if (dynamic_cast<const SymbolError*>(&e)) return "SymbolError";
    if (dynamic_cast<const ArityError*>(&e)) return "ArityError";
    if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
    if (dynamic_cast<const DomainError*>(&e)) return "DomainError";
    if (dynamic_cast<const DegenerateMetricError*>(&e)) return "DegenerateMetricError";
    if (dynamic_cast<const SignatureError*>(&e)) return "SignatureError";
    if (dynamic_cast<const DimensionError*>(&e)) return "DimensionError";
    if (dynamic_cast<const PreconditionError*>(&e)) return "PreconditionError";
    if (dynamic_cast<const NumericalError*>(&e)) return "NumericalError";
    return "Error";
}

std::string RunReport::text() const { return doc.dump(2) + "\n"; }

std::string RunReport::canonical_text() const {
    json d = doc;
    d.erase("timing");
    d.erase("timestamp");
    return d.dump(2) + "\n";
}

RunReport run(const Scenario& s, std::vector<Stage> stages) {
    s.validate();
    std::sort(stages.begin(), stages.end());
    stages.erase(std::unique(stages.begin(), stages.end()), stages.end());
    RunReport r;
    const std::string hash = s.hash();
    r.doc["tool"] = kToolName;
    r.doc["version"] = kToolVersion;
    r.doc["scenario"] = s.name;
    r.doc["scenario_hash"] = hash;
    r.doc["conventions"] = {{"connection", to_string(s.connection)},
                            {"kappa", s.flow.kappa_for(s.n + s.m)},
                            {"beta", "1/chi"},
                            {"lambda_mode", to_string(s.spectral.mode)},
                            {"curvature_sign", "sphere-positive"},
                            {"indices", "1-based; h 1..n, v n+1..n+m; Gamma^c_ab = (D_{e_b} e_a)^c"}};
    json requested = json::array();
    for (Stage st : stages) requested.push_back(to_string(st));
    r.doc["stages"] = requested;
    r.doc["outputs"] = json::object();
    r.doc["timing"] = json::object();
    r.doc["timestamp"] = utc_timestamp();
    for (Stage st : stages) {
        const auto t0 = std::chrono::steady_clock::now();
        try {
            json out;
            switch (st) {
                case Stage::Geometry: out = geometry_stage(s, r.files); break;
                case Stage::Flow: out = flow_stage(s, r.files); break;
                case Stage::Functionals: out = functionals_stage(s, r.files); break;
                case Stage::Spectral: out = spectral_stage(s, hash, r.files); break;
            }
            r.doc["outputs"][to_string(st)] = out;
        } catch (const std::exception& e) {
            r.failed_stage = to_string(st);
            r.error_type = error_type_name(e);
            r.error_message = e.what();
            r.exit_code = exit_code_for(e);
            r.doc["error"] = {{"stage", r.failed_stage}, {"type", r.error_type}, {"message", r.error_message}};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        r.doc["timing"][to_string(st)] = secs;
        if (!r.ok()) break;
    }
    r.files["report.json"] = r.text();
    return r;
}

void write_outputs(const RunReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : r.files) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw Error("cannot write " + (dir / name).string());
        out << text;
    }
}

std::string emit_plot_data(const json& report, const std::string& quantity) {
    static const std::vector<std::pair<std::string, std::string>> order{
        {"flow", "chi"}, {"functionals", "chi"}, {"spectral", "Lambda"}};
    std::string stage, name = quantity;
    if (const auto dot = quantity.find('.'); dot != std::string::npos) {
        stage = quantity.substr(0, dot);
        name = quantity.substr(dot + 1);
    }
    if (!report.contains("outputs")) throw ValidationError("quantity", "report has no outputs");
    const json& outs = report.at("outputs");
    auto lookup = [&](const json& cols, const std::string& key) -> const json* {
        if (cols.contains(key)) return &cols.at(key);
        // plain names resolve to the spectral form of a functional
        if (cols.contains(key + "_spectral")) return &cols.at(key + "_spectral");
        return nullptr;
    };
    for (const auto& [st, absc] : order) {
        if (!stage.empty() && stage != st) continue;
        if (!outs.contains(st) || !outs.at(st).contains("columns")) continue;
        const json& cols = outs.at(st).at("columns");
        const json* y = lookup(cols, name);
        if (!y || name == absc) continue;
        const json& x = cols.at(absc);
        std::string out = absc + "," + name + "\n";
        for (std::size_t i = 0; i < x.size(); ++i) out += fmt(x[i].get<double>()) + "," + fmt((*y)[i].get<double>()) + "\n";
        return out;
    }
    throw ValidationError("quantity", "unknown or uncomputed quantity '" + quantity + "'");
}

}  // namespace nhrf
