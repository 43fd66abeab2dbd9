#include "nhrf/flow.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "nhrf/errors.hpp"

namespace nhrf {

std::string to_string(Integrator i) { return i == Integrator::Euler ? "euler" : "rk4"; }

Integrator integrator_from_string(const std::string& s) {
    if (s == "euler") return Integrator::Euler;
    if (s == "rk4") return Integrator::RK4;
    throw ValidationError("flow.integrator", "unknown integrator '" + s + "' (euler | rk4)");
}

namespace {

struct Slot {
    bool vblock;
    int a, b;
};

std::vector<Slot> slots(int n, int m) {
    std::vector<Slot> out;
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) out.push_back({false, i, j});
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) out.push_back({true, a, b});
    return out;
}

const Field& component(const Geometry& geo, const Slot& s) {
    return s.vblock ? geo.metric.h(s.a, s.b) : geo.metric.g(s.a, s.b);
}

// Multipliers, seeds and seed values of every metric component.
struct Packed {
    std::vector<std::vector<double>> c;
    std::vector<std::optional<Field>> seed;
    std::vector<std::vector<double>> seedval;
};

Packed pack(const Geometry& geo) {
    Packed p;
    const Chart& chart = *geo.chart;
    for (const Slot& s : slots(geo.n(), geo.m())) {
        const Field& f = component(geo, s);
        p.c.push_back(f.multiplier());
        p.seed.push_back(f.seed());
        std::vector<double> sv(chart.node_count(), 1.0);
        if (f.seed()) {
            for (std::size_t i = 0; i < sv.size(); ++i) {
                Site site = chart.node_site(i);
                site.node = -1;
                sv[i] = f.seed()->value(site);
            }
        }
        p.seedval.push_back(std::move(sv));
    }
    return p;
}

Geometry unpack(const Geometry& tmpl, const Packed& p, const std::vector<std::vector<double>>& c) {
    Geometry g = tmpl;
    const auto sl = slots(tmpl.n(), tmpl.m());
    for (std::size_t k = 0; k < sl.size(); ++k) {
        Field f = Field::grid(tmpl.chart, c[k], p.seed[k]);
        if (sl[k].vblock) g.metric.h.set(sl[k].a, sl[k].b, f);
        else g.metric.g.set(sl[k].a, sl[k].b, f);
    }
    return g;
}

// Cholesky on a small symmetric matrix; returns the smallest pivot.
double min_pivot(std::vector<double> a, int k) {
    double mn = INFINITY;
    for (int j = 0; j < k; ++j) {
        double d = a[static_cast<std::size_t>(j * k + j)];
        for (int l = 0; l < j; ++l) d -= a[static_cast<std::size_t>(j * k + l)] * a[static_cast<std::size_t>(j * k + l)];
        mn = std::min(mn, d);
        if (!(d > 0.0)) return d;
        const double L = std::sqrt(d);
        a[static_cast<std::size_t>(j * k + j)] = L;
        for (int i = j + 1; i < k; ++i) {
            double s = a[static_cast<std::size_t>(i * k + j)];
            for (int l = 0; l < j; ++l) s -= a[static_cast<std::size_t>(i * k + l)] * a[static_cast<std::size_t>(j * k + l)];
            a[static_cast<std::size_t>(i * k + j)] = s / L;
        }
    }
    return mn;
}

void check_positive(const Geometry& geo, const Packed& p, const std::vector<std::vector<double>>& c, double tol) {
    const Chart& chart = *geo.chart;
    const int n = geo.n(), m = geo.m();
    const auto sl = slots(n, m);
    std::vector<double> g(static_cast<std::size_t>(n * n)), h(static_cast<std::size_t>(m * m));
    for (std::size_t node = 0; node < chart.node_count(); ++node) {
        for (std::size_t k = 0; k < sl.size(); ++k) {
            const double v = c[k][node] * p.seedval[k][node];
            if (!std::isfinite(v)) throw NumericalError("non-finite metric component at grid node " + std::to_string(node));
            auto& M = sl[k].vblock ? h : g;
            const int dim = sl[k].vblock ? m : n;
            M[static_cast<std::size_t>(sl[k].a * dim + sl[k].b)] = v;
            M[static_cast<std::size_t>(sl[k].b * dim + sl[k].a)] = v;
        }
        if (min_pivot(g, n) <= tol || min_pivot(h, m) <= tol) {
            Site s = chart.node_site(node);
            std::ostringstream os;
            os << "positivity lost at grid node " << node << " (u =";
            for (int d = 0; d < chart.dim(); ++d) os << ' ' << s.u[static_cast<std::size_t>(d)];
            os << ')';
            throw NumericalError(os.str());
        }
    }
}

struct NodeCurvature {
    std::vector<double> nu, sR;
    std::vector<Arr2<double>> Ric;
    std::vector<Arr2<double>> G;
};

NodeCurvature node_curvature(const Geometry& geo, ConnectionKind k) {
    const Chart& chart = *geo.chart;
    NodeCurvature out;
    const std::size_t N = chart.node_count();
    out.nu.resize(N);
    out.sR.resize(N);
    out.Ric.resize(N);
    out.G.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        LocalMetric lm = local_metric(geo, chart.node_site(i));
        PointGeometry pg(lm);
        const Curvature& c = pg.curvature(k);
        out.nu[i] = volume_density(lm);
        out.sR[i] = c.sR;
        out.Ric[i] = c.Ric;
        for (int a = 0; a < pg.dim(); ++a)
            for (int b = 0; b < pg.dim(); ++b) out.G[i][a][b] = pg.G(a, b);
        if (!std::isfinite(c.sR)) throw NumericalError("non-finite curvature at grid node " + std::to_string(i));
    }
    return out;
}

double average_r(const Chart& chart, const NodeCurvature& nc, double* volume) {
    const auto q = chart.quadrature(Backend::Grid);
    double V = 0.0, S = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        V += q[i].weight * nc.nu[i];
        S += q[i].weight * nc.nu[i] * nc.sR[i];
    }
    if (volume) *volume = V;
    return S / V;
}

}  // namespace

FlowDiagnostics diagnose(const Geometry& geo, ConnectionKind k) {
    NodeCurvature nc = node_curvature(geo, k);
    FlowDiagnostics d;
    d.r = average_r(*geo.chart, nc, &d.volume);
    d.min_sR = *std::min_element(nc.sR.begin(), nc.sR.end());
    d.max_sR = *std::max_element(nc.sR.begin(), nc.sR.end());
    const int n = geo.n(), D = geo.dim();
    for (std::size_t i = 0; i < nc.sR.size(); ++i)
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) {
                const double e = std::fabs(nc.Ric[i][a][b] - nc.sR[i] / D * nc.G[i][a][b]);
                d.einstein_residual = std::max(d.einstein_residual, e);
                if ((a < n) != (b < n)) d.mixed_residual = std::max(d.mixed_residual, std::fabs(nc.Ric[i][a][b]));
            }
    return d;
}

namespace {

void check_config(const FlowConfig& cfg) {
    if (!(cfg.dchi > 0.0)) throw PreconditionError("flow step size must be positive");
    if (cfg.kappa && *cfg.kappa < 0.0) throw PreconditionError("flow normalization kappa must be nonnegative");
}

}  // namespace

FlowState make_flow_state(const Geometry& geo, const FlowConfig& cfg) {
    check_config(cfg);
    FlowState s;
    s.geo = geo;
    s.geo.backend = Backend::Grid;
    ChartPtr chart = geo.chart;
    auto to_grid = [&](const Field& f) {
        if (f.is_grid()) return f.to_grid(chart, true);
        if (f.is_zero()) return Field::grid(chart, std::vector<double>(chart->node_count(), 0.0));
        return f.to_grid(chart, true);
    };
    for (int i = 0; i < geo.n(); ++i)
        for (int j = i; j < geo.n(); ++j) s.geo.metric.g.set(i, j, to_grid(geo.metric.g(i, j)));
    for (int a = 0; a < geo.m(); ++a)
        for (int b = a; b < geo.m(); ++b) s.geo.metric.h.set(a, b, to_grid(geo.metric.h(a, b)));
    s.diag = diagnose(s.geo, cfg.connection);
    return s;
}

MetricRate flow_rhs(const FlowState& s, const FlowConfig& cfg) {
    const Geometry& geo = s.geo;
    NodeCurvature nc = node_curvature(geo, cfg.connection);
    MetricRate out;
    out.r = average_r(*geo.chart, nc, nullptr);
    const double kr = cfg.kappa_for(geo.dim()) * out.r;
    const int n = geo.n();
    const std::size_t N = nc.sR.size();
    for (const Slot& sl : slots(n, geo.m())) {
        const int a = sl.vblock ? n + sl.a : sl.a;
        const int b = sl.vblock ? n + sl.b : sl.b;
        std::vector<double> rate(N);
        for (std::size_t i = 0; i < N; ++i)
            rate[i] = -(nc.Ric[i][a][b] + nc.Ric[i][b][a]) + kr * nc.G[i][a][b];
        (sl.vblock ? out.h : out.g).push_back(std::move(rate));
    }
    return out;
}

namespace {

std::vector<std::vector<double>> multiplier_rate(const FlowState& s, const FlowConfig& cfg, const Packed& p) {
    MetricRate r = flow_rhs(s, cfg);
    std::vector<std::vector<double>> out = r.g;
    out.insert(out.end(), r.h.begin(), r.h.end());
    for (std::size_t k = 0; k < out.size(); ++k)
        for (std::size_t i = 0; i < out[k].size(); ++i) {
            const double sv = p.seedval[k][i];
            if (sv == 0.0) {
                if (out[k][i] != 0.0) throw NumericalError("flow rate nonzero where a seeded component vanishes");
                continue;
            }
            out[k][i] /= sv;
        }
    return out;
}

std::vector<std::vector<double>> axpy(const std::vector<std::vector<double>>& y, double a,
                                      const std::vector<std::vector<double>>& k) {
    auto out = y;
    for (std::size_t c = 0; c < out.size(); ++c)
        for (std::size_t i = 0; i < out[c].size(); ++i) out[c][i] += a * k[c][i];
    return out;
}

}  // namespace

FlowState step(const FlowState& s, const FlowConfig& cfg) {
    check_config(cfg);
    const Packed p = pack(s.geo);
    const double dt = cfg.dchi;
    std::vector<std::vector<double>> next;
    if (cfg.integrator == Integrator::Euler) {
        next = axpy(p.c, dt, multiplier_rate(s, cfg, p));
    } else {
        auto stage = [&](const std::vector<std::vector<double>>& c) {
            FlowState t;
            t.geo = unpack(s.geo, p, c);
            return multiplier_rate(t, cfg, p);
        };
        auto k1 = multiplier_rate(s, cfg, p);
        auto k2 = stage(axpy(p.c, dt / 2, k1));
        auto k3 = stage(axpy(p.c, dt / 2, k2));
        auto k4 = stage(axpy(p.c, dt, k3));
        next = p.c;
        for (std::size_t c = 0; c < next.size(); ++c)
            for (std::size_t i = 0; i < next[c].size(); ++i)
                next[c][i] += dt / 6.0 * (k1[c][i] + 2.0 * k2[c][i] + 2.0 * k3[c][i] + k4[c][i]);
    }
    check_positive(s.geo, p, next, cfg.positivity_tolerance);
    FlowState out;
    out.chi = s.chi + dt;
    out.geo = unpack(s.geo, p, next);
    out.diag = diagnose(out.geo, cfg.connection);
    return out;
}

Trajectory evolve(const FlowState& s0, const FlowConfig& cfg, const FlowObserver& observer, bool keep_states) {
    if (cfg.steps < 0) throw PreconditionError("negative step count");
    Trajectory t;
    FlowState cur = s0;
    auto record = [&](int k) {
        t.chi.push_back(cur.chi);
        t.diag.push_back(cur.diag);
        if (keep_states) t.states.push_back(cur);
        if (observer) observer(k, cur);
    };
    record(0);
    for (int k = 1; k <= cfg.steps; ++k) {
        try {
            cur = step(cur, cfg);
        } catch (const NumericalError& e) {
            throw NumericalError("flow step " + std::to_string(k) + ": " + e.what());
        }
        record(k);
    }
    t.final_state = cur;
    return t;
}

double metric_value(const FlowState& s, int alpha, int beta, std::size_t node) {
    const int n = s.geo.n();
    Site site = s.geo.chart->node_site(node);
    if (alpha < n && beta < n) return s.geo.metric.g(alpha, beta).value(site);
    if (alpha >= n && beta >= n) return s.geo.metric.h(alpha - n, beta - n).value(site);
    return 0.0;
}

double metric_drift(const FlowState& a, const FlowState& b) {
    if (!a.geo.chart->same_grid(*b.geo.chart)) throw ShapeError("flow states live on different grids");
    const int D = a.geo.dim();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.geo.chart->node_count(); ++i) {
        double num = 0.0, den = 0.0;
        for (int x = 0; x < D; ++x)
            for (int y = 0; y < D; ++y) {
                const double vb = metric_value(b, x, y, i);
                const double d = metric_value(a, x, y, i) - vb;
                num += d * d;
                den += vb * vb;
            }
        worst = std::max(worst, std::sqrt(num / den));
    }
    return worst;
}

std::string trajectory_csv(const Trajectory& t, const std::vector<std::string>& extra_names,
                           const std::vector<std::vector<double>>& extra_rows) {
    std::ostringstream os;
    os << "chi,volume,r,min_sR,max_sR,einstein_residual,mixed_residual";
    for (const auto& n : extra_names) os << ',' << n;
    os << '\n';
    char buf[64];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (std::size_t k = 0; k < t.chi.size(); ++k) {
        const auto& d = t.diag[k];
        std::vector<double> row = {t.chi[k], d.volume, d.r, d.min_sR, d.max_sR, d.einstein_residual, d.mixed_residual};
        if (k < extra_rows.size()) row.insert(row.end(), extra_rows[k].begin(), extra_rows[k].end());
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c) os << ',';
            put(row[c]);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace nhrf
