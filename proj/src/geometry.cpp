#include "nhrf/geometry.hpp"

#include <cmath>

#include "nhrf/errors.hpp"

namespace nhrf {

SymFieldMatrix::SymFieldMatrix(int size, int dim)
    : size_(size), data_(static_cast<std::size_t>(size * (size + 1) / 2), Field::constant(0.0, dim)) {}

std::size_t SymFieldMatrix::index(int i, int j) const {
    if (i < 0 || j < 0 || i >= size_ || j >= size_) throw ShapeError("symmetric matrix index out of range");
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i * size_ - i * (i - 1) / 2 + (j - i));
}

NConnection::NConnection(int n, int m, int dim)
    : n_(n), m_(m), N_(static_cast<std::size_t>(n * m), Field::constant(0.0, dim)) {}

bool NConnection::is_zero() const {
    for (const auto& f : N_)
        if (!f.is_zero()) return false;
    return true;
}

OffDiagonalMetric assemble_offdiagonal(const DMetric& g, const NConnection& N) {
    const int n = g.n(), m = g.m();
    if (N.n() != n || N.m() != m) throw ShapeError("N-connection shape does not match the d-metric");
    const int D = n + m;
    const int dim = g.g(0, 0).dim();
    OffDiagonalMetric out;
    out.n = n;
    out.m = m;
    out.G = SymFieldMatrix(D, dim);
    // N_i^b h_ba
    std::vector<Field> Nh(static_cast<std::size_t>(n * m), Field::constant(0.0, dim));
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) {
            Field acc = Field::constant(0.0, dim);
            for (int b = 0; b < m; ++b) acc = acc + N(i, b) * g.h(b, a);
            Nh[static_cast<std::size_t>(i * m + a)] = acc;
        }
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Field acc = g.g(i, j);
            for (int a = 0; a < m; ++a) acc = acc + Nh[static_cast<std::size_t>(i * m + a)] * N(j, a);
            out.G.set(i, j, acc);
        }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) out.G.set(i, n + a, Nh[static_cast<std::size_t>(i * m + a)]);
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) out.G.set(n + a, n + b, g.h(a, b));
    return out;
}

double small_det(std::vector<double> a, int n) {
    double det = 1.0;
    for (int c = 0; c < n; ++c) {
        int p = c;
        for (int r = c + 1; r < n; ++r)
            if (std::fabs(a[static_cast<std::size_t>(r * n + c)]) > std::fabs(a[static_cast<std::size_t>(p * n + c)])) p = r;
        if (a[static_cast<std::size_t>(p * n + c)] == 0.0) return 0.0;
        if (p != c) {
            for (int k = 0; k < n; ++k) std::swap(a[static_cast<std::size_t>(p * n + k)], a[static_cast<std::size_t>(c * n + k)]);
            det = -det;
        }
        const double piv = a[static_cast<std::size_t>(c * n + c)];
        det *= piv;
        for (int r = c + 1; r < n; ++r) {
            const double f = a[static_cast<std::size_t>(r * n + c)] / piv;
            for (int k = c; k < n; ++k) a[static_cast<std::size_t>(r * n + k)] -= f * a[static_cast<std::size_t>(c * n + k)];
        }
    }
    return det;
}

namespace {

double block_det(const SymFieldMatrix& M, const Site& s) {
    const int k = M.size();
    std::vector<double> a(static_cast<std::size_t>(k * k));
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) a[static_cast<std::size_t>(i * k + j)] = M(i, j).value(s);
    return small_det(a, k);
}

// Cofactor expansion over fields (blocks are small).
Field field_det(const SymFieldMatrix& M, std::vector<int> rows, std::vector<int> cols) {
    const int k = static_cast<int>(rows.size());
    const int dim = M(0, 0).dim();
    if (k == 1) return M(rows[0], cols[0]);
    Field acc = Field::constant(0.0, dim);
    for (int c = 0; c < k; ++c) {
        if (M(rows[0], cols[static_cast<std::size_t>(c)]).is_zero()) continue;
        std::vector<int> r2(rows.begin() + 1, rows.end());
        std::vector<int> c2;
        for (int q = 0; q < k; ++q)
            if (q != c) c2.push_back(cols[static_cast<std::size_t>(q)]);
        Field term = M(rows[0], cols[static_cast<std::size_t>(c)]) * field_det(M, r2, c2);
        acc = (c % 2 == 0) ? acc + term : acc - term;
    }
    return acc;
}

Field field_det(const SymFieldMatrix& M) {
    std::vector<int> idx(static_cast<std::size_t>(M.size()));
    for (int i = 0; i < M.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    return field_det(M, idx, idx);
}

Field field_sqrt(const Field& f) {
    if (f.is_symbolic()) return Field::symbolic(sqrt(f.expr()), f.env());
    ChartPtr c = f.chart();
    std::vector<double> v = f.node_values(*c);
    for (double& x : v) x = std::sqrt(x);
    return Field::grid(c, std::move(v));
}

}  // namespace

DMetric split_dmetric(const OffDiagonalMetric& G, const NConnection& N, const std::vector<Site>& sites) {
    const int n = G.n, m = G.m;
    if (N.n() != n || N.m() != m) throw ShapeError("N-connection shape does not match the metric");
    const int dim = G.G(0, 0).dim();
    DMetric out;
    out.g = SymFieldMatrix(n, dim);
    out.h = SymFieldMatrix(m, dim);
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) out.h.set(a, b, G.G(n + a, n + b));
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Field acc = G.G(i, j);
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) {
                    if (N(i, a).is_zero() || N(j, b).is_zero()) continue;
                    acc = acc - N(i, a) * N(j, b) * out.h(a, b);
                }
            out.g.set(i, j, acc);
        }
    for (const Site& s : sites) {
        if (std::fabs(block_det(out.h, s)) <= 1e-12) throw DegenerateMetricError("degenerate v-block recovered by split");
        if (std::fabs(block_det(out.g, s)) <= 1e-12) throw DegenerateMetricError("degenerate h-block recovered by split");
    }
    return out;
}

Field frame_apply(const NConnection& N, const Field& f, int alpha) {
    const int n = N.n(), m = N.m();
    if (alpha < 0 || alpha >= n + m) throw ShapeError("frame index out of range");
    if (alpha >= n) return f.partial(alpha);
    Field acc = f.partial(alpha);
    for (int a = 0; a < m; ++a) {
        if (N(alpha, a).is_zero()) continue;
        acc = acc - N(alpha, a) * f.partial(n + a);
    }
    return acc;
}

AnholonomyData anholonomy(const NConnection& N) {
    const int n = N.n(), m = N.m();
    AnholonomyData out(n, m);
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) out.set_W(i, a, b, N(i, b).partial(n + a));
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int a = 0; a < m; ++a) {
                Field om = N(i, a).partial(j) - N(j, a).partial(i);
                for (int b = 0; b < m; ++b) {
                    if (!N(i, b).is_zero()) om = om + N(i, b) * N(j, a).partial(n + b);
                    if (!N(j, b).is_zero()) om = om - N(j, b) * N(i, a).partial(n + b);
                }
                out.set_Omega(i, j, a, om);
                out.set_Omega(j, i, a, -om);
            }
    return out;
}

Field volume_element(const DMetric& g, const std::vector<Site>& sites) {
    for (const Site& s : sites) {
        if (block_det(g.g, s) < 0.0) throw SignatureError("negative determinant of the h-block");
        if (block_det(g.h, s) < 0.0) throw SignatureError("negative determinant of the v-block");
    }
    return field_sqrt(field_det(g.g)) * field_sqrt(field_det(g.h));
}

std::vector<Site> check_sites(const Geometry& geo) {
    std::vector<Site> out;
    for (const auto& q : geo.chart->quadrature(geo.backend)) out.push_back(q.site);
    return out;
}

namespace {

double sum_sites(const Chart& c, Backend b, int refine, const std::function<double(const Site&)>& f) {
    double acc = 0.0;
    for (const auto& q : c.quadrature(b, refine)) acc += q.weight * f(q.site);
    return acc;
}

double polar_value(const Chart& c, Backend b, int refine, bool extrapolate, const std::function<double(const Site&)>& f) {
    double a1 = sum_sites(c, b, refine, f);
    if (!extrapolate || b != Backend::Symbolic || !c.has_polar_axis()) return a1;
    double a2 = sum_sites(c.with_band_scale(0.5), b, refine, f);
    // band error is O(theta0^2)
    return (4.0 * a2 - a1) / 3.0;
}

}  // namespace

std::vector<QuadNode> integration_nodes(const Chart& chart, Backend b, bool extrapolate_poles, int refine) {
    std::vector<QuadNode> a = chart.quadrature(b, refine);
    if (!extrapolate_poles || b != Backend::Symbolic || !chart.has_polar_axis()) return a;
    std::vector<QuadNode> h = chart.with_band_scale(0.5).quadrature(b, refine);
    for (auto& q : a) q.weight *= -1.0 / 3.0;
    for (auto& q : h) q.weight *= 4.0 / 3.0;
    a.insert(a.end(), h.begin(), h.end());
    return a;
}

Integral integrate_sites(const Chart& chart, Backend b, const std::function<double(const Site&)>& f,
                         const IntegrateOptions& opt) {
    Integral out;
    out.value = polar_value(chart, b, 1, opt.extrapolate_poles, f);
    if (opt.check_resolution && b == Backend::Symbolic) {
        double fine = polar_value(chart, b, 2, opt.extrapolate_poles, f);
        out.checked = true;
        out.rel_change = std::fabs(fine - out.value) / std::max(std::fabs(fine), 1e-300);
        if (fine == out.value) out.rel_change = 0.0;
        out.resolved = out.rel_change <= opt.tolerance;
    }
    return out;
}

Integral integrate(const Field& f, const Geometry& geo, const IntegrateOptions& opt) {
    Field vol = volume_element(geo.metric, {});
    return integrate_sites(*geo.chart, geo.backend, [&](const Site& s) {
        double v = vol.value(s);
        if (!(v >= 0.0)) throw SignatureError("negative volume element");
        return f.value(s) * v;
    }, opt);
}

}  // namespace nhrf
