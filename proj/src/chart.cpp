#include "nhrf/chart.hpp"

#include <cmath>
#include <numbers>

#include "nhrf/errors.hpp"

namespace nhrf {

void gauss_legendre(int q, double a, double b, std::vector<double>& x, std::vector<double>& w) {
    x.assign(static_cast<std::size_t>(q), 0.0);
    w.assign(static_cast<std::size_t>(q), 0.0);
    for (int i = 0; i < q; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (q + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= q; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = q * (z * p1 - p0) / (z * z - 1.0);
            double dz = p1 / dp;
            z -= dz;
            if (std::fabs(dz) < 1e-16) break;
        }
        {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= q; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = q * (z * p1 - p0) / (z * z - 1.0);
        }
        // ascending order
        auto idx = static_cast<std::size_t>(q - 1 - i);
        x[idx] = 0.5 * (a + b) + 0.5 * (b - a) * z;
        w[idx] = (b - a) / ((1.0 - z * z) * dp * dp);
    }
}

std::vector<double> fourier_diff_matrix(int N, double length) {
    std::vector<double> D(static_cast<std::size_t>(N * N), 0.0);
    const double h = 2.0 * std::numbers::pi / N;
    const double scale = 2.0 * std::numbers::pi / length;
    for (int j = 0; j < N; ++j)
        for (int k = 0; k < N; ++k) {
            if (j == k) continue;
            int s = j - k;
            double sign = (s % 2 == 0) ? 1.0 : -1.0;
            double t = 0.5 * s * h;
            double v = (N % 2 == 0) ? 0.5 * sign / std::tan(t) : 0.5 * sign / std::sin(t);
            D[static_cast<std::size_t>(j * N + k)] = scale * v;
        }
    return D;
}

std::vector<double> fd4_diff_matrix(int N, double h) {
    if (N < 5) throw ShapeError("order-4 differences need at least 5 nodes on a bounded axis");
    std::vector<double> D(static_cast<std::size_t>(N * N), 0.0);
    auto set = [&](int row, int col, double v) { D[static_cast<std::size_t>(row * N + col)] = v / (12.0 * h); };
    const double r0[5] = {-25, 48, -36, 16, -3};
    const double r1[5] = {-3, -10, 18, -6, 1};
    for (int c = 0; c < 5; ++c) {
        set(0, c, r0[c]);
        set(1, c, r1[c]);
        set(N - 1, N - 1 - c, -r0[c]);
        set(N - 2, N - 1 - c, -r1[c]);
    }
    for (int j = 2; j < N - 2; ++j) {
        set(j, j - 2, 1);
        set(j, j - 1, -8);
        set(j, j + 1, 8);
        set(j, j + 2, -1);
    }
    return D;
}

namespace {

std::vector<double> gregory_weights(int N, double h) {
    std::vector<double> w(static_cast<std::size_t>(N), h);
    if (N >= 8) {
        const double c[3] = {3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0};
        for (int k = 0; k < 3; ++k) {
            w[static_cast<std::size_t>(k)] = c[k] * h;
            w[static_cast<std::size_t>(N - 1 - k)] = c[k] * h;
        }
    } else {
        w.front() = w.back() = 0.5 * h;
    }
    return w;
}

}  // namespace

Chart::Chart(int n, int m, std::vector<Axis> axes) : n_(n), m_(m), axes_(std::move(axes)) {
    if (n < 2) throw ValidationError("chart.n", "n must be >= 2");
    if (m < 1) throw ValidationError("chart.m", "m must be >= 1");
    if (n + m > kMaxDim) throw ValidationError("chart", "n + m exceeds the supported dimension " + std::to_string(kMaxDim));
    if (static_cast<int>(axes_.size()) != n + m) throw ValidationError("chart.axes", "expected n + m axes");
    const int D = n + m;
    nodes_.resize(static_cast<std::size_t>(D));
    grid_weights_.resize(static_cast<std::size_t>(D));
    diff_.resize(static_cast<std::size_t>(D));
    strides_.assign(static_cast<std::size_t>(D), 1);
    for (int k = 0; k < D; ++k) {
        Axis& a = axes_[static_cast<std::size_t>(k)];
        if (a.polar) {
            if (!(a.theta0 > 0.0 && a.theta0 < std::numbers::pi / 2))
                throw ValidationError("chart.axes[" + std::to_string(k) + "].theta0", "must lie in (0, pi/2)");
            a.periodic = false;
        }
        const double lo = lower(k), hi = upper(k);
        if (!(hi > lo)) throw ValidationError("chart.axes[" + std::to_string(k) + "]", "upper must exceed lower");
        if (a.samples < 4) throw ValidationError("chart.axes[" + std::to_string(k) + "].samples", "need at least 4 samples");
        if (a.quad_order < 8) throw ValidationError("chart.axes[" + std::to_string(k) + "].quad_order", "need at least 8 nodes");
        const int N = a.samples;
        auto& x = nodes_[static_cast<std::size_t>(k)];
        x.resize(static_cast<std::size_t>(N));
        if (a.periodic) {
            const double h = (hi - lo) / N;
            for (int i = 0; i < N; ++i) x[static_cast<std::size_t>(i)] = lo + i * h;
            grid_weights_[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(N), h);
            diff_[static_cast<std::size_t>(k)] = fourier_diff_matrix(N, hi - lo);
        } else {
            if (N < 5) throw ValidationError("chart.axes[" + std::to_string(k) + "].samples", "bounded axes need at least 5 samples");
            const double h = (hi - lo) / (N - 1);
            for (int i = 0; i < N; ++i) x[static_cast<std::size_t>(i)] = lo + i * h;
            x.back() = hi;
            grid_weights_[static_cast<std::size_t>(k)] = gregory_weights(N, h);
            diff_[static_cast<std::size_t>(k)] = fd4_diff_matrix(N, h);
        }
    }
    // last axis fastest
    std::size_t s = 1;
    for (int k = D - 1; k >= 0; --k) {
        strides_[static_cast<std::size_t>(k)] = s;
        s *= static_cast<std::size_t>(axes_[static_cast<std::size_t>(k)].samples);
    }
    node_count_ = s;
}

double Chart::lower(int k) const {
    const Axis& a = axis(k);
    return a.polar ? a.theta0 : a.lower;
}

double Chart::upper(int k) const {
    const Axis& a = axis(k);
    return a.polar ? std::numbers::pi - a.theta0 : a.upper;
}

std::string Chart::coordinate_name(int k) const {
    return k < n_ ? "x" + std::to_string(k + 1) : "y" + std::to_string(k + 1);
}

SymbolTable Chart::symbols(const std::vector<std::string>& parameters) const {
    SymbolTable t;
    for (int k = 0; k < dim(); ++k) t.add_variable(coordinate_name(k));
    for (int k = 0; k < dim(); ++k) {
        const std::string& alias = axis(k).name;
        if (!alias.empty() && alias != coordinate_name(k)) t.add_variable_alias(alias, k);
    }
    t.add_parameter("pi");
    for (const auto& p : parameters) t.add_parameter(p);
    return t;
}

std::array<int, kMaxDim> Chart::multi_index(std::size_t node) const {
    std::array<int, kMaxDim> idx{};
    for (int k = 0; k < dim(); ++k) {
        idx[static_cast<std::size_t>(k)] = static_cast<int>(node / strides_[static_cast<std::size_t>(k)]);
        node %= strides_[static_cast<std::size_t>(k)];
    }
    return idx;
}

Site Chart::node_site(std::size_t node) const {
    Site s;
    s.node = static_cast<std::ptrdiff_t>(node);
    auto idx = multi_index(node);
    for (int k = 0; k < dim(); ++k)
        s.u[static_cast<std::size_t>(k)] = nodes_[static_cast<std::size_t>(k)][static_cast<std::size_t>(idx[static_cast<std::size_t>(k)])];
    return s;
}

std::vector<double> Chart::differentiate(const std::vector<double>& f, int k) const {
    if (f.size() != node_count_) throw ShapeError("sample array does not match chart grid");
    const auto N = static_cast<std::size_t>(axis(k).samples);
    const std::size_t st = strides_[static_cast<std::size_t>(k)];
    const auto& D = diff_[static_cast<std::size_t>(k)];
    std::vector<double> out(f.size(), 0.0);
    std::vector<double> line(N);
    const std::size_t block = st * N;
    for (std::size_t outer = 0; outer < node_count_; outer += block)
        for (std::size_t inner = 0; inner < st; ++inner) {
            const std::size_t base = outer + inner;
            bool constant = true;
            for (std::size_t i = 0; i < N; ++i) {
                line[i] = f[base + i * st];
                if (line[i] != line[0]) constant = false;
            }
            if (constant) continue;
            for (std::size_t i = 0; i < N; ++i) {
                double acc = 0.0;
                const double* row = &D[i * N];
                for (std::size_t j = 0; j < N; ++j) acc += row[j] * line[j];
                out[base + i * st] = acc;
            }
        }
    return out;
}

std::vector<QuadNode> Chart::quadrature(Backend b, int refine) const {
    const int D = dim();
    std::vector<std::vector<double>> xs(static_cast<std::size_t>(D)), ws(static_cast<std::size_t>(D));
    for (int k = 0; k < D; ++k) {
        const Axis& a = axis(k);
        auto& x = xs[static_cast<std::size_t>(k)];
        auto& w = ws[static_cast<std::size_t>(k)];
        if (b == Backend::Grid) {
            if (refine != 1) throw PreconditionError("grid quadrature cannot be refined");
            x = nodes_[static_cast<std::size_t>(k)];
            w = grid_weights_[static_cast<std::size_t>(k)];
        } else if (a.periodic) {
            const int N = a.samples * refine;
            const double h = (upper(k) - lower(k)) / N;
            x.resize(static_cast<std::size_t>(N));
            w.assign(static_cast<std::size_t>(N), h);
            for (int i = 0; i < N; ++i) x[static_cast<std::size_t>(i)] = lower(k) + i * h;
        } else {
            gauss_legendre(a.quad_order * refine, lower(k), upper(k), x, w);
        }
    }
    std::size_t total = 1;
    for (const auto& x : xs) total *= x.size();
    std::vector<QuadNode> out(total);
    std::array<std::size_t, kMaxDim> idx{};
    for (std::size_t t = 0; t < total; ++t) {
        QuadNode& q = out[t];
        q.weight = 1.0;
        for (int k = 0; k < D; ++k) {
            auto kk = static_cast<std::size_t>(k);
            q.site.u[kk] = xs[kk][idx[kk]];
            q.weight *= ws[kk][idx[kk]];
        }
        if (b == Backend::Grid) q.site.node = static_cast<std::ptrdiff_t>(t);
        for (int k = D - 1; k >= 0; --k) {
            auto kk = static_cast<std::size_t>(k);
            if (++idx[kk] < xs[kk].size()) break;
            idx[kk] = 0;
        }
    }
    return out;
}

bool Chart::has_polar_axis() const {
    for (const auto& a : axes_)
        if (a.polar) return true;
    return false;
}

Chart Chart::with_band_scale(double s) const {
    std::vector<Axis> ax = axes_;
    for (auto& a : ax)
        if (a.polar) a.theta0 *= s;
    return Chart(n_, m_, ax);
}

bool Chart::same_grid(const Chart& o) const {
    if (o.n_ != n_ || o.m_ != m_) return false;
    for (int k = 0; k < dim(); ++k) {
        if (o.axis(k).samples != axis(k).samples || o.axis(k).periodic != axis(k).periodic) return false;
        if (o.lower(k) != lower(k) || o.upper(k) != upper(k)) return false;
    }
    return true;
}

}  // namespace nhrf
