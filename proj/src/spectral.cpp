#include "nhrf/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "nhrf/errors.hpp"

namespace nhrf {

using std::numbers::pi;

// ---------------------------------------------------------------- testing functions

TestingFunction::TestingFunction(const std::string& source) : source_(source) {
    symbols_.add_variable("u");
    e_ = parse(source, symbols_);
    for (int i = 0; i <= 500; ++i) {
        const double u = 0.1 * i;
        const double v = (*this)(u);
        if (!(v >= 0.0)) throw PreconditionError("testing function must be nonnegative on u >= 0 (fails at u = " + std::to_string(u) + ")");
    }
}

double TestingFunction::operator()(double u) const {
    const double x[1] = {u};
    return evaluate(e_, std::span<const double>(x, 1), std::span<const double>());
}

double TestingFunction::derivative_at_zero(int k) const {
    Expr d = e_;
    for (int i = 0; i < k; ++i) d = differentiate(d, 0);
    const double x[1] = {0.0};
    return evaluate(d, std::span<const double>(x, 1), std::span<const double>());
}

void MomentTable::require_finite() const {
    if (f0_divergent) throw NumericalError("testing-function moment f_(0) diverges");
    if (f2_divergent) throw NumericalError("testing-function moment f_(2) diverges");
}

namespace {

struct MomentValue {
    double value = 0.0, error = 0.0, check = 0.0;
    bool divergent = false;
};

MomentValue moment(const std::function<double(double)>& g) {
    MomentValue m;
    // tail increments over decades of u decide convergence
    boost::math::quadrature::tanh_sinh<double> ts;
    auto piece = [&](double a, double b) {
        try {
            return ts.integrate(g, a, b, 1e-10);
        } catch (const std::exception&) {
            return std::numeric_limits<double>::infinity();
        }
    };
    const double head = piece(0.0, 1e2), t1 = piece(1e2, 1e4), t2 = piece(1e4, 1e6);
    boost::math::quadrature::exp_sinh<double> es;
    double L1 = 0.0;
    try {
        m.value = es.integrate(g, 0.0, std::numeric_limits<double>::infinity(), 1e-10, &m.error, &L1);
    } catch (const std::exception&) {
        m.value = std::numeric_limits<double>::infinity();
    }
    if (!std::isfinite(m.value) || !std::isfinite(t1) || !std::isfinite(t2) ||
        (std::fabs(t2) >= 0.5 * std::fabs(t1) && std::fabs(t2) > 1e-12 * std::max(1.0, std::fabs(head)))) {
        m.divergent = true;
        m.value = std::numeric_limits<double>::infinity();
        return m;
    }
    // second route: Gauss-Kronrod on u = t / (1 - t)
    auto mapped = [&](double t) {
        if (t >= 1.0) return 0.0;
        const double s = 1.0 - t;
        const double v = g(t / s) / (s * s);
        return std::isfinite(v) ? v : 0.0;
    };
    m.check = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(mapped, 0.0, 1.0, 20, 1e-12);
    return m;
}

}  // namespace

MomentTable moments(const TestingFunction& tf, int kmax) {
    if (kmax < 0) throw PreconditionError("kmax must be nonnegative");
    MomentTable t;
    auto m0 = moment([&](double u) { return tf(u) * u; });
    auto m2 = moment([&](double u) { return tf(u); });
    t.f0 = m0.value;
    t.f0_check = m0.check;
    t.f0_error = m0.error;
    t.f0_divergent = m0.divergent;
    t.f2 = m2.value;
    t.f2_check = m2.check;
    t.f2_error = m2.error;
    t.f2_divergent = m2.divergent;
    for (int k = 0; k <= kmax; ++k) t.higher.push_back((k % 2 ? -1.0 : 1.0) * tf.derivative_at_zero(k));
    return t;
}

// ---------------------------------------------------------------- lattice operator

std::vector<double> LatticeOperator::eigenvalues() const {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw NumericalError("eigenvalue solve failed");
    std::vector<double> ev(es.eigenvalues().data(), es.eigenvalues().data() + es.eigenvalues().size());
    std::sort(ev.begin(), ev.end());
    return ev;
}

LatticeOperator assemble_operator(const Geometry& geo, const OperatorTerms& terms, std::vector<int> axes) {
    const Chart& chart = *geo.chart;
    const int D = chart.dim(), n = chart.n(), m = chart.m();
    if (axes.empty())
        for (int k = 0; k < D; ++k) axes.push_back(k);
    std::sort(axes.begin(), axes.end());
    std::size_t dof = 1;
    for (int k : axes) {
        if (k < 0 || k >= D) throw ShapeError("lattice axis out of range");
        if (!chart.axis(k).periodic) throw PreconditionError("assembled operator needs periodic lattice axes");
        if (chart.axis(k).samples < 5) throw PreconditionError("lattice axes need at least 5 nodes");
        dof *= static_cast<std::size_t>(chart.axis(k).samples);
    }
    if (dof > kDenseLimit) throw PreconditionError("lattice exceeds the dense eigensolver budget of 4096 points");
    if (!terms.A.empty() && static_cast<int>(terms.A.size()) != D) throw ShapeError("A needs one component per frame index");
    const bool full = static_cast<int>(axes.size()) == D;
    const int L = static_cast<int>(axes.size());

    std::vector<int> len(static_cast<std::size_t>(L));
    std::vector<std::size_t> stride(static_cast<std::size_t>(L));
    std::vector<double> h(static_cast<std::size_t>(L));
    {
        std::size_t s = 1;
        for (int q = L - 1; q >= 0; --q) {
            const int k = axes[static_cast<std::size_t>(q)];
            len[static_cast<std::size_t>(q)] = chart.axis(k).samples;
            stride[static_cast<std::size_t>(q)] = s;
            s *= static_cast<std::size_t>(chart.axis(k).samples);
            h[static_cast<std::size_t>(q)] = (chart.upper(k) - chart.lower(k)) / chart.axis(k).samples;
        }
    }
    const double c1[5] = {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12};
    const double c2[5] = {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12};

    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dof), static_cast<Eigen::Index>(dof));
    std::vector<int> idx(static_cast<std::size_t>(L));
    for (std::size_t p = 0; p < dof; ++p) {
        std::size_t rem = p;
        Site site;
        for (int k = 0; k < D; ++k) site.u[static_cast<std::size_t>(k)] = chart.lower(k);
        for (int q = 0; q < L; ++q) {
            idx[static_cast<std::size_t>(q)] = static_cast<int>(rem / stride[static_cast<std::size_t>(q)]);
            rem %= stride[static_cast<std::size_t>(q)];
            const int k = axes[static_cast<std::size_t>(q)];
            site.u[static_cast<std::size_t>(k)] = chart.axis_nodes(k)[static_cast<std::size_t>(idx[static_cast<std::size_t>(q)])];
        }
        if (full) site.node = static_cast<std::ptrdiff_t>(p);
        LocalMetric lm = local_metric(geo, site);
        PointGeometry pg(lm);
        const Jet2 phi = terms.phi.jet(site);
        const double s2 = std::exp(-2.0 * phi.v);
        std::array<double, kMaxDim> ephi{};
        for (int a = 0; a < D; ++a) ephi[static_cast<std::size_t>(a)] = pg.frame_jet(a, phi).v;
        // rescaled inverse metric, A and B
        Arr2<double> gi{};
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) gi[a][b] = s2 * pg.Ginv(a, b);
        std::array<double, kMaxDim> A{};
        double Aephi = 0.0;
        for (int a = 0; a < D; ++a) {
            const double Aa = terms.A.empty() ? 0.0 : terms.A[static_cast<std::size_t>(a)].value(site);
            Aephi += Aa * ephi[static_cast<std::size_t>(a)];
            double s = s2 * Aa;
            for (int b = 0; b < D; ++b) s -= 2.0 * gi[a][b] * ephi[static_cast<std::size_t>(b)];
            A[static_cast<std::size_t>(a)] = s;
        }
        const double B = s2 * (terms.B.value(site) - Aephi);
        // frame vectors E_alpha^mu and their partials
        Arr2<double> E{};
        for (int a = 0; a < D; ++a) E[a][a] = 1.0;
        for (int i = 0; i < n; ++i)
            for (int a = 0; a < m; ++a) E[i][n + a] = -lm.N[i][a].v;
        auto dE = [&](int mu, int beta, int nu) {
            if (beta < n && nu >= n) return -lm.N[beta][nu - n].d[static_cast<std::size_t>(mu)];
            return 0.0;
        };
        Arr2<double> Gc{};
        std::array<double, kMaxDim> bvec{};
        for (int mu = 0; mu < D; ++mu)
            for (int nu = 0; nu < D; ++nu) {
                double s = 0.0;
                for (int a = 0; a < D; ++a)
                    for (int b = 0; b < D; ++b) s += gi[a][b] * E[a][mu] * E[b][nu];
                Gc[mu][nu] = s;
            }
        for (int nu = 0; nu < D; ++nu) {
            double s = 0.0;
            for (int a = 0; a < D; ++a) {
                for (int b = 0; b < D; ++b) {
                    if (gi[a][b] == 0.0) continue;
                    for (int mu = 0; mu < D; ++mu) s += gi[a][b] * E[a][mu] * dE(mu, b, nu);
                }
                s += A[static_cast<std::size_t>(a)] * E[a][nu];
            }
            bvec[static_cast<std::size_t>(nu)] = s;
        }
        auto shifted = [&](int q, int off) {
            int j = (idx[static_cast<std::size_t>(q)] + off) % len[static_cast<std::size_t>(q)];
            if (j < 0) j += len[static_cast<std::size_t>(q)];
            return static_cast<long>(j - idx[static_cast<std::size_t>(q)]) * static_cast<long>(stride[static_cast<std::size_t>(q)]);
        };
        const auto row = static_cast<Eigen::Index>(p);
        auto add = [&](long delta, double v) { M(row, static_cast<Eigen::Index>(static_cast<long>(p) + delta)) -= v; };
        for (int q = 0; q < L; ++q) {
            const int mu = axes[static_cast<std::size_t>(q)];
            const double hq = h[static_cast<std::size_t>(q)];
            for (int o = -2; o <= 2; ++o) {
                const long d = shifted(q, o);
                add(d, Gc[mu][mu] * c2[o + 2] / (hq * hq) + bvec[static_cast<std::size_t>(mu)] * c1[o + 2] / hq);
            }
            for (int r = q + 1; r < L; ++r) {
                const int nu = axes[static_cast<std::size_t>(r)];
                const double mixed = Gc[mu][nu] + Gc[nu][mu];
                if (mixed == 0.0) continue;
                const double hr = h[static_cast<std::size_t>(r)];
                for (int o1 = -2; o1 <= 2; ++o1)
                    for (int o2 = -2; o2 <= 2; ++o2) {
                        const double w = c1[o1 + 2] * c1[o2 + 2];
                        if (w == 0.0) continue;
                        add(shifted(q, o1) + shifted(r, o2), mixed * w / (hq * hr));
                    }
            }
        }
        M(row, row) -= B;
    }
    LatticeOperator op;
    op.axes = axes;
    const double norm = M.norm();
    op.asymmetry = norm > 0.0 ? (M - M.transpose()).norm() / norm : 0.0;
    op.M = 0.5 * (M + M.transpose());
    return op;
}

// ---------------------------------------------------------------- traces

double SpectrumFactor::volume() const {
    if (kind == Kind::Sphere) return 4.0 * pi * radius * radius;
    return std::pow(length, dim);
}

int AnalyticSpectrum::dimension() const {
    int d = 0;
    for (const auto& f : factors) d += f.dimension();
    return d;
}

double AnalyticSpectrum::volume() const {
    double v = 1.0;
    for (const auto& f : factors) v *= f.volume();
    return v;
}

TraceResult spectral_trace(const std::vector<double>& eigenvalues, const TestingFunction& tf, double Lambda) {
    if (!(Lambda > 0.0)) throw PreconditionError("cutoff Lambda must be positive");
    std::vector<double> ev = eigenvalues;
    std::sort(ev.begin(), ev.end());
    TraceResult r;
    const double L2 = Lambda * Lambda;
    for (double l : ev) r.value += tf(std::max(l, 0.0) / L2);
    r.levels = ev.size();
    return r;
}

namespace {

struct Level {
    double lambda;
    double mult;
};

// r_d(n) for n <= nmax by repeated convolution with the one-dimensional counts
std::vector<double> torus_counts(int d, std::size_t nmax) {
    std::vector<double> r1(nmax + 1, 0.0);
    for (std::size_t k = 0; k * k <= nmax; ++k) r1[k * k] += (k == 0 ? 1.0 : 2.0);
    std::vector<double> r = r1;
    for (int dd = 1; dd < d; ++dd) {
        std::vector<double> next(nmax + 1, 0.0);
        for (std::size_t a = 0; a <= nmax; ++a) {
            if (r[a] == 0.0) continue;
            for (std::size_t k = 0; a + k * k <= nmax; ++k) next[a + k * k] += r[a] * (k == 0 ? 1.0 : 2.0);
        }
        r = std::move(next);
    }
    return r;
}

std::vector<Level> factor_levels(const SpectrumFactor& f, double lmax) {
    std::vector<Level> out;
    if (f.kind == SpectrumFactor::Kind::Sphere) {
        const double s = 1.0 / (f.radius * f.radius);
        for (long l = 0;; ++l) {
            const double lam = static_cast<double>(l * (l + 1)) * s;
            if (lam > lmax) break;
            out.push_back({lam, 2.0 * l + 1.0});
        }
        return out;
    }
    const double q = std::pow(2.0 * pi / f.length, 2);
    const double nmax_d = std::floor(lmax / q);
    if (nmax_d > 5e7) throw NumericalError("analytic torus stream too long; lower Lambda or the testing-function range");
    const auto nmax = static_cast<std::size_t>(nmax_d);
    const auto r = torus_counts(f.dim, nmax);
    for (std::size_t k = 0; k <= nmax; ++k)
        if (r[k] != 0.0) out.push_back({q * static_cast<double>(k), r[k]});
    return out;
}

}  // namespace

TraceResult spectral_trace(const AnalyticSpectrum& spec, const TestingFunction& tf, double Lambda) {
    if (!(Lambda > 0.0)) throw PreconditionError("cutoff Lambda must be positive");
    if (spec.factors.empty()) throw PreconditionError("empty analytic spectrum");
    const int D = spec.dimension();
    double scale = 0.0;
    for (int i = 0; i <= 10; ++i) scale = std::max(scale, tf(0.1 * i));
    double umax = 1.0;
    while (umax < 1e6 && tf(umax) * std::pow(umax, 0.5 * D) > 1e-17 * scale) umax *= 1.25;
    const double L2 = Lambda * Lambda;
    const double lmax = umax * L2;
    std::vector<std::vector<Level>> lv;
    for (const auto& f : spec.factors) lv.push_back(factor_levels(f, lmax));
    TraceResult r;
    std::function<void(std::size_t, double, double)> walk = [&](std::size_t k, double lam, double mult) {
        if (k == lv.size()) {
            r.value += mult * tf(lam / L2);
            ++r.levels;
            return;
        }
        for (const Level& l : lv[k]) {
            if (lam + l.lambda > lmax) break;
            walk(k + 1, lam + l.lambda, mult * l.mult);
        }
    };
    walk(0, 0.0, 1.0);
    // Weyl-density tail beyond lmax, doubled for safety
    const double c = spec.volume() / (std::pow(4.0 * pi, 0.5 * D) * std::tgamma(0.5 * D));
    boost::math::quadrature::exp_sinh<double> es;
    double tail = 0.0;
    try {
        tail = es.integrate([&](double u) { return std::pow(u, 0.5 * D - 1.0) * tf(u); }, umax,
                            std::numeric_limits<double>::infinity());
    } catch (const std::exception&) {
        tail = std::numeric_limits<double>::infinity();
    }
    r.tail_bound = 2.0 * c * std::pow(Lambda, D) * tail;
    if (!(r.tail_bound <= 1e-8 * std::fabs(r.value)))
        throw NumericalError("spectral trace tail bound exceeds 1e-8 of the sum");
    return r;
}

std::vector<double> product_spectrum(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> out;
    out.reserve(a.size() * b.size());
    for (double x : a)
        for (double y : b) out.push_back(x + y);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------- heat kernel

std::string to_string(HeatKernelMode m) { return m == HeatKernelMode::Paper ? "paper" : "scalar"; }

HeatKernelMode heat_kernel_mode_from_string(const std::string& s) {
    if (s == "paper") return HeatKernelMode::Paper;
    if (s == "scalar") return HeatKernelMode::Scalar;
    throw ValidationError("spectral.mode", "unknown heat-kernel mode '" + s + "' (paper | scalar)");
}

HeatKernelEstimate heat_kernel_estimate(const Geometry& geo, ConnectionKind k, const Field& phi, const MomentTable& mom,
                                        double Lambda, HeatKernelMode mode) {
    if (geo.dim() != 4) throw DimensionError("the four dimensional approximation requires n + m = 4");
    if (!(Lambda > 0.0)) throw PreconditionError("cutoff Lambda must be positive");
    mom.require_finite();
    HeatKernelEstimate out;
    for (const QuadNode& q : integration_nodes(*geo.chart, geo.backend)) {
        LocalMetric lm = local_metric(geo, q.site);
        const Jet2 p = phi.jet(q.site);
        LocalMetric lr = rescale(lm, p);
        PointGeometry pr(lr);
        if (mode == HeatKernelMode::Paper) {
            PointGeometry pg(lm);
            const double w = q.weight * volume_density(lm) * std::exp(2.0 * p.v);
            const double grad = pg.grad_squared(p);
            out.I0 += w;
            out.I2 += w * (pr.curvature(k).sR + 6.0 * std::exp(-2.0 * p.v) * grad);
            out.I4 += w * (11.0 * pr.gauss_bonnet(k) - 18.0 * pr.weyl_squared(k));
        } else {
            const double w = q.weight * volume_density(lr);
            const double sR = pr.curvature(k).sR;
            out.I0 += w;
            out.I2 += w * sR / 6.0;
            out.I4 += w * (2.0 * pr.riemann_squared(k) - 2.0 * pr.ricci_squared(k) + 5.0 * sR * sR) / 360.0;
        }
    }
    if (mode == HeatKernelMode::Paper) {
        out.terms = {45.0 / (4.0 * pi * pi) * mom.f0 * out.I0, 15.0 / (16.0 * pi * pi) * mom.f2 * out.I2,
                     1.0 / (128.0 * pi * pi) * mom.f4() * out.I4};
        out.value = out.terms[0] + out.terms[1] + out.terms[2];
    } else {
        const double c = 1.0 / (16.0 * pi * pi);
        out.terms = {c * mom.f0 * out.I0, c * mom.f2 * out.I2, c * mom.f4() * out.I4};
        const double L2 = Lambda * Lambda;
        out.value = L2 * L2 * out.terms[0] + L2 * out.terms[1] + out.terms[2];
    }
    return out;
}

double seeley_dewitt_a2(const Geometry& geo, ConnectionKind k, double Lambda, int rank) {
    if (rank < 1) throw PreconditionError("bundle rank must be positive");
    double s = 0.0;
    for (const QuadNode& q : integration_nodes(*geo.chart, geo.backend)) {
        LocalMetric lm = local_metric(geo, q.site);
        PointGeometry pg(lm);
        s += q.weight * volume_density(lm) * (-pg.curvature(k).sR / 6.0);
    }
    return Lambda * Lambda / (16.0 * pi * pi) * rank * s;
}

HeatTraceFit fit_heat_trace(const std::vector<double>& t, const std::vector<double>& trace) {
    if (t.size() != trace.size() || t.size() < 4) throw PreconditionError("heat-trace fit needs at least four samples");
    Eigen::MatrixXd A(static_cast<Eigen::Index>(t.size()), 4);
    Eigen::VectorXd y(static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        A(r, 0) = 1.0 / t[i];
        A(r, 1) = 1.0;
        A(r, 2) = t[i];
        A(r, 3) = t[i] * t[i];
        y(r) = trace[i];
    }
    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    return {c(0), c(1), c(2), c(3)};
}

Comparison spectral_vs_geometric(const SpectralSeries& s, const GeometricSeries& g) {
    if (s.scenario_hash != g.scenario_hash) throw PreconditionError("spectral and geometric series come from different scenarios");
    if (s.Lambda != g.Lambda || s.values.size() != s.Lambda.size() || g.values.size() != g.Lambda.size())
        throw PreconditionError("spectral and geometric series use different cutoff grids");
    Comparison c;
    for (std::size_t i = 0; i < s.Lambda.size(); ++i) {
        const double rel = std::fabs(s.values[i] - g.values[i]) / std::max(std::fabs(s.values[i]), 1e-300);
        c.rows.push_back({s.Lambda[i], s.values[i], g.values[i], rel});
    }
    c.geometric = g.coefficients;
    if (s.Lambda.size() >= 3) {
        Eigen::MatrixXd A(static_cast<Eigen::Index>(s.Lambda.size()), 3);
        Eigen::VectorXd y(static_cast<Eigen::Index>(s.Lambda.size()));
        for (std::size_t i = 0; i < s.Lambda.size(); ++i) {
            const auto r = static_cast<Eigen::Index>(i);
            const double L2 = s.Lambda[i] * s.Lambda[i];
            A(r, 0) = L2 * L2;
            A(r, 1) = L2;
            A(r, 2) = 1.0;
            y(r) = s.values[i];
        }
        Eigen::VectorXd x = A.colPivHouseholderQr().solve(y);
        c.fitted = {x(0), x(1), x(2)};
        for (int k = 0; k < 3; ++k) {
            const double ref = c.geometric[static_cast<std::size_t>(k)];
            const double d = std::fabs(c.fitted[static_cast<std::size_t>(k)] - ref);
            c.coefficient_rel_error[static_cast<std::size_t>(k)] = ref != 0.0 ? d / std::fabs(ref) : d;
        }
    }
    return c;
}

std::string comparison_csv(const Comparison& c) {
    std::ostringstream os;
    os << "Lambda,spectral,geometric,rel_error\n";
    char buf[160];
    for (const auto& r : c.rows) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", r.Lambda, r.spectral, r.geometric, r.rel_error);
        os << buf;
    }
    return os.str();
}

}  // namespace nhrf
