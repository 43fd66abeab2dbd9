#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nhrf/errors.hpp"
#include "nhrf/spectral.hpp"

using namespace nhrf;
using testing::kPi;

namespace {

// order-4 periodic second difference symbol on N nodes of spacing 2 pi / N
double fd_symbol(int k, int N) {
    const double h = 2 * kPi / N, th = k * h;
    return (30 - 32 * std::cos(th) + 2 * std::cos(2 * th)) / (12 * h * h);
}

std::vector<double> fd_spectrum_2d(int N) {
    std::vector<double> out;
    for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) out.push_back(fd_symbol(a, N) + fd_symbol(b, N));
    std::sort(out.begin(), out.end());
    return out;
}

Geometry flat2(int samples) { return testing::geometry(testing::preset("flat-t4", samples)); }

AnalyticSpectrum torus(int d) {
    AnalyticSpectrum s;
    SpectrumFactor f;
    f.kind = SpectrumFactor::Kind::Torus;
    f.dim = d;
    s.factors.push_back(f);
    return s;
}

AnalyticSpectrum sphere() {
    AnalyticSpectrum s;
    SpectrumFactor f;
    f.kind = SpectrumFactor::Kind::Sphere;
    s.factors.push_back(f);
    return s;
}

double theta3_sq(double q) {
    double s = 0.0;
    for (int k = -40; k <= 40; ++k) s += std::pow(q, k * k);
    return s * s;
}

}  // namespace

TEST_CASE("moments") {
    MomentTable e = moments(TestingFunction("exp(-u)"), 2);
    CHECK(e.f0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(e.f2 == doctest::Approx(1.0).epsilon(1e-9));
    REQUIRE(e.higher.size() == 3);
    CHECK(e.higher[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.higher[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e.higher[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::fabs(e.f0 - e.f0_check) <= 1e-9);

    MomentTable g = moments(TestingFunction("exp(-u^2)"), 1);
    CHECK(g.f0 == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(g.f2 == doctest::Approx(std::sqrt(kPi) / 2).epsilon(1e-9));
    CHECK(g.higher[0] == doctest::Approx(1.0));
    CHECK(std::fabs(g.higher[1]) <= 1e-12);

    // int u e^{-u}(1+u) = 3, int e^{-u}(1+u) = 2
    MomentTable p = moments(TestingFunction("exp(-u)*(1 + u)"));
    CHECK(p.f0 == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(p.f2 == doctest::Approx(2.0).epsilon(1e-9));

    MomentTable one = moments(TestingFunction("1"));
    CHECK(one.f0_divergent);
    CHECK(one.f2_divergent);
    CHECK_THROWS_AS(one.require_finite(), NumericalError);
    MomentTable slow = moments(TestingFunction("1/(1 + u)^2"));
    CHECK(slow.f0_divergent);
    CHECK_FALSE(slow.f2_divergent);
    CHECK(slow.f2 == doctest::Approx(1.0).epsilon(1e-9));

    CHECK_THROWS_AS(TestingFunction("sin(u)"), PreconditionError);
    CHECK_THROWS_AS(TestingFunction("exp(-x1)"), SymbolError);
}

TEST_CASE("flat two-torus lattice reproduces the order-4 stencil spectrum") {
    const int N = 64;
    LatticeOperator op = assemble_operator(flat2(N), {}, {0, 1});
    REQUIRE(op.M.rows() == N * N);
    CHECK(op.asymmetry <= 1e-12);
    const auto ev = op.eigenvalues();
    const auto oracle = fd_spectrum_2d(N);
    for (std::size_t i = 0; i < ev.size(); ++i) CHECK(std::fabs(ev[i] - oracle[i]) <= 1e-9 * std::max(1.0, oracle[i]));
    CHECK(ev.front() >= -1e-10);
    // low modes against k1^2 + k2^2
    std::vector<double> exact;
    for (int a = -6; a <= 6; ++a)
        for (int b = -6; b <= 6; ++b) exact.push_back(a * a + b * b);
    std::sort(exact.begin(), exact.end());
    for (std::size_t i = 1; i < 60; ++i) CHECK(std::fabs(ev[i] - exact[i]) <= 1e-3 * exact[i]);

    TestingFunction tf("exp(-u)");
    const double lat = spectral_trace(ev, tf, 1.0).value;
    CHECK(lat == doctest::Approx(theta3_sq(std::exp(-1.0))).epsilon(1e-3));
    CHECK(spectral_trace(ev, tf, 1e8).value == doctest::Approx(double(N * N)).epsilon(1e-9));
}

TEST_CASE("constant B shifts and constant phi scales the assembled spectrum") {
    const int N = 12;
    Geometry geo = flat2(N);
    const auto base = assemble_operator(geo, {}, {0, 1}).eigenvalues();
    OperatorTerms tb;
    tb.B = Field::constant(0.7, 4);
    const auto shifted = assemble_operator(geo, tb, {0, 1}).eigenvalues();
    for (std::size_t i = 0; i < base.size(); ++i) CHECK(shifted[i] == doctest::Approx(base[i] - 0.7).epsilon(1e-12));

    for (double c : {0.3, -0.5}) {
        OperatorTerms tp;
        tp.phi = Field::constant(c, 4);
        LatticeOperator op = assemble_operator(geo, tp, {0, 1});
        const auto scaled = op.eigenvalues();
        for (std::size_t i = 0; i < base.size(); ++i)
            CHECK(std::fabs(scaled[i] - std::exp(-2 * c) * base[i]) <= 1e-12 * std::max(1.0, base[i]));
    }
}

TEST_CASE("nonholonomic lattice stays symmetric with nonnegative spectrum") {
    Scenario s = testing::preset("twisted-torus", 6);
    LatticeOperator op = assemble_operator(testing::geometry(s));
    CHECK(op.M.rows() == 1296);
    CHECK(op.asymmetry <= 1e-12);
    CHECK(op.eigenvalues().front() >= -1e-10);
    Scenario big = testing::preset("flat-t4", 9);
    CHECK_THROWS_AS(assemble_operator(testing::geometry(big)), PreconditionError);
    CHECK_THROWS_AS(assemble_operator(testing::geometry(testing::preset("sphere-product")), {}, {0, 1}), PreconditionError);
}

TEST_CASE("analytic streams") {
    TestingFunction tf("exp(-u)");
    CHECK(spectral_trace(torus(2), tf, 1.0).value == doctest::Approx(theta3_sq(std::exp(-1.0))).epsilon(1e-12));
    CHECK(theta3_sq(std::exp(-1.0)) == doctest::Approx(3.1421).epsilon(1e-4));

    // direct summation of the sphere heat trace
    for (double t : {0.5, 0.1, 0.02}) {
        double direct = 0.0;
        for (int l = 0; l < 400; ++l) direct += (2 * l + 1) * std::exp(-l * (l + 1.0) * t);
        CHECK(spectral_trace(sphere(), tf, 1 / std::sqrt(t)).value == doctest::Approx(direct).epsilon(1e-12));
    }

    // small-t fit: 1/t + 1/3 + t/15
    std::vector<double> ts, tr;
    for (int i = 0; i < 12; ++i) {
        const double t = 0.005 + 0.005 * i;
        ts.push_back(t);
        tr.push_back(spectral_trace(sphere(), tf, 1 / std::sqrt(t)).value);
    }
    HeatTraceFit fit = fit_heat_trace(ts, tr);
    CHECK(fit.a == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(fit.b == doctest::Approx(1.0 / 3).epsilon(1e-2));
    CHECK(fit.c == doctest::Approx(1.0 / 15).epsilon(0.05));

    CHECK(product_spectrum({0, 1}, {0, 2, 5}) == std::vector<double>{0, 1, 2, 3, 5, 6});
    CHECK_THROWS_AS(spectral_trace(torus(2), tf, 0.0), PreconditionError);
    CHECK_THROWS_AS(fit_heat_trace({1, 2, 3}, {1, 2, 3}), PreconditionError);
}

TEST_CASE("scalar heat-kernel estimate on flat tori") {
    Geometry geo = testing::geometry(testing::preset("flat-t4"));
    TestingFunction tf("exp(-u)");
    const MomentTable mom = moments(tf);
    const double vol = std::pow(2 * kPi, 4);
    for (double L : {8.0, 16.0}) {
        HeatKernelEstimate h = heat_kernel_estimate(geo, ConnectionKind::Canonical, Field::constant(0.0, 4), mom, L,
                                                    HeatKernelMode::Scalar);
        CHECK(h.I2 == 0.0);
        CHECK(h.I4 == 0.0);
        CHECK(h.value == doctest::Approx(std::pow(L, 4) * vol / (16 * kPi * kPi)).epsilon(1e-12));
        const double tr = spectral_trace(torus(4), tf, L).value;
        CHECK(std::fabs(h.value - tr) / tr <= 1e-3);
    }
    // four-dimensional only
    Scenario s = testing::preset("flat-t4");
    s.m = 1;
    s.axes.resize(3);
    s.h = {{"1"}};
    s.N = {{"0"}, {"0"}};
    CHECK_THROWS_AS(heat_kernel_estimate(testing::geometry(s), ConnectionKind::Canonical, Field::constant(0.0, 3), mom,
                                         4.0, HeatKernelMode::Scalar),
                    DimensionError);
}

TEST_CASE("literal four-dimensional approximation on sphere times torus") {
    Geometry geo = testing::geometry(testing::preset("sphere-product"));
    const MomentTable mom = moments(TestingFunction("exp(-u)"));
    const double vol = 4 * kPi * 4 * kPi * kPi;
    HeatKernelEstimate h = heat_kernel_estimate(geo, ConnectionKind::Canonical, Field::constant(0.0, 4), mom, 1.0,
                                                HeatKernelMode::Paper);
    CHECK(h.I0 == doctest::Approx(vol).epsilon(1e-7));
    CHECK(h.I2 == doctest::Approx(2 * vol).epsilon(1e-7));
    // R*R* = 0 and C^2 = 4/3 on a unit sphere times a flat torus
    CHECK(h.I4 == doctest::Approx(-18.0 * 4.0 / 3.0 * vol).epsilon(1e-7));
    const double literal = 45 / (4 * kPi * kPi) * vol + 15 / (16 * kPi * kPi) * 2 * vol + 1 / (128 * kPi * kPi) * (-24 * vol);
    CHECK(h.value == doctest::Approx(literal).epsilon(1e-7));
    CHECK(h.value == doctest::Approx(650.30967929).epsilon(1e-7));
}

TEST_CASE("second Seeley-DeWitt coefficient") {
    Geometry flat = testing::geometry(testing::preset("flat-t4"));
    CHECK(seeley_dewitt_a2(flat, ConnectionKind::Canonical, 4.0) == 0.0);
    Geometry sp = testing::geometry(testing::preset("sphere-product"));
    const double vol = 4 * kPi * 4 * kPi * kPi;
    const double a2 = seeley_dewitt_a2(sp, ConnectionKind::Canonical, 2.0);
    CHECK(a2 < 0.0);
    CHECK(a2 == doctest::Approx(4.0 / (16 * kPi * kPi) * (-2.0 / 6) * vol).epsilon(1e-7));
    CHECK(seeley_dewitt_a2(sp, ConnectionKind::Canonical, 2.0, 4) == doctest::Approx(4 * a2));
    CHECK_THROWS_AS(seeley_dewitt_a2(sp, ConnectionKind::Canonical, 2.0, 0), PreconditionError);
}

TEST_CASE("spectral versus geometric comparison") {
    TestingFunction tf("exp(-u)");
    Geometry geo = testing::geometry(testing::preset("flat-t4"));
    const MomentTable mom = moments(tf);
    SpectralSeries s{"abc", {4, 8, 16}, {}};
    GeometricSeries g{"abc", {4, 8, 16}, {}, {}};
    for (double L : s.Lambda) {
        s.values.push_back(spectral_trace(torus(4), tf, L).value);
        HeatKernelEstimate h = heat_kernel_estimate(geo, ConnectionKind::Canonical, Field::constant(0.0, 4), mom, L,
                                                    HeatKernelMode::Scalar);
        g.values.push_back(h.value);
        g.coefficients = h.terms;
    }
    Comparison c = spectral_vs_geometric(s, g);
    REQUIRE(c.rows.size() == 3);
    const double weyl = std::pow(2 * kPi, 4) / (16 * kPi * kPi);
    CHECK(c.fitted[0] == doctest::Approx(weyl).epsilon(5e-3));
    CHECK(c.coefficient_rel_error[0] <= 5e-3);
    CHECK(comparison_csv(c).rfind("Lambda,spectral,geometric,rel_error\n", 0) == 0);

    GeometricSeries other = g;
    other.scenario_hash = "xyz";
    CHECK_THROWS_AS(spectral_vs_geometric(s, other), PreconditionError);
    other = g;
    other.Lambda = {4, 8, 32};
    CHECK_THROWS_AS(spectral_vs_geometric(s, other), PreconditionError);
}
