#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "nhrf/errors.hpp"

using namespace nhrf;
using testing::kPi;

namespace {

PointGeometry at(const Geometry& geo, const Site& p) { return PointGeometry(local_metric(geo, p)); }

double max_abs(const Table3& t, int D) {
    double m = 0.0;
    for (int c = 0; c < D; ++c)
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) m = std::max(m, std::fabs(t[c][a][b]));
    return m;
}

double max_abs(const FrameTable& t, int D) {
    double m = 0.0;
    for (int c = 0; c < D; ++c)
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) m = std::max(m, std::fabs(t[c][a][b].v));
    return m;
}

// Independent scalar curvature of a coordinate metric by nested central differences.
using MetricFn = std::function<void(const double*, double (*)[4])>;

double fd_scalar_curvature(const MetricFn& gfn, const double* u0) {
    const int D = 4;
    auto inv4 = [](double (*a)[4], double (*r)[4]) {
        double m[4][8];
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 8; ++j) m[i][j] = j < 4 ? a[i][j] : (j - 4 == i ? 1.0 : 0.0);
        for (int c = 0; c < 4; ++c) {
            int p = c;
            for (int i = c + 1; i < 4; ++i)
                if (std::fabs(m[i][c]) > std::fabs(m[p][c])) p = i;
            for (int j = 0; j < 8; ++j) std::swap(m[c][j], m[p][j]);
            const double d = m[c][c];
            for (int j = 0; j < 8; ++j) m[c][j] /= d;
            for (int i = 0; i < 4; ++i)
                if (i != c) {
                    const double f = m[i][c];
                    for (int j = 0; j < 8; ++j) m[i][j] -= f * m[c][j];
                }
        }
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) r[i][j] = m[i][j + 4];
    };
    // Gamma^l_{mn} at u
    auto christoffel = [&](const double* u, double (*G)[4][4]) {
        const double h = 1e-4;
        double dg[4][4][4], g[4][4], gi[4][4];
        gfn(u, g);
        inv4(g, gi);
        for (int k = 0; k < D; ++k) {
            double up[4], um[4], gp[4][4], gm[4][4];
            for (int i = 0; i < 4; ++i) up[i] = um[i] = u[i];
            up[k] += h;
            um[k] -= h;
            gfn(up, gp);
            gfn(um, gm);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) dg[k][i][j] = (gp[i][j] - gm[i][j]) / (2 * h);
        }
        for (int l = 0; l < D; ++l)
            for (int m = 0; m < D; ++m)
                for (int n = 0; n < D; ++n) {
                    double s = 0.0;
                    for (int r = 0; r < D; ++r) s += gi[l][r] * (dg[m][r][n] + dg[n][r][m] - dg[r][m][n]);
                    G[l][m][n] = 0.5 * s;
                }
    };
    double G[4][4][4], dG[4][4][4][4];
    christoffel(u0, G);
    const double h = 1e-3;
    for (int k = 0; k < D; ++k) {
        double up[4], um[4], Gp[4][4][4], Gm[4][4][4];
        for (int i = 0; i < 4; ++i) up[i] = um[i] = u0[i];
        up[k] += h;
        um[k] -= h;
        christoffel(up, Gp);
        christoffel(um, Gm);
        for (int l = 0; l < D; ++l)
            for (int m = 0; m < D; ++m)
                for (int n = 0; n < D; ++n) dG[k][l][m][n] = (Gp[l][m][n] - Gm[l][m][n]) / (2 * h);
    }
    double g[4][4], gi[4][4];
    gfn(u0, g);
    inv4(g, gi);
    double R = 0.0;
    for (int m = 0; m < D; ++m)
        for (int n = 0; n < D; ++n) {
            // R_mn = d_l G^l_mn - d_n G^l_ml + G^l_lr G^r_mn - G^l_nr G^r_ml
            double Rmn = 0.0;
            for (int l = 0; l < D; ++l) {
                Rmn += dG[l][l][m][n] - dG[n][l][m][l];
                for (int r = 0; r < D; ++r) Rmn += G[l][l][r] * G[r][m][n] - G[l][n][r] * G[r][m][l];
            }
            R += gi[m][n] * Rmn;
        }
    return R;
}

}  // namespace

TEST_CASE("flat preset: every connection object vanishes") {
    Geometry geo = testing::geometry(testing::preset("flat-t4"));
    PointGeometry pg = at(geo, testing::site({0.3, 1.2, 2.1, 0.4}));
    CHECK(max_abs(pg.canonical(), 4) == 0.0);
    CHECK(max_abs(pg.levi_civita(), 4) == 0.0);
    CHECK(max_abs(pg.torsion(), 4) == 0.0);
    CHECK(max_abs(pg.distortion().Z, 4) == 0.0);
    for (ConnectionKind k : {ConnectionKind::Canonical, ConnectionKind::LeviCivita}) {
        CHECK(pg.curvature(k).sR == 0.0);
        CHECK(pg.weyl_squared(k) == 0.0);
        CHECK(pg.gauss_bonnet(k) == 0.0);
    }
}

TEST_CASE("sphere times torus: Christoffels, Ricci, scalar curvature") {
    const double rho = 1.7;
    Scenario s = testing::preset("sphere-product");
    s.parameters = {{"rho", rho}};
    s.g = {{"rho^2", "0"}, {"0", "rho^2*sin(theta)^2"}};
    Geometry geo = testing::geometry(s);
    for (double th : {0.4, 1.1, 2.3}) {
        PointGeometry pg = at(geo, testing::site({th, 0.7, 1.0, 2.0}));
        const FrameTable& L = pg.canonical();
        CHECK(L[0][1][1].v == doctest::Approx(-std::sin(th) * std::cos(th)));
        CHECK(L[1][0][1].v == doctest::Approx(std::cos(th) / std::sin(th)));
        CHECK(L[1][1][0].v == doctest::Approx(std::cos(th) / std::sin(th)));
        for (int c = 0; c < 4; ++c)
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    if (c >= 2 || a >= 2 || b >= 2) CHECK(L[c][a][b].v == 0.0);
        const Curvature& K = pg.curvature(ConnectionKind::Canonical);
        CHECK(K.Ric[0][0] == doctest::Approx(1.0));
        CHECK(K.Ric[1][1] == doctest::Approx(std::sin(th) * std::sin(th)));
        CHECK(std::fabs(K.Ric[0][1]) <= 1e-14);
        CHECK(std::fabs(K.Ric[2][2]) + std::fabs(K.Ric[3][3]) == 0.0);
        CHECK(K.sR == doctest::Approx(2.0 / (rho * rho)).epsilon(1e-13));
        // curvature lives on one 2-plane
        CHECK(std::fabs(pg.gauss_bonnet(ConnectionKind::Canonical)) <= 1e-13);
    }
}

TEST_CASE("sphere times sphere is Einstein with sR = 4") {
    Geometry geo = testing::geometry(testing::preset("einstein-s2xs2"));
    std::mt19937 rng(1);
    for (int t = 0; t < 10; ++t) {
        Site p = testing::random_site(*geo.chart, rng);
        PointGeometry pg = at(geo, p);
        for (ConnectionKind k : {ConnectionKind::Canonical, ConnectionKind::LeviCivita}) {
            const Curvature& K = pg.curvature(k);
            CHECK(K.sR == doctest::Approx(4.0).epsilon(1e-12));
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) CHECK(std::fabs(K.Ric[a][b] - pg.G(a, b)) <= 1e-12);
        }
    }
}

TEST_CASE("twisted torus: canonical v-connection, torsion and Levi-Civita mixing") {
    const double eps = 0.3;
    Scenario s = testing::preset("twisted-torus");
    s.parameters = {{"eps", eps}};
    s.N[0][0] = "eps*y4";
    PointGeometry py = at(testing::geometry(s), testing::site({0.2, 0.9, 1.3, 0.6}));
    // L^a_b1 = (d_b N_1^a - d_a N_1^b)/2 for unit blocks
    CHECK(py.canonical()[2][3][0].v == doctest::Approx(eps / 2));
    CHECK(py.canonical()[3][2][0].v == doctest::Approx(-eps / 2));

    s = testing::preset("twisted-torus");
    s.parameters = {{"eps", eps}};
    Geometry geo = testing::geometry(s);
    std::mt19937 rng(2);
    for (int t = 0; t < 10; ++t) {
        const Site p = testing::random_site(*geo.chart, rng);
        PointGeometry pg = at(geo, p);
        const Table3 T = pg.torsion();
        CHECK(T[2][0][1] == doctest::Approx(eps * std::cos(p.u[1])));
        CHECK(T[2][1][0] == doctest::Approx(-eps * std::cos(p.u[1])));
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                for (int k = 0; k < 2; ++k) {
                    CHECK(T[i][j][k] == 0.0);
                    CHECK(T[2 + i][2 + j][2 + k] == 0.0);
                }
        // mixed Levi-Civita entries scale with eps cos x2 and nothing else survives
        const FrameTable& G = pg.levi_civita();
        bool nonzero = false;
        for (int c = 0; c < 4; ++c)
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) {
                    const double r = G[c][a][b].v / (eps * std::cos(p.u[1]));
                    if (std::fabs(G[c][a][b].v) > 1e-14) {
                        nonzero = true;
                        CHECK(std::fabs(std::fabs(r) - 0.5) <= 1e-12);
                    }
                }
        CHECK(nonzero);
    }
}

TEST_CASE("Levi-Civita table is torsion free and metric in the adapted frame") {
    std::mt19937 rng(4);
    for (const auto& name : preset_names()) {
        Scenario s = testing::preset(name);
        if (name == "twisted-torus") s.N[0][1] = "0.2*cos(y3)*sin(x1)";
        Geometry geo = testing::geometry(s);
        for (int t = 0; t < 5; ++t) {
            PointGeometry pg = at(geo, testing::random_site(*geo.chart, rng));
            const FrameTable& G = pg.levi_civita();
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b)
                    for (int c = 0; c < 4; ++c) {
                        CHECK_MESSAGE(std::fabs(G[c][b][a].v - G[c][a][b].v - pg.W(c, a, b)) <= 1e-12, name);
                        // e_c G_ab = Gamma^d_ac G_db + Gamma^d_bc G_ad
                        Jet gab;
                        if (a < 2 && b < 2) gab = pg.g(a, b);
                        if (a >= 2 && b >= 2) gab = pg.h(a - 2, b - 2);
                        double rhs = 0.0;
                        for (int d = 0; d < 4; ++d) rhs += G[d][a][c].v * pg.G(d, b) + G[d][b][c].v * pg.G(a, d);
                        CHECK_MESSAGE(std::fabs(pg.frame_value(c, gab) - rhs) <= 1e-12, name);
                    }
        }
    }
}

TEST_CASE("distortion identity and canonical conditions on every preset") {
    std::mt19937 rng(6);
    for (const auto& name : preset_names()) {
        Scenario s = testing::preset(name);
        if (name == "twisted-torus") {
            s.N[0][1] = "0.2*cos(y3)*sin(x1)";
            s.N[1][0] = "0.1*y4";
        }
        for (Backend b : {Backend::Symbolic, Backend::Grid}) {
            if (b == Backend::Grid && name != "twisted-torus" && name != "flat-t4") continue;
            Scenario sb = b == Backend::Grid ? testing::preset(name, 16) : s;
            if (b == Backend::Grid) sb.N = s.N;
            Geometry geo = testing::geometry(sb, b);
            const double tol = b == Backend::Symbolic ? 1e-10 : 1e-6;
            for (int t = 0; t < 8; ++t) {
                const Site p = b == Backend::Symbolic ? testing::random_site(*geo.chart, rng)
                                                      : testing::random_node(*geo.chart, rng);
                PointGeometry pg = at(geo, p);
                const FrameTable& H = pg.canonical();
                const FrameTable& L = pg.levi_civita();
                const Distortion Z = pg.distortion();
                double dev = 0.0;
                for (int c = 0; c < 4; ++c)
                    for (int a = 0; a < 4; ++a)
                        for (int e = 0; e < 4; ++e) dev = std::max(dev, std::fabs(L[c][a][e].v - H[c][a][e].v - Z.Z[c][a][e]));
                CHECK_MESSAGE(dev <= tol, name);
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j)
                        for (int k = 0; k < 2; ++k) {
                            CHECK(Z.Z[i][j][k] == 0.0);
                            CHECK(Z.Z[2 + i][2 + j][2 + k] == 0.0);
                            CHECK(H[i][j][k].v == doctest::Approx(H[i][k][j].v));
                            CHECK(H[2 + i][2 + j][2 + k].v == doctest::Approx(H[2 + i][2 + k][2 + j].v));
                        }
                const double met_tol = b == Backend::Symbolic ? 1e-12 : 1e-8;
                CHECK_MESSAGE(pg.metricity_residual(ConnectionKind::Canonical) <= met_tol, name);
                const Table3 T = pg.torsion();
                for (int i = 0; i < 2; ++i)
                    for (int j = 0; j < 2; ++j)
                        for (int a = 0; a < 2; ++a) CHECK(T[2 + a][j][i] == pg.Omega(j, i, a).v);
            }
        }
    }
}

TEST_CASE("explicit d-curvature blocks agree with the generic frame curvature") {
    Scenario s = testing::preset("twisted-torus");
    s.N[0][1] = "0.2*cos(y3)*sin(x1)";
    s.h = {{"1 + 0.1*sin(x1)", "0"}, {"0", "1"}};
    Geometry geo = testing::geometry(s);
    std::mt19937 rng(8);
    for (int t = 0; t < 5; ++t) {
        PointGeometry pg = at(geo, testing::random_site(*geo.chart, rng));
        const Table4 B = pg.dcurvature_blocks();
        const Curvature& K = pg.curvature(ConnectionKind::Canonical);
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
                for (int c = 0; c < 4; ++c)
                    for (int d = 0; d < 4; ++d) {
                        // blocks with mixed first pair are not d-curvature components
                        if ((a < 2) != (b < 2)) continue;
                        CHECK(std::fabs(B[a][b][c][d] - K.R[a][b][c][d]) <= 1e-12);
                    }
        double sR = 0.0;
        for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b) sR += pg.Ginv(a, b) * K.Ric[a][b];
        CHECK(sR == doctest::Approx(K.sR));
    }
}

TEST_CASE("holonomic reduction matches a finite-difference curvature oracle") {
    Scenario s = testing::preset("flat-t4");
    s.g = {{"1 + 0.3*sin(x1)*cos(x2)", "0.1*sin(x2)"}, {"0.1*sin(x2)", "2 + cos(x1)"}};
    s.h = {{"1.5 + 0.2*cos(y3 + y4)", "0"}, {"0", "1 + 0.25*sin(y3)"}};
    Geometry geo = testing::geometry(s);
    MetricFn gfn = [](const double* u, double (*g)[4]) {
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) g[i][j] = 0.0;
        g[0][0] = 1 + 0.3 * std::sin(u[0]) * std::cos(u[1]);
        g[0][1] = g[1][0] = 0.1 * std::sin(u[1]);
        g[1][1] = 2 + std::cos(u[0]);
        g[2][2] = 1.5 + 0.2 * std::cos(u[2] + u[3]);
        g[3][3] = 1 + 0.25 * std::sin(u[2]);
    };
    std::mt19937 rng(10);
    for (int t = 0; t < 10; ++t) {
        const Site p = testing::random_site(*geo.chart, rng);
        PointGeometry pg = at(geo, p);
        const double oracle = fd_scalar_curvature(gfn, p.u.data());
        CHECK(std::fabs(pg.curvature(ConnectionKind::Canonical).sR - oracle) <= 1e-6);
        CHECK(std::fabs(pg.curvature(ConnectionKind::LeviCivita).sR - oracle) <= 1e-6);
    }
}

TEST_CASE("Weyl tensor is trace free") {
    std::mt19937 rng(12);
    for (const char* name : {"twisted-torus", "sphere-product", "einstein-s2xs2"}) {
        Scenario s = testing::preset(name);
        if (std::string(name) == "twisted-torus") s.N[0][1] = "0.2*cos(y3)*sin(x1)";
        Geometry geo = testing::geometry(s);
        for (int t = 0; t < 10; ++t) {
            PointGeometry pg = at(geo, testing::random_site(*geo.chart, rng));
            for (ConnectionKind k : {ConnectionKind::Canonical, ConnectionKind::LeviCivita}) {
                const Table4 C = pg.weyl(k);
                for (int n = 0; n < 4; ++n)
                    for (int g = 0; g < 4; ++g) {
                        double tr = 0.0;
                        for (int m = 0; m < 4; ++m)
                            for (int l = 0; l < 4; ++l) tr += pg.Ginv(m, l) * C[m][n][l][g];
                        CHECK_MESSAGE(std::fabs(tr) <= 1e-8, name);
                    }
            }
        }
    }
    // flat is conformally flat
    Geometry flat = testing::geometry(testing::preset("flat-t4"));
    CHECK(at(flat, testing::site({1, 1, 1, 1})).weyl_squared(ConnectionKind::Canonical) == 0.0);
}

TEST_CASE("Gauss-Bonnet density integrates to the Euler characteristic of S2 x S2") {
    Geometry geo = testing::geometry(testing::preset("einstein-s2xs2"));
    Integral I = integrate_sites(*geo.chart, geo.backend, [&](const Site& p) {
        PointGeometry pg = at(geo, p);
        return pg.gauss_bonnet(ConnectionKind::Canonical) * volume_density(local_metric(geo, p));
    });
    const double euler = I.value / (32 * kPi * kPi);
    CHECK(euler == doctest::Approx(4.0).epsilon(0.01));
}

TEST_CASE("conformal scalar formula") {
    Scenario s = testing::preset("einstein-s2xs2");
    Geometry geo = testing::geometry(s);
    const Site p = testing::site({0.8, 0.3, 1.9, 2.2});
    PointGeometry pg = at(geo, p);
    for (double c : {0.0, 0.4, -1.3}) {
        Jet2 phi(c);
        const double sR = pg.curvature(ConnectionKind::Canonical).sR;
        CHECK(std::fabs(pg.conformal_scalar(ConnectionKind::Canonical, phi) - std::exp(-2 * c) * sR) <= 1e-10);
    }

    // recompute from the explicitly rescaled blocks
    Scenario f = testing::preset("flat-t4");
    f.parameters = {{"eps", 0.2}};
    Geometry flat = testing::geometry(f);
    Field phi = make_field(f, "eps*sin(x1)");
    std::mt19937 rng(14);
    for (int t = 0; t < 10; ++t) {
        const Site q = testing::random_site(*flat.chart, rng);
        const LocalMetric lm = local_metric(flat, q);
        PointGeometry base(lm);
        PointGeometry scaled(rescale(lm, phi.jet(q)));
        const double formula = base.conformal_scalar(ConnectionKind::LeviCivita, phi.jet(q));
        CHECK(std::fabs(formula - scaled.curvature(ConnectionKind::LeviCivita).sR) <= 1e-10);
        const double ph = 0.2 * std::sin(q.u[0]), d1 = 0.2 * std::cos(q.u[0]), d2 = -0.2 * std::sin(q.u[0]);
        // the canonical connection sees only the h-block as a conformal 2-surface
        CHECK(scaled.curvature(ConnectionKind::Canonical).sR == doctest::Approx(-2 * std::exp(-2 * ph) * d2).epsilon(1e-10));
        CHECK(base.conformal_scalar(ConnectionKind::LeviCivita, phi.jet(q)) ==
              doctest::Approx(-std::exp(-2 * ph) * (6 * d2 + 6 * d1 * d1)).epsilon(1e-10));
    }
}

TEST_CASE("dimension guard on four-dimensional displays") {
    Scenario s = testing::preset("flat-t4");
    s.m = 1;
    s.axes.resize(3);
    s.h = {{"1"}};
    s.N = {{"0"}, {"0"}};
    Geometry geo = testing::geometry(s);
    PointGeometry pg = at(geo, testing::site({0.1, 0.2, 0.3}));
    CHECK_THROWS_AS(pg.gauss_bonnet(ConnectionKind::Canonical), DimensionError);
    CHECK_THROWS_AS(pg.weyl(ConnectionKind::Canonical), DimensionError);
}
