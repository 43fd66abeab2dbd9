#include "nhrf/connections.hpp"

#include <algorithm>
#include <cmath>

#include "nhrf/errors.hpp"

namespace nhrf {

std::string to_string(ConnectionKind k) { return k == ConnectionKind::Canonical ? "canonical" : "levi-civita"; }

ConnectionKind connection_from_string(const std::string& s) {
    if (s == "canonical") return ConnectionKind::Canonical;
    if (s == "levi-civita" || s == "levicivita" || s == "lc") return ConnectionKind::LeviCivita;
    throw ValidationError("connection", "unknown connection '" + s + "' (canonical | levi-civita)");
}

LocalMetric local_metric(const DMetric& g, const NConnection& N, const Site& s) {
    LocalMetric lm;
    lm.n = g.n();
    lm.m = g.m();
    for (int i = 0; i < lm.n; ++i)
        for (int j = i; j < lm.n; ++j) lm.g[i][j] = lm.g[j][i] = g.g(i, j).jet(s);
    for (int a = 0; a < lm.m; ++a)
        for (int b = a; b < lm.m; ++b) lm.h[a][b] = lm.h[b][a] = g.h(a, b).jet(s);
    for (int i = 0; i < lm.n; ++i)
        for (int a = 0; a < lm.m; ++a) lm.N[i][a] = N(i, a).is_zero() ? Jet2() : N(i, a).jet(s);
    return lm;
}

LocalMetric local_metric(const Geometry& geo, const Site& s) { return local_metric(geo.metric, geo.nconn, s); }

double volume_density(const LocalMetric& lm) {
    std::vector<double> g(static_cast<std::size_t>(lm.n * lm.n)), h(static_cast<std::size_t>(lm.m * lm.m));
    for (int i = 0; i < lm.n; ++i)
        for (int j = 0; j < lm.n; ++j) g[static_cast<std::size_t>(i * lm.n + j)] = lm.g[i][j].v;
    for (int a = 0; a < lm.m; ++a)
        for (int b = 0; b < lm.m; ++b) h[static_cast<std::size_t>(a * lm.m + b)] = lm.h[a][b].v;
    const double dg = small_det(g, lm.n), dh = small_det(h, lm.m);
    if (dg < 0.0) throw SignatureError("negative determinant of the h-block");
    if (dh < 0.0) throw SignatureError("negative determinant of the v-block");
    return std::sqrt(dg) * std::sqrt(dh);
}

LocalMetric rescale(const LocalMetric& lm, const Jet2& phi) {
    Jet2 w = exp(2.0 * phi);
    LocalMetric out = lm;
    for (int i = 0; i < lm.n; ++i)
        for (int j = 0; j < lm.n; ++j) out.g[i][j] = w * lm.g[i][j];
    for (int a = 0; a < lm.m; ++a)
        for (int b = 0; b < lm.m; ++b) out.h[a][b] = w * lm.h[a][b];
    return out;
}

Arr2<Jet> invert(const Arr2<Jet>& A, int k) {
    // values by Gauss-Jordan, gradients from d(A^-1) = -A^-1 dA A^-1
    double a[kMaxDim][2 * kMaxDim] = {};
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) a[i][j] = A[i][j].v;
        a[i][k + i] = 1.0;
    }
    for (int c = 0; c < k; ++c) {
        int p = c;
        for (int r = c + 1; r < k; ++r)
            if (std::fabs(a[r][c]) > std::fabs(a[p][c])) p = r;
        if (std::fabs(a[p][c]) < 1e-300) throw DegenerateMetricError("singular metric block");
        if (p != c)
            for (int j = 0; j < 2 * k; ++j) std::swap(a[p][j], a[c][j]);
        const double piv = a[c][c];
        for (int j = 0; j < 2 * k; ++j) a[c][j] /= piv;
        for (int r = 0; r < k; ++r) {
            if (r == c || a[r][c] == 0.0) continue;
            const double f = a[r][c];
            for (int j = 0; j < 2 * k; ++j) a[r][j] -= f * a[c][j];
        }
    }
    Arr2<Jet> inv{};
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) inv[i][j].v = a[i][k + j];
    for (int d = 0; d < kMaxDim; ++d) {
        // T = A^-1 dA
        double T[kMaxDim][kMaxDim] = {};
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                double s = 0.0;
                for (int l = 0; l < k; ++l) s += inv[i][l].v * A[l][j].d[d];
                T[i][j] = s;
            }
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) {
                double s = 0.0;
                for (int l = 0; l < k; ++l) s += T[i][l] * inv[l][j].v;
                inv[i][j].d[d] = -s;
            }
    }
    return inv;
}

PointGeometry::PointGeometry(const LocalMetric& lm) : n_(lm.n), m_(lm.m), lm_(lm) {
    const int n = n_, m = m_;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g_[i][j] = lm.g[i][j].jet();
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) h_[a][b] = lm.h[a][b].jet();
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) N_[i][a] = lm.N[i][a].jet();
    gi_ = invert(g_, n);
    hi_ = invert(h_, m);
    for (int a = 0; a < m; ++a)
        for (int i = 0; i < n; ++i)
            for (int b = 0; b < m; ++b) dN_[a][i][b] = lm.N[i][b].partial(n + a);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < m; ++a) {
                if (i == j) continue;
                Jet om = lm.N[i][a].partial(j) - lm.N[j][a].partial(i);
                for (int b = 0; b < m; ++b) {
                    om.fma(N_[i][b], dN_[b][j][a]);
                    om -= N_[j][b] * dN_[b][i][a];
                }
                Om_[i][j][a] = om;
            }
}

double PointGeometry::G(int a, int b) const {
    if (a < n_ && b < n_) return g_[a][b].v;
    if (a >= n_ && b >= n_) return h_[a - n_][b - n_].v;
    return 0.0;
}

double PointGeometry::Ginv(int a, int b) const {
    if (a < n_ && b < n_) return gi_[a][b].v;
    if (a >= n_ && b >= n_) return hi_[a - n_][b - n_].v;
    return 0.0;
}

double PointGeometry::W(int c, int a, int b) const {
    if (c < n_) return 0.0;
    const int cc = c - n_;
    if (a < n_ && b < n_) return Om_[a][b][cc].v;
    if (a < n_ && b >= n_) return dN_[b - n_][a][cc].v;
    if (a >= n_ && b < n_) return -dN_[a - n_][b][cc].v;
    return 0.0;
}

Jet PointGeometry::frame_jet(int alpha, const Jet2& F) const {
    Jet r = F.partial(alpha);
    if (alpha < n_)
        for (int a = 0; a < m_; ++a) r -= N_[alpha][a] * F.partial(n_ + a);
    return r;
}

double PointGeometry::frame_value(int alpha, const Jet& X) const {
    double r = X.d[alpha];
    if (alpha < n_)
        for (int a = 0; a < m_; ++a) r -= N_[alpha][a].v * X.d[n_ + a];
    return r;
}

const FrameTable& PointGeometry::canonical() const {
    if (can_) return *can_;
    auto T = std::make_unique<FrameTable>();
    FrameTable& G = *T;
    const int n = n_, m = m_, D = n + m;
    Arr3<Jet> eg{}, eh{};  // eg[alpha][i][j] = e_alpha g_ij
    for (int al = 0; al < D; ++al) {
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) eg[al][i][j] = eg[al][j][i] = frame_jet(al, lm_.g[i][j]);
        for (int a = 0; a < m; ++a)
            for (int b = a; b < m; ++b) eh[al][a][b] = eh[al][b][a] = frame_jet(al, lm_.h[a][b]);
    }
    // L^i_jk
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            Jet low[kMaxDim];
            for (int r = 0; r < n; ++r) low[r] = eg[k][j][r] + eg[j][k][r] - eg[r][j][k];
            for (int i = 0; i < n; ++i) {
                Jet s;
                for (int r = 0; r < n; ++r) s.fma(gi_[i][r], low[r]);
                G[i][j][k] = 0.5 * s;
            }
        }
    // L^a_bk
    for (int b = 0; b < m; ++b)
        for (int k = 0; k < n; ++k) {
            Jet low[kMaxDim];
            for (int c = 0; c < m; ++c) {
                Jet t = eh[k][b][c];
                for (int d = 0; d < m; ++d) {
                    t -= h_[d][c] * dN_[b][k][d];
                    t -= h_[d][b] * dN_[c][k][d];
                }
                low[c] = t;
            }
            for (int a = 0; a < m; ++a) {
                Jet s;
                for (int c = 0; c < m; ++c) s.fma(hi_[a][c], low[c]);
                G[n + a][n + b][k] = dN_[b][k][a] + 0.5 * s;
            }
        }
    // C^i_jc
    for (int j = 0; j < n; ++j)
        for (int c = 0; c < m; ++c)
            for (int i = 0; i < n; ++i) {
                Jet s;
                for (int k = 0; k < n; ++k) s.fma(gi_[i][k], eg[n + c][j][k]);
                G[i][j][n + c] = 0.5 * s;
            }
    // C^a_bc
    for (int b = 0; b < m; ++b)
        for (int c = 0; c < m; ++c) {
            Jet low[kMaxDim];
            for (int d = 0; d < m; ++d) low[d] = eh[n + c][b][d] + eh[n + b][c][d] - eh[n + d][b][c];
            for (int a = 0; a < m; ++a) {
                Jet s;
                for (int d = 0; d < m; ++d) s.fma(hi_[a][d], low[d]);
                G[n + a][n + b][n + c] = 0.5 * s;
            }
        }
    can_ = std::move(T);
    return *can_;
}

const Arr2<Jet2>& PointGeometry::coordinate_metric() const {
    if (Gc_) return *Gc_;
    auto P = std::make_unique<Arr2<Jet2>>();
    Arr2<Jet2>& G = *P;
    const int n = n_, m = m_;
    Arr2<Jet2> Nh{};  // N_i^b h_ba
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) {
            Jet2 s;
            for (int b = 0; b < m; ++b) s = s + lm_.N[i][b] * lm_.h[b][a];
            Nh[i][a] = s;
        }
    for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
            Jet2 s = lm_.g[i][j];
            for (int a = 0; a < m; ++a) s = s + Nh[i][a] * lm_.N[j][a];
            G[i][j] = G[j][i] = s;
        }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) G[i][n + a] = G[n + a][i] = Nh[i][a];
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) G[n + a][n + b] = lm_.h[a][b];
    Gc_ = std::move(P);
    return *Gc_;
}

const FrameTable& PointGeometry::coordinate_christoffel() const {
    if (coord_) return *coord_;
    const Arr2<Jet2>& G = coordinate_metric();
    const int D = dim();
    Arr2<Jet> Gj{};
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) Gj[a][b] = G[a][b].jet();
    Arr2<Jet> Gi = invert(Gj, D);
    auto T = std::make_unique<FrameTable>();
    for (int l = 0; l < D; ++l)
        for (int nu = l; nu < D; ++nu) {
            Jet low[kMaxDim];
            for (int r = 0; r < D; ++r) low[r] = G[r][nu].partial(l) + G[r][l].partial(nu) - G[l][nu].partial(r);
            for (int mu = 0; mu < D; ++mu) {
                Jet s;
                for (int r = 0; r < D; ++r) s.fma(Gi[mu][r], low[r]);
                (*T)[mu][l][nu] = (*T)[mu][nu][l] = 0.5 * s;
            }
        }
    coord_ = std::move(T);
    return *coord_;
}

const FrameTable& PointGeometry::levi_civita() const {
    if (lc_) return *lc_;
    const FrameTable& Gc = coordinate_christoffel();
    const int n = n_, m = m_, D = n + m;
    // vielbein E_alpha^mu, its partials, and the coframe theta^gamma_mu
    Arr2<Jet> E{}, th{};
    Arr3<Jet> dE{};  // dE[nu][alpha][mu]
    for (int a = 0; a < D; ++a) {
        E[a][a] = Jet(1.0);
        th[a][a] = Jet(1.0);
    }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a) {
            E[i][n + a] = -N_[i][a];
            th[n + a][i] = N_[i][a];
            for (int nu = 0; nu < D; ++nu) dE[nu][i][n + a] = -lm_.N[i][a].partial(nu);
        }
    auto T = std::make_unique<FrameTable>();
    for (int al = 0; al < D; ++al)
        for (int be = 0; be < D; ++be) {
            // v^mu = E_be^nu d_nu E_al^mu + E_be^nu E_al^la Gc^mu_{la nu}
            Jet v[kMaxDim];
            for (int mu = 0; mu < D; ++mu) {
                Jet s;
                for (int nu = 0; nu < D; ++nu) {
                    if (E[be][nu].v == 0.0 && E[be][nu].d == std::array<double, kMaxDim>{}) continue;
                    Jet inner = dE[nu][al][mu];
                    for (int la = 0; la < D; ++la) {
                        if (E[al][la].v == 0.0 && E[al][la].d == std::array<double, kMaxDim>{}) continue;
                        inner.fma(E[al][la], Gc[mu][la][nu]);
                    }
                    s.fma(E[be][nu], inner);
                }
                v[mu] = s;
            }
            for (int ga = 0; ga < D; ++ga) {
                Jet s;
                for (int mu = 0; mu < D; ++mu) s.fma(th[ga][mu], v[mu]);
                (*T)[ga][al][be] = s;
            }
        }
    lc_ = std::move(T);
    return *lc_;
}

Curvature frame_curvature(const PointGeometry& pg, const FrameTable& G) {
    const int D = pg.dim();
    Curvature out;
    // eG[d][a][b][c] = e_d Gamma^a_{bc}
    Table4 eG{};
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c) {
                const Jet& x = G[a][b][c];
                for (int d = 0; d < D; ++d) eG[d][a][b][c] = pg.frame_value(d, x);
            }
    Table3 Wt{};
    for (int c = 0; c < D; ++c)
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b) Wt[c][a][b] = pg.W(c, a, b);
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c)
                for (int d = c + 1; d < D; ++d) {
                    double r = eG[d][a][b][c] - eG[c][a][b][d];
                    for (int mu = 0; mu < D; ++mu) {
                        r += G[mu][b][c].v * G[a][mu][d].v - G[mu][b][d].v * G[a][mu][c].v;
                        r -= Wt[mu][d][c] * G[a][b][mu].v;
                    }
                    out.R[a][b][c][d] = r;
                    out.R[a][b][d][c] = -r;
                }
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) {
            double s = 0.0;
            for (int t = 0; t < D; ++t) s += out.R[t][a][b][t];
            out.Ric[a][b] = s;
        }
    double s = 0.0;
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) s += pg.Ginv(a, b) * out.Ric[a][b];
    out.sR = s;
    return out;
}

const Curvature& PointGeometry::curvature(ConnectionKind k) const {
    auto& slot = k == ConnectionKind::Canonical ? curv_can_ : curv_lc_;
    if (!slot) slot = std::make_unique<Curvature>(frame_curvature(*this, connection(k)));
    return *slot;
}

Table4 PointGeometry::dcurvature_blocks() const {
    const FrameTable& G = canonical();
    const int n = n_, m = m_;
    Table4 R{};
    auto L = [&](int a, int b, int c) -> const Jet& { return G[a][b][c]; };
    auto e = [&](int al, const Jet& x) { return frame_value(al, x); };
    // T^b_ak = d_a N_k^b - L^b_ak  (a, b v-indices from 0)
    auto Tv = [&](int b, int a, int k) { return dN_[a][k][b].v - G[n + b][n + a][k].v; };
    auto put = [&](int a, int b, int c, int d, double v) {
        R[a][b][c][d] = v;
        R[a][b][d][c] = -v;
    };
    // R^i_hjk
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < n; ++h)
            for (int j = 0; j < n; ++j)
                for (int k = j + 1; k < n; ++k) {
                    double r = e(k, L(i, h, j)) - e(j, L(i, h, k));
                    for (int q = 0; q < n; ++q) r += L(q, h, j).v * L(i, q, k).v - L(q, h, k).v * L(i, q, j).v;
                    for (int a = 0; a < m; ++a) r -= L(i, h, n + a).v * Om_[k][j][a].v;
                    put(i, h, j, k, r);
                }
    // R^a_bjk
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int j = 0; j < n; ++j)
                for (int k = j + 1; k < n; ++k) {
                    double r = e(k, L(n + a, n + b, j)) - e(j, L(n + a, n + b, k));
                    for (int c = 0; c < m; ++c)
                        r += L(n + c, n + b, j).v * L(n + a, n + c, k).v - L(n + c, n + b, k).v * L(n + a, n + c, j).v;
                    for (int c = 0; c < m; ++c) r -= L(n + a, n + b, n + c).v * Om_[k][j][c].v;
                    put(n + a, n + b, j, k, r);
                }
    // R^i_jka = e_a L^i_jk - D_k C^i_ja + C^i_jb T^b_ak
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k)
                for (int a = 0; a < m; ++a) {
                    double DkC = e(k, L(i, j, n + a));
                    for (int p = 0; p < n; ++p) DkC += L(i, p, k).v * L(p, j, n + a).v - L(p, j, k).v * L(i, p, n + a).v;
                    for (int c = 0; c < m; ++c) DkC -= L(n + c, n + a, k).v * L(i, j, n + c).v;
                    double r = e(n + a, L(i, j, k)) - DkC;
                    for (int b = 0; b < m; ++b) r += L(i, j, n + b).v * Tv(b, a, k);
                    put(i, j, k, n + a, r);
                }
    // R^c_bka = e_a L^c_bk - D_k C^c_ba + C^c_bd T^d_ak
    for (int c = 0; c < m; ++c)
        for (int b = 0; b < m; ++b)
            for (int k = 0; k < n; ++k)
                for (int a = 0; a < m; ++a) {
                    double DkC = e(k, L(n + c, n + b, n + a));
                    for (int d = 0; d < m; ++d) {
                        DkC += L(n + c, n + d, k).v * L(n + d, n + b, n + a).v;
                        DkC -= L(n + d, n + b, k).v * L(n + c, n + d, n + a).v;
                        DkC -= L(n + d, n + a, k).v * L(n + c, n + b, n + d).v;
                    }
                    double r = e(n + a, L(n + c, n + b, k)) - DkC;
                    for (int d = 0; d < m; ++d) r += L(n + c, n + b, n + d).v * Tv(d, a, k);
                    put(n + c, n + b, k, n + a, r);
                }
    // R^i_jbc
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int b = 0; b < m; ++b)
                for (int c = b + 1; c < m; ++c) {
                    double r = e(n + c, L(i, j, n + b)) - e(n + b, L(i, j, n + c));
                    for (int h = 0; h < n; ++h)
                        r += L(h, j, n + b).v * L(i, h, n + c).v - L(h, j, n + c).v * L(i, h, n + b).v;
                    put(i, j, n + b, n + c, r);
                }
    // R^a_bcd
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c)
                for (int d = c + 1; d < m; ++d) {
                    double r = e(n + d, L(n + a, n + b, n + c)) - e(n + c, L(n + a, n + b, n + d));
                    for (int q = 0; q < m; ++q)
                        r += L(n + q, n + b, n + c).v * L(n + a, n + q, n + d).v -
                             L(n + q, n + b, n + d).v * L(n + a, n + q, n + c).v;
                    put(n + a, n + b, n + c, n + d, r);
                }
    return R;
}

Table3 PointGeometry::torsion() const {
    const FrameTable& G = canonical();
    const int n = n_, m = m_;
    Table3 T{};
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) T[i][j][k] = G[i][j][k].v - G[i][k][j].v;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int a = 0; a < m; ++a) {
                T[i][j][n + a] = G[i][j][n + a].v;
                T[i][n + a][j] = -G[i][j][n + a].v;
            }
    for (int a = 0; a < m; ++a)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) T[n + a][i][j] = Om_[i][j][a].v;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int i = 0; i < n; ++i) {
                double t = dN_[b][i][a].v - G[n + a][n + b][i].v;
                T[n + a][n + b][i] = t;
                T[n + a][i][n + b] = -t;
            }
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c) T[n + a][n + b][n + c] = G[n + a][n + b][n + c].v - G[n + a][n + c][n + b].v;
    return T;
}

Distortion PointGeometry::distortion() const {
    const FrameTable& C = canonical();
    const int n = n_, m = m_;
    Distortion out;
    auto& Z = out.Z;
    for (int i = 0; i < n; ++i)
        for (int h = 0; h < n; ++h)
            for (int j = 0; j < n; ++j)
                for (int k = 0; k < n; ++k)
                    out.Xi[i][h][j][k] = 0.5 * ((i == j && h == k ? 1.0 : 0.0) - g_[j][k].v * gi_[i][h].v);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int c = 0; c < m; ++c)
                for (int d = 0; d < m; ++d) {
                    double dd = (a == c && b == d) ? 1.0 : 0.0;
                    out.Xi_plus[a][b][c][d] = 0.5 * (dd + h_[c][d].v * hi_[a][b].v);
                    out.Xi_minus[a][b][c][d] = 0.5 * (dd - h_[c][d].v * hi_[a][b].v);
                }
    // oL^c_aj = L^c_aj - e_a N_j^c
    for (int c = 0; c < m; ++c)
        for (int a = 0; a < m; ++a)
            for (int j = 0; j < n; ++j) out.oL[c][a][j] = C[n + c][n + a][j].v - dN_[a][j][c].v;
    // Xi^{ih}_{jk} C^j_hb
    Table3 XiC{};  // [i][k][b]
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int b = 0; b < m; ++b) {
                double s = 0.0;
                for (int j = 0; j < n; ++j)
                    for (int h = 0; h < n; ++h) s += out.Xi[i][h][j][k] * C[j][h][n + b].v;
                XiC[i][k][b] = s;
            }
    // (1/2) Omega_jk^c h_cb g^ji
    Table3 Oh{};  // [i][k][b]
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int b = 0; b < m; ++b) {
                double s = 0.0;
                for (int j = 0; j < n; ++j)
                    for (int c = 0; c < m; ++c) s += Om_[j][k][c].v * h_[c][b].v * gi_[j][i].v;
                Oh[i][k][b] = 0.5 * s;
            }
    // Z^a_jk = -C^i_jb g_ik h^ab - (1/2) Omega_jk^a
    for (int a = 0; a < m; ++a)
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    for (int b = 0; b < m; ++b) s += C[i][j][n + b].v * g_[i][k].v * hi_[a][b].v;
                Z[n + a][j][k] = -s - 0.5 * Om_[j][k][a].v;
            }
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k)
            for (int b = 0; b < m; ++b) {
                // (D_{e_k} e_b)^i and (D_{e_b} e_k)^i
                Z[i][n + b][k] = Oh[i][k][b] - XiC[i][k][b] + C[i][k][n + b].v;
                Z[i][k][n + b] = Oh[i][k][b] + XiC[i][k][b];
            }
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b)
            for (int k = 0; k < n; ++k) {
                double zm = 0.0, zp = 0.0;
                for (int c = 0; c < m; ++c)
                    for (int d = 0; d < m; ++d) {
                        zm += out.Xi_minus[a][d][c][b] * out.oL[c][d][k];
                        zp += out.Xi_plus[a][d][c][b] * out.oL[c][d][k];
                    }
                Z[n + a][n + b][k] = zm;   // Z^a_bk
                Z[n + a][k][n + b] = zp;   // Z^a_kb
            }
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
                double s = 0.0;
                for (int j = 0; j < n; ++j)
                    for (int c = 0; c < m; ++c)
                        s += gi_[i][j].v * (out.oL[c][a][j] * h_[c][b].v + out.oL[c][b][j] * h_[c][a].v);
                Z[i][n + a][n + b] = -0.5 * s;
            }
    return out;
}

Table4 PointGeometry::lowered_riemann(ConnectionKind k) const {
    const Curvature& c = curvature(k);
    const int D = dim();
    Table4 L{};
    for (int mu = 0; mu < D; ++mu)
        for (int nu = 0; nu < D; ++nu)
            for (int la = 0; la < D; ++la)
                for (int ga = 0; ga < D; ++ga) {
                    double s = 0.0;
                    for (int r = 0; r < D; ++r) s += G(mu, r) * c.R[r][nu][la][ga];
                    L[mu][nu][la][ga] = s;
                }
    return L;
}

Table4 PointGeometry::weyl(ConnectionKind k) const {
    if (dim() != 4) throw DimensionError("Weyl tensor display requires n + m = 4");
    const Curvature& c = curvature(k);
    Table4 L = lowered_riemann(k);
    const int D = 4;
    Table4 W{};
    for (int mu = 0; mu < D; ++mu)
        for (int nu = 0; nu < D; ++nu)
            for (int la = 0; la < D; ++la)
                for (int ga = 0; ga < D; ++ga) {
                    const auto& R = c.Ric;
                    double v = L[mu][nu][la][ga];
                    v += 0.5 * (R[mu][la] * G(nu, ga) - R[nu][la] * G(mu, ga) - R[mu][ga] * G(nu, la) + R[nu][ga] * G(mu, la));
                    v -= (G(mu, la) * G(nu, ga) - G(nu, la) * G(mu, ga)) * c.sR / 6.0;
                    W[mu][nu][la][ga] = v;
                }
    return W;
}

namespace {

// sign of the permutation p of 0..3, 0 if not a permutation
int perm_sign(const int p[4]) {
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (p[i] == p[j]) return 0;
    int s = 1;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j)
            if (p[i] > p[j]) s = -s;
    return s;
}

// sum_{mnlg} A_{mnlg} B^{mnlg} with all indices of B raised
double contract_full(const PointGeometry& pg, const Table4& A, const Table4& B) {
    const int D = pg.dim();
    Table4 t = B, u{};
    for (int slot = 0; slot < 4; ++slot) {
        u = Table4{};
        for (int a = 0; a < D; ++a)
            for (int b = 0; b < D; ++b)
                for (int c = 0; c < D; ++c)
                    for (int d = 0; d < D; ++d) {
                        int idx[4] = {a, b, c, d};
                        double s = 0.0;
                        for (int r = 0; r < D; ++r) {
                            int j[4] = {a, b, c, d};
                            j[slot] = r;
                            s += pg.Ginv(idx[slot], r) * t[j[0]][j[1]][j[2]][j[3]];
                        }
                        u[a][b][c][d] = s;
                    }
        t = u;
    }
    double s = 0.0;
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c)
                for (int d = 0; d < D; ++d) s += A[a][b][c][d] * t[a][b][c][d];
    return s;
}

}  // namespace

double PointGeometry::gauss_bonnet(ConnectionKind k) const {
    if (dim() != 4) throw DimensionError("Chern-Gauss-Bonnet density requires n + m = 4");
    const Curvature& c = curvature(k);
    // R^{rs}_{mn} = g^{sl} R^r_{lmn}
    Table4 U{};
    for (int r = 0; r < 4; ++r)
        for (int s = 0; s < 4; ++s)
            for (int mu = 0; mu < 4; ++mu)
                for (int nu = 0; nu < 4; ++nu) {
                    double v = 0.0;
                    for (int l = 0; l < 4; ++l) v += Ginv(s, l) * c.R[r][l][mu][nu];
                    U[r][s][mu][nu] = v;
                }
    std::vector<std::array<int, 5>> perms;  // 4 indices + sign
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            for (int cc = 0; cc < 4; ++cc)
                for (int d = 0; d < 4; ++d) {
                    int p[4] = {a, b, cc, d};
                    int s = perm_sign(p);
                    if (s != 0) perms.push_back({a, b, cc, d, s});
                }
    double total = 0.0;
    for (const auto& up : perms)
        for (const auto& lo : perms)
            total += up[4] * lo[4] * U[lo[0]][lo[1]][up[0]][up[1]] * U[lo[2]][lo[3]][up[2]][up[3]];
    return 0.25 * total;
}

double PointGeometry::weyl_squared(ConnectionKind k) const {
    Table4 W = weyl(k);
    return contract_full(*this, W, W);
}

double PointGeometry::riemann_squared(ConnectionKind k) const {
    Table4 L = lowered_riemann(k);
    return contract_full(*this, L, L);
}

double PointGeometry::ricci_squared(ConnectionKind k) const {
    const auto& R = curvature(k).Ric;
    const int D = dim();
    double s = 0.0;
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c)
                for (int d = 0; d < D; ++d) s += Ginv(a, c) * Ginv(b, d) * R[a][b] * R[c][d];
    return s;
}

std::array<double, kMaxDim> PointGeometry::gradient(const Jet2& f) const {
    std::array<double, kMaxDim> out{};
    for (int a = 0; a < dim(); ++a) out[a] = frame_jet(a, f).v;
    return out;
}

Arr2<double> PointGeometry::hessian(ConnectionKind k, const Jet2& f) const {
    const FrameTable& G = connection(k);
    const int D = dim();
    std::array<Jet, kMaxDim> ef{};
    for (int a = 0; a < D; ++a) ef[a] = frame_jet(a, f);
    Arr2<double> H{};
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b) {
            double v = frame_value(a, ef[b]);
            for (int c = 0; c < D; ++c) v -= G[c][b][a].v * ef[c].v;
            H[a][b] = v;
        }
    return H;
}

double PointGeometry::grad_squared(const Jet2& f) const {
    auto g = gradient(f);
    double s = 0.0;
    for (int a = 0; a < dim(); ++a)
        for (int b = 0; b < dim(); ++b) s += Ginv(a, b) * g[a] * g[b];
    return s;
}

double PointGeometry::conformal_scalar(ConnectionKind k, const Jet2& phi) const {
    const double sR = curvature(k).sR;
    Arr2<double> H = hessian(k, phi);
    auto g = gradient(phi);
    double s = 0.0;
    for (int a = 0; a < dim(); ++a)
        for (int b = 0; b < dim(); ++b) s += Ginv(a, b) * (H[a][b] + H[b][a] + 2.0 * g[a] * g[b]);
    return std::exp(-2.0 * phi.v) * (sR - 3.0 * s);
}

double PointGeometry::metricity_residual(ConnectionKind k) const {
    const FrameTable& Gm = connection(k);
    const int D = dim();
    double worst = 0.0;
    for (int a = 0; a < D; ++a)
        for (int b = 0; b < D; ++b)
            for (int c = 0; c < D; ++c) {
                double eG = 0.0;
                if (a < n_ && b < n_) eG = frame_value(c, g_[a][b]);
                else if (a >= n_ && b >= n_) eG = frame_value(c, h_[a - n_][b - n_]);
                double r = eG;
                for (int mu = 0; mu < D; ++mu) r -= Gm[mu][a][c].v * G(mu, b) + Gm[mu][b][c].v * G(a, mu);
                worst = std::max(worst, std::fabs(r));
            }
    return worst;
}

}  // namespace nhrf
