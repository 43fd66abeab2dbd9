#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "nhrf/geometry.hpp"
#include "nhrf/jet.hpp"

namespace nhrf {

enum class ConnectionKind { Canonical, LeviCivita };
std::string to_string(ConnectionKind k);
ConnectionKind connection_from_string(const std::string& s);

template <class T>
using Arr2 = std::array<std::array<T, kMaxDim>, kMaxDim>;
template <class T>
using Arr3 = std::array<Arr2<T>, kMaxDim>;
template <class T>
using Arr4 = std::array<Arr3<T>, kMaxDim>;

// Connection coefficients in the N-adapted frame: G[c][a][b] = Gamma^c_{ab} = (D_{e_b} e_a)^c.
// Frame indices: h-indices 0..n-1, v-indices n..n+m-1.
using FrameTable = Arr3<Jet>;
using Table3 = Arr3<double>;
using Table4 = Arr4<double>;

// Jets of the d-metric blocks and N-connection at a site.
struct LocalMetric {
    int n = 0, m = 0;
    Arr2<Jet2> g{}, h{}, N{};  // g[i][j], h[a][b], N[i][a]
};

LocalMetric local_metric(const DMetric& g, const NConnection& N, const Site& s);
LocalMetric local_metric(const Geometry& geo, const Site& s);
// sqrt(det g) sqrt(det h) from the block values; SignatureError on a negative determinant.
double volume_density(const LocalMetric& lm);
// Jets of the conformally rescaled blocks e^{2 phi} g, e^{2 phi} h.
LocalMetric rescale(const LocalMetric& lm, const Jet2& phi);

struct Curvature {
    Table4 R{};      // R^a_{bcd} = (R(e_d, e_c) e_b)^a
    Arr2<double> Ric{};  // R_ab = R^t_{abt}
    double sR = 0.0;
};

struct Distortion {
    Table3 Z{};
    Arr4<double> Xi{};       // Xi^{ih}_{jk} as [i][h][j][k], h-indices
    Arr4<double> Xi_plus{};  // (+)Xi^{ab}_{cd} as [a][b][c][d], v-indices from 0
    Arr4<double> Xi_minus{};
    Table3 oL{};             // oL^c_{aj} as [c][a][j], c,a v-indices from 0
};

// All pointwise geometric objects at one site. Computed lazily and cached.
class PointGeometry {
public:
    explicit PointGeometry(const LocalMetric& lm);

    int n() const { return n_; }
    int m() const { return m_; }
    int dim() const { return n_ + m_; }

    // frame metric (block diagonal) and its inverse
    double G(int a, int b) const;
    double Ginv(int a, int b) const;
    const Jet& g(int i, int j) const { return g_[i][j]; }
    const Jet& h(int a, int b) const { return h_[a][b]; }
    const Jet& ginv(int i, int j) const { return gi_[i][j]; }
    const Jet& hinv(int a, int b) const { return hi_[a][b]; }
    const Jet& N(int i, int a) const { return N_[i][a]; }
    // d_a N_i^b as a jet (a, b v-indices from 0)
    const Jet& dN(int a, int i, int b) const { return dN_[a][i][b]; }
    const Jet& Omega(int i, int j, int a) const { return Om_[i][j][a]; }
    // [e_a, e_b] = W^c_{ab} e_c
    double W(int c, int a, int b) const;

    // e_alpha applied to a base-field jet, as a jet
    Jet frame_jet(int alpha, const Jet2& F) const;
    // e_alpha applied to a jet, value only
    double frame_value(int alpha, const Jet& X) const;

    const FrameTable& canonical() const;
    const FrameTable& levi_civita() const;
    const FrameTable& connection(ConnectionKind k) const {
        return k == ConnectionKind::Canonical ? canonical() : levi_civita();
    }
    // Coordinate-basis Christoffels of the assembled metric: Gc[mu][lambda][nu]
    const FrameTable& coordinate_christoffel() const;
    // Coordinate-basis metric jets G_{mu nu}
    const Arr2<Jet2>& coordinate_metric() const;

    const Curvature& curvature(ConnectionKind k) const;
    // Six d-curvature blocks from their explicit formulas (canonical connection), other entries zero.
    Table4 dcurvature_blocks() const;
    Table3 torsion() const;  // canonical d-torsion blocks, T[c][a][b] = T^c_{ab}
    Distortion distortion() const;

    // Lowered Riemann R_{mnlg} = G_{mr} R^r_{nlg}
    Table4 lowered_riemann(ConnectionKind k) const;
    Table4 weyl(ConnectionKind k) const;
    double gauss_bonnet(ConnectionKind k) const;
    // C_{mnlg} C^{mnlg}, Riem^2, Ric^2 (indices raised with the frame metric)
    double weyl_squared(ConnectionKind k) const;
    double riemann_squared(ConnectionKind k) const;
    double ricci_squared(ConnectionKind k) const;

    // Frame gradient e_a f and Hessian D_a D_b f = e_a e_b f - Gamma^c_{ba} e_c f
    std::array<double, kMaxDim> gradient(const Jet2& f) const;
    Arr2<double> hessian(ConnectionKind k, const Jet2& f) const;
    double grad_squared(const Jet2& f) const;
    // sR(e^{2 phi} g) from the conformal transformation law
    double conformal_scalar(ConnectionKind k, const Jet2& phi) const;

    // Metricity residual max |D_c g_ab| over blocks (d-connections) or the full frame metric.
    double metricity_residual(ConnectionKind k) const;

private:
    int n_, m_;
    LocalMetric lm_;
    Arr2<Jet> g_{}, h_{}, gi_{}, hi_{}, N_{};
    Arr3<Jet> dN_{}, Om_{};
    mutable std::unique_ptr<FrameTable> can_, lc_, coord_;
    mutable std::unique_ptr<Arr2<Jet2>> Gc_;
    mutable std::unique_ptr<Curvature> curv_can_, curv_lc_;
};

// Jet matrix inverse for the leading k x k block.
Arr2<Jet> invert(const Arr2<Jet>& A, int k);

// Generic frame curvature of a connection table.
Curvature frame_curvature(const PointGeometry& pg, const FrameTable& G);

// Coefficient table at a list of sites, for reports: name -> rows of (index tuple, values per site).
struct CoefficientTable {
    std::string name;
    std::vector<std::vector<int>> indices;  // 1-based index tuples
    std::vector<std::vector<double>> values;  // values[row][site]
};

}  // namespace nhrf
