#pragma once

#include <functional>
#include <vector>

#include "nhrf/chart.hpp"
#include "nhrf/field.hpp"

namespace nhrf {

// Symmetric matrix of fields in packed upper-triangular storage.
class SymFieldMatrix {
public:
    SymFieldMatrix() = default;
    explicit SymFieldMatrix(int size, int dim);
    int size() const { return size_; }
    const Field& operator()(int i, int j) const { return data_[index(i, j)]; }
    void set(int i, int j, Field f) { data_[index(i, j)] = std::move(f); }

private:
    std::size_t index(int i, int j) const;
    int size_ = 0;
    std::vector<Field> data_;
};

// d-metric: h-block g_ij (n x n) and v-block h_ab (m x m), both indexed from 0.
struct DMetric {
    SymFieldMatrix g;
    SymFieldMatrix h;
    int n() const { return g.size(); }
    int m() const { return h.size(); }
};

// N-connection coefficients N_i^a with i in [0,n), a in [0,m).
class NConnection {
public:
    NConnection() = default;
    NConnection(int n, int m, int dim);
    int n() const { return n_; }
    int m() const { return m_; }
    const Field& operator()(int i, int a) const { return N_[static_cast<std::size_t>(i * m_ + a)]; }
    void set(int i, int a, Field f) { N_[static_cast<std::size_t>(i * m_ + a)] = std::move(f); }
    bool is_zero() const;

private:
    int n_ = 0, m_ = 0;
    std::vector<Field> N_;
};

// Full coordinate-basis metric g_{alpha beta}, alpha in [0, n+m).
struct OffDiagonalMetric {
    int n = 0, m = 0;
    SymFieldMatrix G;
};

// W_ia^b = d_a N_i^b and Omega_ij^a, stored as fields.
class AnholonomyData {
public:
    AnholonomyData(int n, int m) : n_(n), m_(m), W_(static_cast<std::size_t>(n * m * m)), Om_(static_cast<std::size_t>(n * n * m)) {}
    int n() const { return n_; }
    int m() const { return m_; }
    const Field& W(int i, int a, int b) const { return W_[static_cast<std::size_t>((i * m_ + a) * m_ + b)]; }
    const Field& Omega(int i, int j, int a) const { return Om_[static_cast<std::size_t>((i * n_ + j) * m_ + a)]; }
    void set_W(int i, int a, int b, Field f) { W_[static_cast<std::size_t>((i * m_ + a) * m_ + b)] = std::move(f); }
    void set_Omega(int i, int j, int a, Field f) { Om_[static_cast<std::size_t>((i * n_ + j) * m_ + a)] = std::move(f); }

private:
    int n_, m_;
    std::vector<Field> W_;
    std::vector<Field> Om_;
};

// A chart together with a d-metric and an N-connection.
struct Geometry {
    ChartPtr chart;
    Backend backend = Backend::Symbolic;
    DMetric metric;
    NConnection nconn;
    int n() const { return chart->n(); }
    int m() const { return chart->m(); }
    int dim() const { return chart->dim(); }
};

OffDiagonalMetric assemble_offdiagonal(const DMetric& g, const NConnection& N);
// Recovers the d-metric relative to N; checks nondegeneracy at the given sites.
DMetric split_dmetric(const OffDiagonalMetric& G, const NConnection& N, const std::vector<Site>& check_sites);
// e_alpha f with alpha in [0, n+m).
Field frame_apply(const NConnection& N, const Field& f, int alpha);
AnholonomyData anholonomy(const NConnection& N);
// sqrt(det g) sqrt(det h); throws SignatureError if a determinant is negative at a check site.
Field volume_element(const DMetric& g, const std::vector<Site>& check_sites);

// Sites where invariants are enforced for a geometry's backend.
std::vector<Site> check_sites(const Geometry& geo);

struct Integral {
    double value = 0.0;
    double rel_change = 0.0;   // |I(2q) - I(q)| / |I(2q)| when checked
    bool checked = false;
    bool resolved = true;
};

struct IntegrateOptions {
    bool check_resolution = false;
    bool extrapolate_poles = true;  // polar axes, symbolic backend
    double tolerance = 1e-6;
};

// Quadrature nodes for integrals; on polar symbolic charts the pole-band Richardson combination is
// folded into the weights (nodes of both band widths appear).
std::vector<QuadNode> integration_nodes(const Chart& chart, Backend b, bool extrapolate_poles = true, int refine = 1);

// Integral of a pointwise function against the coordinate measure du (no volume element).
Integral integrate_sites(const Chart& chart, Backend b, const std::function<double(const Site&)>& f,
                         const IntegrateOptions& opt = {});
// Integral of f against the volume element of g.
Integral integrate(const Field& f, const Geometry& geo, const IntegrateOptions& opt = {});

// Determinant of a small dense matrix (row-major), by LU with partial pivoting.
double small_det(std::vector<double> a, int n);

}  // namespace nhrf
