#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "nhrf/expr.hpp"
#include "nhrf/jet.hpp"

namespace nhrf {

struct Axis {
    std::string name;  // alias used in expressions besides x<i>/y<a>
    double lower = 0.0;
    double upper = 1.0;
    bool periodic = false;
    int samples = 32;     // grid nodes; also trapezoid nodes on periodic axes
    int quad_order = 24;  // Gauss-Legendre nodes on bounded axes (symbolic backend)
    // Polar axes cover [theta0, pi - theta0]; integrals are extrapolated to theta0 -> 0.
    bool polar = false;
    double theta0 = 0.05;
};

enum class Backend { Symbolic, Grid };

// Evaluation location. node >= 0 names a grid node of the owning chart.
struct Site {
    std::array<double, kMaxDim> u{};
    std::ptrdiff_t node = -1;
};

struct QuadNode {
    Site site;
    double weight = 0.0;
};

// Coordinate chart u = (x^1..x^n, y^1..y^m) with per-axis grid and quadrature data.
class Chart {
public:
    Chart(int n, int m, std::vector<Axis> axes);

    int n() const { return n_; }
    int m() const { return m_; }
    int dim() const { return n_ + m_; }
    const Axis& axis(int k) const { return axes_.at(static_cast<std::size_t>(k)); }
    const std::vector<Axis>& axes() const { return axes_; }
    double lower(int k) const;
    double upper(int k) const;

    // Canonical coordinate name of axis k: x1..xn then y1..ym (paper numbering of y continues after n).
    std::string coordinate_name(int k) const;
    // Symbol table with coordinates in slots 0..dim-1, axis aliases, the given parameters and pi.
    SymbolTable symbols(const std::vector<std::string>& parameters) const;

    // Grid nodes.
    std::size_t node_count() const { return node_count_; }
    const std::vector<double>& axis_nodes(int k) const { return nodes_.at(static_cast<std::size_t>(k)); }
    std::size_t stride(int k) const { return strides_.at(static_cast<std::size_t>(k)); }
    std::array<int, kMaxDim> multi_index(std::size_t node) const;
    Site node_site(std::size_t node) const;
    // Dense first-derivative matrix along axis k acting on grid samples (row-major N x N).
    const std::vector<double>& diff_matrix(int k) const { return diff_.at(static_cast<std::size_t>(k)); }
    // Apply the axis-k derivative to a full grid array.
    std::vector<double> differentiate(const std::vector<double>& samples, int k) const;

    // Quadrature nodes for the given backend; refine multiplies node counts per axis.
    std::vector<QuadNode> quadrature(Backend b, int refine = 1) const;

    bool has_polar_axis() const;
    // Copy with every polar band width multiplied by s.
    Chart with_band_scale(double s) const;

    bool same_grid(const Chart& o) const;

private:
    int n_, m_;
    std::vector<Axis> axes_;
    std::vector<std::vector<double>> nodes_;
    std::vector<std::vector<double>> grid_weights_;
    std::vector<std::vector<double>> diff_;
    std::vector<std::size_t> strides_;
    std::size_t node_count_ = 1;
};

using ChartPtr = std::shared_ptr<const Chart>;

// 1-D rules, exposed for tests.
void gauss_legendre(int q, double a, double b, std::vector<double>& x, std::vector<double>& w);
std::vector<double> fourier_diff_matrix(int N, double length);
std::vector<double> fd4_diff_matrix(int N, double h);

}  // namespace nhrf
