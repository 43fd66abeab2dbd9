#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nhrf/connections.hpp"
#include "nhrf/expr.hpp"
#include "nhrf/geometry.hpp"

namespace nhrf {

// Positive function f(u), u >= 0, given as an expression in the variable u.
class TestingFunction {
public:
    explicit TestingFunction(const std::string& source);
    const std::string& source() const { return source_; }
    double operator()(double u) const;
    // k-th derivative at u = 0
    double derivative_at_zero(int k) const;

private:
    std::string source_;
    SymbolTable symbols_;
    Expr e_;
};

struct MomentTable {
    double f0 = 0.0;  // int f(u) u du
    double f2 = 0.0;  // int f(u) du
    std::vector<double> higher;  // f_(4), f_(6), ...: (-1)^k f^(k)(0)
    double f0_check = 0.0, f2_check = 0.0;  // second quadrature route
    double f0_error = 0.0, f2_error = 0.0;  // quadrature error estimates
    bool f0_divergent = false, f2_divergent = false;
    double f4() const { return higher.empty() ? 0.0 : higher[0]; }
    // throws NumericalError when a required moment diverged
    void require_finite() const;
};
// Moments up to f_(2 kmax + 4).
MomentTable moments(const TestingFunction& tf, int kmax = 0);

// Discrete symmetric operator on a periodic lattice.
struct LatticeOperator {
    Eigen::MatrixXd M;        // symmetrized
    double asymmetry = 0.0;   // |M - M^T|_F / |M|_F before symmetrization
    std::vector<int> axes;    // chart axes spanned by the lattice
    std::vector<double> eigenvalues() const;  // ascending
};

// Optional lower-order data and conformal factor of the operator.
struct OperatorTerms {
    std::vector<Field> A;  // A^nu in the N-adapted frame; empty means zero
    Field B;               // zero by default
    Field phi;             // conformal factor; zero by default
};

inline constexpr std::size_t kDenseLimit = 4096;

// -{ (1/2) g^{ab}(e_a e_b + e_b e_a) + A^n e_n + B } with the conformal transform applied when phi != 0,
// discretized with order-4 periodic stencils on the given axes (all axes when empty); the remaining
// coordinates are frozen at their lower bounds, which factors product geometries.
LatticeOperator assemble_operator(const Geometry& geo, const OperatorTerms& terms = {}, std::vector<int> axes = {});

// Known spectra: cubic flat tori and round 2-spheres, and their products.
struct SpectrumFactor {
    enum class Kind { Torus, Sphere } kind = Kind::Torus;
    int dim = 1;          // torus dimension (sphere: 2)
    double length = 2.0 * 3.14159265358979323846;  // torus side
    double radius = 1.0;  // sphere radius
    double volume() const;
    int dimension() const { return kind == Kind::Sphere ? 2 : dim; }
};
struct AnalyticSpectrum {
    std::vector<SpectrumFactor> factors;
    int dimension() const;
    double volume() const;
};

struct TraceResult {
    double value = 0.0;
    double tail_bound = 0.0;  // Weyl-density estimate of the truncated tail
    std::size_t levels = 0;
};
// sum over eigenvalues of f(lambda / Lambda^2)
TraceResult spectral_trace(const std::vector<double>& eigenvalues, const TestingFunction& tf, double Lambda);
TraceResult spectral_trace(const AnalyticSpectrum& spec, const TestingFunction& tf, double Lambda);
// eigenvalues of a sum operator on a product lattice: all pairwise sums
std::vector<double> product_spectrum(const std::vector<double>& a, const std::vector<double>& b);

enum class HeatKernelMode { Paper, Scalar };
std::string to_string(HeatKernelMode m);
HeatKernelMode heat_kernel_mode_from_string(const std::string& s);

struct HeatKernelEstimate {
    double value = 0.0;
    // scalar mode: coefficients of Lambda^4, Lambda^2, Lambda^0; paper mode: the three literal terms
    std::array<double, 3> terms{};
    double I0 = 0.0, I2 = 0.0, I4 = 0.0;  // geometric integrals used
};
HeatKernelEstimate heat_kernel_estimate(const Geometry& geo, ConnectionKind k, const Field& phi, const MomentTable& mom,
                                        double Lambda, HeatKernelMode mode);

// (Lambda^2 / 16 pi^2) rank int (-sR/6) dV
double seeley_dewitt_a2(const Geometry& geo, ConnectionKind k, double Lambda, int rank = 1);

// Heat-trace model a/t + b + c t + d t^2 fitted by least squares.
struct HeatTraceFit {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
};
HeatTraceFit fit_heat_trace(const std::vector<double>& t, const std::vector<double>& trace);

struct SpectralSeries {
    std::string scenario_hash;
    std::vector<double> Lambda;
    std::vector<double> values;
};
struct GeometricSeries {
    std::string scenario_hash;
    std::vector<double> Lambda;
    std::vector<double> values;
    std::array<double, 3> coefficients{};  // Lambda^4, Lambda^2, Lambda^0
};
struct ComparisonRow {
    double Lambda, spectral, geometric, rel_error;
};
struct Comparison {
    std::vector<ComparisonRow> rows;
    std::array<double, 3> fitted{};  // c4, c2, c0 fitted to the spectral values
    std::array<double, 3> geometric{};
    std::array<double, 3> coefficient_rel_error{};
};
Comparison spectral_vs_geometric(const SpectralSeries& s, const GeometricSeries& g);
std::string comparison_csv(const Comparison& c);

}  // namespace nhrf
