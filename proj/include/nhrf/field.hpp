#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "nhrf/chart.hpp"
#include "nhrf/expr.hpp"
#include "nhrf/jet.hpp"

namespace nhrf {

// Parameter values for symbolic fields, in SymbolTable slot order.
struct ExprEnv {
    int dim = 0;
    std::vector<double> params;
};
using ExprEnvPtr = std::shared_ptr<const ExprEnv>;

// Scalar field on a chart. Symbolic fields hold an expression with exact derivatives;
// grid fields hold samples c at the chart nodes, optionally multiplied by a symbolic seed
// s(u) so that the field is s*c and derivatives follow the product rule.
class Field {
public:
    Field();  // symbolic zero
    static Field constant(double v, int dim);
    static Field symbolic(const Expr& e, ExprEnvPtr env);
    static Field grid(ChartPtr chart, std::vector<double> samples, std::optional<Field> seed = std::nullopt);

    bool is_symbolic() const { return sym_ != nullptr; }
    bool is_grid() const { return grid_ != nullptr; }
    bool is_zero() const;  // symbolic literal zero
    int dim() const;

    const Expr& expr() const;
    const ExprEnvPtr& env() const;
    ChartPtr chart() const;
    const std::vector<double>& multiplier() const;  // grid samples c
    const std::optional<Field>& seed() const;

    double value(const Site& s) const;
    Jet2 jet(const Site& s) const;
    // Values at every node of the chart.
    std::vector<double> node_values(const Chart& c) const;

    // Symbolic partial derivative or grid derivative field.
    Field partial(int k) const;

    // Grid field with the same values at the chart nodes (symbolic fields become seeds).
    Field to_grid(ChartPtr chart, bool seeded) const;

private:
    struct Sym;
    struct Grid;
    std::shared_ptr<const Sym> sym_;
    std::shared_ptr<const Grid> grid_;
};

Field operator+(const Field& a, const Field& b);
Field operator-(const Field& a, const Field& b);
Field operator*(const Field& a, const Field& b);
Field operator-(const Field& a);
Field operator*(double s, const Field& a);

}  // namespace nhrf
