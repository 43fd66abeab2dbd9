#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace nhrf {

enum class Op { Number, Variable, Parameter, Add, Sub, Mul, Div, Pow, Neg, Sin, Cos, Exp, Log, Sqrt };

// Names of variables (coordinates) and constant parameters an expression may reference.
// Variables and parameters each get a dense slot index; aliases may share a slot.
class SymbolTable {
public:
    int add_variable(const std::string& name);
    void add_variable_alias(const std::string& alias, int slot);
    int add_parameter(const std::string& name);

    int variable_slot(const std::string& name) const;   // -1 if absent
    int parameter_slot(const std::string& name) const;  // -1 if absent
    int variable_count() const { return static_cast<int>(variables_.size()); }
    int parameter_count() const { return static_cast<int>(parameters_.size()); }
    const std::string& variable_name(int slot) const { return variables_.at(slot); }
    const std::string& parameter_name(int slot) const { return parameters_.at(slot); }

    // Parameter values in slot order; throws SymbolError on a missing name.
    std::vector<double> bind(const std::map<std::string, double>& values) const;

private:
    std::vector<std::string> variables_;
    std::vector<std::string> parameters_;
    std::map<std::string, int> var_lookup_;
    std::map<std::string, int> par_lookup_;
};

class Expr {
public:
    Expr();  // the number 0

    static Expr number(double v);
    static Expr variable(int slot, std::string name);
    static Expr parameter(int slot, std::string name);
    static Expr unary(Op op, Expr a);
    static Expr binary(Op op, Expr a, Expr b);

    Op op() const;
    double value() const;
    int slot() const;
    const std::string& name() const;
    const Expr& arg(int i) const;
    int arity() const;

    bool is_number() const { return op() == Op::Number; }
    bool is_number(double v) const { return op() == Op::Number && value() == v; }
    bool depends_on_variable(int slot) const;
    bool depends_on_any_variable() const;

    bool operator==(const Expr& o) const;  // structural
    bool operator!=(const Expr& o) const { return !(*this == o); }

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> n) : node_(std::move(n)) {}
    std::shared_ptr<const Node> node_;
};

// Simplifying constructors: constant folding plus 0/1 identities.
Expr operator+(const Expr& a, const Expr& b);
Expr operator-(const Expr& a, const Expr& b);
Expr operator*(const Expr& a, const Expr& b);
Expr operator/(const Expr& a, const Expr& b);
Expr operator-(const Expr& a);
Expr pow(const Expr& a, const Expr& p);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr exp(const Expr& a);
Expr log(const Expr& a);
Expr sqrt(const Expr& a);

Expr parse(const std::string& source, const SymbolTable& symbols);

Expr differentiate(const Expr& e, int variable_slot);
Expr simplify(const Expr& e);

// vars and params are indexed by SymbolTable slots.
double evaluate(const Expr& e, std::span<const double> vars, std::span<const double> params);
double evaluate(const Expr& e, const SymbolTable& symbols, const std::map<std::string, double>& point,
                const std::map<std::string, double>& params);

std::string to_string(const Expr& e);

}  // namespace nhrf
