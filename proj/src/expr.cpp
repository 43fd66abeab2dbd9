#include "nhrf/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "nhrf/errors.hpp"

namespace nhrf {

// ---------------------------------------------------------------- symbols

int SymbolTable::add_variable(const std::string& name) {
    auto it = var_lookup_.find(name);
    if (it != var_lookup_.end()) return it->second;
    if (par_lookup_.count(name)) throw SymbolError("name already used by a parameter", name);
    int slot = static_cast<int>(variables_.size());
    variables_.push_back(name);
    var_lookup_[name] = slot;
    return slot;
}

void SymbolTable::add_variable_alias(const std::string& alias, int slot) {
    if (slot < 0 || slot >= variable_count()) throw SymbolError("alias to unknown slot", alias);
    auto it = var_lookup_.find(alias);
    if (it != var_lookup_.end() && it->second != slot) throw SymbolError("conflicting variable alias", alias);
    if (par_lookup_.count(alias)) throw SymbolError("name already used by a parameter", alias);
    var_lookup_[alias] = slot;
}

int SymbolTable::add_parameter(const std::string& name) {
    auto it = par_lookup_.find(name);
    if (it != par_lookup_.end()) return it->second;
    if (var_lookup_.count(name)) throw SymbolError("name already used by a coordinate", name);
    int slot = static_cast<int>(parameters_.size());
    parameters_.push_back(name);
    par_lookup_[name] = slot;
    return slot;
}

int SymbolTable::variable_slot(const std::string& name) const {
    auto it = var_lookup_.find(name);
    return it == var_lookup_.end() ? -1 : it->second;
}

int SymbolTable::parameter_slot(const std::string& name) const {
    auto it = par_lookup_.find(name);
    return it == par_lookup_.end() ? -1 : it->second;
}

std::vector<double> SymbolTable::bind(const std::map<std::string, double>& values) const {
    std::vector<double> out(parameters_.size());
    for (std::size_t i = 0; i < parameters_.size(); ++i) {
        auto it = values.find(parameters_[i]);
        if (it == values.end()) throw SymbolError("unbound parameter", parameters_[i]);
        out[i] = it->second;
    }
    return out;
}

// ---------------------------------------------------------------- nodes

struct Expr::Node {
    Op op = Op::Number;
    double value = 0.0;
    int slot = -1;
    std::string name;
    std::vector<Expr> args;
};

Expr::Expr() : Expr(number(0.0)) {}

Expr Expr::number(double v) {
    auto n = std::make_shared<Node>();
    n->op = Op::Number;
    n->value = v;
    return Expr(std::move(n));
}

Expr Expr::variable(int slot, std::string name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Variable;
    n->slot = slot;
    n->name = std::move(name);
    return Expr(std::move(n));
}

Expr Expr::parameter(int slot, std::string name) {
    auto n = std::make_shared<Node>();
    n->op = Op::Parameter;
    n->slot = slot;
    n->name = std::move(name);
    return Expr(std::move(n));
}

Expr Expr::unary(Op op, Expr a) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = {std::move(a)};
    return Expr(std::move(n));
}

Expr Expr::binary(Op op, Expr a, Expr b) {
    auto n = std::make_shared<Node>();
    n->op = op;
    n->args = {std::move(a), std::move(b)};
    return Expr(std::move(n));
}

Op Expr::op() const { return node_->op; }
double Expr::value() const { return node_->value; }
int Expr::slot() const { return node_->slot; }
const std::string& Expr::name() const { return node_->name; }
const Expr& Expr::arg(int i) const { return node_->args.at(static_cast<std::size_t>(i)); }
int Expr::arity() const { return static_cast<int>(node_->args.size()); }

bool Expr::depends_on_variable(int slot) const {
    if (op() == Op::Variable) return node_->slot == slot;
    for (const auto& a : node_->args)
        if (a.depends_on_variable(slot)) return true;
    return false;
}

bool Expr::depends_on_any_variable() const {
    if (op() == Op::Variable) return true;
    for (const auto& a : node_->args)
        if (a.depends_on_any_variable()) return true;
    return false;
}

bool Expr::operator==(const Expr& o) const {
    if (node_ == o.node_) return true;
    if (op() != o.op()) return false;
    switch (op()) {
        case Op::Number: return value() == o.value();
        case Op::Variable:
        case Op::Parameter: return slot() == o.slot() && name() == o.name();
        default: break;
    }
    if (arity() != o.arity()) return false;
    for (int i = 0; i < arity(); ++i)
        if (arg(i) != o.arg(i)) return false;
    return true;
}

// ---------------------------------------------------------------- simplifying constructors

namespace {

double apply_unary(Op op, double x) {
    switch (op) {
        case Op::Neg: return -x;
        case Op::Sin: return std::sin(x);
        case Op::Cos: return std::cos(x);
        case Op::Exp: return std::exp(x);
        case Op::Log: return std::log(x);
        case Op::Sqrt: return std::sqrt(x);
        default: return x;
    }
}

bool unary_defined(Op op, double x) {
    if (op == Op::Log) return x > 0.0;
    if (op == Op::Sqrt) return x >= 0.0;
    return true;
}

bool pow_defined(double b, double p) {
    if (b < 0.0 && p != std::floor(p)) return false;
    if (b == 0.0 && p < 0.0) return false;
    return true;
}

Expr fold_unary(Op op, const Expr& a) {
    if (a.is_number() && unary_defined(op, a.value())) {
        double v = apply_unary(op, a.value());
        if (std::isfinite(v)) return Expr::number(v);
    }
    return Expr::unary(op, a);
}

}  // namespace

Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_number() && b.is_number()) return Expr::number(a.value() + b.value());
    if (a.is_number(0.0)) return b;
    if (b.is_number(0.0)) return a;
    return Expr::binary(Op::Add, a, b);
}

Expr operator-(const Expr& a, const Expr& b) {
    if (a.is_number() && b.is_number()) return Expr::number(a.value() - b.value());
    if (b.is_number(0.0)) return a;
    if (a.is_number(0.0)) return -b;
    return Expr::binary(Op::Sub, a, b);
}

Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_number() && b.is_number()) return Expr::number(a.value() * b.value());
    if (a.is_number(0.0) || b.is_number(0.0)) return Expr::number(0.0);
    if (a.is_number(1.0)) return b;
    if (b.is_number(1.0)) return a;
    if (a.is_number(-1.0)) return -b;
    if (b.is_number(-1.0)) return -a;
    return Expr::binary(Op::Mul, a, b);
}

Expr operator/(const Expr& a, const Expr& b) {
    if (a.is_number() && b.is_number() && b.value() != 0.0) return Expr::number(a.value() / b.value());
    if (a.is_number(0.0) && !b.is_number(0.0)) return Expr::number(0.0);
    if (b.is_number(1.0)) return a;
    return Expr::binary(Op::Div, a, b);
}

Expr operator-(const Expr& a) {
    if (a.is_number()) return Expr::number(-a.value());
    if (a.op() == Op::Neg) return a.arg(0);
    return Expr::unary(Op::Neg, a);
}

Expr pow(const Expr& a, const Expr& p) {
    if (p.is_number(0.0)) return Expr::number(1.0);
    if (p.is_number(1.0)) return a;
    if (a.is_number() && p.is_number() && pow_defined(a.value(), p.value())) {
        double v = std::pow(a.value(), p.value());
        if (std::isfinite(v)) return Expr::number(v);
    }
    return Expr::binary(Op::Pow, a, p);
}

Expr sin(const Expr& a) { return fold_unary(Op::Sin, a); }
Expr cos(const Expr& a) { return fold_unary(Op::Cos, a); }
Expr exp(const Expr& a) { return fold_unary(Op::Exp, a); }
Expr log(const Expr& a) { return fold_unary(Op::Log, a); }
Expr sqrt(const Expr& a) { return fold_unary(Op::Sqrt, a); }

Expr simplify(const Expr& e) {
    switch (e.op()) {
        case Op::Number:
        case Op::Variable:
        case Op::Parameter: return e;
        case Op::Add: return simplify(e.arg(0)) + simplify(e.arg(1));
        case Op::Sub: return simplify(e.arg(0)) - simplify(e.arg(1));
        case Op::Mul: return simplify(e.arg(0)) * simplify(e.arg(1));
        case Op::Div: return simplify(e.arg(0)) / simplify(e.arg(1));
        case Op::Pow: return pow(simplify(e.arg(0)), simplify(e.arg(1)));
        case Op::Neg: return -simplify(e.arg(0));
        default: return fold_unary(e.op(), simplify(e.arg(0)));
    }
}

// ---------------------------------------------------------------- parser

namespace {

class Parser {
public:
    Parser(const std::string& s, const SymbolTable& t) : src_(s), syms_(t) {}

    Expr run() {
        skip_ws();
        if (pos_ >= src_.size()) fail("empty expression");
        Expr e = expression();
        skip_ws();
        if (pos_ < src_.size()) fail(std::string("unexpected '") + src_[pos_] + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError("syntax error: " + msg, pos_ + 1); }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expression() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) lhs = Expr::binary(Op::Add, lhs, term());
            else if (accept('-')) lhs = Expr::binary(Op::Sub, lhs, term());
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = Expr::binary(Op::Mul, lhs, unary());
            else if (accept('/')) lhs = Expr::binary(Op::Div, lhs, unary());
            else return lhs;
        }
    }

    static Expr negate(const Expr& e) {
        // a negated literal is stored as a negative number so printing round-trips
        if (e.is_number()) return Expr::number(-e.value());
        return Expr::unary(Op::Neg, e);
    }

    Expr unary() {
        if (accept('-')) return negate(unary());
        if (accept('+')) return unary();
        return power();
    }

    Expr power() {
        Expr base = primary();
        for (;;) {
            skip_ws();
            if (pos_ < src_.size() && src_[pos_] == '^') {
                ++pos_;
                std::size_t at = pos_;
                Expr p = exponent();
                if (p.depends_on_any_variable())
                    throw ParseError("syntax error: exponent must be constant", at + 1);
                base = Expr::binary(Op::Pow, base, p);
            } else {
                return base;
            }
        }
    }

    Expr exponent() {
        if (accept('-')) return negate(exponent());
        if (accept('+')) return exponent();
        return primary();
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expression();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        fail(std::string("unexpected '") + c + "'");
    }

    Expr number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string text = src_.substr(start, pos_ - start);
        if (text == ".") {
            pos_ = start;
            fail("malformed number");
        }
        return Expr::number(std::strtod(text.c_str(), nullptr));
    }

    Expr identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string id = src_.substr(start, pos_ - start);
        static const std::map<std::string, Op> funcs = {
            {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}, {"log", Op::Log}, {"sqrt", Op::Sqrt}};
        auto f = funcs.find(id);
        if (f != funcs.end()) {
            if (!accept('(')) fail("expected '(' after " + id);
            skip_ws();
            if (pos_ < src_.size() && src_[pos_] == ')')
                throw ArityError(id + " expects 1 argument, got 0 at offset " + std::to_string(pos_ + 1));
            Expr a = expression();
            int count = 1;
            while (accept(',')) {
                expression();
                ++count;
            }
            if (count != 1)
                throw ArityError(id + " expects 1 argument, got " + std::to_string(count));
            if (!accept(')')) fail("expected ')'");
            return Expr::unary(f->second, a);
        }
        int vs = syms_.variable_slot(id);
        if (vs >= 0) return Expr::variable(vs, syms_.variable_name(vs));
        int ps = syms_.parameter_slot(id);
        if (ps >= 0) return Expr::parameter(ps, id);
        throw SymbolError("unknown symbol", id);
    }

    const std::string& src_;
    const SymbolTable& syms_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse(const std::string& source, const SymbolTable& symbols) { return Parser(source, symbols).run(); }

// ---------------------------------------------------------------- calculus

Expr differentiate(const Expr& e, int s) {
    switch (e.op()) {
        case Op::Number:
        case Op::Parameter: return Expr::number(0.0);
        case Op::Variable: return Expr::number(e.slot() == s ? 1.0 : 0.0);
        default: break;
    }
    if (!e.depends_on_variable(s)) return Expr::number(0.0);
    const Expr& a = e.arg(0);
    switch (e.op()) {
        case Op::Add: return differentiate(a, s) + differentiate(e.arg(1), s);
        case Op::Sub: return differentiate(a, s) - differentiate(e.arg(1), s);
        case Op::Mul: {
            const Expr& b = e.arg(1);
            return differentiate(a, s) * b + a * differentiate(b, s);
        }
        case Op::Div: {
            const Expr& b = e.arg(1);
            Expr da = differentiate(a, s), db = differentiate(b, s);
            if (db.is_number(0.0)) return da / b;
            return (da * b - a * db) / pow(b, Expr::number(2.0));
        }
        case Op::Pow: {
            const Expr& p = e.arg(1);
            return p * pow(a, p - Expr::number(1.0)) * differentiate(a, s);
        }
        case Op::Neg: return -differentiate(a, s);
        case Op::Sin: return cos(a) * differentiate(a, s);
        case Op::Cos: return -(sin(a) * differentiate(a, s));
        case Op::Exp: return exp(a) * differentiate(a, s);
        case Op::Log: return differentiate(a, s) / a;
        case Op::Sqrt: return differentiate(a, s) / (Expr::number(2.0) * sqrt(a));
        default: return Expr::number(0.0);
    }
}

double evaluate(const Expr& e, std::span<const double> vars, std::span<const double> params) {
    switch (e.op()) {
        case Op::Number: return e.value();
        case Op::Variable:
            if (e.slot() < 0 || static_cast<std::size_t>(e.slot()) >= vars.size())
                throw SymbolError("unbound coordinate", e.name());
            return vars[static_cast<std::size_t>(e.slot())];
        case Op::Parameter:
            if (e.slot() < 0 || static_cast<std::size_t>(e.slot()) >= params.size())
                throw SymbolError("unbound parameter", e.name());
            return params[static_cast<std::size_t>(e.slot())];
        default: break;
    }
    double x = evaluate(e.arg(0), vars, params);
    switch (e.op()) {
        case Op::Add: return x + evaluate(e.arg(1), vars, params);
        case Op::Sub: return x - evaluate(e.arg(1), vars, params);
        case Op::Mul: return x * evaluate(e.arg(1), vars, params);
        case Op::Div: {
            double y = evaluate(e.arg(1), vars, params);
            if (y == 0.0) throw DomainError("division by zero", to_string(e));
            return x / y;
        }
        case Op::Pow: {
            double p = evaluate(e.arg(1), vars, params);
            if (!pow_defined(x, p)) throw DomainError("power outside its domain", to_string(e));
            if (p == 2.0) return x * x;
            return std::pow(x, p);
        }
        case Op::Log:
            if (!(x > 0.0)) throw DomainError("log of nonpositive value", to_string(e));
            return std::log(x);
        case Op::Sqrt:
            if (!(x >= 0.0)) throw DomainError("sqrt of negative value", to_string(e));
            return std::sqrt(x);
        default: return apply_unary(e.op(), x);
    }
}

double evaluate(const Expr& e, const SymbolTable& symbols, const std::map<std::string, double>& point,
                const std::map<std::string, double>& params) {
    std::vector<double> vars(static_cast<std::size_t>(symbols.variable_count()),
                             std::numeric_limits<double>::quiet_NaN());
    std::vector<bool> bound(vars.size(), false);
    for (const auto& [name, v] : point) {
        int s = symbols.variable_slot(name);
        if (s < 0) throw SymbolError("unknown coordinate", name);
        vars[static_cast<std::size_t>(s)] = v;
        bound[static_cast<std::size_t>(s)] = true;
    }
    for (int s = 0; s < symbols.variable_count(); ++s)
        if (!bound[static_cast<std::size_t>(s)] && e.depends_on_variable(s))
            throw SymbolError("unbound coordinate", symbols.variable_name(s));
    std::vector<double> pv(static_cast<std::size_t>(symbols.parameter_count()), 0.0);
    for (int s = 0; s < symbols.parameter_count(); ++s) {
        auto it = params.find(symbols.parameter_name(s));
        if (it != params.end()) pv[static_cast<std::size_t>(s)] = it->second;
    }
    // report only parameters the expression actually uses
    struct Check {
        static void run(const Expr& x, const std::map<std::string, double>& p) {
            if (x.op() == Op::Parameter && !p.count(x.name())) throw SymbolError("unbound parameter", x.name());
            for (int i = 0; i < x.arity(); ++i) run(x.arg(i), p);
        }
    };
    Check::run(e, params);
    return evaluate(e, vars, pv);
}

// ---------------------------------------------------------------- printing

namespace {

int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Number: return e.value() < 0.0 || std::signbit(e.value()) ? 3 : 5;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", std::fabs(v));
    // shortest representation that survives the round trip
    for (int prec = 1; prec <= 17; ++prec) {
        char tmp[40];
        std::snprintf(tmp, sizeof tmp, "%.*g", prec, std::fabs(v));
        if (std::strtod(tmp, nullptr) == std::fabs(v)) {
            std::snprintf(buf, sizeof buf, "%s", tmp);
            break;
        }
    }
    std::string s = buf;
    if (std::signbit(v)) s = "(-" + s + ")";
    return s;
}

void print(const Expr& e, std::string& out);

void print_wrapped(const Expr& e, bool wrap, std::string& out) {
    if (wrap) out += '(';
    print(e, out);
    if (wrap) out += ')';
}

void print(const Expr& e, std::string& out) {
    switch (e.op()) {
        case Op::Number: out += format_number(e.value()); return;
        case Op::Variable:
        case Op::Parameter: out += e.name(); return;
        case Op::Neg:
            out += '-';
            print_wrapped(e.arg(0), precedence(e.arg(0)) < 3 || e.arg(0).is_number(), out);
            return;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div: {
            int p = precedence(e);
            // negative literals print parenthesized already
            print_wrapped(e.arg(0), precedence(e.arg(0)) < p && !e.arg(0).is_number(), out);
            static const char* sym[] = {" + ", " - ", "*", "/"};
            out += sym[static_cast<int>(e.op()) - static_cast<int>(Op::Add)];
            print_wrapped(e.arg(1), precedence(e.arg(1)) <= p && !e.arg(1).is_number(), out);
            return;
        }
        case Op::Pow: {
            const Expr& b = e.arg(0);
            print_wrapped(b, precedence(b) < 4 && !b.is_number(), out);
            out += '^';
            const Expr& x = e.arg(1);
            bool atom = x.op() == Op::Variable || x.op() == Op::Parameter || (x.is_number() && !std::signbit(x.value()));
            print_wrapped(x, !atom && !x.is_number(), out);
            return;
        }
        default: {
            static const char* names[] = {"sin", "cos", "exp", "log", "sqrt"};
            out += names[static_cast<int>(e.op()) - static_cast<int>(Op::Sin)];
            out += '(';
            print(e.arg(0), out);
            out += ')';
            return;
        }
    }
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

}  // namespace nhrf
