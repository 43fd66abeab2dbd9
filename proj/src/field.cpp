#include "nhrf/field.hpp"

#include "nhrf/errors.hpp"

namespace nhrf {

struct Field::Sym {
    Expr e;
    ExprEnvPtr env;
    std::vector<Expr> d1;  // dim
    std::vector<Expr> d2;  // dim*dim, symmetric
};

struct Field::Grid {
    ChartPtr chart;
    std::vector<double> c;
    std::optional<Field> seed;
    std::vector<std::vector<double>> d1;  // dim arrays (empty = zero)
    std::vector<std::vector<double>> d2;  // dim*dim arrays (empty = zero)
    std::vector<Jet2> seed_jets;          // per node when seeded
};

namespace {

ExprEnvPtr default_env(int dim) {
    auto e = std::make_shared<ExprEnv>();
    e->dim = dim;
    e->params = {3.14159265358979323846};
    return e;
}

bool all_zero(const std::vector<double>& v) {
    for (double x : v)
        if (x != 0.0) return false;
    return true;
}

}  // namespace

Field::Field() {
    auto s = std::make_shared<Sym>();
    s->e = Expr::number(0.0);
    s->env = default_env(0);
    sym_ = std::move(s);
}

Field Field::constant(double v, int dim) { return symbolic(Expr::number(v), default_env(dim)); }

Field Field::symbolic(const Expr& e, ExprEnvPtr env) {
    if (!env) throw PreconditionError("symbolic field needs an environment");
    auto s = std::make_shared<Sym>();
    s->e = e;
    s->env = std::move(env);
    const int D = s->env->dim;
    s->d1.resize(static_cast<std::size_t>(D));
    s->d2.resize(static_cast<std::size_t>(D * D));
    for (int k = 0; k < D; ++k) s->d1[static_cast<std::size_t>(k)] = differentiate(e, k);
    for (int k = 0; k < D; ++k)
        for (int l = k; l < D; ++l) {
            Expr dd = differentiate(s->d1[static_cast<std::size_t>(k)], l);
            s->d2[static_cast<std::size_t>(k * D + l)] = dd;
            s->d2[static_cast<std::size_t>(l * D + k)] = dd;
        }
    Field f;
    f.sym_ = std::move(s);
    f.grid_.reset();
    return f;
}

Field Field::grid(ChartPtr chart, std::vector<double> samples, std::optional<Field> seed) {
    if (!chart) throw PreconditionError("grid field needs a chart");
    if (samples.size() != chart->node_count()) throw ShapeError("sample array shape does not match the chart grid");
    if (seed && !seed->is_symbolic()) throw PreconditionError("grid seed must be symbolic");
    auto g = std::make_shared<Grid>();
    g->chart = chart;
    g->c = std::move(samples);
    g->seed = std::move(seed);
    const int D = chart->dim();
    g->d1.resize(static_cast<std::size_t>(D));
    g->d2.resize(static_cast<std::size_t>(D * D));
    for (int k = 0; k < D; ++k) {
        auto d = chart->differentiate(g->c, k);
        if (!all_zero(d)) g->d1[static_cast<std::size_t>(k)] = std::move(d);
    }
    for (int k = 0; k < D; ++k) {
        const auto& dk = g->d1[static_cast<std::size_t>(k)];
        if (dk.empty()) continue;
        for (int l = k; l < D; ++l) {
            auto dd = chart->differentiate(dk, l);
            if (all_zero(dd)) continue;
            g->d2[static_cast<std::size_t>(k * D + l)] = dd;
            g->d2[static_cast<std::size_t>(l * D + k)] = std::move(dd);
        }
    }
    if (g->seed && !g->seed->is_zero()) {
        g->seed_jets.resize(chart->node_count());
        for (std::size_t i = 0; i < chart->node_count(); ++i) {
            Site s = chart->node_site(i);
            s.node = -1;
            g->seed_jets[i] = g->seed->jet(s);
        }
    }
    Field f;
    f.sym_.reset();
    f.grid_ = std::move(g);
    return f;
}

bool Field::is_zero() const { return sym_ && sym_->e.is_number(0.0); }

int Field::dim() const { return sym_ ? sym_->env->dim : grid_->chart->dim(); }

const Expr& Field::expr() const {
    if (!sym_) throw PreconditionError("field is not symbolic");
    return sym_->e;
}

const ExprEnvPtr& Field::env() const {
    if (!sym_) throw PreconditionError("field is not symbolic");
    return sym_->env;
}

ChartPtr Field::chart() const { return grid_ ? grid_->chart : nullptr; }

const std::vector<double>& Field::multiplier() const {
    if (!grid_) throw PreconditionError("field is not grid-backed");
    return grid_->c;
}

const std::optional<Field>& Field::seed() const {
    if (!grid_) throw PreconditionError("field is not grid-backed");
    return grid_->seed;
}

double Field::value(const Site& s) const {
    if (sym_) {
        if (sym_->e.is_number()) return sym_->e.value();
        return evaluate(sym_->e, std::span<const double>(s.u.data(), static_cast<std::size_t>(sym_->env->dim)),
                        sym_->env->params);
    }
    if (s.node < 0) throw PreconditionError("grid field evaluated away from a grid node");
    auto i = static_cast<std::size_t>(s.node);
    double c = grid_->c.at(i);
    if (!grid_->seed_jets.empty()) return grid_->seed_jets[i].v * c;
    if (grid_->seed) return grid_->seed->value(s) * c;
    return c;
}

Jet2 Field::jet(const Site& s) const {
    Jet2 r;
    if (sym_) {
        const int D = sym_->env->dim;
        std::span<const double> u(s.u.data(), static_cast<std::size_t>(D));
        const auto& p = sym_->env->params;
        auto ev = [&](const Expr& e) { return e.is_number() ? e.value() : evaluate(e, u, p); };
        r.v = ev(sym_->e);
        for (int k = 0; k < D; ++k) r.d[static_cast<std::size_t>(k)] = ev(sym_->d1[static_cast<std::size_t>(k)]);
        for (int k = 0; k < D; ++k)
            for (int l = k; l < D; ++l) {
                double v = ev(sym_->d2[static_cast<std::size_t>(k * D + l)]);
                r.h[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = v;
                r.h[static_cast<std::size_t>(l)][static_cast<std::size_t>(k)] = v;
            }
        return r;
    }
    if (s.node < 0) throw PreconditionError("grid field evaluated away from a grid node");
    const auto i = static_cast<std::size_t>(s.node);
    const int D = grid_->chart->dim();
    r.v = grid_->c.at(i);
    for (int k = 0; k < D; ++k) {
        const auto& dk = grid_->d1[static_cast<std::size_t>(k)];
        if (!dk.empty()) r.d[static_cast<std::size_t>(k)] = dk[i];
        for (int l = 0; l < D; ++l) {
            const auto& dd = grid_->d2[static_cast<std::size_t>(k * D + l)];
            if (!dd.empty()) r.h[static_cast<std::size_t>(k)][static_cast<std::size_t>(l)] = dd[i];
        }
    }
    if (!grid_->seed_jets.empty()) return grid_->seed_jets[i] * r;
    if (grid_->seed) return grid_->seed->jet(s) * r;
    return r;
}

std::vector<double> Field::node_values(const Chart& c) const {
    std::vector<double> out(c.node_count());
    if (grid_ && !grid_->chart->same_grid(c)) throw ShapeError("grid field sampled on a different chart");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(c.node_site(i));
    return out;
}

Field Field::partial(int k) const {
    if (is_zero()) return *this;
    if (sym_) return symbolic(sym_->d1.at(static_cast<std::size_t>(k)), sym_->env);
    const Chart& c = *grid_->chart;
    std::vector<double> v(c.node_count());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = jet(c.node_site(i)).d[static_cast<std::size_t>(k)];
    return grid(grid_->chart, std::move(v));
}

Field Field::to_grid(ChartPtr chart, bool seeded) const {
    if (grid_) {
        if (!grid_->chart->same_grid(*chart)) throw ShapeError("grid field moved to a different chart");
        return *this;
    }
    if (seeded) return grid(chart, std::vector<double>(chart->node_count(), 1.0), *this);
    return grid(chart, node_values(*chart));
}

// ---------------------------------------------------------------- arithmetic

namespace {

ChartPtr common_chart(const Field& a, const Field& b) {
    ChartPtr ca = a.chart(), cb = b.chart();
    if (ca && cb && !ca->same_grid(*cb)) throw ShapeError("fields live on different grids");
    return ca ? ca : cb;
}

// environment carrying the richer parameter binding
const ExprEnvPtr& pick_env(const Field& a, const Field& b) {
    const auto& ea = a.env();
    const auto& eb = b.env();
    if (eb->params.size() > ea->params.size() || eb->dim > ea->dim) return eb;
    return ea;
}

bool same_seed(const Field& a, const Field& b) {
    const auto& sa = a.seed();
    const auto& sb = b.seed();
    if (!sa && !sb) return true;
    if (sa && sb) return sa->expr() == sb->expr();
    return false;
}

}  // namespace

Field operator+(const Field& a, const Field& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.is_symbolic() && b.is_symbolic()) return Field::symbolic(a.expr() + b.expr(), pick_env(a, b));
    ChartPtr c = common_chart(a, b);
    if (a.is_grid() && b.is_grid() && same_seed(a, b)) {
        std::vector<double> v = a.multiplier();
        const auto& w = b.multiplier();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += w[i];
        return Field::grid(c, std::move(v), a.seed());
    }
    std::vector<double> v = a.node_values(*c);
    std::vector<double> w = b.node_values(*c);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += w[i];
    return Field::grid(c, std::move(v));
}

Field operator-(const Field& a) {
    if (a.is_symbolic()) return Field::symbolic(-a.expr(), a.env());
    std::vector<double> v = a.multiplier();
    for (double& x : v) x = -x;
    return Field::grid(a.chart(), std::move(v), a.seed());
}

Field operator-(const Field& a, const Field& b) {
    if (b.is_zero()) return a;
    return a + (-b);
}

Field operator*(const Field& a, const Field& b) {
    if (a.is_zero() || b.is_zero()) return Field::constant(0.0, a.dim());
    if (a.is_symbolic() && b.is_symbolic()) return Field::symbolic(a.expr() * b.expr(), pick_env(a, b));
    ChartPtr c = common_chart(a, b);
    if (a.is_symbolic() || b.is_symbolic()) {
        const Field& s = a.is_symbolic() ? a : b;
        const Field& g = a.is_symbolic() ? b : a;
        Field seed = g.seed() ? Field::symbolic(s.expr() * g.seed()->expr(), pick_env(s, *g.seed())) : s;
        return Field::grid(c, g.multiplier(), seed);
    }
    std::vector<double> v = a.multiplier();
    const auto& w = b.multiplier();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= w[i];
    std::optional<Field> seed;
    if (a.seed() && b.seed()) seed = Field::symbolic(a.seed()->expr() * b.seed()->expr(), pick_env(*a.seed(), *b.seed()));
    else if (a.seed()) seed = a.seed();
    else if (b.seed()) seed = b.seed();
    return Field::grid(c, std::move(v), seed);
}

Field operator*(double s, const Field& a) {
    if (a.is_symbolic()) return Field::symbolic(Expr::number(s) * a.expr(), a.env());
    std::vector<double> v = a.multiplier();
    for (double& x : v) x *= s;
    return Field::grid(a.chart(), std::move(v), a.seed());
}

}  // namespace nhrf
