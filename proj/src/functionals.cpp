#include "nhrf/functionals.hpp"

#include <cmath>
#include <numbers>
#include <tuple>

#include "nhrf/errors.hpp"

namespace nhrf {

namespace {

// X = Ric + Hess(psi) on one block; returns (|X|^2, tr X) with the block's inverse metric.
std::pair<double, double> block_norm(const PointGeometry& pg, const Arr2<double>& Ric, const Arr2<double>& H, int lo, int hi) {
    double sq = 0.0, tr = 0.0;
    for (int i = lo; i < hi; ++i)
        for (int j = lo; j < hi; ++j) {
            const double xij = Ric[i][j] + H[i][j];
            tr += pg.Ginv(i, j) * xij;
            for (int k = lo; k < hi; ++k)
                for (int l = lo; l < hi; ++l) sq += pg.Ginv(i, k) * pg.Ginv(j, l) * xij * (Ric[k][l] + H[k][l]);
        }
    return {sq, tr};
}

}  // namespace

FunctionalEvaluator::FunctionalEvaluator(const Geometry& geo, ConnectionKind k, const Field& psi, bool check_resolution)
    : n_(geo.n()), m_(geo.m()), kind_(k) {
    for (const QuadNode& q : integration_nodes(*geo.chart, geo.backend)) {
        LocalMetric lm = local_metric(geo, q.site);
        PointGeometry pg(lm);
        const Jet2 p = psi.jet(q.site);
        SiteData s{};
        s.w = q.weight * volume_density(lm);
        s.psi = p.v;
        const Curvature& c = pg.curvature(k);
        s.sR = c.sR;
        s.grad2 = pg.grad_squared(p);
        s.Qs = pg.conformal_scalar(k, -0.5 * p);
        s.Gs = 3.0 * std::exp(p.v) * s.grad2;
        const Arr2<double> H = pg.hessian(k, p);
        std::tie(s.Xh2, s.trXh) = block_norm(pg, c.Ric, H, 0, n_);
        std::tie(s.Xv2, s.trXv) = block_norm(pg, c.Ric, H, n_, n_ + m_);
        for (double v : {s.sR, s.Qs, s.Gs, s.Xh2, s.Xv2})
            if (!std::isfinite(v)) throw NumericalError("non-finite functional integrand");
        mass_ += s.w * std::exp(-s.psi);
        sites_.push_back(s);
    }
    if (!(mass_ > 0.0) || !std::isfinite(mass_)) throw NumericalError("e^{-psi} is not integrable on the chart");
    if (check_resolution && geo.backend == Backend::Symbolic) {
        double fine = 0.0;
        for (const QuadNode& q : integration_nodes(*geo.chart, geo.backend, true, 2)) {
            LocalMetric lm = local_metric(geo, q.site);
            fine += q.weight * volume_density(lm) * std::exp(-psi.value(q.site));
        }
        mass_rel_change_ = std::fabs(fine - mass_) / std::fabs(fine);
        resolved_ = mass_rel_change_ <= 1e-6;
    }
}

double FunctionalEvaluator::f0(double chi) const {
    if (!(chi > 0.0)) throw PreconditionError("chi must be positive");
    return std::log(mass_) - 0.5 * dim() * std::log(4.0 * std::numbers::pi * chi);
}

double FunctionalEvaluator::log_partition(double chi) const {
    const double f = f0(chi);
    const double E = std::exp(-f) * std::pow(4.0 * std::numbers::pi * chi, -0.5 * dim());
    double s = 0.0;
    for (const auto& p : sites_) s += p.w * E * std::exp(-p.psi) * (-p.psi - f + 0.5 * dim());
    return s;
}

FunctionalReport FunctionalEvaluator::report(double chi) const {
    FunctionalReport r;
    r.chi = chi;
    r.f0 = f0(chi);
    r.connection = kind_;
    r.mass_rel_change = mass_rel_change_;
    r.resolved = resolved_;
    const double D = dim();
    const double ef0 = std::exp(r.f0);
    const double E = std::exp(-r.f0) * std::pow(4.0 * std::numbers::pi * chi, -0.5 * D);
    for (const auto& p : sites_) {
        const double emp = std::exp(-p.psi);
        const double mu = p.w * E * emp;
        const double f = p.psi + r.f0;
        const double spec = ef0 * (p.Qs + p.Gs);
        const double stdt = p.sR + p.grad2;
        r.mu_mass += mu;
        r.F_spectral += p.w * emp * (p.Qs + p.Gs);
        r.F_standard += p.w * emp / ef0 * stdt;
        r.W_spectral += mu * (chi * spec + f - D);
        r.W_standard += mu * (chi * stdt + f - D);
        r.energy_spectral += mu * (spec - D / (2.0 * chi));
        r.energy_standard += mu * (stdt - D / (2.0 * chi));
        r.entropy_spectral += mu * (chi * ef0 * (p.Qs - p.Gs) + f - D);
        r.log_partition += mu * (-f + 0.5 * D);
        r.fluctuation += mu * (p.Xh2 - p.trXh / chi + n_ / (4.0 * chi * chi) + p.Xv2 - p.trXv / chi +
                               m_ / (4.0 * chi * chi));
    }
    r.energy_spectral *= -chi * chi;
    r.energy_standard *= -chi * chi;
    r.entropy_spectral = -r.entropy_spectral;
    r.entropy_standard = -r.W_standard;
    r.fluctuation *= 2.0 * chi * chi;
    return r;
}

FunctionalContext normalize_context(const FunctionalContext& raw) {
    if (!(raw.chi > 0.0)) throw PreconditionError("chi must be positive");
    FunctionalEvaluator ev(raw.geo, raw.connection, raw.psi);
    FunctionalContext out = raw;
    out.f0 = ev.f0(raw.chi);
    out.normalized = true;
    out.mass_rel_change = ev.mass_rel_change();
    out.resolved = ev.resolved();
    return out;
}

FunctionalReport evaluate_functionals(const FunctionalContext& ctx) {
    if (!(ctx.chi > 0.0)) throw PreconditionError("chi must be positive");
    FunctionalEvaluator ev(ctx.geo, ctx.connection, ctx.psi);
    return ev.report(ctx.chi);
}

double perelman_F(const FunctionalContext& ctx, FunctionalForm form) {
    auto r = evaluate_functionals(ctx);
    return form == FunctionalForm::Spectral ? r.F_spectral : r.F_standard;
}

double perelman_W(const FunctionalContext& ctx, FunctionalForm form) {
    auto r = evaluate_functionals(ctx);
    return form == FunctionalForm::Spectral ? r.W_spectral : r.W_standard;
}

double average_energy(const FunctionalContext& ctx, FunctionalForm form) {
    auto r = evaluate_functionals(ctx);
    return form == FunctionalForm::Spectral ? r.energy_spectral : r.energy_standard;
}

double entropy(const FunctionalContext& ctx, FunctionalForm form) {
    auto r = evaluate_functionals(ctx);
    return form == FunctionalForm::Spectral ? r.entropy_spectral : r.entropy_standard;
}

double log_partition(const FunctionalContext& ctx) { return evaluate_functionals(ctx).log_partition; }

double fluctuation(const FunctionalContext& ctx) { return evaluate_functionals(ctx).fluctuation; }

std::vector<double> chi_family(double lo, double hi, int count) {
    if (!(lo > 0.0) || !(hi > lo) || count < 2) throw PreconditionError("thermodynamic family needs 0 < lo < hi and at least two points");
    std::vector<double> out(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (count - 1);
    return out;
}

std::vector<ThermoRow> thermo_consistency(const FunctionalEvaluator& ev, const std::vector<double>& chis) {
    if (chis.size() < 2) throw PreconditionError("thermodynamic family needs at least two chi values");
    bool distinct = false;
    for (double c : chis)
        if (c != chis.front()) distinct = true;
    if (!distinct) throw PreconditionError("degenerate chi interval");
    std::vector<ThermoRow> out;
    for (double chi : chis) {
        const double h = 1e-4 * chi;
        if (!(h > 0.0) || chi - h == chi) throw NumericalError("differentiation step underflow");
        FunctionalReport r = ev.report(chi);
        ThermoRow row;
        row.chi = chi;
        row.energy = r.energy_standard;
        row.entropy = r.entropy_standard;
        row.log_partition = r.log_partition;
        row.fluctuation = r.fluctuation;
        const double dlogZ = (ev.log_partition(chi + h) - ev.log_partition(chi - h)) / (2.0 * h);
        row.chi2_dlogZ = chi * chi * dlogZ;
        row.residual_energy = std::fabs(row.energy - row.chi2_dlogZ);
        row.residual_entropy = std::fabs(row.entropy - (row.energy / chi + row.log_partition));
        const double beta = 1.0 / chi, hb = 1e-4 * beta;
        row.d2logZ_dbeta2 = (ev.log_partition(1.0 / (beta + hb)) - 2.0 * r.log_partition + ev.log_partition(1.0 / (beta - hb))) /
                            (hb * hb);
        out.push_back(row);
    }
    return out;
}

}  // namespace nhrf
