#pragma once

#include <string>
#include <vector>

#include "nhrf/connections.hpp"
#include "nhrf/geometry.hpp"

namespace nhrf {

enum class FunctionalForm { Spectral, Standard };

// f = psi + f0 with f0 fixed by the mu-normalization.
struct FunctionalContext {
    Geometry geo;
    ConnectionKind connection = ConnectionKind::Canonical;
    Field psi;
    double chi = 1.0;
    double f0 = 0.0;
    bool normalized = false;
    double mass_rel_change = 0.0;  // change of the e^{-psi} mass under node doubling (symbolic backend)
    bool resolved = true;
};

struct FunctionalReport {
    double chi = 0.0;
    double f0 = 0.0;
    double F_spectral = 0.0, F_standard = 0.0;
    double W_spectral = 0.0, W_standard = 0.0;
    double energy_spectral = 0.0, energy_standard = 0.0;
    double entropy_spectral = 0.0, entropy_standard = 0.0;
    double fluctuation = 0.0;
    double log_partition = 0.0;
    double mu_mass = 0.0;  // integral of mu, 1 after normalization
    ConnectionKind connection = ConnectionKind::Canonical;
    double mass_rel_change = 0.0;
    bool resolved = true;
};

// Pointwise data independent of chi and f0, sampled once on the integration nodes.
class FunctionalEvaluator {
public:
    FunctionalEvaluator(const Geometry& geo, ConnectionKind k, const Field& psi, bool check_resolution = true);

    int dim() const { return n_ + m_; }
    // f0 = ln[ int e^{-psi} dV / (4 pi chi)^{D/2} ]
    double f0(double chi) const;
    FunctionalReport report(double chi) const;
    double log_partition(double chi) const;

    double mass_rel_change() const { return mass_rel_change_; }
    bool resolved() const { return resolved_; }

private:
    struct SiteData {
        double w, psi, sR, grad2, Qs, Gs, Xh2, trXh, Xv2, trXv;
    };
    int n_, m_;
    ConnectionKind kind_;
    std::vector<SiteData> sites_;
    double mass_ = 0.0;  // int e^{-psi} dV
    double mass_rel_change_ = 0.0;
    bool resolved_ = true;
};

FunctionalContext normalize_context(const FunctionalContext& raw);
double perelman_F(const FunctionalContext& ctx, FunctionalForm form);
double perelman_W(const FunctionalContext& ctx, FunctionalForm form);
double average_energy(const FunctionalContext& ctx, FunctionalForm form = FunctionalForm::Spectral);
double entropy(const FunctionalContext& ctx, FunctionalForm form = FunctionalForm::Spectral);
double log_partition(const FunctionalContext& ctx);
double fluctuation(const FunctionalContext& ctx);
FunctionalReport evaluate_functionals(const FunctionalContext& ctx);

// Thermodynamic identities with beta = 1/chi, standard forms, centered differences of step 1e-4 chi.
struct ThermoRow {
    double chi = 0.0;
    double energy = 0.0;         // <E>
    double entropy = 0.0;        // S
    double log_partition = 0.0;  // log Z
    double chi2_dlogZ = 0.0;     // chi^2 d(log Z)/d chi
    double residual_energy = 0.0;   // |<E> - chi^2 d log Z / d chi|
    double residual_entropy = 0.0;  // |S - (<E>/chi + log Z)|
    double d2logZ_dbeta2 = 0.0;
    double fluctuation = 0.0;
};
std::vector<ThermoRow> thermo_consistency(const FunctionalEvaluator& ev, const std::vector<double>& chis);
// count equally spaced chi values in [lo, hi]; lo < hi and count >= 2 required
std::vector<double> chi_family(double lo, double hi, int count);

}  // namespace nhrf
