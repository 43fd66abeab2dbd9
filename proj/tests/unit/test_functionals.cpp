#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "nhrf/errors.hpp"
#include "nhrf/functionals.hpp"

using namespace nhrf;
using testing::kPi;

namespace {

FunctionalContext context(const Scenario& s, const std::string& psi, double chi,
                          ConnectionKind k = ConnectionKind::Canonical) {
    FunctionalContext c;
    c.geo = testing::geometry(s);
    c.connection = k;
    c.psi = make_field(s, psi);
    c.chi = chi;
    return normalize_context(c);
}

// periodic trapezoid with many nodes, for integrands of x1 alone on [0, 2 pi]
template <class F>
double line_integral(F f) {
    const int N = 4000;
    double acc = 0.0;
    for (int k = 0; k < N; ++k) acc += f(2 * kPi * k / N);
    return acc * 2 * kPi / N;
}

Scenario flat_eps(double eps, int samples = 0) {
    Scenario s = testing::preset("flat-t4", samples);
    s.parameters = {{"eps", eps}};
    return s;
}

}  // namespace

TEST_CASE("normalization") {
    Scenario s = testing::preset("flat-t4");
    FunctionalContext c = context(s, "0", 1.0);
    CHECK(c.f0 == doctest::Approx(std::log(kPi * kPi)).epsilon(1e-13));
    CHECK(evaluate_functionals(c).mu_mass == doctest::Approx(1.0).epsilon(1e-10));
    for (const char* name : {"sphere-product", "twisted-torus", "einstein-s2xs2"}) {
        FunctionalContext d = context(testing::preset(name), "0", 0.7);
        CHECK(std::fabs(evaluate_functionals(d).mu_mass - 1.0) <= 1e-10);
    }
    FunctionalContext e = context(flat_eps(0.3), "eps*sin(x1)*cos(y3)", 1.3);
    CHECK(std::fabs(evaluate_functionals(e).mu_mass - 1.0) <= 1e-10);

    FunctionalContext bad;
    bad.geo = testing::geometry(s);
    bad.psi = Field::constant(0.0, 4);
    bad.chi = 0.0;
    CHECK_THROWS_AS(normalize_context(bad), PreconditionError);
    bad.chi = -1.0;
    CHECK_THROWS_AS(normalize_context(bad), PreconditionError);
}

TEST_CASE("flat constant f closed forms") {
    Scenario s = testing::preset("flat-t4");
    for (double chi : {0.5, 1.0, 2.0}) {
        FunctionalContext c = context(s, "0", chi);
        const double f0 = std::log(std::pow(2 * kPi, 4) / std::pow(4 * kPi * chi, 2));
        CHECK(c.f0 == doctest::Approx(f0).epsilon(1e-13));
        CHECK(std::fabs(perelman_F(c, FunctionalForm::Standard)) <= 1e-12);
        CHECK(std::fabs(perelman_F(c, FunctionalForm::Spectral)) <= 1e-12);
        CHECK(perelman_W(c, FunctionalForm::Standard) == doctest::Approx(f0 - 4).epsilon(1e-12));
        CHECK(average_energy(c, FunctionalForm::Standard) == doctest::Approx(2 * chi).epsilon(1e-12));
        CHECK(average_energy(c, FunctionalForm::Spectral) == doctest::Approx(2 * chi).epsilon(1e-12));
        CHECK(entropy(c, FunctionalForm::Standard) == doctest::Approx(4 - f0).epsilon(1e-12));
        CHECK(entropy(c, FunctionalForm::Spectral) == doctest::Approx(4 - std::log(std::pow(2 * kPi, 4)) + 2 * std::log(4 * kPi * chi)).epsilon(1e-12));
        CHECK(log_partition(c) == doctest::Approx(2 - f0).epsilon(1e-12));
        CHECK(fluctuation(c) == doctest::Approx(2.0).epsilon(1e-12));
    }
    // doubling chi moves f0 by -2 ln 2 and log Z by +2 ln 2
    FunctionalContext c1 = context(s, "0", 1.0), c2 = context(s, "0", 2.0);
    CHECK(c2.f0 - c1.f0 == doctest::Approx(-2 * std::log(2.0)).epsilon(1e-13));
    CHECK(log_partition(c2) - log_partition(c1) == doctest::Approx(2 * std::log(2.0)).epsilon(1e-12));
    CHECK(perelman_W(c2, FunctionalForm::Standard) - perelman_W(c1, FunctionalForm::Standard) ==
          doctest::Approx(-2 * std::log(2.0)).epsilon(1e-12));
    CHECK(log_partition(c1) == doctest::Approx(2 - std::log(std::pow(2 * kPi, 4)) + 2 * std::log(4 * kPi)).epsilon(1e-12));
}

TEST_CASE("sphere times torus constant f closed forms") {
    Scenario s = testing::preset("sphere-product");
    const double vol = 4 * kPi * 4 * kPi * kPi;
    for (double chi : {0.5, 1.0, 1.5}) {
        FunctionalContext c = context(s, "0", chi);
        const double f0 = std::log(vol / std::pow(4 * kPi * chi, 2));
        CHECK(c.f0 == doctest::Approx(f0).epsilon(1e-7));
        CHECK(perelman_F(c, FunctionalForm::Standard) == doctest::Approx(2 * std::exp(-c.f0) * vol).epsilon(1e-7));
        CHECK(perelman_W(c, FunctionalForm::Standard) == doctest::Approx(2 * chi + c.f0 - 4).epsilon(1e-9));
        CHECK(average_energy(c, FunctionalForm::Standard) == doctest::Approx(2 * chi - 2 * chi * chi).epsilon(1e-9));
        CHECK(entropy(c, FunctionalForm::Standard) == doctest::Approx(-(2 * chi + c.f0 - 4)).epsilon(1e-9));
        // exact relation for constant f
        CHECK(std::fabs(entropy(c, FunctionalForm::Standard) + perelman_W(c, FunctionalForm::Standard)) <= 1e-10);
        CHECK(perelman_F(c, FunctionalForm::Standard) >= 0.0);
    }
}

TEST_CASE("nonconstant f on the flat torus against a line-integral oracle") {
    for (double eps : {0.1, 0.4}) {
        // e^{-eps sin x1} cos^2 x1 aliases on 8 trapezoid nodes once eps is not small
        FunctionalContext c = context(flat_eps(eps, eps > 0.2 ? 16 : 0), "eps*sin(x1)", 1.0);
        const double mass = std::pow(2 * kPi, 3) * line_integral([&](double x) { return std::exp(-eps * std::sin(x)); });
        CHECK(c.f0 == doctest::Approx(std::log(mass / std::pow(4 * kPi, 2))).epsilon(1e-10));
        const double F = std::exp(-c.f0) * std::pow(2 * kPi, 3) *
                         line_integral([&](double x) { return std::exp(-eps * std::sin(x)) * eps * eps * std::cos(x) * std::cos(x); });
        CHECK(std::fabs(perelman_F(c, FunctionalForm::Standard) - F) <= 1e-8);

        // displayed entropy and W differ by twice the gradient term
        const double chi = c.chi;
        const double grad = 6 * chi / std::pow(4 * kPi * chi, 2) * std::pow(2 * kPi, 4) * eps * eps / 2;
        const double sum = entropy(c, FunctionalForm::Spectral) + perelman_W(c, FunctionalForm::Spectral);
        CHECK(sum == doctest::Approx(grad).epsilon(1e-9));
        CHECK(fluctuation(c) >= 0.0);
    }
}

TEST_CASE("invariance under a constant shift of psi") {
    for (const char* name : {"flat-t4", "sphere-product", "twisted-torus"}) {
        Scenario s = testing::preset(name);
        const FunctionalReport a = evaluate_functionals(context(s, "0.2*sin(x1 + y3)", 0.8));
        const FunctionalReport b = evaluate_functionals(context(s, "0.2*sin(x1 + y3) + 1.7", 0.8));
        CHECK(std::fabs(a.F_standard - b.F_standard) <= 1e-10);
        CHECK(std::fabs(a.F_spectral - b.F_spectral) <= 1e-10);
        CHECK(std::fabs(a.W_standard - b.W_standard) <= 1e-10);
        CHECK(std::fabs(a.W_spectral - b.W_spectral) <= 1e-10);
        CHECK(std::fabs(a.energy_standard - b.energy_standard) <= 1e-10);
        CHECK(std::fabs(a.entropy_spectral - b.entropy_spectral) <= 1e-10);
        CHECK(std::fabs(a.log_partition - b.log_partition) <= 1e-10);
        CHECK(std::fabs(a.fluctuation - b.fluctuation) <= 1e-10);
        CHECK(b.f0 - a.f0 == doctest::Approx(-1.7).epsilon(1e-12));
    }
}

TEST_CASE("soliton-tuned Einstein preset has zero fluctuation") {
    Scenario s = testing::preset("einstein-s2xs2");
    CHECK(std::fabs(fluctuation(context(s, "0", 0.5))) <= 1e-12);
    CHECK(fluctuation(context(s, "0", 1.0)) > 0.1);
    // off the tuning: 2 chi^2 (1 - 1/(2 chi))^2 * 4
    const double chi = 1.0;
    CHECK(fluctuation(context(s, "0", chi)) == doctest::Approx(2 * chi * chi * 4 * std::pow(1 - 1 / (2 * chi), 2)).epsilon(1e-9));
}

TEST_CASE("connection switch agrees on holonomic presets") {
    for (const char* name : {"sphere-product", "einstein-s2xs2"}) {
        Scenario s = testing::preset(name);
        const FunctionalReport a = evaluate_functionals(context(s, "0.1*cos(phi)", 1.0, ConnectionKind::Canonical));
        const FunctionalReport b = evaluate_functionals(context(s, "0.1*cos(phi)", 1.0, ConnectionKind::LeviCivita));
        CHECK(std::fabs(a.F_standard - b.F_standard) <= 1e-6);
        CHECK(std::fabs(a.W_spectral - b.W_spectral) <= 1e-6);
        CHECK(std::fabs(a.fluctuation - b.fluctuation) <= 1e-6);
        CHECK(a.connection == ConnectionKind::Canonical);
        CHECK(b.connection == ConnectionKind::LeviCivita);
    }
}

TEST_CASE("thermodynamic identities") {
    const auto chis = chi_family(0.5, 2.0, 7);
    REQUIRE(chis.size() == 7);
    {
        Scenario s = testing::preset("flat-t4");
        FunctionalEvaluator ev(testing::geometry(s), ConnectionKind::Canonical, make_field(s, "0"));
        for (const ThermoRow& r : thermo_consistency(ev, chis)) {
            CHECK(r.energy == doctest::Approx(2 * r.chi).epsilon(1e-12));
            CHECK(r.residual_energy <= 1e-5 * std::fabs(r.energy));
            CHECK(r.residual_entropy <= 1e-8);
        }
    }
    {
        Scenario s = testing::preset("sphere-product");
        FunctionalEvaluator ev(testing::geometry(s), ConnectionKind::Canonical, make_field(s, "0"));
        for (const ThermoRow& r : thermo_consistency(ev, chis)) {
            CHECK(r.residual_entropy <= 1e-8);
            // log Z carries no curvature, so the first identity misses by the curvature part of <E>
            CHECK(r.residual_energy == doctest::Approx(2 * r.chi * r.chi).epsilon(1e-6));
        }
    }
    Scenario s = testing::preset("flat-t4");
    FunctionalEvaluator ev(testing::geometry(s), ConnectionKind::Canonical, make_field(s, "0"));
    CHECK_THROWS_AS(thermo_consistency(ev, {1.0}), PreconditionError);
    CHECK_THROWS_AS(thermo_consistency(ev, {1.0, 1.0}), PreconditionError);
    CHECK_THROWS_AS(chi_family(1.0, 1.0, 3), PreconditionError);
}

TEST_CASE("recomputation is bit identical") {
    Scenario s = testing::preset("twisted-torus");
    FunctionalContext c = context(s, "0.3*sin(x2)*cos(y4)", 1.1);
    const FunctionalReport a = evaluate_functionals(c), b = evaluate_functionals(c);
    CHECK(a.F_spectral == b.F_spectral);
    CHECK(a.W_standard == b.W_standard);
    CHECK(a.fluctuation == b.fluctuation);
    CHECK(std::isfinite(a.entropy_spectral));
}
