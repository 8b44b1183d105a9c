#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "esg/analytic.hpp"

using namespace esg;

namespace {

const CirBond kBond{0.02, 0.04, 0.01};

double bs_call(double S0, double K, double T, double sigma, double int_r) {
    const double sT = sigma * std::sqrt(T);
    const double d1 = (std::log(S0 / K) + int_r + 0.5 * sigma * sigma * T) / sT;
    const double d2 = d1 - sT;
    return S0 * normal_cdf(d1) - K * std::exp(-int_r) * normal_cdf(d2);
}

double deterministic_int_r(const CirBond& b, double r0, double T) {
    const double kap = b.b - b.sigma;
    const double th = b.a / kap;
    return (r0 - th) * (1.0 - std::exp(-kap * T)) / kap + th * T;
}

}  // namespace

TEST_CASE("CIR bond terms at the base parameter set", "[analytic]") {
    CHECK_THAT(kBond.gamma(), Catch::Matchers::WithinAbs(0.021213203435596426, 1e-17));
    const auto tm = kBond.terms(1.0);
    CHECK_THAT(tm.C, Catch::Matchers::WithinAbs(0.98024800706849678, 1e-14));
    // A carries the 2a/sigma^2 = 400 amplification of the log-term rounding.
    CHECK_THAT(tm.A, Catch::Matchers::WithinAbs(0.0098679086901962379, 1e-12));
}

TEST_CASE("discount bond price and rate sensitivity", "[analytic]") {
    const double P = zcb_price(kBond, 0.0, 1.0, 0.02);
    CHECK_THAT(P, Catch::Matchers::WithinAbs(0.97095722048772764, 1e-13));
    CHECK_THAT(P, Catch::Matchers::WithinAbs(0.970957220487724, 1e-12));

    CHECK_THAT(zcb_dr(kBond, 0.0, 1.0, 0.02),
               Catch::Matchers::WithinAbs(-0.95177888033186203, 1e-12));
    const double h = 1e-6;
    const double fd = (zcb_price(kBond, 0.0, 1.0, 0.02 + h) -
                       zcb_price(kBond, 0.0, 1.0, 0.02 - h)) / (2.0 * h);
    CHECK_THAT(zcb_dr(kBond, 0.0, 1.0, 0.02), Catch::Matchers::WithinRel(fd, 1e-8));

    CHECK(zcb_price(kBond, 1.0, 1.0, 0.05) == 1.0);
    CHECK_THROWS_AS(zcb_price(kBond, 1.0, 0.5, 0.02), FormulaInapplicable);
    CHECK_THROWS_AS(zcb_price(kBond, 0.0, 1.0, -0.01), FormulaInapplicable);
}

TEST_CASE("Riccati time partials match finite differences", "[analytic]") {
    for (double tau : {0.3, 1.0, 7.5}) {
        const auto tm = kBond.terms(tau);
        // h large enough that the 2a/sigma^2-amplified rounding in A stays
        // below the quotient, small enough to keep truncation negligible.
        const double h = 1e-4;
        const auto up = kBond.terms(tau - h);   // later t means smaller tau
        const auto dn = kBond.terms(tau + h);
        CHECK_THAT(tm.dC_dt, Catch::Matchers::WithinRel((up.C - dn.C) / (2.0 * h), 1e-7));
        CHECK_THAT(tm.dA_dt, Catch::Matchers::WithinRel((up.A - dn.A) / (2.0 * h), 1e-5));
    }
}

TEST_CASE("bond terms stay finite at long maturities", "[analytic]") {
    const auto tm = kBond.terms(500.0);
    CHECK(std::isfinite(tm.C));
    CHECK(std::isfinite(tm.A));
    // C saturates at 1/(gamma + b/2); the gap decays like e^{-2 gamma tau}.
    CHECK_THAT(tm.C, Catch::Matchers::WithinAbs(1.0 / (kBond.gamma() + 0.5 * kBond.b), 1e-6));
    CHECK(zcb_price(kBond, 0.0, 500.0, 0.02) > 0.0);

    const auto z = kBond.terms(0.0);
    CHECK(z.C == 0.0);
    CHECK(z.A == 0.0);
    CHECK(z.dC_dt == -1.0);
    CHECK_THROWS_AS(kBond.terms(-0.1), FormulaInapplicable);
}

TEST_CASE("CIR bond rejects non-positive parameters", "[analytic]") {
    CHECK_THROWS_AS(CirBond(0.0, 0.04, 0.01), FormulaInapplicable);
    CHECK_THROWS_AS(CirBond(0.02, -0.04, 0.01), FormulaInapplicable);
    CHECK_THROWS_AS(CirBond(0.02, 0.04, -0.01), FormulaInapplicable);
}

TEST_CASE("zero-volatility bond reduces to the deterministic limit", "[analytic]") {
    const CirBond flat{0.02, 0.04, 0.0};
    const double tau = 1.0;
    const auto tm = flat.terms(tau);
    const double c_det = (1.0 - std::exp(-flat.b * tau)) / flat.b;
    CHECK_THAT(tm.C, Catch::Matchers::WithinRel(c_det, 1e-12));
    CHECK_THAT(tm.A, Catch::Matchers::WithinRel(flat.a * (tau - c_det) / flat.b, 1e-12));
    CHECK_THAT(tm.dC_dt, Catch::Matchers::WithinRel(-std::exp(-flat.b * tau), 1e-12));
    CHECK_THAT(tm.dA_dt, Catch::Matchers::WithinRel(-flat.a * c_det, 1e-12));

    // Continuity: a small volatility lands next to the limit.
    const CirBond near{0.02, 0.04, 1e-3};
    CHECK_THAT(near.terms(tau).A, Catch::Matchers::WithinRel(tm.A, 1e-6));
    CHECK_THAT(zcb_price(flat, 0.0, tau, 0.02),
               Catch::Matchers::WithinRel(std::exp(-0.02 * c_det - tm.A), 1e-14));
}

TEST_CASE("Kim option values at the base parameter set", "[analytic]") {
    const KimInputs in{1.0, 2.0, 1.0, 0.2, 0.6, 0.02, kBond};
    CHECK_THAT(in.delta(), Catch::Matchers::WithinAbs(0.01, 1e-18));
    CHECK_THAT(in.kappa(), Catch::Matchers::WithinAbs(0.03, 1e-17));
    CHECK_THAT(in.theta(), Catch::Matchers::WithinRel(2.0 / 3.0, 1e-14));

    CHECK_THAT(kim_call(in), Catch::Matchers::WithinAbs(0.0081781197340357015, 1e-15));
    CHECK_THAT(kim_put(in), Catch::Matchers::WithinAbs(0.95009256070949098, 1e-13));
}

TEST_CASE("Kim price collapses to Black-Scholes as sigma_r vanishes", "[analytic]") {
    auto diff_at = [](double sigma_r) {
        const CirBond b{0.02, 0.04, sigma_r};
        const KimInputs in{1.0, 2.0, 1.0, 0.2, 0.6, 0.02, b};
        const double bs = bs_call(1.0, 2.0, 1.0, 0.2, deterministic_int_r(b, 0.02, 1.0));
        return kim_call(in) - bs;
    };
    const double d4 = diff_at(1e-4);
    const double d5 = diff_at(1e-5);
    CHECK_THAT(d4, Catch::Matchers::WithinAbs(4.5141715e-5, 1e-9));
    CHECK(std::fabs(d4) < 1e-4);
    // First order in sigma_r: shrinking sigma_r tenfold shrinks the gap tenfold.
    CHECK_THAT(d4 / d5, Catch::Matchers::WithinAbs(10.0, 0.1));
}

TEST_CASE("Kim call limits and input validation", "[analytic]") {
    KimInputs in{1.0, 0.0, 1.0, 0.2, 0.6, 0.02, kBond};
    // K -> 0: the call is worth the stock.
    CHECK_THAT(kim_call(in), Catch::Matchers::WithinAbs(1.0, 1e-9));

    // kappa = 0 when b_r = sigma_r.
    KimInputs bad{1.0, 2.0, 1.0, 0.2, 0.6, 0.02, CirBond{0.02, 0.01, 0.01}};
    CHECK_THROWS_AS(kim_call(bad), FormulaInapplicable);

    // At the money with kappa = 0.03 the first-order correction carries a
    // 1/kappa^2 coefficient, dwarfs the base price and breaches the static
    // bounds, so the approximation refuses to report.
    KimInputs atm{1.0, 1.0, 1.0, 0.2, 0.6, 0.02, kBond};
    CHECK_THROWS_AS(kim_call(atm), FormulaInapplicable);
}

TEST_CASE("Longstaff terms at the independent-correlation configuration", "[analytic]") {
    const auto in = LongstaffInputs::make(kBond, 0.02, 0.05, 0.01, 0.01, 0.1, 0.0,
                                          0.0, 0.3, 0.05, 0.5, 1.0);
    CHECK_THAT(in.e_chi, Catch::Matchers::WithinAbs(0.006, 1e-18));

    const double s2 = in.sigma_chi * in.sigma_chi;
    const double phi = std::sqrt(2.0 * s2 + in.f * in.f);
    CHECK_THAT(phi, Catch::Matchers::WithinAbs(0.10099504938362078, 1e-15));
    CHECK_THAT((in.f + phi) / (in.f - phi),
               Catch::Matchers::WithinAbs(-201.99504938362078, 1e-10));

    const auto lt = detail::longstaff_terms(in, 1.0);
    CHECK_THAT(lt.A, Catch::Matchers::WithinRel(0.997101780238061095, 1e-13));
    CHECK_THAT(lt.B, Catch::Matchers::WithinRel(-0.951610731764157124, 1e-13));
    CHECK(lt.C == 1.0);  // eta = 0
    CHECK_THAT(lt.G, Catch::Matchers::WithinRel(0.00569311652841411061, 1e-13));
    CHECK_THAT(lt.H, Catch::Matchers::WithinRel(0.902171357841279062, 1e-13));
    CHECK_THAT(lt.A * std::exp(lt.B * in.chi0),
               Catch::Matchers::WithinRel(0.950770125548621972, 1e-13));

    auto in_eta = in;
    in_eta.eta = 0.01;
    const auto lte = detail::longstaff_terms(in_eta, 1.0);
    CHECK_THAT(lte.C, Catch::Matchers::WithinRel(1.00001666680555633, 1e-13));
    CHECK_THAT(lte.A, Catch::Matchers::WithinRel(lt.A, 1e-15));
}

TEST_CASE("defaultable coupon bond prices against quadrature references", "[analytic]") {
    auto in = LongstaffInputs::make(kBond, 0.02, 0.05, 0.01, 0.01, 0.1, 0.0,
                                    0.0, 0.3, 0.05, 0.5, 1.0);
    CHECK_THAT(longstaff_cb(in), Catch::Matchers::WithinAbs(0.98604330662784085, 1e-10));
    in.coupon = 0.10;
    CHECK_THAT(longstaff_cb(in), Catch::Matchers::WithinAbs(1.0339391999020333, 1e-10));
    in.coupon = 0.12;
    CHECK_THAT(longstaff_cb(in), Catch::Matchers::WithinAbs(1.0530975572117103, 1e-10));

    in.eta = 0.01;
    in.coupon = 0.05;
    CHECK_THAT(longstaff_cb(in), Catch::Matchers::WithinAbs(0.98605883231620291, 1e-10));
    in.coupon = 0.10;
    CHECK_THAT(longstaff_cb(in), Catch::Matchers::WithinAbs(1.0339549197367357, 1e-10));
}

TEST_CASE("degenerate coupon bond reduces to the discount bond", "[analytic]") {
    // omega = 1, c = 0, chi0 = 0, eta = 0, gamma0 = 0: only the principal
    // survives and every defaultable term collapses to one.
    const auto in = LongstaffInputs::make(kBond, 0.02, 0.0, 0.0, 0.01, 0.1, 0.0,
                                          0.7, 0.3, 0.0, 1.0, 1.0);
    CHECK_THAT(longstaff_cb(in),
               Catch::Matchers::WithinAbs(zcb_price(kBond, 0.0, 1.0, 0.02), 1e-15));
}

TEST_CASE("quadrature refinement is converged at the run grid", "[analytic]") {
    auto in = LongstaffInputs::make(kBond, 0.02, 0.05, 0.01, 0.01, 0.1, 0.01,
                                    0.0, 0.3, 0.05, 0.5, 1.0);
    const double coarse = longstaff_cb(in, 0.01);
    const double fine = longstaff_cb(in, 0.005);
    CHECK(std::fabs(coarse - fine) <= 1e-10);
}

TEST_CASE("Longstaff input validation", "[analytic]") {
    auto in = LongstaffInputs::make(kBond, 0.02, 0.05, 0.01, 0.01, 0.1, 0.0,
                                    0.0, 0.3, 0.05, 0.5, 1.0);
    auto bad = in;
    bad.sigma_chi = 0.0;
    CHECK_THROWS_AS(longstaff_cb(bad), FormulaInapplicable);
    bad = in;
    bad.T = 0.0;
    CHECK_THROWS_AS(longstaff_cb(bad), FormulaInapplicable);
    bad = in;
    bad.eta = 100.0;
    bad.T = 10.0;  // exp(eta^2 T^3 / 6) overflows
    CHECK_THROWS_AS(longstaff_cb(bad), FormulaInapplicable);
    CHECK_THROWS_AS(longstaff_cb(in, 0.0), FormulaInapplicable);
}

TEST_CASE("survival factor decreases in chi0 and increases in omega recovery",
          "[analytic]") {
    auto in = LongstaffInputs::make(kBond, 0.02, 0.05, 0.01, 0.01, 0.1, 0.0,
                                    0.0, 0.3, 0.05, 0.5, 1.0);
    auto hi_chi = LongstaffInputs::make(kBond, 0.02, 0.10, 0.01, 0.01, 0.1, 0.0,
                                        0.0, 0.3, 0.05, 0.5, 1.0);
    CHECK(longstaff_cb(hi_chi) < longstaff_cb(in));
    auto lo_loss = in;
    lo_loss.loss = 0.25;
    CHECK(longstaff_cb(lo_loss) > longstaff_cb(in));
}
